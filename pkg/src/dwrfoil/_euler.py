"""First-order cell-centred finite-volume discretization of the steady 2D Euler equations."""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from dwrfoil._mesh import AIRFOIL, UnstructuredMesh
from dwrfoil.exceptions import ConvergenceError, DomainError, ForceError, StateError

logger = logging.getLogger(__name__)

GAMMA = 1.4
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 100
INITIAL_CFL = 10.0
MAX_CFL = 1e10
MIN_CFL = 1e-2
STEP_FLOOR = 1.0 / 1024.0
DECREASE_TRIES = 4
FLUXES = ("rusanov", "hllc")

PathLike = Union[str, Path]
History = List[Tuple[int, float, float]]


@dataclass(frozen=True)
class FreeStream:
    """Far-field state scaled so that rho = 1, |V| = mach and the speed of sound is 1."""

    mach: float
    aoa: float = 0.0
    gamma: float = GAMMA

    def __post_init__(self) -> None:
        if not self.mach > 0.0:
            raise DomainError(f"mach must be > 0, got {self.mach!r}")
        if self.gamma <= 1.0:
            raise DomainError(f"gamma must be > 1, got {self.gamma!r}")

    @property
    def alpha(self) -> float:
        return math.radians(self.aoa)

    @property
    def velocity(self) -> np.ndarray:
        return self.mach * np.array([math.cos(self.alpha), math.sin(self.alpha)])

    @property
    def pressure(self) -> float:
        return 1.0 / self.gamma

    @property
    def dynamic_pressure(self) -> float:
        return 0.5 * self.mach**2

    @property
    def drag_direction(self) -> np.ndarray:
        return np.array([math.cos(self.alpha), math.sin(self.alpha)])

    @property
    def lift_direction(self) -> np.ndarray:
        return np.array([-math.sin(self.alpha), math.cos(self.alpha)])

    def state(self) -> np.ndarray:
        vx, vy = self.velocity
        return prim_to_cons(1.0, vx, vy, self.pressure, self.gamma)


@dataclass(eq=False)
class FlowField:
    """Conservative state ``(rho, rho*vx, rho*vy, E)`` per mesh triangle."""

    mesh: UnstructuredMesh
    values: np.ndarray
    converged: bool = True
    iterations: int = 0
    history: History = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.array(self.values, dtype=float).reshape(-1, 4)
        if len(self.values) != self.mesh.n_triangles:
            raise StateError(
                f"{len(self.values)} cell states for a mesh with {self.mesh.n_triangles} triangles"
            )


FieldLike = Union[FlowField, np.ndarray]


def _values(field_or_array: FieldLike) -> np.ndarray:
    if isinstance(field_or_array, FlowField):
        return field_or_array.values
    return np.asarray(field_or_array, dtype=float).reshape(-1, 4)


def prim_to_cons(rho: object, vx: object, vy: object, p: object, gamma: float = GAMMA) -> np.ndarray:
    """Conservative variables from density, velocity and pressure.

    Examples:
        >>> prim_to_cons(1.0, 0.0, 0.0, 1.0 / 1.4).round(4).tolist()
        [1.0, 0.0, 0.0, 1.7857]
    """
    rho, vx, vy, p = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (rho, vx, vy, p)))
    if np.any(rho <= 0.0) or np.any(p <= 0.0):
        raise StateError("density and pressure must be positive")
    energy = p / (gamma - 1.0) + 0.5 * rho * (vx**2 + vy**2)
    return np.stack([rho, rho * vx, rho * vy, energy], axis=-1)


def pressure(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return (gamma - 1.0) * (u[..., 3] - 0.5 * (u[..., 1] ** 2 + u[..., 2] ** 2) / u[..., 0])


def cons_to_prim(u: np.ndarray, gamma: float = GAMMA) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    _check_physical(u, gamma)
    rho = u[..., 0]
    return rho, u[..., 1] / rho, u[..., 2] / rho, pressure(u, gamma)


def is_physical(u: np.ndarray, gamma: float = GAMMA) -> bool:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)) or np.any(u[..., 0] <= 0.0):
        return False
    return bool(np.all(pressure(u, gamma) > 0.0))


def _check_physical(u: np.ndarray, gamma: float) -> None:
    if is_physical(u, gamma):
        return
    flat = np.atleast_2d(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        bad = ~np.isfinite(flat).all(axis=1) | (flat[:, 0] <= 0.0) | ~(pressure(flat, gamma) > 0.0)
    cell = int(np.argmax(bad))
    raise StateError(f"non-physical state in cell {cell}: {flat[cell].tolist()}", cell=cell)


def sound_speed(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    return np.sqrt(gamma * pressure(u, gamma) / u[..., 0])


def physical_flux(u: np.ndarray, n: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    """Normal flux ``F(u) . n``."""
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    p = pressure(u, gamma)
    vn = (u[..., 1] * n[..., 0] + u[..., 2] * n[..., 1]) / u[..., 0]
    return np.stack(
        [
            u[..., 0] * vn,
            u[..., 1] * vn + p * n[..., 0],
            u[..., 2] * vn + p * n[..., 1],
            (u[..., 3] + p) * vn,
        ],
        axis=-1,
    )


def _spectral_radius(u: np.ndarray, n: np.ndarray, gamma: float) -> np.ndarray:
    vn = (u[..., 1] * n[..., 0] + u[..., 2] * n[..., 1]) / u[..., 0]
    return np.abs(vn) + sound_speed(u, gamma)


def numerical_flux(
    u_left: np.ndarray,
    u_right: np.ndarray,
    n: np.ndarray,
    gamma: float = GAMMA,
    wave_speed: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Rusanov flux ``(F(uL) + F(uR)) . n / 2 - lambda (uR - uL) / 2``.

    ``lambda`` is the larger of ``|v.n| + c`` over both states unless a frozen
    ``wave_speed`` is supplied.
    """
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    _check_physical(u_left, gamma)
    _check_physical(u_right, gamma)
    if wave_speed is None:
        wave_speed = np.maximum(_spectral_radius(u_left, n, gamma), _spectral_radius(u_right, n, gamma))
    lam = np.asarray(wave_speed)[..., None]
    return 0.5 * (physical_flux(u_left, n, gamma) + physical_flux(u_right, n, gamma)) - 0.5 * lam * (
        u_right - u_left
    )


def _safe_denominator(x: np.ndarray, eps: float = 1e-30) -> np.ndarray:
    return np.where(np.abs(x) < eps, np.where(x >= 0.0, eps, -eps), x)


def hllc_flux(u_left: np.ndarray, u_right: np.ndarray, n: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    """HLLC flux with Davis wave-speed bounds, rotated into the face normal."""
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    n = np.asarray(n, dtype=float)
    _check_physical(u_left, gamma)
    _check_physical(u_right, gamma)

    def parts(u: np.ndarray) -> Tuple[np.ndarray, ...]:
        rho = u[..., 0]
        vn = (u[..., 1] * n[..., 0] + u[..., 2] * n[..., 1]) / rho
        return rho, vn, pressure(u, gamma), sound_speed(u, gamma)

    rho_l, vn_l, p_l, c_l = parts(u_left)
    rho_r, vn_r, p_r, c_r = parts(u_right)
    s_l = np.minimum(vn_l - c_l, vn_r - c_r)
    s_r = np.maximum(vn_l + c_l, vn_r + c_r)
    s_m = (p_r - p_l + rho_l * vn_l * (s_l - vn_l) - rho_r * vn_r * (s_r - vn_r)) / _safe_denominator(
        rho_l * (s_l - vn_l) - rho_r * (s_r - vn_r)
    )

    def star(u: np.ndarray, rho: np.ndarray, vn: np.ndarray, p: np.ndarray, s: np.ndarray) -> np.ndarray:
        factor = rho * (s - vn) / _safe_denominator(s - s_m)
        shift = s_m - vn
        vx, vy = u[..., 1] / rho, u[..., 2] / rho
        energy = u[..., 3] / rho + shift * (s_m + p / _safe_denominator(rho * (s - vn)))
        return factor[..., None] * np.stack(
            [np.ones_like(rho), vx + shift * n[..., 0], vy + shift * n[..., 1], energy], axis=-1
        )

    f_l = physical_flux(u_left, n, gamma)
    f_r = physical_flux(u_right, n, gamma)
    f_star_l = f_l + s_l[..., None] * (star(u_left, rho_l, vn_l, p_l, s_l) - u_left)
    f_star_r = f_r + s_r[..., None] * (star(u_right, rho_r, vn_r, p_r, s_r) - u_right)
    return np.where(
        (s_l >= 0.0)[..., None],
        f_l,
        np.where((s_m >= 0.0)[..., None], f_star_l, np.where((s_r >= 0.0)[..., None], f_star_r, f_r)),
    )


def mirror_state(u: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Reflect the momentum about the wall: the normal velocity changes sign."""
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    mn = u[..., 1] * n[..., 0] + u[..., 2] * n[..., 1]
    mirrored = u.copy()
    mirrored[..., 1] -= 2.0 * mn * n[..., 0]
    mirrored[..., 2] -= 2.0 * mn * n[..., 1]
    return mirrored


def wall_flux(
    u_interior: np.ndarray, n: np.ndarray, gamma: float = GAMMA, flux: str = "rusanov"
) -> np.ndarray:
    mirrored = mirror_state(u_interior, n)
    if flux == "hllc":
        return hllc_flux(u_interior, mirrored, n, gamma)
    return numerical_flux(u_interior, mirrored, n, gamma)


def farfield_flux(
    u_interior: np.ndarray,
    freestream: FreeStream,
    n: np.ndarray,
    gamma: Optional[float] = None,
    flux: str = "rusanov",
) -> np.ndarray:
    gamma = freestream.gamma if gamma is None else gamma
    outside = np.broadcast_to(freestream.state(), np.shape(u_interior))
    if flux == "hllc":
        return hllc_flux(u_interior, outside, n, gamma)
    return numerical_flux(u_interior, outside, n, gamma)


class FaceGeometry(NamedTuple):
    """Per-edge data: owner cell, neighbour (-1 on the boundary), unit normal out of the owner, length."""

    left: np.ndarray
    right: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    interior: np.ndarray
    wall: np.ndarray
    farfield: np.ndarray


def face_geometry(mesh: UnstructuredMesh) -> FaceGeometry:
    topology = mesh.topology
    ends = mesh.vertices[topology.edges]
    delta = ends[:, 1] - ends[:, 0]
    length = np.hypot(delta[:, 0], delta[:, 1])
    normal = np.column_stack([delta[:, 1], -delta[:, 0]]) / length[:, None]
    left, right = topology.edge_triangles[:, 0], topology.edge_triangles[:, 1]
    on_boundary = right < 0
    on_wall = np.all(mesh.markers[topology.edges] == AIRFOIL, axis=1)
    return FaceGeometry(
        left,
        right,
        normal,
        length,
        np.nonzero(~on_boundary)[0],
        np.nonzero(on_boundary & on_wall)[0],
        np.nonzero(on_boundary & ~on_wall)[0],
    )


def face_wave_speeds(mesh: UnstructuredMesh, field_or_array: FieldLike, freestream: FreeStream) -> np.ndarray:
    """Rusanov wave speed of every face, the value frozen by :func:`assemble_jacobian`."""
    u = _values(field_or_array)
    gamma = freestream.gamma
    _check_physical(u, gamma)
    faces = face_geometry(mesh)
    speeds = _spectral_radius(u[faces.left], faces.normal, gamma)
    inner = faces.interior
    speeds[inner] = np.maximum(speeds[inner], _spectral_radius(u[faces.right[inner]], faces.normal[inner], gamma))
    far = faces.farfield
    outside = np.broadcast_to(freestream.state(), (len(far), 4))
    speeds[far] = np.maximum(speeds[far], _spectral_radius(outside, faces.normal[far], gamma))
    return speeds


def _face_fluxes(
    faces: FaceGeometry,
    u: np.ndarray,
    freestream: FreeStream,
    flux: str,
    wave_speeds: Optional[np.ndarray],
) -> np.ndarray:
    gamma = freestream.gamma
    fluxes = np.empty((len(faces.left), 4))
    groups = (
        (faces.interior, lambda idx: u[faces.right[idx]]),
        (faces.wall, lambda idx: mirror_state(u[faces.left[idx]], faces.normal[idx])),
        (faces.farfield, lambda idx: np.broadcast_to(freestream.state(), (len(idx), 4))),
    )
    for idx, outside in groups:
        if idx.size == 0:
            continue
        inside = u[faces.left[idx]]
        if flux == "hllc":
            fluxes[idx] = hllc_flux(inside, outside(idx), faces.normal[idx], gamma)
        else:
            speed = None if wave_speeds is None else wave_speeds[idx]
            fluxes[idx] = numerical_flux(inside, outside(idx), faces.normal[idx], gamma, speed)
    return fluxes


def assemble_residual(
    mesh: UnstructuredMesh,
    field_or_array: FieldLike,
    freestream: FreeStream,
    flux: str = "rusanov",
    wave_speeds: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Flux balance ``R_i = sum_j H(u_i, u_j, n_ij) |e_ij|`` of every cell, outflow positive.

    Args:
        mesh: The mesh; boundary edges between two airfoil vertices are walls, all others far field.
        field_or_array: Cell states, a :class:`FlowField` or an ``(M, 4)`` array.
        freestream: Far-field state.
        flux: ``"rusanov"`` or ``"hllc"``.
        wave_speeds: Frozen Rusanov wave speed per face; computed from the state when omitted.

    Returns:
        An ``(M, 4)`` residual array.

    Raises:
        StateError: Some cell has non-positive density or pressure.
    """
    if flux not in FLUXES:
        raise DomainError(f"unknown flux '{flux}', expected one of {FLUXES}")
    u = _values(field_or_array)
    _check_physical(u, freestream.gamma)
    faces = face_geometry(mesh)
    contribution = _face_fluxes(faces, u, freestream, flux, wave_speeds) * faces.length[:, None]
    residual = np.zeros_like(u)
    np.add.at(residual, faces.left, contribution)
    inner = faces.interior
    np.subtract.at(residual, faces.right[inner], contribution[inner])
    return residual


def flux_jacobian(u: np.ndarray, n: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    """Analytic ``d(F(u) . n)/du`` as a ``(..., 4, 4)`` array."""
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    g = gamma - 1.0
    rho = u[..., 0]
    vx, vy = u[..., 1] / rho, u[..., 2] / rho
    nx, ny = n[..., 0], n[..., 1]
    vn = vx * nx + vy * ny
    phi = 0.5 * g * (vx**2 + vy**2)
    enthalpy = (u[..., 3] + pressure(u, gamma)) / rho
    zero = np.zeros_like(rho)
    rows = [
        [zero, nx, ny, zero],
        [-vx * vn + phi * nx, vn + vx * nx - g * vx * nx, vx * ny - g * vy * nx, g * nx],
        [-vy * vn + phi * ny, vy * nx - g * vx * ny, vn + vy * ny - g * vy * ny, g * ny],
        [vn * (phi - enthalpy), enthalpy * nx - g * vx * vn, enthalpy * ny - g * vy * vn, gamma * vn],
    ]
    return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)


def _mirror_matrix(n: np.ndarray) -> np.ndarray:
    matrix = np.broadcast_to(np.eye(4), (len(n), 4, 4)).copy()
    matrix[:, 1:3, 1:3] -= 2.0 * n[:, :, None] * n[:, None, :]
    return matrix


def _blocks(rows: np.ndarray, cols: np.ndarray, blocks: np.ndarray) -> Tuple[np.ndarray, ...]:
    k = np.arange(4)
    r = np.broadcast_to(4 * rows[:, None, None] + k[None, :, None], blocks.shape)
    c = np.broadcast_to(4 * cols[:, None, None] + k[None, None, :], blocks.shape)
    return r.ravel(), c.ravel(), blocks.ravel()


def assemble_jacobian(
    mesh: UnstructuredMesh,
    field_or_array: FieldLike,
    freestream: FreeStream,
    wave_speeds: Optional[np.ndarray] = None,
) -> sparse.csr_matrix:
    """Exact Jacobian of the Rusanov residual with the face wave speeds held fixed.

    Unknowns are ordered cell-major: row ``4 i + k`` is component ``k`` of cell ``i``.
    """
    u = _values(field_or_array)
    gamma = freestream.gamma
    _check_physical(u, gamma)
    faces = face_geometry(mesh)
    if wave_speeds is None:
        wave_speeds = face_wave_speeds(mesh, u, freestream)
    eye = np.eye(4)
    parts: List[Tuple[np.ndarray, ...]] = []

    idx = faces.interior
    if idx.size:
        left, right = faces.left[idx], faces.right[idx]
        n = faces.normal[idx]
        lam = wave_speeds[idx][:, None, None]
        scale = faces.length[idx][:, None, None]
        d_left = scale * (0.5 * flux_jacobian(u[left], n, gamma) + 0.5 * lam * eye)
        d_right = scale * (0.5 * flux_jacobian(u[right], n, gamma) - 0.5 * lam * eye)
        parts += [
            _blocks(left, left, d_left),
            _blocks(left, right, d_right),
            _blocks(right, left, -d_left),
            _blocks(right, right, -d_right),
        ]

    idx = faces.wall
    if idx.size:
        cells = faces.left[idx]
        n = faces.normal[idx]
        lam = wave_speeds[idx][:, None, None]
        mirror = _mirror_matrix(n)
        mirrored = mirror_state(u[cells], n)
        block = 0.5 * flux_jacobian(u[cells], n, gamma) + 0.5 * lam * eye
        block = block + (0.5 * flux_jacobian(mirrored, n, gamma) - 0.5 * lam * eye) @ mirror
        parts.append(_blocks(cells, cells, faces.length[idx][:, None, None] * block))

    idx = faces.farfield
    if idx.size:
        cells = faces.left[idx]
        lam = wave_speeds[idx][:, None, None]
        block = 0.5 * flux_jacobian(u[cells], faces.normal[idx], gamma) + 0.5 * lam * eye
        parts.append(_blocks(cells, cells, faces.length[idx][:, None, None] * block))

    size = 4 * len(u)
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    data = np.concatenate([p[2] for p in parts])
    return sparse.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()


def solve_linear(matrix: sparse.spmatrix, rhs: np.ndarray, rtol: float = 1e-8) -> Tuple[np.ndarray, bool]:
    """Sparse direct solve, falling back to ILU-preconditioned GMRES.

    Returns the solution and whether it meets ``rtol``.
    """
    matrix = sparse.csc_matrix(matrix)
    norm = float(np.linalg.norm(rhs))
    if norm == 0.0:
        return np.zeros_like(rhs), True
    try:
        solution = splinalg.spsolve(matrix, rhs)
        if np.all(np.isfinite(solution)) and np.linalg.norm(matrix @ solution - rhs) <= rtol * norm:
            return solution, True
    except (RuntimeError, ValueError) as exc:
        logger.warning("direct solve failed (%s), retrying with GMRES", exc)
    else:
        logger.warning("direct solve inaccurate, retrying with GMRES")
    try:
        ilu = splinalg.spilu(matrix, drop_tol=1e-6, fill_factor=20)
        preconditioner = splinalg.LinearOperator(matrix.shape, ilu.solve)
    except RuntimeError:
        preconditioner = None
    solution, info = splinalg.gmres(matrix, rhs, rtol=rtol, restart=200, maxiter=50, M=preconditioner)
    if info != 0:
        logger.warning("GMRES stopped with info=%d", info)
    return solution, info == 0 and bool(np.all(np.isfinite(solution)))


def free_stream_field(mesh: UnstructuredMesh, freestream: FreeStream) -> FlowField:
    return FlowField(mesh, np.tile(freestream.state(), (mesh.n_triangles, 1)))


def _cell_spectral_sum(faces: FaceGeometry, wave_speeds: np.ndarray, n_cells: int) -> np.ndarray:
    weight = wave_speeds * faces.length
    total = np.bincount(faces.left, weights=weight, minlength=n_cells)
    inner = faces.interior
    total += np.bincount(faces.right[inner], weights=weight[inner], minlength=n_cells)
    return total


def newton_solve(
    mesh: UnstructuredMesh,
    initial: Optional[FieldLike],
    freestream: FreeStream,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    flux: str = "rusanov",
    cfl: float = INITIAL_CFL,
    raise_on_failure: bool = True,
) -> FlowField:
    """Steady state by pseudo-transient continuation around Newton steps.

    Each step solves ``(D / CFL + dR/du) du = -R`` with ``D`` the per-cell sum of
    ``lambda |e|``. The CFL number doubles after a residual decrease and halves
    after an increase. Steps producing a non-physical state are halved down to
    1/1024; up to four more halvings look for a residual decrease before the
    step is taken anyway.

    Args:
        mesh: The mesh.
        initial: Starting state; uniform free stream when ``None``.
        freestream: Far-field state.
        tol: Convergence threshold on the residual max-norm.
        max_iter: Newton step budget.
        flux: Residual flux; the linearization always uses the Rusanov Jacobian.
        cfl: Initial CFL number.
        raise_on_failure: Raise :class:`ConvergenceError` when the budget runs out,
            otherwise return the last iterate with ``converged=False``.

    Raises:
        ConvergenceError: ``max_iter`` exhausted, carrying ``(iter, residual, cfl)`` rows.
        StateError: Damping reached its floor without a physical state.
    """
    gamma = freestream.gamma
    u = free_stream_field(mesh, freestream).values if initial is None else _values(initial).copy()
    _check_physical(u, gamma)
    faces = face_geometry(mesh)
    residual = assemble_residual(mesh, u, freestream, flux)
    norm = float(np.abs(residual).max())
    history: History = [(0, norm, cfl)]
    if norm <= tol:
        return FlowField(mesh, u, True, 0, history)

    for iteration in range(1, max_iter + 1):
        speeds = face_wave_speeds(mesh, u, freestream)
        jacobian = assemble_jacobian(mesh, u, freestream, speeds)
        pseudo_time = np.repeat(_cell_spectral_sum(faces, speeds, len(u)) / cfl, 4)
        system = jacobian + sparse.diags(pseudo_time)
        update, solved = solve_linear(system, -residual.ravel())
        if not solved:
            logger.debug("newton %d: linear solve missed its tolerance at cfl %.3g", iteration, cfl)
            if not np.all(np.isfinite(update)):
                raise StateError(f"non-finite Newton update at step {iteration}")
        update = update.reshape(-1, 4)

        step = 1.0
        tries = 0
        while True:
            trial = u + step * update
            if not is_physical(trial, gamma):
                step *= 0.5
                if step < STEP_FLOOR:
                    raise StateError(f"damping floor reached at Newton step {iteration}")
                continue
            trial_residual = assemble_residual(mesh, trial, freestream, flux)
            trial_norm = float(np.abs(trial_residual).max())
            if trial_norm < norm or tries >= DECREASE_TRIES or step * 0.5 < STEP_FLOOR:
                break
            step *= 0.5
            tries += 1

        cfl = min(cfl * 2.0, MAX_CFL) if trial_norm < norm else max(cfl * 0.5, MIN_CFL)
        u, residual, norm = trial, trial_residual, trial_norm
        history.append((iteration, norm, cfl))
        logger.debug("newton %d: |R|=%.3e step=%.4g cfl=%.3g", iteration, norm, step, cfl)
        if norm <= tol:
            return FlowField(mesh, u, True, iteration, history)

    message = f"Newton solve did not reach {tol:g} in {max_iter} steps (|R|={norm:.3e})"
    if raise_on_failure:
        raise ConvergenceError(message, history)
    logger.warning(message)
    return FlowField(mesh, u, False, max_iter, history)


class Forces(NamedTuple):
    cd: float
    cl: float
    lift_drag_ratio: float


def pressure_force(mesh: UnstructuredMesh, field_or_array: FieldLike, gamma: float = GAMMA) -> np.ndarray:
    """Net pressure force ``sum p n |e|`` on the airfoil, ``n`` pointing into the body."""
    u = _values(field_or_array)
    faces = face_geometry(mesh)
    idx = faces.wall
    p = pressure(u[faces.left[idx]], gamma)
    return np.sum((p * faces.length[idx])[:, None] * faces.normal[idx], axis=0)


def lift_drag_ratio(cd: float, cl: float) -> float:
    if abs(cd) < 1e-12:
        raise ForceError(f"drag coefficient {cd!r} too small for a lift/drag ratio")
    return cl / cd


def compute_forces(mesh: UnstructuredMesh, field_or_array: FieldLike, freestream: FreeStream) -> Forces:
    """Drag and lift coefficients of the pressure force, unit chord.

    Raises:
        ForceError: ``|Cd| < 1e-12``, so the ratio is undefined.
    """
    force = pressure_force(mesh, field_or_array, freestream.gamma)
    cd = float(force @ freestream.drag_direction) / freestream.dynamic_pressure
    cl = float(force @ freestream.lift_direction) / freestream.dynamic_pressure
    return Forces(cd, cl, lift_drag_ratio(cd, cl))


def pressure_coefficients(
    mesh: UnstructuredMesh, field_or_array: FieldLike, freestream: FreeStream
) -> Tuple[np.ndarray, np.ndarray]:
    """Wall face midpoints and the pressure coefficient of the cell behind each."""
    u = _values(field_or_array)
    faces = face_geometry(mesh)
    idx = faces.wall
    midpoints = mesh.vertices[mesh.topology.edges[idx]].mean(axis=1)
    cp = (pressure(u[faces.left[idx]], freestream.gamma) - freestream.pressure) / freestream.dynamic_pressure
    return midpoints, cp


def save_solution(field_or_array: FieldLike, path: PathLike) -> None:
    u = _values(field_or_array)
    lines = [" ".join(repr(float(v)) for v in row) for row in u]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_solution(path: PathLike, mesh: UnstructuredMesh) -> FlowField:
    try:
        rows = [
            [float(v) for v in line.split()]
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        values = np.array(rows, dtype=float).reshape(-1, 4)
    except ValueError as exc:
        raise StateError(f"{path}: malformed solution file: {exc}") from exc
    return FlowField(mesh, values)


def save_history(history: Sequence[Tuple[int, float, float]], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iter", "residual_norm", "cfl"])
        for iteration, norm, cfl in history:
            writer.writerow([iteration, repr(float(norm)), repr(float(cfl))])


def save_forces(forces: Forces, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(Forces._fields))
        writer.writeheader()
        writer.writerow({k: repr(float(v)) for k, v in forces._asdict().items()})
