"""Discrete adjoint, dual-weighted residual estimates and goal-oriented adaptation."""

import csv
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from dwrfoil._euler import (
    DEFAULT_TOL,
    FieldLike,
    FlowField,
    FreeStream,
    PathLike,
    _values,
    assemble_jacobian,
    assemble_residual,
    cons_to_prim,
    face_geometry,
    is_physical,
    newton_solve,
    pressure,
    solve_linear,
)
from dwrfoil._mesh import RefinementHierarchy, UnstructuredMesh, refine_with_parents, uniform_refine
from dwrfoil.exceptions import AdjointError, ConvergenceError, DomainError, ForceError

logger = logging.getLogger(__name__)

FUNCTIONALS = ("drag", "lift", "ratio")
LOG_FLOOR = 1e-30
DWR_COLUMNS = (
    "step",
    "cells_coarse",
    "cells_fine",
    "J_uncorrected",
    "correction",
    "J_corrected",
    "TOL",
    "marked",
    "J_fine",
)


def _check_functional(functional: str) -> None:
    if functional not in FUNCTIONALS:
        raise DomainError(f"unknown functional '{functional}', expected one of {FUNCTIONALS}")


def prolongate(coarse: FieldLike, hierarchy: RefinementHierarchy) -> FlowField:
    """Piecewise-constant injection: every fine triangle takes its parent's state."""
    return FlowField(hierarchy.fine, _values(coarse)[hierarchy.parent_map])


def _wall_weights(
    mesh: UnstructuredMesh, direction: np.ndarray, freestream: FreeStream
) -> Tuple[np.ndarray, np.ndarray]:
    faces = face_geometry(mesh)
    idx = faces.wall
    weight = faces.length[idx] * (faces.normal[idx] @ direction) / freestream.dynamic_pressure
    return faces.left[idx], weight


def _coefficient(mesh: UnstructuredMesh, u: np.ndarray, freestream: FreeStream, direction: np.ndarray) -> float:
    cells, weight = _wall_weights(mesh, direction, freestream)
    return float(np.sum(weight * pressure(u[cells], freestream.gamma)))


def _coefficient_gradient(
    mesh: UnstructuredMesh, u: np.ndarray, freestream: FreeStream, direction: np.ndarray
) -> np.ndarray:
    cells, weight = _wall_weights(mesh, direction, freestream)
    rho, vx, vy, _ = cons_to_prim(u[cells], freestream.gamma)
    g = freestream.gamma - 1.0
    dp_du = g * np.column_stack([0.5 * (vx**2 + vy**2), -vx, -vy, np.ones_like(rho)])
    gradient = np.zeros_like(u)
    np.add.at(gradient, cells, weight[:, None] * dp_du)
    return gradient


def functional_value(
    mesh: UnstructuredMesh, field_or_array: FieldLike, freestream: FreeStream, functional: str = "drag"
) -> float:
    """Cd, Cl or Cl/Cd of the wall pressure force."""
    _check_functional(functional)
    u = _values(field_or_array)
    cd = _coefficient(mesh, u, freestream, freestream.drag_direction)
    if functional == "drag":
        return cd
    cl = _coefficient(mesh, u, freestream, freestream.lift_direction)
    if functional == "lift":
        return cl
    if abs(cd) < 1e-12:
        raise ForceError(f"drag coefficient {cd!r} too small for a lift/drag ratio")
    return cl / cd


def functional_gradient(
    mesh: UnstructuredMesh, field_or_array: FieldLike, freestream: FreeStream, functional: str = "drag"
) -> np.ndarray:
    """Analytic ``dJ/du`` per cell; zero away from the wall.

    The ratio gradient follows the quotient rule ``(dCl Cd - Cl dCd) / Cd^2``.
    """
    _check_functional(functional)
    u = _values(field_or_array)
    drag = freestream.drag_direction
    lift = freestream.lift_direction
    if functional == "drag":
        return _coefficient_gradient(mesh, u, freestream, drag)
    if functional == "lift":
        return _coefficient_gradient(mesh, u, freestream, lift)
    cd = _coefficient(mesh, u, freestream, drag)
    cl = _coefficient(mesh, u, freestream, lift)
    if abs(cd) < 1e-12:
        raise ForceError(f"drag coefficient {cd!r} too small for a lift/drag ratio")
    d_cd = _coefficient_gradient(mesh, u, freestream, drag)
    d_cl = _coefficient_gradient(mesh, u, freestream, lift)
    return (d_cl * cd - cl * d_cd) / cd**2


def solve_adjoint(jacobian: sparse.spmatrix, gradient: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Solve ``(dR/du)^T z = dJ/du``; ``z`` has the shape of ``gradient``.

    Raises:
        AdjointError: The transposed system could not be solved to ``tol``.
    """
    g = np.asarray(gradient, dtype=float)
    if not np.any(g):
        return np.zeros_like(g)
    z, ok = solve_linear(sparse.csr_matrix(jacobian).T, g.ravel(), rtol=tol)
    if not ok:
        raise AdjointError(f"adjoint system not solved to relative tolerance {tol:g}")
    return z.reshape(g.shape)


class CorrectedFunctional(NamedTuple):
    value: float
    correction: float


def corrected_functional(j_value: float, adjoint: np.ndarray, residual: np.ndarray) -> CorrectedFunctional:
    """``J(u_h^H) - z^T R(u_h^H)`` together with the correction ``z^T R``."""
    correction = float(np.sum(np.asarray(adjoint) * np.asarray(residual)))
    return CorrectedFunctional(j_value - correction, correction)


def auto_tol(indicators: np.ndarray, k: float = 1.0) -> float:
    """Threshold ``exp(mean + k std)`` of the log-indicators.

    Examples:
        >>> eta = np.array([1.0] * 9 + [1e6])
        >>> int(np.sum(eta > auto_tol(eta)))
        1
    """
    eta = np.asarray(indicators, dtype=float)
    if eta.size == 0:
        raise DomainError("auto_tol needs at least one indicator")
    logs = np.log(eta + LOG_FLOOR)
    return float(np.exp(logs.mean() + k * logs.std()))


class ErrorIndicators(NamedTuple):
    eta: np.ndarray
    tol: float
    correction: float

    @property
    def marked(self) -> np.ndarray:
        return np.nonzero(self.eta > self.tol)[0]


def error_indicators(
    adjoint: np.ndarray,
    residual: np.ndarray,
    hierarchy: Union[RefinementHierarchy, np.ndarray],
    k: float = 1.0,
    n_coarse: Optional[int] = None,
) -> ErrorIndicators:
    """Per-parent sums of ``|z_c . R_c|`` over the fine children ``c``."""
    if isinstance(hierarchy, RefinementHierarchy):
        parent_map = hierarchy.parent_map
        n_coarse = hierarchy.coarse.n_triangles
    else:
        parent_map = np.asarray(hierarchy, dtype=int)
        n_coarse = int(parent_map.max()) + 1 if n_coarse is None else n_coarse
    local = np.sum(np.asarray(adjoint) * np.asarray(residual), axis=1)
    eta = np.zeros(n_coarse)
    np.add.at(eta, parent_map, np.abs(local))
    return ErrorIndicators(eta, auto_tol(eta, k), float(local.sum()))


class AdaptationResult(NamedTuple):
    mesh: UnstructuredMesh
    value: float
    field: FlowField
    history: List[Dict[str, float]]


def dwr_adapt_loop(
    mesh: UnstructuredMesh,
    freestream: FreeStream,
    functional: str = "drag",
    refine_steps: int = 2,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    fine_max_iter: int = 20,
    k: float = 1.0,
    flux: str = "rusanov",
    adjoint_tol: float = 1e-8,
) -> AdaptationResult:
    """Goal-oriented adaptation driven by the drag adjoint.

    Every step solves on the current mesh, builds the uniformly refined embedded
    mesh, prolongs the solution, evaluates the fine residual, solves the adjoint at
    the prolonged state, corrects the functional and marks elements whose indicator
    exceeds the automatic threshold. Marked elements are refined before the next
    step; the last step only evaluates.

    Args:
        mesh: Starting mesh.
        freestream: Far-field state.
        functional: ``"drag"``, ``"lift"`` or ``"ratio"``. Indicators always come from
            the drag adjoint; the functional's own adjoint corrects the value.
        refine_steps: Number of solve/estimate steps, at least 1.
        tol: Residual tolerance of the coarse solve.
        max_iter: Newton budget of the coarse solve.
        fine_max_iter: Newton budget of the reference fine solve; 0 skips it.
        k: Spread multiplier of :func:`auto_tol`.
        flux: Residual flux.
        adjoint_tol: Relative tolerance of the adjoint solve.

    Raises:
        ConvergenceError: The coarse solve failed; ``step`` names the adaptation step.
    """
    _check_functional(functional)
    if refine_steps < 1:
        raise DomainError(f"refine_steps must be >= 1, got {refine_steps}")
    history: List[Dict[str, float]] = []
    initial: Optional[np.ndarray] = None
    value = math.nan
    solution: Optional[FlowField] = None
    for step in range(refine_steps):
        try:
            solution = newton_solve(mesh, initial, freestream, tol=tol, max_iter=max_iter, flux=flux)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"adaptation step {step}: {exc}", history=exc.history, step=step
            ) from exc

        hierarchy = uniform_refine(mesh)
        prolonged = prolongate(solution, hierarchy)
        fine = hierarchy.fine
        residual = assemble_residual(fine, prolonged, freestream, flux)
        uncorrected = functional_value(fine, prolonged, freestream, functional)

        j_fine = math.nan
        if fine_max_iter > 0:
            reference = newton_solve(
                fine, prolonged, freestream, tol=tol, max_iter=fine_max_iter, flux=flux, raise_on_failure=False
            )
            if is_physical(reference.values, freestream.gamma):
                j_fine = functional_value(fine, reference, freestream, functional)

        jacobian = assemble_jacobian(fine, prolonged, freestream)
        drag_adjoint = solve_adjoint(
            jacobian, functional_gradient(fine, prolonged, freestream, "drag"), adjoint_tol
        )
        if functional == "drag":
            value_adjoint = drag_adjoint
        else:
            value_adjoint = solve_adjoint(
                jacobian, functional_gradient(fine, prolonged, freestream, functional), adjoint_tol
            )
        corrected = corrected_functional(uncorrected, value_adjoint, residual)
        indicators = error_indicators(drag_adjoint, residual, hierarchy, k)
        marked = indicators.marked
        value = corrected.value
        history.append(
            {
                "step": step,
                "cells_coarse": mesh.n_triangles,
                "cells_fine": fine.n_triangles,
                "J_uncorrected": uncorrected,
                "correction": corrected.correction,
                "J_corrected": corrected.value,
                "TOL": indicators.tol,
                "marked": len(marked),
                "J_fine": j_fine,
            }
        )
        logger.info(
            "dwr step %d: %d cells, J=%.6g, correction=%.3e, marked %d",
            step,
            mesh.n_triangles,
            corrected.value,
            corrected.correction,
            len(marked),
        )
        if step == refine_steps - 1 or len(marked) == 0:
            break
        mesh, parents = refine_with_parents(mesh, marked)
        initial = solution.values[parents]

    assert solution is not None
    return AdaptationResult(mesh, value, solution, history)


def save_dwr_history(history: Sequence[Dict[str, float]], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(DWR_COLUMNS))
        writer.writeheader()
        for row in history:
            writer.writerow({key: row[key] for key in DWR_COLUMNS})
