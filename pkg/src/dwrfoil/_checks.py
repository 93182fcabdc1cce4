"""Built-in property checks run by ``dwrfoil validate``."""

import logging
import math
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

from dwrfoil._config import RewardConfig
from dwrfoil._dwr import functional_gradient, functional_value, solve_adjoint
from dwrfoil._env import compute_reward, exploration_weight
from dwrfoil._euler import (
    FreeStream,
    assemble_jacobian,
    assemble_residual,
    face_wave_speeds,
    free_stream_field,
)
from dwrfoil._geometry import (
    BezierCurve,
    bernstein_eval,
    discrete_curvature,
    fit_bezier,
    fit_bezier_regularized,
    naca4_init,
    smoothness_penalty,
)
from dwrfoil._mesh import FARFIELD, INTERIOR, UnstructuredMesh, generate_omesh

logger = logging.getLogger(__name__)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def square_mesh(n: int = 8, size: float = 1.0) -> UnstructuredMesh:
    """Structured ``n x n`` square split into triangles; every boundary edge is far field."""
    ticks = np.linspace(0.0, size, n + 1)
    xs, ys = np.meshgrid(ticks, ticks, indexing="xy")
    vertices = np.column_stack([xs.ravel(), ys.ravel()])
    index = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    triangles = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = index[j, i], index[j, i + 1], index[j + 1, i + 1], index[j + 1, i]
            triangles += [(a, b, c), (a, c, d)]
    on_edge = (xs.ravel() == 0.0) | (xs.ravel() == size) | (ys.ravel() == 0.0) | (ys.ravel() == size)
    markers = np.where(on_edge, FARFIELD, INTERIOR)
    return UnstructuredMesh(vertices, np.array(triangles), markers, {})


def small_omesh(n_points: int = 40, radius: float = 10.0, n_layers: int = 4) -> UnstructuredMesh:
    return generate_omesh(naca4_init(0.12, n_points), radius, n_layers)


def perturbed_state(
    mesh: UnstructuredMesh, freestream: FreeStream, rng: np.random.Generator, scale: float = 0.05
) -> np.ndarray:
    u = free_stream_field(mesh, freestream).values
    return u * (1.0 + scale * rng.uniform(-1.0, 1.0, size=u.shape))


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_free_stream(freestream: FreeStream, rng: np.random.Generator) -> CheckResult:
    del rng
    mesh = square_mesh()
    residual = assemble_residual(mesh, free_stream_field(mesh, freestream), freestream)
    worst = float(np.abs(residual).max())
    return CheckResult("free-stream preservation", worst <= 1e-12, f"max |R| = {worst:.3e}")


def check_jacobian(
    freestream: FreeStream, rng: np.random.Generator, samples: int = 20, mesh: Optional[UnstructuredMesh] = None
) -> CheckResult:
    """Central differences of the frozen-speed residual against Jacobian-vector products."""
    mesh = mesh if mesh is not None else small_omesh()
    worst = 0.0
    for _ in range(samples):
        u = perturbed_state(mesh, freestream, rng)
        speeds = face_wave_speeds(mesh, u, freestream)
        jacobian = assemble_jacobian(mesh, u, freestream, speeds)
        v = rng.standard_normal(u.shape)
        eps = 1e-6
        plus = assemble_residual(mesh, u + eps * v, freestream, wave_speeds=speeds)
        minus = assemble_residual(mesh, u - eps * v, freestream, wave_speeds=speeds)
        fd = ((plus - minus) / (2.0 * eps)).ravel()
        worst = max(worst, _relative(jacobian @ v.ravel(), fd))
    return CheckResult("jacobian finite differences", worst <= 1e-6, f"worst relative error {worst:.3e}")


def check_gradient(
    freestream: FreeStream, rng: np.random.Generator, samples: int = 20, mesh: Optional[UnstructuredMesh] = None
) -> CheckResult:
    mesh = mesh if mesh is not None else small_omesh()
    worst = 0.0
    for _ in range(samples):
        u = perturbed_state(mesh, freestream, rng)
        gradient = functional_gradient(mesh, u, freestream, "drag")
        v = rng.standard_normal(u.shape)
        eps = 1e-6
        fd = (
            functional_value(mesh, u + eps * v, freestream) - functional_value(mesh, u - eps * v, freestream)
        ) / (2.0 * eps)
        exact = float(np.sum(gradient * v))
        worst = max(worst, abs(exact - fd) / max(abs(fd), 1e-300))
    return CheckResult("functional gradient", worst <= 1e-6, f"worst relative error {worst:.3e}")


def check_adjoint(
    freestream: FreeStream, rng: np.random.Generator, mesh: Optional[UnstructuredMesh] = None
) -> CheckResult:
    """``<z, R' v> = <dJ/du, v>`` for the adjoint ``z``."""
    mesh = mesh if mesh is not None else small_omesh()
    u = perturbed_state(mesh, freestream, rng)
    jacobian = assemble_jacobian(mesh, u, freestream)
    gradient = functional_gradient(mesh, u, freestream, "drag")
    z = solve_adjoint(jacobian, gradient)
    v = rng.standard_normal(u.size)
    left = float(z.ravel() @ (jacobian @ v))
    right = float(gradient.ravel() @ v)
    error = abs(left - right) / max(abs(right), 1e-300)
    return CheckResult("adjoint identity", error <= 1e-8, f"relative mismatch {error:.3e}")


def check_bezier(freestream: FreeStream, rng: np.random.Generator) -> CheckResult:
    del freestream
    control = np.column_stack([np.linspace(0.0, 1.0, 6), rng.uniform(-0.1, 0.1, 6)])
    params = np.linspace(0.0, 1.0, 50)
    samples = bernstein_eval(BezierCurve(control), params)
    fitted = fit_bezier(samples, 5, params=params)
    error = float(np.abs(fitted.control_points - control).max())
    noisy = samples + rng.normal(0.0, 1e-3, samples.shape)
    plain = smoothness_penalty(fit_bezier(noisy, 5, params=params))
    smooth = smoothness_penalty(fit_bezier_regularized(noisy, 5, 1e-2, params=params))
    passed = error <= 1e-8 and smooth < plain
    return CheckResult(
        "bezier round trip", passed, f"control point error {error:.3e}, penalty {plain:.3e} -> {smooth:.3e}"
    )


def check_curvature(freestream: FreeStream, rng: np.random.Generator) -> CheckResult:
    del freestream, rng
    angles = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    polygon = 2.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    kappa = float(discrete_curvature(polygon, closed=True).kappa.mean())
    return CheckResult("circle curvature", abs(kappa - 0.5) <= 0.01, f"mean curvature {kappa:.6f}")


def check_rewards(
    freestream: FreeStream, rng: np.random.Generator, trajectories: int = 1000, length: int = 20
) -> CheckResult:
    """Simple rewards sum to ``D_0 - D_T``; the exploration term stays under its geometric bound."""
    del freestream
    simple = RewardConfig()
    generalized = RewardConfig(mode="generalized", lambda0=0.5, decay=0.9)
    bound_factor = generalized.lambda0 / (1.0 - generalized.decay)
    worst = 0.0
    bounded = True
    for _ in range(trajectories):
        d0 = float(rng.uniform(0.01, 1.0))
        drags = np.concatenate([[d0], rng.uniform(0.0, d0, length)])
        total = sum(compute_reward(drags[t - 1], drags[t], d0, t, simple) for t in range(1, length + 1))
        worst = max(worst, abs(total - (d0 - drags[-1])))
        exploration = sum(
            exploration_weight(t, generalized) * (d0 - drags[t]) for t in range(1, length + 1)
        )
        bounded = bounded and exploration <= d0 * bound_factor
    return CheckResult(
        "reward telescoping", worst <= 1e-12 and bounded, f"worst telescoping error {worst:.3e}"
    )


CHECKS: Tuple[Callable[[FreeStream, np.random.Generator], CheckResult], ...] = (
    check_free_stream,
    check_jacobian,
    check_gradient,
    check_adjoint,
    check_bezier,
    check_curvature,
    check_rewards,
)


def run_checks(freestream: FreeStream, seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for check in CHECKS:
        result = check(freestream, rng)
        log = logger.info if result.passed else logger.error
        log("%s: %s (%s)", result.name, "ok" if result.passed else "FAILED", result.detail)
        results.append(result)
    return results
