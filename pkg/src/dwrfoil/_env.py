"""Airfoil deformation environment: action, constraint check, mesh motion and objective."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, NamedTuple, Optional

import numpy as np

from dwrfoil._config import RewardConfig, RunConfig
from dwrfoil._dwr import dwr_adapt_loop
from dwrfoil._euler import FreeStream
from dwrfoil._geometry import (
    DELTA_RANGE,
    AirfoilShape,
    DeformAction,
    ShapeCurves,
    apply_action,
    check_thickness,
    fit_shape,
    naca4_init,
    sample_curves,
)
from dwrfoil._mesh import UnstructuredMesh, capture_and_refine, deform, generate_omesh
from dwrfoil.exceptions import (
    AdjointError,
    ConfigError,
    ConvergenceError,
    DomainError,
    ForceError,
    InfeasibleActionError,
    MeshError,
    StateError,
    TanglingError,
)

logger = logging.getLogger(__name__)

SOLVER_ERRORS = (ConvergenceError, StateError, AdjointError, ForceError, MeshError)


def compute_reward(d_prev: float, d_curr: float, d0: float, t: int, config: RewardConfig) -> float:
    """``(D_prev - D_curr)``, plus ``lambda0 decay^t (D_0 - D_curr)`` in generalized mode.

    Examples:
        >>> compute_reward(5.0, 3.0, 5.0, 1, RewardConfig())
        2.0
    """
    reward = d_prev - d_curr
    if config.mode == "generalized":
        reward += exploration_weight(t, config) * (d0 - d_curr)
    return reward


def exploration_weight(t: int, config: RewardConfig) -> float:
    return config.lambda0 * config.decay**t


class SurrogateObjective:
    """Weighted squared distance of the fitted control points to a target set.

    The weight normalizes the objective to 1 at the reference shape, so the
    minimum is 0 at the target.
    """

    def __init__(self, target: np.ndarray, reference: np.ndarray) -> None:
        self.target = np.asarray(target, dtype=float)
        spread = float(np.sum((np.asarray(reference, dtype=float) - self.target) ** 2))
        if spread == 0.0:
            raise ConfigError("surrogate target coincides with the initial shape")
        self.weight = 1.0 / spread

    @classmethod
    def from_config(cls, shape: AirfoilShape, config: RunConfig) -> "SurrogateObjective":
        geometry = config.geometry
        action = DeformAction(
            config.surrogate.x_target,
            config.surrogate.y_upper_change,
            config.surrogate.y_lower_change,
            geometry.delta,
        )
        target = fit_shape(apply_action(shape, action), geometry.degree, geometry.lambda_s)
        reference = fit_shape(shape, geometry.degree, geometry.lambda_s)
        return cls(target.control_vector(), reference.control_vector())

    def __call__(self, curves: ShapeCurves) -> float:
        return self.weight * float(np.sum((curves.control_vector() - self.target) ** 2))


def evaluate_objective(
    shape: AirfoilShape,
    config: RunConfig,
    mesh: Optional[UnstructuredMesh] = None,
    surrogate: Optional[SurrogateObjective] = None,
) -> float:
    """Objective value D, lower is better.

    ``drag`` returns the DWR-corrected drag coefficient, ``lift_drag_ratio`` the
    negated corrected ratio and ``surrogate`` the control-point proxy. Without a
    mesh a fresh O-mesh is generated around the fitted curves.
    """
    geometry = config.geometry
    curves = fit_shape(shape, geometry.degree, geometry.lambda_s)
    if config.objective == "surrogate":
        if surrogate is None:
            baseline = naca4_init(geometry.thickness, geometry.n_points)
            surrogate = SurrogateObjective.from_config(baseline, config)
        return surrogate(curves)
    if mesh is None:
        mesh = generate_omesh(sample_curves(curves), config.mesh.radius, config.mesh.layers, curves=curves)
    working = mesh.copy()
    if config.mesh.curvature_capture:
        working, rounds = capture_and_refine(working, config.mesh.kappa_tol, config.mesh.capture_rounds)
        logger.debug("curvature capture finished after %d rounds", rounds)
    functional = "drag" if config.objective == "drag" else "ratio"
    result = dwr_adapt_loop(
        working,
        config.freestream,
        functional,
        refine_steps=config.dwr.refine_steps,
        tol=config.solver.tol,
        max_iter=config.solver.max_iter,
        fine_max_iter=config.dwr.fine_max_iter,
        k=config.dwr.k,
        flux=config.solver.flux,
        adjoint_tol=config.dwr.adjoint_tol,
    )
    return result.value if functional == "drag" else -result.value


@dataclass(frozen=True, eq=False)
class EnvState:
    """Shape S_t, its fitted curves, the deformed mesh, D_t and the step index."""

    shape: AirfoilShape
    curves: ShapeCurves
    mesh: UnstructuredMesh
    objective: float
    t: int

    @property
    def reduced(self) -> np.ndarray:
        return self.curves.control_vector()


class StepResult(NamedTuple):
    state: EnvState
    reward: float
    done: bool
    info: Dict[str, Any]


class AirfoilEnv:
    """Deterministic shape-optimization environment.

    A step applies the bump action, checks the thickness constraint, refits the
    curves, moves and repairs the mesh and evaluates the objective. A rejected
    step keeps the previous shape, mesh and objective and earns the penalty.
    """

    def __init__(self, config: RunConfig, max_steps: Optional[int] = None) -> None:
        self.config = config
        self.constraint = config.geometry.constraint()
        self.max_steps = max_steps
        self.surrogate: Optional[SurrogateObjective] = None
        self.d0 = math.nan
        self._initial: Optional[EnvState] = None
        self._state: Optional[EnvState] = None

    @property
    def freestream(self) -> FreeStream:
        return self.config.freestream

    @property
    def n_control(self) -> int:
        return self.config.geometry.degree + 1

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise StateError("environment used before reset")
        return self._state

    def evaluate(self, shape: AirfoilShape, curves: ShapeCurves, mesh: UnstructuredMesh) -> float:
        if self.config.objective == "surrogate" and self.surrogate is not None:
            return self.surrogate(curves)
        return evaluate_objective(shape, self.config, mesh, self.surrogate)

    def reset(self) -> EnvState:
        """Back to the NACA starting shape; the baseline objective is computed once and reused."""
        if self._initial is None:
            geometry = self.config.geometry
            shape = naca4_init(geometry.thickness, geometry.n_points)
            curves = fit_shape(shape, geometry.degree, geometry.lambda_s)
            mesh = generate_omesh(
                sample_curves(curves), self.config.mesh.radius, self.config.mesh.layers, curves=curves
            )
            if self.config.objective == "surrogate":
                self.surrogate = SurrogateObjective.from_config(shape, self.config)
            try:
                d0 = self.evaluate(shape, curves, mesh)
            except SOLVER_ERRORS as exc:
                raise ConfigError(f"baseline objective evaluation failed: {exc}") from exc
            self.d0 = d0
            self._initial = EnvState(shape, curves, mesh, d0, 0)
            logger.info("baseline objective D_0 = %.7g (%s)", d0, self.config.objective)
        self._state = self._initial
        return self._initial

    def snapshot(self) -> EnvState:
        return self.state

    def restore(self, state: EnvState) -> None:
        self._state = state

    def _rejected(self, state: EnvState, reason: str, info: Dict[str, Any]) -> StepResult:
        logger.debug("step %d rejected: %s", state.t + 1, reason)
        info["reason"] = reason
        rolled = replace(state, t=state.t + 1)
        self._state = rolled
        return StepResult(rolled, self.config.reward.penalty, self._done(rolled), info)

    def _done(self, state: EnvState) -> bool:
        return self.max_steps is not None and state.t >= self.max_steps

    def deform_mesh(self, mesh: UnstructuredMesh, curves: ShapeCurves) -> Optional[UnstructuredMesh]:
        """Move the wall onto ``curves`` and repair; ``None`` if triangles stay inverted."""
        try:
            return deform(mesh, curves, self.config.mesh.follow_decay, self.config.mesh.smoothing_sweeps)
        except TanglingError as exc:
            logger.warning("%s", exc)
            return None

    def step(self, action: DeformAction) -> StepResult:
        state = self.state
        geometry = self.config.geometry
        info: Dict[str, Any] = {"infeasible": False, "tangled": False, "solver_failed": False}
        try:
            action.validate(geometry.max_step, DELTA_RANGE)
            shape = apply_action(state.shape, action)
        except (DomainError, InfeasibleActionError) as exc:
            info["infeasible"] = True
            return self._rejected(state, str(exc), info)
        thickness = check_thickness(shape, self.constraint)
        if not thickness.passed:
            info["infeasible"] = True
            return self._rejected(state, f"thickness violated at {len(thickness.violations)} stations", info)

        curves = fit_shape(shape, geometry.degree, geometry.lambda_s)
        mesh = self.deform_mesh(state.mesh, curves)
        if mesh is None:
            info["tangled"] = True
            return self._rejected(state, "mesh tangled", info)
        try:
            objective = self.evaluate(shape, curves, mesh)
        except SOLVER_ERRORS as exc:
            logger.warning("objective evaluation failed, rolling back: %s", exc)
            info["solver_failed"] = True
            return self._rejected(state, str(exc), info)

        t = state.t + 1
        reward = compute_reward(state.objective, objective, self.d0, t, self.config.reward)
        self._state = EnvState(sample_curves(curves), curves, mesh, objective, t)
        return StepResult(self._state, reward, self._done(self._state), info)
