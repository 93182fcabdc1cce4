"""Bezier airfoil geometry: curves, least-squares fitting, deformation actions and constraints."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.special import comb

from dwrfoil.exceptions import (
    DegenerateInputError,
    DomainError,
    FitError,
    InfeasibleActionError,
    ShapeError,
)

logger = logging.getLogger(__name__)

UPPER = 0
LOWER = 1

DEFAULT_DEGREE = 16
DEFAULT_POINTS = 132
DEFAULT_DELTA = 0.4
DEFAULT_MAX_STEP = 0.005
DELTA_RANGE = (0.2, 0.8)

_X_TOL = 1e-12
_BRACKET_SAMPLES = 257

PathLike = Union[str, Path]


def _as_points(points: object, what: str) -> np.ndarray:
    array = np.array(points, dtype=float)
    if array.ndim != 2 or array.shape[1] != 2:
        raise ShapeError(f"{what} must be an (n, 2) array of points, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ShapeError(f"{what} contains non-finite coordinates")
    return array


@dataclass(frozen=True, eq=False)
class AirfoilShape:
    """Ordered sample points of the upper and lower surfaces, leading edge first.

    Both surfaces run from the leading edge (x = 0) to the trailing edge (x = 1). When
    the contour is closed the first and last points of both surfaces coincide.
    """

    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self) -> None:
        upper = _as_points(self.upper, "upper surface")
        lower = _as_points(self.lower, "lower surface")
        if len(upper) < 2 or len(lower) < 2:
            raise ShapeError("each surface needs at least 2 points")
        upper.setflags(write=False)
        lower.setflags(write=False)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "lower", lower)

    @property
    def n_points(self) -> int:
        return len(self.upper) + len(self.lower)

    @property
    def closed_leading_edge(self) -> bool:
        return bool(np.array_equal(self.upper[0], self.lower[0]))

    @property
    def closed_trailing_edge(self) -> bool:
        return bool(np.array_equal(self.upper[-1], self.lower[-1]))

    def surface(self, curve_id: int) -> np.ndarray:
        return self.upper if curve_id == UPPER else self.lower

    def thickness_at(self, x: Union[float, np.ndarray]) -> np.ndarray:
        """Upper minus lower surface height, both interpolated linearly at ``x``."""
        y_upper = np.interp(x, self.upper[:, 0], self.upper[:, 1])
        y_lower = np.interp(x, self.lower[:, 0], self.lower[:, 1])
        return np.asarray(y_upper - y_lower)

    def violations(self) -> List[str]:
        problems = []
        for name, points in (("upper", self.upper), ("lower", self.lower)):
            steps = np.diff(points[:, 0])
            if np.any(steps <= 0.0):
                index = int(np.argmax(steps <= 0.0)) + 1
                problems.append(f"{name} surface x not strictly increasing at point {index}")
        if abs(self.upper[0, 0] - self.lower[0, 0]) > _X_TOL:
            problems.append("surfaces do not share the leading-edge x-coordinate")
        if abs(self.upper[-1, 0] - self.lower[-1, 0]) > _X_TOL:
            problems.append("surfaces do not share the trailing-edge x-coordinate")
        stations = np.concatenate([self.upper[:, 0], self.lower[:, 0]])
        thickness = self.thickness_at(stations)
        if np.any(thickness < -_X_TOL):
            x_bad = float(stations[int(np.argmin(thickness))])
            problems.append(f"surfaces intersect near x={x_bad:.6g}")
        return problems

    def is_valid(self) -> bool:
        return not self.violations()

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise ShapeError("; ".join(problems))

    def boundary_loop(self) -> "BoundaryLoop":
        """Closed counterclockwise loop TE -> upper -> LE -> lower without repeated points."""
        upper_ids = np.arange(len(self.upper))[::-1]
        lower_ids = np.arange(len(self.lower))
        if self.closed_leading_edge:
            lower_ids = lower_ids[1:]
        if self.closed_trailing_edge:
            lower_ids = lower_ids[:-1]
        points = np.vstack([self.upper[upper_ids], self.lower[lower_ids]])
        curve = np.concatenate(
            [np.full(len(upper_ids), UPPER), np.full(len(lower_ids), LOWER)]
        ).astype(int)
        index = np.concatenate([upper_ids, lower_ids]).astype(int)
        return BoundaryLoop(points, curve, index)


class BoundaryLoop(NamedTuple):
    points: np.ndarray
    curve: np.ndarray
    index: np.ndarray


@dataclass(frozen=True, eq=False)
class BezierCurve:
    """Planar Bezier curve of degree ``n`` given by ``n + 1`` control points."""

    control_points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.control_points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise DomainError(f"control points must be an (n+1, 2) array, got {points.shape}")
        if len(points) < 2:
            raise DomainError("a Bezier curve needs degree n >= 1")
        points.setflags(write=False)
        object.__setattr__(self, "control_points", points)

    @property
    def degree(self) -> int:
        return len(self.control_points) - 1

    def translated(self, dx: float, dy: float) -> "BezierCurve":
        return BezierCurve(self.control_points + np.array([dx, dy]))


def bernstein_matrix(degree: int, t: np.ndarray) -> np.ndarray:
    """Bernstein basis values ``C(n,i) (1-t)^(n-i) t^i`` as an ``(len(t), n+1)`` matrix."""
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    i = np.arange(degree + 1)[None, :]
    return comb(degree, i) * np.power(1.0 - t, degree - i) * np.power(t, i)


def _check_param(t: np.ndarray) -> None:
    if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
        bad = t[(t < 0.0) | (t > 1.0) | ~np.isfinite(t)]
        raise DomainError(f"curve parameter must lie in [0, 1], got {bad[0]!r}")


def bernstein_eval(curve: BezierCurve, t: Union[float, np.ndarray]) -> np.ndarray:
    """Evaluate a Bezier curve.

    Args:
        curve: The curve.
        t: Scalar parameter or array of parameters in ``[0, 1]``.

    Returns:
        A ``(2,)`` point for a scalar ``t``, an ``(m, 2)`` array otherwise.

    Examples:
        >>> curve = BezierCurve([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        >>> bernstein_eval(curve, 0.5).tolist()
        [0.75, 0.25]
    """
    scalar = np.ndim(t) == 0
    params = np.atleast_1d(np.asarray(t, dtype=float))
    _check_param(params)
    points = bernstein_matrix(curve.degree, params) @ curve.control_points
    return points[0] if scalar else points


def bernstein_derivative(curve: BezierCurve, t: Union[float, np.ndarray]) -> np.ndarray:
    """First derivative dB/dt, shaped like :func:`bernstein_eval`."""
    scalar = np.ndim(t) == 0
    params = np.atleast_1d(np.asarray(t, dtype=float))
    _check_param(params)
    n = curve.degree
    hodograph = n * np.diff(curve.control_points, axis=0)
    values = bernstein_matrix(n - 1, params) @ hodograph
    return values[0] if scalar else values


def inverse_param(curve: BezierCurve, x: float) -> float:
    """Parameter ``t`` with ``x(B(t)) == x``, found by bracketing, bisection and a Newton polish."""
    x0 = float(curve.control_points[0, 0])
    xn = float(curve.control_points[-1, 0])
    lo_x, hi_x = min(x0, xn), max(x0, xn)
    if not lo_x - _X_TOL <= x <= hi_x + _X_TOL:
        raise DomainError(f"x={x!r} outside curve range [{lo_x!r}, {hi_x!r}]")
    if x == x0:
        return 0.0
    if x == xn:
        return 1.0

    ts = np.linspace(0.0, 1.0, _BRACKET_SAMPLES)
    residual = bernstein_eval(curve, ts)[:, 0] - x
    crossing = np.nonzero(residual[:-1] * residual[1:] <= 0.0)[0]
    if crossing.size == 0:
        return 0.0 if abs(residual[0]) < abs(residual[-1]) else 1.0
    lo, hi = float(ts[crossing[0]]), float(ts[crossing[0] + 1])
    f_lo = float(residual[crossing[0]])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = float(bernstein_eval(curve, mid)[0]) - x
        if abs(f_mid) <= 1e-14 or hi - lo < 1e-16:
            lo = hi = mid
            break
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    for _ in range(3):
        slope = float(bernstein_derivative(curve, t)[0])
        if slope == 0.0:
            break
        step = (float(bernstein_eval(curve, t)[0]) - x) / slope
        candidate = t - step
        if not 0.0 <= candidate <= 1.0 or abs(step) < 1e-17:
            break
        t = candidate
    return t


def chord_length_params(samples: np.ndarray) -> np.ndarray:
    """Cumulative chord length of the sample polyline, normalized to ``[0, 1]``."""
    points = np.asarray(samples, dtype=float)
    lengths = np.hypot(*np.diff(points, axis=0).T)
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    if cumulative[-1] <= 0.0:
        raise FitError("samples have zero total chord length")
    params = cumulative / cumulative[-1]
    params[-1] = 1.0
    return params


def x_params(samples: np.ndarray) -> np.ndarray:
    points = np.asarray(samples, dtype=float)
    span = points[-1, 0] - points[0, 0]
    if span == 0.0:
        raise FitError("samples have zero x extent")
    return (points[:, 0] - points[0, 0]) / span


def second_difference_matrix(size: int) -> np.ndarray:
    """Rows ``CP_{i-1} - 2 CP_i + CP_{i+1}`` for ``i = 1 .. size-2``."""
    rows = max(size - 2, 0)
    matrix = np.zeros((rows, size))
    for i in range(rows):
        matrix[i, i : i + 3] = (1.0, -2.0, 1.0)
    return matrix


def smoothness_penalty(curve: BezierCurve) -> float:
    second = np.diff(curve.control_points, n=2, axis=0)
    return float(np.sum(second**2))


def fit_residual(curve: BezierCurve, samples: np.ndarray, params: np.ndarray) -> float:
    fitted = bernstein_eval(curve, np.asarray(params, dtype=float))
    return float(np.sum((fitted - np.asarray(samples, dtype=float)) ** 2))


def _sample_params(points: np.ndarray, params: Optional[np.ndarray], parameterization: str) -> np.ndarray:
    if params is not None:
        values = np.asarray(params, dtype=float)
        if values.shape != (len(points),):
            raise FitError(f"expected {len(points)} parameters, got shape {values.shape}")
        _check_param(values)
        return values
    if parameterization == "chord":
        return chord_length_params(points)
    if parameterization == "x":
        return x_params(points)
    raise FitError(f"unknown parameterization '{parameterization}'")


def fit_bezier_regularized(
    samples: np.ndarray,
    degree: int,
    lambda_s: float,
    params: Optional[np.ndarray] = None,
    parameterization: str = "chord",
    clamp_ends: bool = False,
) -> BezierCurve:
    """Least-squares Bezier fit with a second-difference smoothness penalty.

    Minimizes ``sum ||B(t_j) - sp_j||^2 + lambda_s * sum ||CP_{i-1} - 2 CP_i + CP_{i+1}||^2``.

    Args:
        samples: Ordered ``(m, 2)`` sample points.
        degree: Curve degree ``n``; needs ``m >= n + 1``.
        lambda_s: Smoothing coefficient, ``>= 0``.
        params: Explicit sample parameters; chord-length parameterization otherwise.
        parameterization: ``"chord"`` or ``"x"`` when ``params`` is not given.
        clamp_ends: Pin the first and last control points to the first and last samples.

    Returns:
        The fitted curve.

    Raises:
        FitError: The least-squares system is rank deficient.
    """
    points = np.asarray(samples, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise FitError(f"samples must be an (m, 2) array, got {points.shape}")
    if degree < 1:
        raise DomainError(f"degree must be >= 1, got {degree}")
    if lambda_s < 0.0:
        raise DomainError(f"lambda_s must be >= 0, got {lambda_s}")
    if len(points) < degree + 1:
        raise FitError(f"degree {degree} fit needs at least {degree + 1} samples, got {len(points)}")
    t = _sample_params(points, params, parameterization)
    if np.unique(t).size < degree + 1:
        raise FitError("rank-deficient fit: fewer distinct sample parameters than control points")

    basis = bernstein_matrix(degree, t)
    smoothing = second_difference_matrix(degree + 1)
    if clamp_ends:
        fixed = points[[0, -1]]
        rhs = points - basis[:, [0, -1]] @ fixed
        smoothing_rhs = -smoothing[:, [0, -1]] @ fixed
        basis, smoothing = basis[:, 1:-1], smoothing[:, 1:-1]
        if basis.shape[1] == 0:
            return BezierCurve(fixed)
    else:
        rhs = points
        smoothing_rhs = np.zeros((smoothing.shape[0], 2))

    if lambda_s > 0.0 and smoothing.shape[0] > 0:
        weight = math.sqrt(lambda_s)
        system = np.vstack([basis, weight * smoothing])
        target = np.vstack([rhs, weight * smoothing_rhs])
    else:
        system, target = basis, rhs
    if np.linalg.matrix_rank(system) < system.shape[1]:
        raise FitError("rank-deficient least-squares system")
    solution = np.linalg.lstsq(system, target, rcond=None)[0]
    if clamp_ends:
        solution = np.vstack([points[:1], solution, points[-1:]])
    return BezierCurve(solution)


def fit_bezier(
    samples: np.ndarray,
    degree: int,
    params: Optional[np.ndarray] = None,
    parameterization: str = "chord",
    clamp_ends: bool = False,
) -> BezierCurve:
    """Plain least-squares Bezier fit; see :func:`fit_bezier_regularized`."""
    return fit_bezier_regularized(
        samples, degree, 0.0, params=params, parameterization=parameterization, clamp_ends=clamp_ends
    )


class ShapeCurves(NamedTuple):
    """Upper and lower curves of an airfoil plus the sample parameters they were fitted at."""

    upper: BezierCurve
    lower: BezierCurve
    upper_params: np.ndarray
    lower_params: np.ndarray

    def curve(self, curve_id: int) -> BezierCurve:
        return self.upper if curve_id == UPPER else self.lower

    def control_vector(self) -> np.ndarray:
        """Flattened control points, upper then lower: the reduced state."""
        return np.concatenate(
            [self.upper.control_points.ravel(), self.lower.control_points.ravel()]
        )

    def translated(self, dx: float, dy: float) -> "ShapeCurves":
        return self._replace(upper=self.upper.translated(dx, dy), lower=self.lower.translated(dx, dy))


def fit_shape(shape: AirfoilShape, degree: int = DEFAULT_DEGREE, lambda_s: float = 0.0) -> ShapeCurves:
    """Fit both surfaces with clamped ends so the curves stay joined at LE and TE."""
    upper_params = chord_length_params(shape.upper)
    lower_params = chord_length_params(shape.lower)
    upper = fit_bezier_regularized(shape.upper, degree, lambda_s, params=upper_params, clamp_ends=True)
    lower = fit_bezier_regularized(shape.lower, degree, lambda_s, params=lower_params, clamp_ends=True)
    return ShapeCurves(upper, lower, upper_params, lower_params)


def sample_curves(curves: ShapeCurves) -> AirfoilShape:
    """Shape whose sample points lie on the curves at their fitted parameters."""
    return AirfoilShape(
        bernstein_eval(curves.upper, curves.upper_params),
        bernstein_eval(curves.lower, curves.lower_params),
    )


@dataclass(frozen=True)
class DeformAction:
    """Gaussian bump displacement of both surfaces centred on ``x_target``."""

    x_target: float
    y_upper_change: float
    y_lower_change: float
    delta: float = DEFAULT_DELTA

    def bump(self, x: np.ndarray) -> np.ndarray:
        """Weights ``exp(-(x - x_target)^2 / (2 delta^2))``."""
        return np.exp(-((np.asarray(x, dtype=float) - self.x_target) ** 2) / (2.0 * self.delta**2))

    def opposite(self) -> "DeformAction":
        return DeformAction(self.x_target, -self.y_upper_change, -self.y_lower_change, self.delta)

    def validate(
        self, max_step: float = DEFAULT_MAX_STEP, delta_range: Tuple[float, float] = DELTA_RANGE
    ) -> None:
        if not 0.0 < self.x_target < 1.0:
            raise DomainError(f"x_target must lie in (0, 1), got {self.x_target!r}")
        for name in ("y_upper_change", "y_lower_change"):
            value = getattr(self, name)
            if abs(value) > max_step + 1e-15:
                raise DomainError(f"|{name}|={abs(value)!r} exceeds max_step={max_step!r}")
        if not delta_range[0] <= self.delta <= delta_range[1]:
            raise DomainError(f"delta={self.delta!r} outside {delta_range}")


def apply_action(shape: AirfoilShape, action: DeformAction) -> AirfoilShape:
    """Displace both surfaces by the action's Gaussian bump.

    Shared leading and trailing edge points move by the mean of the two surface
    displacements so the contour stays closed.

    Raises:
        InfeasibleActionError: The deformed surfaces intersect.
    """
    upper = shape.upper.copy()
    lower = shape.lower.copy()
    du = action.y_upper_change * action.bump(upper[:, 0])
    dl = action.y_lower_change * action.bump(lower[:, 0])
    for end, shared in ((0, shape.closed_leading_edge), (-1, shape.closed_trailing_edge)):
        if shared:
            du[end] = dl[end] = 0.5 * (du[end] + dl[end])
    upper[:, 1] += du
    lower[:, 1] += dl
    deformed = AirfoilShape(upper, lower)
    problems = deformed.violations()
    if problems:
        raise InfeasibleActionError(f"action {action} rejected: {'; '.join(problems)}")
    return deformed


class Curvature(NamedTuple):
    """Discrete curvature ``kappa_i = theta_i / |sp_i sp_{i+1}|`` at interior points."""

    kappa: np.ndarray
    theta: np.ndarray
    lengths: np.ndarray
    total: float
    turning: float


def discrete_curvature(samples: np.ndarray, closed: bool = False) -> Curvature:
    """Turning angles and discrete curvature of a polyline.

    With ``closed=True`` the polyline wraps around and every point gets an angle.

    Raises:
        DegenerateInputError: Fewer than 3 points or repeated consecutive points.
    """
    points = np.asarray(samples, dtype=float)
    if len(points) < 3:
        raise DegenerateInputError(f"need at least 3 points, got {len(points)}")
    if closed:
        segments = np.roll(points, -1, axis=0) - points
    else:
        segments = np.diff(points, axis=0)
    lengths = np.hypot(segments[:, 0], segments[:, 1])
    if np.any(lengths == 0.0):
        index = int(np.argmax(lengths == 0.0))
        raise DegenerateInputError(f"consecutive points {index} and {index + 1} coincide")
    incoming = np.roll(segments, 1, axis=0) if closed else segments[:-1]
    outgoing = segments if closed else segments[1:]
    following = lengths if closed else lengths[1:]
    cross = incoming[:, 0] * outgoing[:, 1] - incoming[:, 1] * outgoing[:, 0]
    dot = np.sum(incoming * outgoing, axis=1)
    theta = np.arctan2(np.abs(cross), dot)
    kappa = theta / following
    return Curvature(kappa, theta, following, float(np.sum(kappa)), float(np.sum(theta)))


@dataclass(frozen=True)
class ThicknessConstraint:
    """Minimum thickness enforced on closed chord intervals."""

    x_ranges: Tuple[Tuple[float, float], ...] = ((0.01, 0.1), (0.7, 0.9))
    min_thickness: float = 0.01

    def __post_init__(self) -> None:
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.x_ranges)
        for lo, hi in ranges:
            if not 0.0 <= lo <= hi <= 1.0:
                raise DomainError(f"thickness interval ({lo}, {hi}) not inside [0, 1]")
        if self.min_thickness < 0.0:
            raise DomainError(f"min_thickness must be >= 0, got {self.min_thickness}")
        object.__setattr__(self, "x_ranges", ranges)

    @classmethod
    def literal(cls) -> "ThicknessConstraint":
        """0.1 chord on ``x < 0.1`` and ``x > 0.7``; infeasible for NACA0012."""
        return cls(((0.0, 0.1), (0.7, 1.0)), 0.1)

    def covers(self, x: np.ndarray) -> np.ndarray:
        mask = np.zeros(np.shape(x), dtype=bool)
        for lo, hi in self.x_ranges:
            mask |= (x >= lo) & (x <= hi)
        return mask


class ThicknessCheck(NamedTuple):
    passed: bool
    violations: List[Tuple[float, float]]


def check_thickness(shape: AirfoilShape, constraint: ThicknessConstraint) -> ThicknessCheck:
    """Check the thickness at the upper-surface stations inside the constrained ranges.

    Returns:
        The verdict and the violating ``(x, thickness)`` stations.
    """
    stations = shape.upper[:, 0]
    inside = stations[constraint.covers(stations)]
    thickness = shape.thickness_at(inside)
    bad = thickness < constraint.min_thickness
    violations = [(float(x), float(h)) for x, h in zip(inside[bad], thickness[bad])]
    return ThicknessCheck(not violations, violations)


def naca4_init(thickness: float = 0.12, n_points: int = DEFAULT_POINTS, closed_te: bool = True) -> AirfoilShape:
    """Symmetric NACA 4-digit section with cosine-clustered stations.

    Args:
        thickness: Maximum thickness as a chord fraction, in ``(0, 0.3]``.
        n_points: Total sample count, split evenly between the surfaces.
        closed_te: Use the closed trailing-edge coefficient so both surfaces end at (1, 0).

    Examples:
        >>> shape = naca4_init(0.12, 132)
        >>> len(shape.upper), len(shape.lower)
        (66, 66)
    """
    if not 0.0 < thickness <= 0.3:
        raise DomainError(f"thickness must lie in (0, 0.3], got {thickness}")
    if n_points % 2 or n_points < 6:
        raise DomainError(f"n_points must be even and >= 6, got {n_points}")
    per_surface = n_points // 2
    beta = np.linspace(0.0, math.pi, per_surface)
    x = 0.5 * (1.0 - np.cos(beta))
    last = 0.1036 if closed_te else 0.1015
    y = 5.0 * thickness * (
        0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x**2 + 0.2843 * x**3 - last * x**4
    )
    y[0] = 0.0
    if closed_te:
        y[-1] = 0.0
    return AirfoilShape(np.column_stack([x, y]), np.column_stack([x, -y]))


def save_shape(shape: AirfoilShape, path: PathLike) -> None:
    lines = [f"AIRFOIL {len(shape.upper)} {len(shape.lower)}"]
    for x, y in np.vstack([shape.upper, shape.lower]):
        lines.append(f"{float(x)!r} {float(y)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_shape(path: PathLike) -> AirfoilShape:
    lines = [line.split() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines or len(lines[0]) != 3 or lines[0][0] != "AIRFOIL":
        raise ShapeError(f"{path}: missing 'AIRFOIL <n_upper> <n_lower>' header")
    try:
        n_upper, n_lower = int(lines[0][1]), int(lines[0][2])
        values = np.array([[float(x), float(y)] for x, y in lines[1:]], dtype=float)
    except ValueError as exc:
        raise ShapeError(f"{path}: malformed shape file: {exc}") from exc
    if len(values) != n_upper + n_lower:
        raise ShapeError(f"{path}: header announces {n_upper + n_lower} points, found {len(values)}")
    return AirfoilShape(values[:n_upper], values[n_upper:])


def shapes_close(first: AirfoilShape, second: AirfoilShape, atol: float = 1e-12) -> bool:
    return (
        first.upper.shape == second.upper.shape
        and first.lower.shape == second.lower.shape
        and bool(np.allclose(first.upper, second.upper, rtol=0.0, atol=atol))
        and bool(np.allclose(first.lower, second.lower, rtol=0.0, atol=atol))
    )
