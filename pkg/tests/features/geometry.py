"""Tests for Bezier geometry, fitting, actions and constraints."""

# pylint: disable=missing-docstring
import math
import os
import re
import tempfile

import numpy as np

from dwrfoil._geometry import (
    AirfoilShape,
    BezierCurve,
    DeformAction,
    ThicknessConstraint,
    apply_action,
    bernstein_eval,
    check_thickness,
    discrete_curvature,
    fit_bezier,
    fit_bezier_regularized,
    fit_residual,
    fit_shape,
    inverse_param,
    load_shape,
    naca4_init,
    sample_curves,
    save_shape,
    shapes_close,
    smoothness_penalty,
)
from dwrfoil.exceptions import (
    DegenerateInputError,
    DomainError,
    FitError,
    InfeasibleActionError,
    ShapeError,
)
from tests.utils import assert_raises, naca_shape


def _known_curve(seed: int = 1) -> BezierCurve:
    rng = np.random.default_rng(seed)
    return BezierCurve(np.column_stack([np.linspace(0.0, 1.0, 6), rng.uniform(-0.2, 0.2, 6)]))


class GeometryTestCase:
    def test_bernstein_eval_constant_curve(self):
        curve = BezierCurve([[0.3, 0.7]] * 5)
        for t in (0.0, 0.21, 0.5, 1.0):
            assert np.allclose(bernstein_eval(curve, t), [0.3, 0.7], atol=1e-15)

    def test_bernstein_eval_linear_midpoint(self):
        curve = BezierCurve([[0.0, 0.0], [1.0, 1.0]])
        assert np.allclose(bernstein_eval(curve, 0.5), [0.5, 0.5])

    def test_bernstein_eval_quadratic_matches_de_casteljau(self):
        curve = BezierCurve([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        assert np.allclose(bernstein_eval(curve, 0.5), [0.75, 0.25])

    def test_bernstein_eval_endpoints_are_exact(self):
        curve = _known_curve()
        assert np.array_equal(bernstein_eval(curve, 0.0), curve.control_points[0])
        assert np.array_equal(bernstein_eval(curve, 1.0), curve.control_points[-1])

    def test_bernstein_eval_rejects_parameter_outside_unit_interval(self):
        with assert_raises(DomainError, re.compile("curve parameter must lie in")):
            bernstein_eval(_known_curve(), 1.5)

    def test_bezier_curve_needs_two_control_points(self):
        with assert_raises(DomainError, "a Bezier curve needs degree n >= 1"):
            BezierCurve([[0.0, 0.0]])

    def test_inverse_param_endpoints(self):
        curve = _known_curve()
        assert inverse_param(curve, 0.0) == 0.0
        assert inverse_param(curve, 1.0) == 1.0

    def test_inverse_param_round_trip(self):
        curve = _known_curve()
        x = float(bernstein_eval(curve, 0.37)[0])
        t = inverse_param(curve, x)
        assert abs(t - 0.37) < 1e-8
        assert abs(float(bernstein_eval(curve, t)[0]) - x) <= 1e-10

    def test_inverse_param_out_of_range(self):
        with assert_raises(DomainError, re.compile(r"x=1\.5 outside curve range")):
            inverse_param(_known_curve(), 1.5)

    def test_fit_bezier_recovers_known_control_points(self):
        curve = _known_curve()
        params = np.linspace(0.0, 1.0, 50)
        fitted = fit_bezier(bernstein_eval(curve, params), 5, params=params)
        assert np.abs(fitted.control_points - curve.control_points).max() < 1e-8

    def test_fit_bezier_collinear_degree_one(self):
        x = np.linspace(0.0, 2.0, 9)
        samples = np.column_stack([x, 0.5 * x + 1.0])
        fitted = fit_bezier(samples, 1)
        assert np.allclose(fitted.control_points, [[0.0, 1.0], [2.0, 2.0]], atol=1e-12)

    def test_fit_bezier_interpolates_n_plus_one_points(self):
        samples = np.array([[0.0, 0.0], [0.3, 0.2], [0.6, -0.1], [1.0, 0.05]])
        params = np.array([0.0, 0.3, 0.6, 1.0])
        fitted = fit_bezier(samples, 3, params=params)
        assert fit_residual(fitted, samples, params) < 1e-20

    def test_fit_bezier_rank_deficient(self):
        samples = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
        with assert_raises(FitError, None):
            fit_bezier(samples, 2, params=np.array([0.5, 0.5, 0.5]))

    def test_fit_bezier_needs_enough_samples(self):
        with assert_raises(FitError, "degree 5 fit needs at least 6 samples, got 3"):
            fit_bezier(np.array([[0.0, 0.0], [0.5, 0.1], [1.0, 0.0]]), 5)

    def test_regularized_fit_reduces_to_plain_fit(self):
        samples = naca_shape().upper
        plain = fit_bezier(samples, 8)
        regularized = fit_bezier_regularized(samples, 8, 0.0)
        assert np.abs(plain.control_points - regularized.control_points).max() < 1e-12

    def test_regularized_fit_large_lambda_flattens_second_differences(self):
        samples = naca_shape().upper
        fitted = fit_bezier_regularized(samples, 8, 1e9)
        second = np.diff(fitted.control_points, n=2, axis=0)
        assert np.abs(second).max() < 1e-4

    def test_regularized_fit_smooths_noisy_samples(self):
        rng = np.random.default_rng(4)
        samples = naca_shape().upper + rng.normal(0.0, 1e-3, (66, 2))
        plain = smoothness_penalty(fit_bezier(samples, 10))
        smooth = smoothness_penalty(fit_bezier_regularized(samples, 10, 1e-3))
        assert smooth < plain

    def test_regularized_fit_tradeoff_is_monotone_in_lambda(self):
        rng = np.random.default_rng(5)
        samples = naca_shape().upper + rng.normal(0.0, 1e-3, (66, 2))
        params = np.linspace(0.0, 1.0, 66)
        residuals, penalties = [], []
        for lambda_s in (0.0, 1e-4, 1e-2, 1.0):
            curve = fit_bezier_regularized(samples, 10, lambda_s, params=params)
            residuals.append(fit_residual(curve, samples, params))
            penalties.append(smoothness_penalty(curve))
        assert all(b >= a * (1.0 - 1e-9) for a, b in zip(residuals, residuals[1:]))
        assert all(b <= a * (1.0 + 1e-9) for a, b in zip(penalties, penalties[1:]))

    def test_regularized_fit_rejects_negative_lambda(self):
        with assert_raises(DomainError, "lambda_s must be >= 0, got -1.0"):
            fit_bezier_regularized(naca_shape().upper, 4, -1.0)

    def test_fit_shape_keeps_curves_joined(self):
        curves = fit_shape(naca_shape(), 16, 1e-6)
        assert np.array_equal(curves.upper.control_points[0], curves.lower.control_points[0])
        assert np.array_equal(curves.upper.control_points[-1], curves.lower.control_points[-1])
        assert curves.control_vector().shape == (68,)

    def test_sample_curves_stays_close_to_shape(self):
        shape = naca_shape()
        resampled = sample_curves(fit_shape(shape, 16, 1e-6))
        assert np.abs(resampled.upper - shape.upper).max() < 5e-3

    def test_apply_zero_action_leaves_shape_unchanged(self):
        shape = naca_shape()
        moved = apply_action(shape, DeformAction(0.4, 0.0, 0.0))
        assert shapes_close(shape, moved, atol=0.0)

    def test_apply_action_peak_moves_by_full_displacement(self):
        shape = naca_shape()
        x_target = float(shape.upper[20, 0])
        moved = apply_action(shape, DeformAction(x_target, 0.004, -0.003))
        assert abs(moved.upper[20, 1] - shape.upper[20, 1] - 0.004) < 1e-15
        assert abs(moved.lower[20, 1] - shape.lower[20, 1] + 0.003) < 1e-15
        assert np.array_equal(moved.upper[:, 0], shape.upper[:, 0])

    def test_apply_action_one_width_away(self):
        shape = naca_shape()
        x = float(shape.upper[30, 0])
        moved = apply_action(shape, DeformAction(x - 0.4, 0.005, 0.0, delta=0.4))
        assert abs(moved.upper[30, 1] - shape.upper[30, 1] - 0.005 * math.exp(-0.5)) < 1e-12

    def test_apply_action_then_opposite_restores_shape(self):
        shape = naca_shape()
        action = DeformAction(0.35, 0.005, -0.004, 0.3)
        restored = apply_action(apply_action(shape, action), action.opposite())
        assert shapes_close(shape, restored, atol=1e-12)

    def test_apply_action_keeps_contour_closed(self):
        moved = apply_action(naca_shape(), DeformAction(0.05, 0.005, 0.002, 0.8))
        assert moved.closed_leading_edge
        assert moved.closed_trailing_edge

    def test_apply_action_rejects_intersecting_result(self):
        shape = naca_shape(40)
        with assert_raises(InfeasibleActionError, re.compile("surfaces intersect")):
            apply_action(shape, DeformAction(0.5, -0.2, 0.2, 0.2))

    def test_opposite_action_negates_displacements_only(self):
        action = DeformAction(0.3, 0.002, -0.001, 0.5)
        assert action.opposite() == DeformAction(0.3, -0.002, 0.001, 0.5)

    def test_action_validation_bounds(self):
        DeformAction(0.5, 0.005, -0.005).validate(0.005)
        with assert_raises(DomainError, re.compile("exceeds max_step")):
            DeformAction(0.5, 0.006, 0.0).validate(0.005)
        with assert_raises(DomainError, re.compile(r"delta=0\.9 outside")):
            DeformAction(0.5, 0.0, 0.0, 0.9).validate(0.005)
        with assert_raises(DomainError, re.compile("x_target must lie in")):
            DeformAction(1.0, 0.0, 0.0).validate(0.005)

    def test_curvature_of_collinear_points_is_zero(self):
        points = np.column_stack([np.linspace(0.0, 1.0, 7), np.linspace(0.0, 2.0, 7)])
        assert np.allclose(discrete_curvature(points).kappa, 0.0)

    def test_curvature_of_circle(self):
        angles = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
        circle = 2.0 * np.column_stack([np.cos(angles), np.sin(angles)])
        kappa = discrete_curvature(circle, closed=True).kappa
        assert np.all(np.abs(kappa - 0.5) < 0.01)

    def test_total_turning_of_unit_circle(self):
        angles = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
        circle = np.column_stack([np.cos(angles), np.sin(angles)])
        assert abs(discrete_curvature(circle, closed=True).turning - 2.0 * math.pi) < 1e-10

    def test_curvature_invariant_under_rigid_motion(self):
        rng = np.random.default_rng(2)
        points = np.cumsum(rng.uniform(0.1, 1.0, (12, 2)), axis=0)
        angle = 0.7
        rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        moved = points @ rotation.T + np.array([3.0, -1.0])
        assert np.allclose(discrete_curvature(points).kappa, discrete_curvature(moved).kappa, atol=1e-10)

    def test_curvature_rejects_repeated_points(self):
        with assert_raises(DegenerateInputError, "consecutive points 1 and 2 coincide"):
            discrete_curvature(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 1.0]]))

    def test_naca_initial_shape_passes_zero_thickness(self):
        constraint = ThicknessConstraint(((0.0, 1.0),), 0.0)
        assert check_thickness(naca_shape(), constraint).passed

    def test_flat_plate_fails_everywhere(self):
        x = np.linspace(0.0, 1.0, 11)
        plate = AirfoilShape(np.column_stack([x, 0 * x]), np.column_stack([x, 0 * x]))
        constraint = ThicknessConstraint(((0.0, 0.1), (0.7, 1.0)), 0.1)
        check = check_thickness(plate, constraint)
        assert not check.passed
        assert np.allclose([x for x, _ in check.violations], [0.0, 0.1, 0.7, 0.8, 0.9, 1.0])

    def test_thin_station_reported(self):
        x = np.array([0.0, 0.5, 0.8, 1.0])
        half = np.array([0.0, 0.05, 0.025, 0.0])
        shape = AirfoilShape(np.column_stack([x, half]), np.column_stack([x, -half]))
        check = check_thickness(shape, ThicknessConstraint(((0.7, 0.9),), 0.1))
        assert not check.passed
        assert check.violations == [(0.8, 0.05)]

    def test_thickness_check_is_monotone(self):
        shape = naca_shape()
        verdicts = [
            check_thickness(shape, ThicknessConstraint(((0.01, 0.1), (0.7, 0.9)), h)).passed
            for h in (0.0, 0.01, 0.03, 0.06, 0.1)
        ]
        assert verdicts == sorted(verdicts, reverse=True)

    def test_default_constraint_accepts_naca0012(self):
        assert check_thickness(naca_shape(), ThicknessConstraint()).passed

    def test_literal_constraint_rejects_naca0012(self):
        assert not check_thickness(naca_shape(), ThicknessConstraint.literal()).passed

    def test_naca_thickness_and_symmetry(self):
        shape = naca_shape()
        assert len(shape.upper) == len(shape.lower) == 66
        assert np.array_equal(shape.upper[:, 1], -shape.lower[:, 1])
        assert abs(float(np.max(shape.upper[:, 1] - shape.lower[:, 1])) - 0.12) < 0.0012

    def test_naca_rejects_odd_point_count(self):
        with assert_raises(DomainError, "n_points must be even and >= 6, got 131"):
            naca4_init(0.12, 131)

    def test_shape_validation(self):
        x = np.linspace(0.0, 1.0, 5)
        with assert_raises(ShapeError, re.compile("surfaces intersect")):
            AirfoilShape(np.column_stack([x, -0.1 * np.sin(np.pi * x)]), np.column_stack([x, 0 * x])).validate()
        assert naca_shape().is_valid()

    def test_boundary_loop_skips_shared_points(self):
        loop = naca_shape().boundary_loop()
        assert len(loop.points) == 130
        assert np.array_equal(loop.points[0], [1.0, 0.0])

    def test_shape_file_round_trip(self):
        shape = apply_action(naca_shape(), DeformAction(0.3, 0.004, -0.002))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "shape.dat")
            save_shape(shape, path)
            with open(path, encoding="utf-8") as handle:
                assert handle.readline().strip() == "AIRFOIL 66 66"
            assert shapes_close(shape, load_shape(path), atol=0.0)

    def test_shape_file_bad_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "shape.dat")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("0.0 0.0\n")
            with assert_raises(ShapeError, re.compile("missing 'AIRFOIL")):
                load_shape(path)
