"""Tests for the adjoint, the DWR correction and the adaptation loop."""

# pylint: disable=missing-docstring
import csv
import math
import os
import re
import tempfile

import numpy as np
from flexmock import flexmock
from scipy import sparse

from dwrfoil import _dwr
from dwrfoil._checks import check_adjoint, check_gradient, square_mesh
from dwrfoil._dwr import (
    DWR_COLUMNS,
    ErrorIndicators,
    auto_tol,
    corrected_functional,
    dwr_adapt_loop,
    error_indicators,
    functional_gradient,
    functional_value,
    prolongate,
    save_dwr_history,
    solve_adjoint,
)
from dwrfoil._euler import FreeStream, compute_forces, face_geometry, free_stream_field
from dwrfoil._mesh import uniform_refine
from dwrfoil.exceptions import ConvergenceError, DomainError
from tests.utils import assert_raises, coarse_mesh, random_state, subsonic


def _stub_newton():
    def solve(mesh, initial, freestream, **kwargs):
        del initial, kwargs
        return free_stream_field(mesh, freestream)

    flexmock(_dwr).should_receive("newton_solve").replace_with(solve)


def _linear_model(size: int = 8, seed: int = 0):
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-1.0, 1.0, (size, size)) + size * np.eye(size)
    return matrix, rng.uniform(-1.0, 1.0, size), rng.uniform(-1.0, 1.0, size), rng


class DwrTestCase:
    def test_prolongate_uniform_field(self):
        mesh = square_mesh(3)
        fs = subsonic()
        fine = prolongate(free_stream_field(mesh, fs), uniform_refine(mesh))
        assert fine.values.shape == (4 * mesh.n_triangles, 4)
        assert np.array_equal(fine.values, np.tile(fs.state(), (4 * mesh.n_triangles, 1)))

    def test_prolongate_conserves_totals(self):
        mesh = square_mesh(2)
        hierarchy = uniform_refine(mesh)
        coarse = random_state(mesh, subsonic(), seed=5)
        fine = prolongate(coarse, hierarchy)
        child_mass = np.zeros_like(coarse)
        np.add.at(child_mass, hierarchy.parent_map, hierarchy.fine.signed_areas()[:, None] * fine.values)
        assert np.allclose(child_mass, mesh.signed_areas()[:, None] * coarse, atol=1e-12)

    def test_functional_value_matches_forces(self):
        mesh = coarse_mesh()
        fs = FreeStream(0.5, 2.0)
        u = random_state(mesh, fs, seed=6)
        forces = compute_forces(mesh, u, fs)
        assert math.isclose(functional_value(mesh, u, fs, "drag"), forces.cd, rel_tol=1e-12)
        assert math.isclose(functional_value(mesh, u, fs, "lift"), forces.cl, rel_tol=1e-12)

    def test_unknown_functional(self):
        mesh = square_mesh(1)
        fs = subsonic()
        message = "unknown functional 'moment', expected one of ('drag', 'lift', 'ratio')"
        with assert_raises(DomainError, message):
            functional_value(mesh, free_stream_field(mesh, fs), fs, "moment")

    def test_gradient_matches_finite_differences(self):
        result = check_gradient(subsonic(), np.random.default_rng(2), samples=2, mesh=coarse_mesh())
        assert result.passed, result.detail

    def test_gradient_vanishes_away_from_wall(self):
        mesh = coarse_mesh()
        fs = subsonic()
        gradient = functional_gradient(mesh, random_state(mesh, fs, seed=7), fs)
        faces = face_geometry(mesh)
        touches_wall = np.zeros(mesh.n_triangles, dtype=bool)
        touches_wall[faces.left[faces.wall]] = True
        assert np.all(gradient[~touches_wall] == 0.0)
        assert np.any(gradient[touches_wall] != 0.0)

    def test_ratio_gradient_quotient_rule(self):
        mesh = coarse_mesh()
        fs = FreeStream(0.5, 2.0)
        u = random_state(mesh, fs, seed=8)
        cd = functional_value(mesh, u, fs, "drag")
        cl = functional_value(mesh, u, fs, "lift")
        d_cl = functional_gradient(mesh, u, fs, "lift")
        d_cd = functional_gradient(mesh, u, fs, "drag")
        expected = (d_cl * cd - cl * d_cd) / cd**2
        assert np.allclose(functional_gradient(mesh, u, fs, "ratio"), expected, rtol=1e-10, atol=1e-14)

    def test_adjoint_of_zero_gradient(self):
        z = solve_adjoint(sparse.eye(8, format="csr"), np.zeros((2, 4)))
        assert z.shape == (2, 4)
        assert not np.any(z)

    def test_adjoint_transpose_identity(self):
        result = check_adjoint(subsonic(), np.random.default_rng(3), mesh=coarse_mesh())
        assert result.passed, result.detail

    def test_correction_is_exact_for_linear_problems(self):
        matrix, rhs, weights, rng = _linear_model()
        coarse = rng.uniform(-1.0, 1.0, len(rhs))
        adjoint = solve_adjoint(sparse.csr_matrix(matrix), weights)
        corrected = corrected_functional(float(weights @ coarse), adjoint, matrix @ coarse - rhs)
        exact = float(weights @ np.linalg.solve(matrix, rhs))
        assert math.isclose(corrected.value, exact, rel_tol=1e-10, abs_tol=1e-12)

    def test_zero_residual_needs_no_correction(self):
        corrected = corrected_functional(0.25, np.ones((3, 4)), np.zeros((3, 4)))
        assert corrected == (0.25, 0.0)

    def test_indicators_with_zero_adjoint(self):
        parents = np.repeat(np.arange(5), 4)
        indicators = error_indicators(np.zeros((20, 4)), np.ones((20, 4)), parents)
        assert not np.any(indicators.eta)
        assert indicators.marked.size == 0

    def test_indicators_aggregate_children(self):
        rng = np.random.default_rng(9)
        parents = np.repeat(np.arange(5), 4)
        adjoint = rng.standard_normal((20, 4))
        residual = rng.standard_normal((20, 4))
        indicators = error_indicators(adjoint, residual, parents)
        local = np.abs(np.sum(adjoint * residual, axis=1)).reshape(5, 4).sum(axis=1)
        assert np.allclose(indicators.eta, local, rtol=1e-14)
        assert indicators.eta.sum() >= abs(indicators.correction)
        assert np.all(indicators.eta >= 0.0)

    def test_auto_tol_equal_indicators_mark_nothing(self):
        eta = np.ones(12)
        assert np.count_nonzero(eta > auto_tol(eta)) == 0

    def test_auto_tol_isolates_outlier(self):
        eta = np.array([2.0] * 19 + [2e6])
        assert np.nonzero(eta > auto_tol(eta))[0].tolist() == [19]

    def test_auto_tol_monotone_in_spread(self):
        eta = np.random.default_rng(10).lognormal(0.0, 2.0, 200)
        counts = [np.count_nonzero(eta > auto_tol(eta, k)) for k in (0.0, 0.5, 1.0, 2.0)]
        assert counts == sorted(counts, reverse=True)

    def test_auto_tol_needs_indicators(self):
        with assert_raises(DomainError, "auto_tol needs at least one indicator"):
            auto_tol(np.array([]))

    def test_adapt_rejects_zero_steps(self):
        with assert_raises(DomainError, "refine_steps must be >= 1, got 0"):
            dwr_adapt_loop(square_mesh(1), subsonic(), refine_steps=0)

    def test_adapt_loop_history(self):
        _stub_newton()
        mesh = coarse_mesh()
        result = dwr_adapt_loop(mesh, subsonic(), "drag", refine_steps=2, fine_max_iter=0)
        assert len(result.history) == 2
        first, second = result.history
        assert first["cells_coarse"] == mesh.n_triangles
        assert first["cells_fine"] == 4 * mesh.n_triangles
        assert math.isclose(first["J_corrected"], first["J_uncorrected"] - first["correction"], rel_tol=1e-12)
        assert math.isnan(first["J_fine"])
        assert first["marked"] > 0
        assert second["cells_coarse"] > first["cells_coarse"]
        assert result.mesh.n_triangles == second["cells_coarse"]
        assert result.value == second["J_corrected"]

    def test_adapt_loop_is_deterministic(self):
        _stub_newton()
        first = dwr_adapt_loop(coarse_mesh(), subsonic(), "lift", refine_steps=2, fine_max_iter=0)
        second = dwr_adapt_loop(coarse_mesh(), subsonic(), "lift", refine_steps=2, fine_max_iter=0)
        assert first.value == second.value
        assert np.array_equal(first.mesh.triangles, second.mesh.triangles)

    def test_adapt_loop_stops_when_nothing_is_marked(self):
        _stub_newton()
        flexmock(_dwr).should_receive("error_indicators").replace_with(
            lambda adjoint, residual, hierarchy, k: ErrorIndicators(
                np.zeros(hierarchy.coarse.n_triangles), 1.0, 0.0
            )
        ).once()
        mesh = coarse_mesh()
        result = dwr_adapt_loop(mesh, subsonic(), "drag", refine_steps=3, fine_max_iter=0)
        assert len(result.history) == 1
        assert result.history[0]["marked"] == 0
        assert result.mesh is mesh

    def test_adapt_loop_reports_failing_step(self):
        flexmock(_dwr).should_receive("newton_solve").and_raise(
            ConvergenceError, "Newton solve did not converge", [(0, 1.0, 10.0)]
        )
        try:
            dwr_adapt_loop(coarse_mesh(), subsonic(), refine_steps=2)
        except ConvergenceError as exc:
            assert exc.step == 0
            assert exc.history == [(0, 1.0, 10.0)]
            assert re.match("adaptation step 0: ", str(exc))
        else:
            raise AssertionError("ConvergenceError not raised")

    def test_dwr_history_file(self):
        row = {key: float(i) for i, key in enumerate(DWR_COLUMNS)}
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "dwr_history.csv")
            save_dwr_history([row], path)
            with open(path, newline="", encoding="utf-8") as handle:
                reader = csv.DictReader(handle)
                rows = list(reader)
                assert tuple(reader.fieldnames) == DWR_COLUMNS
        assert float(rows[0]["J_corrected"]) == row["J_corrected"]
