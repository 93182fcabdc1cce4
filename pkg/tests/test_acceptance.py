"""Long-running end-to-end runs, enabled with DWRFOIL_ACCEPTANCE=1."""

# pylint: disable=missing-docstring
import os
from pathlib import Path

import numpy as np
import pytest

from dwrfoil._checks import run_checks
from dwrfoil._config import load_config
from dwrfoil._dwr import dwr_adapt_loop
from dwrfoil._env import AirfoilEnv
from dwrfoil._geometry import DeformAction, fit_shape, naca4_init, sample_curves
from dwrfoil._mesh import generate_omesh, quality_metrics
from dwrfoil._td3 import train

pytestmark = pytest.mark.skipif(
    os.environ.get("DWRFOIL_ACCEPTANCE") != "1", reason="set DWRFOIL_ACCEPTANCE=1 to run"
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BASELINE_DRAG = 0.0452106


def _baseline(config):
    geometry = config.geometry
    curves = fit_shape(naca4_init(geometry.thickness, geometry.n_points), geometry.degree, geometry.lambda_s)
    return generate_omesh(sample_curves(curves), config.mesh.radius, config.mesh.layers, curves=curves)


def _adapt(config, mesh, functional="drag", **overrides):
    settings = {
        "refine_steps": config.dwr.refine_steps,
        "tol": config.solver.tol,
        "max_iter": config.solver.max_iter,
        "fine_max_iter": config.dwr.fine_max_iter,
        "k": config.dwr.k,
    }
    settings.update(overrides)
    return dwr_adapt_loop(mesh, config.freestream, functional, **settings)


def test_baseline_drag():
    config = load_config(CONFIGS / "naca0012_m085.cfg")
    result = _adapt(config, _baseline(config))
    assert len(result.history) >= 2
    assert result.mesh.n_triangles <= 50_000
    assert abs(result.value - BASELINE_DRAG) <= 0.2 * BASELINE_DRAG


def test_baseline_has_no_lift():
    config = load_config(CONFIGS / "naca0012_m085.cfg")
    result = _adapt(config, _baseline(config), "lift", fine_max_iter=0)
    for row in result.history:
        assert abs(row["J_uncorrected"]) < 5e-3


def test_correction_improves_coarse_estimate():
    config = load_config(CONFIGS / "smoke_cfd.cfg")
    improved = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n_points = 2 * int(rng.integers(28, 40))
        layers = int(rng.integers(10, 15))
        mesh = generate_omesh(naca4_init(0.12, n_points), config.mesh.radius, layers)
        row = _adapt(config, mesh, refine_steps=1, fine_max_iter=40).history[0]
        if abs(row["J_corrected"] - row["J_fine"]) < abs(row["J_uncorrected"] - row["J_fine"]):
            improved += 1
    assert improved >= 8


def test_property_checks():
    config = load_config(CONFIGS / "naca0012_m085.cfg")
    results = run_checks(config.freestream, seed=0)
    assert all(result.passed for result in results), [r for r in results if not r.passed]


def test_mesh_survives_random_actions():
    config = load_config(CONFIGS / "surrogate.cfg")
    env = AirfoilEnv(config)
    env.reset()
    floor = min(10.0, quality_metrics(env.state.mesh).min_angle)
    rng = np.random.default_rng(0)
    step = config.geometry.max_step
    for _ in range(500):
        action = DeformAction(
            float(rng.uniform(0.05, 0.95)), float(rng.uniform(-step, step)), float(rng.uniform(-step, step))
        )
        result = env.step(action)
        assert not result.info["tangled"]
        mesh = result.state.mesh
        assert mesh.inverted_count() == 0
        assert quality_metrics(mesh).min_angle >= floor


def test_surrogate_training_reaches_target():
    config = load_config(CONFIGS / "surrogate.cfg")
    result = train(config)
    assert result.best_objective <= 0.05 * result.initial_objective


def test_smoke_training_lowers_drag():
    config = load_config(CONFIGS / "smoke_cfd.cfg")
    result = train(config)
    assert result.best_objective < result.initial_objective
