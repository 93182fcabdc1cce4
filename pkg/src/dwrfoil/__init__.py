"""Airfoil drag optimization: Bezier shapes, DWR-adapted Euler solves and a TD3 agent."""

from dwrfoil._config import RunConfig, load_config, parse_config
from dwrfoil._dwr import dwr_adapt_loop, error_indicators, solve_adjoint
from dwrfoil._env import AirfoilEnv, compute_reward, evaluate_objective
from dwrfoil._euler import FlowField, FreeStream, assemble_residual, compute_forces, newton_solve
from dwrfoil._geometry import (
    AirfoilShape,
    BezierCurve,
    DeformAction,
    apply_action,
    fit_bezier_regularized,
    naca4_init,
)
from dwrfoil._mesh import UnstructuredMesh, generate_omesh, uniform_refine
from dwrfoil._td3 import ReplayBuffer, TD3Agent, train

__all__ = [
    "AirfoilEnv",
    "AirfoilShape",
    "BezierCurve",
    "DeformAction",
    "FlowField",
    "FreeStream",
    "ReplayBuffer",
    "RunConfig",
    "TD3Agent",
    "UnstructuredMesh",
    "apply_action",
    "assemble_residual",
    "compute_forces",
    "compute_reward",
    "dwr_adapt_loop",
    "error_indicators",
    "evaluate_objective",
    "fit_bezier_regularized",
    "generate_omesh",
    "load_config",
    "naca4_init",
    "newton_solve",
    "parse_config",
    "solve_adjoint",
    "train",
    "uniform_refine",
]
