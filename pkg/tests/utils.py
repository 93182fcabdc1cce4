"""Utility functions for testing."""

import re
from contextlib import contextmanager
from typing import Iterator, Optional, Type, Union

import numpy as np

from dwrfoil._config import RunConfig, parse_config
from dwrfoil._euler import FreeStream
from dwrfoil._geometry import AirfoilShape, naca4_init
from dwrfoil._mesh import UnstructuredMesh, generate_omesh

RE_TYPE = re.Pattern


@contextmanager
def assert_raises(
    expected_exception: Type[BaseException], match: Union[RE_TYPE, str, None]
) -> Iterator[None]:
    """Assert that code raises the correct exception with a correct error message.

    Args:
        expected_exception: Type of the expected exception.
        match: String or pattern to match the error message against. Use None
          to skip error message checking.
    """
    try:
        yield
    except Exception as raised_exception:
        if not isinstance(raised_exception, expected_exception):
            raise AssertionError(
                f"Expected exception '{expected_exception.__name__}' "
                f"but '{type(raised_exception).__name__}' was raised"
            ) from raised_exception
        if match is not None:
            fail = False
            if isinstance(match, RE_TYPE):
                fail = not match.search(str(raised_exception))
                match = match.pattern
            else:
                fail = str(raised_exception) != str(match)
            if fail:
                raise AssertionError(
                    f"Expected error message:\n{'-'*39}\n'{str(match)}'\n"
                    f"\nBut got:\n\n'{str(raised_exception)}'\n{'-'*39}\n"
                ) from raised_exception
    else:
        raise AssertionError(f"Exception '{expected_exception.__name__}' not raised")


def naca_shape(n_points: int = 132) -> AirfoilShape:
    return naca4_init(0.12, n_points)


def coarse_mesh(n_points: int = 40, radius: float = 10.0, n_layers: int = 4) -> UnstructuredMesh:
    """Small O-mesh, a few hundred triangles."""
    return generate_omesh(naca_shape(n_points), radius, n_layers)


def subsonic() -> FreeStream:
    return FreeStream(0.5, 0.0)


def random_state(mesh: UnstructuredMesh, freestream: FreeStream, seed: int = 0, scale: float = 0.05) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = np.tile(freestream.state(), (mesh.n_triangles, 1))
    return u * (1.0 + scale * rng.uniform(-1.0, 1.0, size=u.shape))


def surrogate_config(**rl: object) -> RunConfig:
    """Surrogate objective with a short schedule; ``rl`` overrides ``rl.*`` keys."""
    settings = {
        "warmup_episodes": 1,
        "warmup_steps": 8,
        "epochs": 3,
        "steps_per_epoch": 4,
        "batch_size": 8,
        "initial_batch_size": 4,
        "batch_switch": 16,
        "buffer_capacity": 256,
        "decay_every": 1,
    }
    settings.update(rl)
    lines = ["objective = surrogate", "seed = 3"]
    lines += [f"rl.{key} = {value}" for key, value in settings.items()]
    return parse_config("\n".join(lines))
