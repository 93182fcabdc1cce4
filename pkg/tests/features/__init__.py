"""Tests for dwrfoil.

Tests under this module should not depend on any test runner.
"""

from .dwr import DwrTestCase
from .env import EnvTestCase
from .euler import EulerTestCase
from .geometry import GeometryTestCase
from .harness import HarnessTestCase
from .mesh import MeshTestCase
from .nn import NnTestCase
from .td3 import TD3TestCase


class DwrfoilTestCase(
    DwrTestCase,
    EnvTestCase,
    EulerTestCase,
    GeometryTestCase,
    HarnessTestCase,
    MeshTestCase,
    NnTestCase,
    TD3TestCase,
):
    """This class should be imported by other test modules to run the full dwrfoil
    test suite.
    """
