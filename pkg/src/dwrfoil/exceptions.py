"""Dwrfoil exceptions."""

from typing import List, Optional, Sequence, Tuple


class DwrfoilError(Exception):
    """DwrfoilError"""


class DomainError(DwrfoilError):
    """DomainError"""


class FitError(DwrfoilError):
    """FitError"""


class DegenerateInputError(DwrfoilError):
    """DegenerateInputError"""


class ShapeError(DwrfoilError):
    """ShapeError"""


class InfeasibleActionError(ShapeError):
    """InfeasibleActionError"""


class MeshError(DwrfoilError):
    """MeshError"""


class TanglingError(MeshError):
    """TanglingError"""

    def __init__(self, message: str, inverted: int = 0) -> None:
        super().__init__(message)
        self.inverted = inverted


class StateError(DwrfoilError):
    """StateError"""

    def __init__(self, message: str, cell: Optional[int] = None) -> None:
        super().__init__(message)
        self.cell = cell


class ConvergenceError(DwrfoilError):
    """ConvergenceError"""

    def __init__(
        self,
        message: str,
        history: Optional[Sequence[Tuple[int, float, float]]] = None,
        step: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.history: List[Tuple[int, float, float]] = list(history or [])
        self.step = step


class ForceError(DwrfoilError):
    """ForceError"""


class AdjointError(DwrfoilError):
    """AdjointError"""


class StructureError(DwrfoilError):
    """StructureError"""


class UsageError(DwrfoilError):
    """UsageError"""


class SamplingError(DwrfoilError):
    """SamplingError"""


class ConfigError(DwrfoilError):
    """ConfigError"""
