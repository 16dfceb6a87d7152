"""Objective selection and sensitivity result containers.

The quantity of interest is a time average of one output component
(``z`` by default, component index 2).
"""
from dataclasses import dataclass, field

import numpy as np

COMPONENT_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which output component the time-averaged objective tracks."""

    component: int = 2

    def __post_init__(self):
        if self.component < 0:
            raise ValueError("component index must be non-negative")

    @property
    def name(self) -> str:
        if self.component < len(COMPONENT_NAMES):
            return COMPONENT_NAMES[self.component]
        return f"y{self.component}"


@dataclass
class SensitivityVector:
    """Gradient of a window-averaged objective with respect to the parameters.

    ``method`` tags how the gradient was obtained: ``"adjoint"``,
    ``"tangent"`` or ``"finite-difference"``.
    """

    djdp: np.ndarray
    window_steps: int
    method: str

    def __post_init__(self):
        self.djdp = np.asarray(self.djdp, dtype=float)
        if self.djdp.ndim != 1:
            raise ValueError("djdp must be a vector")
        if self.window_steps < 1:
            raise ValueError("window_steps must be at least 1")
        if not np.all(np.isfinite(self.djdp)):
            raise ValueError("sensitivity components must be finite")
