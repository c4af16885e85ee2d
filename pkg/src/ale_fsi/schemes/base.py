"""Abstract base class for time integration schemes."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ale_fsi.ale import AleMap
from ale_fsi.models import FsiState, NewtonStats
from ale_fsi.problem import FsiProblem


@dataclass
class StepResult:
    """State, map and mesh velocity after one step, plus Newton records per stage."""

    state: FsiState
    ale: AleMap
    w: np.ndarray
    stages: list[NewtonStats] = field(default_factory=list)

    @property
    def newton_iterations(self) -> int:
        return sum(s.iterations for s in self.stages)


class TimeScheme(ABC):
    """Base class for ALE time steppers."""

    @property
    @abstractmethod
    def code(self) -> str:
        """Return the scheme code used in configs (e.g., 'fo', 'prk2')."""
        ...

    @property
    @abstractmethod
    def name(self) -> str:
        """Return the human-readable scheme name."""
        ...

    @property
    @abstractmethod
    def order(self) -> int:
        """Return the formal order of accuracy in time."""
        ...

    @abstractmethod
    def step(
        self,
        problem: FsiProblem,
        state: FsiState,
        ale: AleMap,
        w: np.ndarray,
        dt: float,
        *,
        context: str = "",
    ) -> StepResult:
        """Advance state, map and mesh velocity by dt."""
        ...

    @abstractmethod
    def amplification(self, z: complex) -> complex:
        """Growth factor of the stage algebra on x' = lambda x, with z = lambda dt."""
        ...
