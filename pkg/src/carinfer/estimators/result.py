from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SingularDesignError(np.linalg.LinAlgError):
    """Raised when a design or information matrix is numerically singular."""


@dataclass
class FitResult:
    beta: np.ndarray
    se: np.ndarray
    vcov: np.ndarray
    converged: bool
    iterations: int
    model_kind: str
    columns: tuple = ()
    treatment_index: int = 1
    score_norm: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def estimate(self) -> float:
        """Coefficient of the treatment indicator."""
        return float(self.beta[self.treatment_index])

    @property
    def stderr(self) -> float:
        return float(self.se[self.treatment_index])
