from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .alloc import Subject, disease_status, factor_levels, stratum_index


@dataclass(frozen=True)
class Dataset:
    """Column-oriented trial data.

    ``arm`` may be None before randomization; ``y`` holds continuous or 0/1
    outcomes, ``time``/``event`` hold right-censored survival outcomes.
    """

    id: np.ndarray
    site: np.ndarray
    baseline: np.ndarray
    male: np.ndarray
    arm: np.ndarray | None = None
    y: np.ndarray | None = None
    time: np.ndarray | None = None
    event: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.id)
        for name in ("site", "baseline", "male", "arm", "y", "time", "event"):
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise ValueError(f"column {name!r} has length {len(col)}, expected {n}")

    @classmethod
    def from_subjects(cls, subjects, **columns) -> "Dataset":
        subjects = list(subjects)
        return cls(
            id=np.array([s.id for s in subjects], dtype=np.int64),
            site=np.array([s.site for s in subjects], dtype=np.int64),
            baseline=np.array([s.baseline for s in subjects], dtype=float),
            male=np.array([s.male for s in subjects], dtype=bool),
            **columns,
        )

    @property
    def n(self) -> int:
        return len(self.id)

    @property
    def status(self) -> np.ndarray:
        return disease_status(self.baseline)

    @property
    def levels(self) -> np.ndarray:
        return factor_levels(self.site, self.baseline, self.male)

    @property
    def strata(self) -> np.ndarray:
        return stratum_index(self.site, self.baseline, self.male)

    def subjects(self) -> list[Subject]:
        return [
            Subject(int(i), int(s), float(b), bool(m))
            for i, s, b, m in zip(self.id, self.site, self.baseline, self.male)
        ]

    def with_columns(self, **columns) -> "Dataset":
        return replace(self, **columns)

    def take(self, index) -> "Dataset":
        cols = {}
        for name in ("id", "site", "baseline", "male", "arm", "y", "time", "event"):
            col = getattr(self, name)
            cols[name] = None if col is None else np.asarray(col)[index]
        return Dataset(**cols)
