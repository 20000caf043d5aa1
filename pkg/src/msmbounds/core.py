"""Core types shared across the package.

Sensitivity parameters, validated datasets, per-row nuisance containers,
and estimand tags.  Every container is immutable after construction (the
backing arrays are marked read-only), so instances are safe to share
across threads and worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "MsmBoundsError",
    "ParameterError",
    "DataError",
    "FitError",
    "ConvergenceError",
    "HarnessError",
    "OutcomeKind",
    "Estimand",
    "SensitivityParams",
    "sensitivity_params",
    "Dataset",
    "validate_dataset",
    "NuisanceSet",
]


class MsmBoundsError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(MsmBoundsError):
    """A scalar parameter is outside its documented domain."""


class DataError(MsmBoundsError):
    """Input data failed validation."""


class FitError(MsmBoundsError):
    """A nuisance fit could not be carried out (degenerate training set)."""


class ConvergenceError(FitError):
    """An iterative fit did not converge within its iteration budget.

    Carries the last iterate so callers can inspect how far the solver got.
    """

    def __init__(self, message: str, last_iterate: np.ndarray | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate


class HarnessError(MsmBoundsError):
    """The simulation harness hit too many replication failures."""


class OutcomeKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Estimand(str, Enum):
    """Which causal quantity the bounds target."""

    MEAN1 = "mean1"
    MEAN0 = "mean0"
    ATE = "ate"
    ATT = "att"


@dataclass(frozen=True)
class SensitivityParams:
    """Odds-ratio bound ``lam`` and the derived tail level ``tau``.

    ``tau`` is stored rather than recomputed at each use so that a single
    consistent value flows through an entire analysis.
    """

    lam: float
    tau: float


def sensitivity_params(lam: float) -> SensitivityParams:
    """Build sensitivity parameters from an odds-ratio bound.

    ``lam`` must be a finite real >= 1; ``lam == 1`` corresponds to no
    unmeasured confounding.  The tail level is ``lam / (lam + 1)``.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam < 1.0:
        raise ParameterError(f"odds-ratio bound must be a finite real >= 1, got {lam!r}")
    return SensitivityParams(lam=lam, tau=lam / (lam + 1.0))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """A validated sample of (covariates, binary treatment, outcome) rows."""

    covariates: np.ndarray  # (n, d) float
    treatment: np.ndarray  # (n,) int in {0, 1}
    outcome: np.ndarray  # (n,) float
    outcome_kind: OutcomeKind

    def __post_init__(self):
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        if cov.ndim != 2 or cov.shape[0] < 1 or cov.shape[1] < 1:
            raise DataError(f"covariates must be a nonempty 2-d matrix, got shape {cov.shape}")
        z = np.asarray(self.treatment)
        y = np.asarray(self.outcome, dtype=float)
        n = cov.shape[0]
        if z.shape != (n,) or y.shape != (n,):
            raise DataError(
                f"row-count mismatch: covariates {n}, treatment {z.shape}, outcome {y.shape}"
            )
        if not np.all(np.isfinite(cov)):
            i, j = np.argwhere(~np.isfinite(cov))[0]
            raise DataError(f"non-finite covariate at row {i}, column {j}")
        zf = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(zf)):
            raise DataError("non-finite treatment value")
        if not np.all((zf == 0.0) | (zf == 1.0)):
            bad = int(np.argwhere((zf != 0.0) & (zf != 1.0))[0][0])
            raise DataError(f"treatment must be 0 or 1; row {bad} has {zf[bad]!r}")
        if not np.all(np.isfinite(y)):
            bad = int(np.argwhere(~np.isfinite(y))[0][0])
            raise DataError(f"non-finite outcome at row {bad}")
        kind = OutcomeKind(self.outcome_kind)
        if kind is OutcomeKind.BINARY and not np.all((y == 0.0) | (y == 1.0)):
            bad = int(np.argwhere((y != 0.0) & (y != 1.0))[0][0])
            raise DataError(f"binary outcome must be 0 or 1; row {bad} has {y[bad]!r}")
        object.__setattr__(self, "covariates", _readonly(cov))
        object.__setattr__(self, "treatment", _readonly(zf.astype(np.int64)))
        object.__setattr__(self, "outcome", _readonly(y))
        object.__setattr__(self, "outcome_kind", kind)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def to_table(self, covariate_names: Sequence[str] | None = None) -> dict[str, np.ndarray]:
        """Export as a column mapping (inverse of :func:`validate_dataset`)."""
        names = covariate_names or [f"x{j + 1}" for j in range(self.d)]
        if len(names) != self.d:
            raise ParameterError(f"expected {self.d} covariate names, got {len(names)}")
        table: dict[str, np.ndarray] = {name: self.covariates[:, j] for j, name in enumerate(names)}
        table["z"] = self.treatment.astype(float)
        table["y"] = self.outcome
        return table


def validate_dataset(
    table: Mapping[str, Sequence[float] | np.ndarray],
    *,
    treatment: str,
    outcome: str,
    covariates: Sequence[str],
    outcome_kind: OutcomeKind | str,
) -> Dataset:
    """Validate a column table into a :class:`Dataset`.

    Rejects rather than imputes: any missing or non-finite cell, any
    treatment value outside {0, 1}, and (for binary outcomes) any outcome
    outside {0, 1} raise :class:`DataError` naming the offending row and
    column.  Covariates must be numeric; categorical encoding is the
    caller's responsibility.
    """
    if not covariates:
        raise DataError("at least one covariate column is required")
    roles = [treatment, outcome, *covariates]
    if len(set(roles)) != len(roles):
        raise DataError(f"column roles overlap: treatment={treatment!r}, outcome={outcome!r}, covariates={list(covariates)!r}")
    for name in roles:
        if name not in table:
            raise DataError(f"column {name!r} not present in the input table")

    def as_column(name: str) -> np.ndarray:
        try:
            col = np.asarray(table[name], dtype=float)
        except (TypeError, ValueError) as exc:
            raise DataError(f"column {name!r} is not numeric: {exc}") from exc
        if col.ndim != 1:
            raise DataError(f"column {name!r} must be one-dimensional")
        if not np.all(np.isfinite(col)):
            bad = int(np.argwhere(~np.isfinite(col))[0][0])
            raise DataError(f"column {name!r} has a missing or non-finite value at row {bad}")
        return col

    cols = {name: as_column(name) for name in roles}
    n = len(cols[treatment])
    for name, col in cols.items():
        if len(col) != n:
            raise DataError(f"column {name!r} has {len(col)} rows, expected {n}")
    if n < 1:
        raise DataError("input table is empty")

    z = cols[treatment]
    if not np.all((z == 0.0) | (z == 1.0)):
        bad = int(np.argwhere((z != 0.0) & (z != 1.0))[0][0])
        raise DataError(f"treatment column {treatment!r} must be 0/1; row {bad} has {z[bad]!r}")
    kind = OutcomeKind(outcome_kind)
    y = cols[outcome]
    if kind is OutcomeKind.BINARY and not np.all((y == 0.0) | (y == 1.0)):
        bad = int(np.argwhere((y != 0.0) & (y != 1.0))[0][0])
        raise DataError(f"outcome column {outcome!r} declared binary; row {bad} has {y[bad]!r}")

    x = np.column_stack([cols[c] for c in covariates])
    return Dataset(covariates=x, treatment=z.astype(np.int64), outcome=y, outcome_kind=kind)


@dataclass(frozen=True)
class NuisanceSet:
    """Per-row, per-arm evaluated nuisances.

    Arm-indexed arrays have shape ``(n, 2)`` with column ``z`` holding the
    arm-``z`` model evaluated at that row's covariates.  ``e_hat`` must
    already be clipped into the configured overlap band.  ``mu`` is present
    whenever the fitting path produced an outcome-regression estimate (it
    is required for binary outcomes).
    """

    e_hat: np.ndarray  # (n,)
    q_plus: np.ndarray  # (n, 2)
    q_minus: np.ndarray  # (n, 2)
    rho_plus: np.ndarray  # (n, 2)
    rho_minus: np.ndarray  # (n, 2)
    mu: np.ndarray | None = None  # (n, 2)

    def __post_init__(self):
        e = np.asarray(self.e_hat, dtype=float)
        if e.ndim != 1 or e.shape[0] < 1:
            raise DataError(f"e_hat must be a nonempty vector, got shape {e.shape}")
        n = e.shape[0]
        if not np.all(np.isfinite(e)) or np.any(e <= 0.0) or np.any(e >= 1.0):
            raise DataError("propensities must lie strictly inside (0, 1)")
        object.__setattr__(self, "e_hat", _readonly(e))
        for field in ("q_plus", "q_minus", "rho_plus", "rho_minus"):
            arr = np.asarray(getattr(self, field), dtype=float)
            if arr.shape != (n, 2):
                raise DataError(f"{field} must have shape ({n}, 2), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{field} contains non-finite values")
            object.__setattr__(self, field, _readonly(arr))
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float)
            if mu.shape != (n, 2) or not np.all(np.isfinite(mu)):
                raise DataError(f"mu must be a finite ({n}, 2) array")
            object.__setattr__(self, "mu", _readonly(mu))

    @property
    def n(self) -> int:
        return self.e_hat.shape[0]
