"""Benchmark simulators, quadrature ground truth, and the coverage harness.

Two built-in generative processes share a five-dimensional uniform
covariate and a logistic propensity with an interaction and a
threshold term; one draws a Bernoulli outcome, the other a heteroscedastic
normal outcome.  Neither outcome law depends on the treatment, so the true
effect is zero while the sharp bounds spread with the sensitivity level.
Their population sharp bounds are computed by piecewise Gauss-Legendre
quadrature (nodes split at every kink of the integrand), with closed-form
conditional tail moments for the normal case.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .core import (
    Dataset,
    Estimand,
    HarnessError,
    MsmBoundsError,
    OutcomeKind,
    ParameterError,
    SensitivityParams,
    sensitivity_params,
)
from .estimator import crossfit_nuisances, estimate_bounds, split_folds, wald_bounds
from .learners import LearnerBundle, binary_nuisances, default_bundle
from .oracle import DiscreteDGP, sample_dataset, sharp_bound_oracle

__all__ = [
    "GenerativeSpec",
    "simulate",
    "true_sharp_bounds",
    "ReplicationRecord",
    "CoverageCell",
    "CoverageReport",
    "monte_carlo_coverage",
]

_BENCHMARK_KINDS = ("benchmark_binary", "benchmark_continuous")


@dataclass(frozen=True)
class GenerativeSpec:
    """Names a data-generating process for simulation and ground truth.

    The two benchmark kinds are parameter-free; ``custom_discrete``
    carries an explicit finite DGP.
    """

    kind: str
    dgp: DiscreteDGP | None = None

    def __post_init__(self):
        if self.kind not in (*_BENCHMARK_KINDS, "custom_discrete"):
            raise ParameterError(
                f"unknown generative spec {self.kind!r}; expected one of "
                f"{(*_BENCHMARK_KINDS, 'custom_discrete')}"
            )
        if self.kind == "custom_discrete" and self.dgp is None:
            raise ParameterError("custom_discrete requires a DiscreteDGP")
        if self.kind in _BENCHMARK_KINDS and self.dgp is not None:
            raise ParameterError(f"{self.kind} is parameter-free; drop the dgp argument")


def _propensity_logit(x: np.ndarray) -> np.ndarray:
    return x[:, 0] + 0.5 * (x[:, 1] > 0.0) + 0.5 * x[:, 1] * x[:, 2]


def _outcome_logit(x: np.ndarray) -> np.ndarray:
    return 0.5 * x[:, 0] + x[:, 1] + 0.25 * x[:, 1] * x[:, 2]


def _outcome_location(x: np.ndarray) -> np.ndarray:
    return 2.0 * np.where(x[:, 0] >= 0.0, 1.0, -1.0) + x[:, 1] + x[:, 1] * x[:, 2]


def _outcome_scale(x: np.ndarray) -> np.ndarray:
    return 1.0 + x[:, 3] ** 2


def simulate(spec: GenerativeSpec, n: int, seed) -> Dataset:
    """Seeded draw of ``n`` rows from the named process.

    Benchmark kinds: covariates uniform on [-1, 1]^5, treatment Bernoulli
    with success probability ``expit(-(x1 + 0.5*1{x2 > 0} + 0.5*x2*x3))``;
    the binary outcome is Bernoulli with mean
    ``expit(-(0.5*x1 + x2 + 0.25*x2*x3))`` and the continuous outcome is
    normal with location ``2*sign(x1) + x2 + x2*x3`` and standard deviation
    ``1 + x4**2``, both independent of the treatment.
    """
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got {n!r}")
    if spec.kind == "custom_discrete":
        return sample_dataset(spec.dgp, n, seed)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, 5))
    z = (rng.random(n) < expit(-_propensity_logit(x))).astype(int)
    if spec.kind == "benchmark_binary":
        y = (rng.random(n) < expit(-_outcome_logit(x))).astype(float)
        kind = OutcomeKind.BINARY
    else:
        y = _outcome_location(x) + _outcome_scale(x) * rng.standard_normal(n)
        kind = OutcomeKind.CONTINUOUS
    return Dataset(covariates=x, treatment=z, outcome=y, outcome_kind=kind)


# ---------------------------------------------------------------------------
# Quadrature ground truth for the benchmark processes.

_GL_NODES = 32


def _mean_over_covariates(fn, x1_breaks=None, nodes: int = _GL_NODES) -> float:
    """E[fn(X1, X2, X3)] for X uniform on [-1, 1]^3.

    Gauss-Legendre per axis; the x2 axis is always split at 0 (threshold
    term in the propensity) and ``x1_breaks(x2, x3)`` may supply interior
    kink locations for the x1 axis, keeping every integrand piece smooth.
    ``fn`` must be vectorized over its x1 argument.
    """
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for a2, b2 in ((-1.0, 0.0), (0.0, 1.0)):
        x2s = 0.5 * (b2 - a2) * gx + 0.5 * (a2 + b2)
        w2s = 0.5 * (b2 - a2) * gw
        for x2, w2 in zip(x2s, w2s):
            for x3, w3 in zip(gx, gw):
                breaks = []
                if x1_breaks is not None:
                    breaks = sorted(b for b in x1_breaks(x2, x3) if -1.0 < b < 1.0)
                edges = [-1.0, *breaks, 1.0]
                for a1, b1 in zip(edges[:-1], edges[1:]):
                    x1s = 0.5 * (b1 - a1) * gx + 0.5 * (a1 + b1)
                    w1s = 0.5 * (b1 - a1) * gw
                    total += w2 * w3 * float(w1s @ fn(x1s, x2, x3))
    return total / 8.0


def _e_of(x1, x2, x3):
    return expit(-(x1 + 0.5 * (x2 > 0.0) + 0.5 * x2 * x3))


def _mu_of(x1, x2, x3):
    return expit(-(0.5 * x1 + x2 + 0.25 * x2 * x3))


def _binary_sharp_components(params: SensitivityParams) -> dict[str, float]:
    lam = params.lam

    def rho(x1, x2, x3, side):
        mu = _mu_of(x1, x2, x3)
        _, _, rho_plus, rho_minus = binary_nuisances(mu, params)
        return rho_plus if side == "+" else rho_minus

    def mu_kink(side):
        # The adversarial regression is piecewise linear in mu with a kink
        # where mu crosses 1 - tau (upper side) or tau (lower side); in x1
        # that happens where the outcome logit equals +-log(lam).
        target = np.log(lam) if side == "+" else -np.log(lam)

        def breaks(x2, x3):
            return [2.0 * (target - x2 - 0.25 * x2 * x3)]

        return breaks

    out = {
        "e": _mean_over_covariates(lambda x1, x2, x3: _e_of(x1, x2, x3)),
        "mu": _mean_over_covariates(lambda x1, x2, x3: _mu_of(x1, x2, x3)),
        "e_mu": _mean_over_covariates(lambda x1, x2, x3: _e_of(x1, x2, x3) * _mu_of(x1, x2, x3)),
    }
    for side in ("+", "-"):
        key = "plus" if side == "+" else "minus"
        out[f"ce_rho_{key}"] = _mean_over_covariates(
            lambda x1, x2, x3, s=side: (1.0 - _e_of(x1, x2, x3)) * rho(x1, x2, x3, s),
            x1_breaks=mu_kink(side),
        )
        out[f"e_rho_{key}"] = _mean_over_covariates(
            lambda x1, x2, x3, s=side: _e_of(x1, x2, x3) * rho(x1, x2, x3, s),
            x1_breaks=mu_kink(side),
        )
    return out


def _binary_sharp_bounds(params: SensitivityParams, estimand: Estimand) -> tuple[float, float]:
    c = _binary_sharp_components(params)
    mean1 = (c["e_mu"] + c["ce_rho_minus"], c["e_mu"] + c["ce_rho_plus"])
    mean0 = (c["mu"] - c["e_mu"] + c["e_rho_minus"], c["mu"] - c["e_mu"] + c["e_rho_plus"])
    if estimand is Estimand.MEAN1:
        return mean1
    if estimand is Estimand.MEAN0:
        return mean0
    if estimand is Estimand.ATE:
        return mean1[0] - mean0[1], mean1[1] - mean0[0]
    ez = c["e"]
    return (c["mu"] - mean0[1]) / ez, (c["mu"] - mean0[0]) / ez


def _continuous_sharp_bounds(params: SensitivityParams, estimand: Estimand) -> tuple[float, float]:
    # The outcome location integrates to zero and is independent of the
    # scale term, so each bound reduces to a tail coefficient times
    # E[scale] = 4/3 weighted by the relevant arm probability.
    tail = (1.0 - 1.0 / params.lam) * float(norm.pdf(norm.ppf(params.tau))) / (1.0 - params.tau)
    e_mean = _mean_over_covariates(lambda x1, x2, x3: _e_of(x1, x2, x3))
    scale_mean = 4.0 / 3.0
    spread1 = tail * (1.0 - e_mean) * scale_mean
    spread0 = tail * e_mean * scale_mean
    if estimand is Estimand.MEAN1:
        return -spread1, spread1
    if estimand is Estimand.MEAN0:
        return -spread0, spread0
    if estimand is Estimand.ATE:
        return -(spread0 + spread1), spread0 + spread1
    return -spread0 / e_mean, spread0 / e_mean


def true_sharp_bounds(
    spec: GenerativeSpec, params: SensitivityParams, estimand: Estimand
) -> tuple[float, float]:
    """Population sharp bounds for the named process.

    Benchmark kinds use deterministic quadrature of the identification
    formulas with the exact nuisances (error budget well under 1e-6);
    ``custom_discrete`` defers to the finite-support oracle.
    """
    estimand = Estimand(estimand)
    if spec.kind == "custom_discrete":
        return sharp_bound_oracle(spec.dgp, params, estimand)
    if spec.kind == "benchmark_binary":
        return _binary_sharp_bounds(params, estimand)
    return _continuous_sharp_bounds(params, estimand)


# ---------------------------------------------------------------------------
# Coverage harness.


@dataclass(frozen=True)
class ReplicationRecord:
    """One (replication, lambda) result row."""

    rep: int
    lam: float
    data_seed: int
    psi_lower: float
    psi_upper: float
    se_lower: float
    se_upper: float
    ci_lower: float
    ci_upper: float
    covered: bool
    error: str | None = None


@dataclass(frozen=True)
class CoverageCell:
    """Aggregates for one lambda value."""

    lam: float
    estimand: Estimand
    reps_ok: int
    reps_failed: int
    truth_lower: float
    truth_upper: float
    bias_lower: float
    bias_upper: float
    coverage: float
    avg_width: float


@dataclass(frozen=True)
class CoverageReport:
    spec_kind: str
    estimand: Estimand
    n: int
    k_folds: int
    alpha: float
    reps: int
    seed: int
    lambdas: tuple[float, ...]
    cells: tuple[CoverageCell, ...]
    records: tuple[ReplicationRecord, ...]

    def to_jsonable(self) -> dict:
        return {
            "spec": self.spec_kind,
            "estimand": self.estimand.value,
            "n": self.n,
            "folds": self.k_folds,
            "alpha": self.alpha,
            "reps": self.reps,
            "seed": self.seed,
            "lambdas": list(self.lambdas),
            "cells": [
                {
                    "lambda": c.lam,
                    "reps_ok": c.reps_ok,
                    "reps_failed": c.reps_failed,
                    "truth_lower": c.truth_lower,
                    "truth_upper": c.truth_upper,
                    "bias_lower": c.bias_lower,
                    "bias_upper": c.bias_upper,
                    "coverage": c.coverage,
                    "avg_width": c.avg_width,
                }
                for c in self.cells
            ],
        }


def _check_lambda_grid(lambda_grid: Sequence[float]) -> list[float]:
    lams = sorted({float(l) for l in lambda_grid})
    if not lams:
        raise ParameterError("at least one lambda value is required")
    if lams[0] < 1.0 or not all(np.isfinite(l) for l in lams):
        raise ParameterError(f"lambda values must be finite and >= 1, got {lams!r}")
    return lams


def monte_carlo_coverage(
    spec: GenerativeSpec,
    lambda_grid: Sequence[float],
    reps: int,
    n: int,
    bundle: LearnerBundle | None = None,
    k_folds: int = 5,
    alpha: float = 0.05,
    seed: int = 0,
    estimand: Estimand = Estimand.ATE,
    epsilon: float = 0.01,
    threads: int = 1,
) -> CoverageReport:
    """Estimate how often the two-sided Wald region covers the true sharp bounds.

    Each replication simulates a fresh dataset, fixes one fold plan, and
    reuses it across the whole lambda grid; coverage of a replication means
    ``ci_lower <= truth_lower`` and ``truth_upper <= ci_upper`` for the
    per-side ``alpha / 2`` Wald limits.  Per-replication RNG streams are
    spawned from the master seed, so results are reproducible and
    independent of the thread count.  Failed replications are recorded; if
    more than 1% fail the harness raises.
    """
    if reps < 1:
        raise ParameterError(f"replication count must be >= 1, got {reps!r}")
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    if threads < 1:
        raise ParameterError(f"thread count must be >= 1, got {threads!r}")
    estimand = Estimand(estimand)
    lams = _check_lambda_grid(lambda_grid)
    if bundle is None:
        probe = simulate(spec, 2, seed)
        bundle = default_bundle(probe.outcome_kind)

    truth = {lam: true_sharp_bounds(spec, sensitivity_params(lam), estimand) for lam in lams}
    children = np.random.SeedSequence(seed).spawn(reps)

    def run_rep(rep: int) -> list[ReplicationRecord]:
        state = children[rep].generate_state(2, dtype=np.uint64)
        data_seed = int(state[0])
        fold_seed = int(state[1])
        try:
            data = simulate(spec, n, data_seed)
            plan = split_folds(n, k_folds, fold_seed)
            rows = []
            for lam in lams:
                params = sensitivity_params(lam)
                eta = crossfit_nuisances(data, params, bundle, plan, epsilon)
                est = estimate_bounds(data, eta, params, estimand)
                ci_lower, ci_upper = wald_bounds(est, alpha / 2.0)
                t_lower, t_upper = truth[lam]
                rows.append(
                    ReplicationRecord(
                        rep=rep,
                        lam=lam,
                        data_seed=data_seed,
                        psi_lower=est.psi_lower,
                        psi_upper=est.psi_upper,
                        se_lower=est.se_lower,
                        se_upper=est.se_upper,
                        ci_lower=ci_lower,
                        ci_upper=ci_upper,
                        covered=bool(ci_lower <= t_lower and t_upper <= ci_upper),
                    )
                )
            return rows
        except MsmBoundsError as exc:
            return [
                ReplicationRecord(
                    rep=rep,
                    lam=lam,
                    data_seed=data_seed,
                    psi_lower=np.nan,
                    psi_upper=np.nan,
                    se_lower=np.nan,
                    se_upper=np.nan,
                    ci_lower=np.nan,
                    ci_upper=np.nan,
                    covered=False,
                    error=str(exc),
                )
                for lam in lams
            ]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(run_rep, range(reps)))
    else:
        per_rep = [run_rep(rep) for rep in range(reps)]
    records = tuple(row for rows in per_rep for row in rows)

    failed_reps = {r.rep for r in records if r.error is not None}
    if len(failed_reps) > max(0.01 * reps, 0):
        raise HarnessError(
            f"{len(failed_reps)} of {reps} replications failed (more than 1%); "
            f"first error: {next(r.error for r in records if r.error is not None)}"
        )

    cells = []
    for lam in lams:
        ok = [r for r in records if r.lam == lam and r.error is None]
        t_lower, t_upper = truth[lam]
        if ok:
            coverage = float(np.mean([r.covered for r in ok]))
            bias_lower = float(np.mean([r.psi_lower for r in ok])) - t_lower
            bias_upper = float(np.mean([r.psi_upper for r in ok])) - t_upper
            avg_width = float(np.mean([r.ci_upper - r.ci_lower for r in ok]))
        else:
            coverage = bias_lower = bias_upper = avg_width = float("nan")
        cells.append(
            CoverageCell(
                lam=lam,
                estimand=estimand,
                reps_ok=len(ok),
                reps_failed=reps - len(ok),
                truth_lower=t_lower,
                truth_upper=t_upper,
                bias_lower=bias_lower,
                bias_upper=bias_upper,
                coverage=coverage,
                avg_width=avg_width,
            )
        )

    return CoverageReport(
        spec_kind=spec.kind,
        estimand=estimand,
        n=int(n),
        k_folds=int(k_folds),
        alpha=float(alpha),
        reps=int(reps),
        seed=int(seed),
        lambdas=tuple(lams),
        cells=tuple(cells),
        records=records,
    )
