"""Cross-fitted bound estimation.

Fold plans, cross-fitting of all nuisances, per-row influence values,
point estimates of the lower/upper bounds with standard errors, Wald
limits, the ratio form for the effect on the treated, and the plain AIPW
and assumption-free reference estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import (
    DataError,
    Dataset,
    Estimand,
    FitError,
    MsmBoundsError,
    NuisanceSet,
    OutcomeKind,
    ParameterError,
    SensitivityParams,
)
from .cvar import weighting_kernel
from .learners import (
    LearnerBundle,
    binary_nuisances,
    clip_propensity,
    fit_mean,
    fit_propensity,
    fit_quantile,
    fit_rho,
)

__all__ = [
    "FoldPlan",
    "split_folds",
    "crossfit_nuisances",
    "influence_scores",
    "BoundEstimate",
    "estimate_bounds",
    "wald_bounds",
    "att_bounds",
    "aipw",
    "manski_bounds_binary",
]


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of rows to cross-fitting folds.

    A deterministic function of ``(n, k, seed)``: a seeded uniform
    permutation chunked into ``k`` blocks whose sizes differ by at most 1.
    """

    assignments: np.ndarray  # (n,) fold index in {0..k-1}
    k: int
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        counts = np.bincount(a, minlength=self.k)
        if counts.size != self.k or np.any(counts == 0):
            raise ParameterError("every fold must be nonempty")
        if counts.max() - counts.min() > 1:
            raise ParameterError("fold sizes must differ by at most one")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    @property
    def n(self) -> int:
        return self.assignments.shape[0]


def split_folds(n: int, k: int, seed: int) -> FoldPlan:
    """Split ``n`` rows into ``k`` approximately even, seeded random folds."""
    if not (2 <= k <= n):
        raise ParameterError(f"fold count must satisfy 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    for fold, block in enumerate(np.array_split(perm, k)):
        assignments[block] = fold
    return FoldPlan(assignments=assignments, k=int(k), seed=int(seed))


def crossfit_nuisances(
    data: Dataset,
    params: SensitivityParams,
    bundle: LearnerBundle,
    plan: FoldPlan,
    epsilon: float = 0.01,
) -> NuisanceSet:
    """Fit all nuisances out-of-fold and evaluate them in-fold.

    For each fold the propensity, quantile, and adversarial-regression
    models are fit on the complement and evaluated on the fold's rows at
    both arms.  Binary outcomes use the closed forms driven by a fitted
    outcome regression; continuous outcomes use quantile regression
    followed by transformed-outcome regression.  Propensities are clipped
    into ``[epsilon, 1 - epsilon]`` after prediction.

    A degenerate fit in any fold aborts the whole cross-fit (partial
    cross-fitting would silently change the estimator); the raised error
    is annotated with the fold index.
    """
    if plan.n != data.n:
        raise ParameterError(f"fold plan covers {plan.n} rows but the dataset has {data.n}")
    epsilon = float(epsilon)
    if not (0.0 < epsilon < 0.5):
        raise ParameterError(f"clip epsilon must lie in (0, 0.5), got {epsilon!r}")

    n = data.n
    binary = data.outcome_kind is OutcomeKind.BINARY
    e_hat = np.full(n, np.nan)
    q_plus = np.full((n, 2), np.nan)
    q_minus = np.full((n, 2), np.nan)
    rho_plus = np.full((n, 2), np.nan)
    rho_minus = np.full((n, 2), np.nan)
    store_mu = binary or (
        bundle.rho_strategy == "separate" and bundle.regression.kind != "oracle_injection"
    )
    mu = np.full((n, 2), np.nan) if store_mu else None

    all_rows = np.arange(n)
    for fold in range(plan.k):
        test = all_rows[plan.assignments == fold]
        train = all_rows[plan.assignments != fold]
        x_test = data.covariates[test]
        try:
            e_model = fit_propensity(data, train, bundle.propensity)
            e_hat[test] = clip_propensity(e_model.predict(x_test), epsilon)
            for arm in (0, 1):
                if binary:
                    mu_model = fit_mean(data, train, arm, bundle.regression)
                    mu_te = np.clip(np.asarray(mu_model.predict(x_test), dtype=float), 0.0, 1.0)
                    qp, qm, rp, rm = binary_nuisances(mu_te, params)
                    q_plus[test, arm] = qp
                    q_minus[test, arm] = qm
                    rho_plus[test, arm] = rp
                    rho_minus[test, arm] = rm
                    mu[test, arm] = mu_te
                else:
                    qp_model = fit_quantile(data, train, arm, params.tau, bundle.quantile)
                    qm_model = fit_quantile(data, train, arm, 1.0 - params.tau, bundle.quantile)
                    rp_model = fit_rho(
                        data, train, arm, qp_model, params, "+", bundle.regression, bundle.rho_strategy
                    )
                    rm_model = fit_rho(
                        data, train, arm, qm_model, params, "-", bundle.regression, bundle.rho_strategy
                    )
                    q_plus[test, arm] = qp_model.predict(x_test)
                    q_minus[test, arm] = qm_model.predict(x_test)
                    rho_plus[test, arm] = rp_model.predict(x_test)
                    rho_minus[test, arm] = rm_model.predict(x_test)
                    if store_mu:
                        mu[test, arm] = rp_model.components["mu"].predict(x_test)
        except MsmBoundsError as exc:
            raise FitError(f"fold {fold}: {exc}") from exc

    return NuisanceSet(
        e_hat=e_hat,
        q_plus=q_plus,
        q_minus=q_minus,
        rho_plus=rho_plus,
        rho_minus=rho_minus,
        mu=mu,
    )


def _flip(side: str) -> str:
    return "-" if side == "+" else "+"


def influence_scores(
    data: Dataset,
    eta: NuisanceSet,
    params: SensitivityParams,
    estimand: Estimand,
    side: str,
) -> np.ndarray:
    """Per-row recentered influence values for the requested bound.

    For the arm-1 mean the ``side``-bound value is

        z*y + (1 - z)*rho(x, 1)
            + ((1 - e)*z/e) * (kernel(y, q(x, 1)) - rho(x, 1))

    with the arm-0 mean symmetric (``z`` and ``e`` complemented).  The
    treatment-effect value combines the arm-1 ``side`` bound with the
    arm-0 bound on the opposite side.
    """
    if side not in ("+", "-"):
        raise ParameterError(f"side must be '+' or '-', got {side!r}")
    estimand = Estimand(estimand)
    if eta.n != data.n:
        raise ParameterError(f"nuisance set covers {eta.n} rows but the dataset has {data.n}")
    if estimand is Estimand.ATE:
        return influence_scores(data, eta, params, Estimand.MEAN1, side) - influence_scores(
            data, eta, params, Estimand.MEAN0, _flip(side)
        )
    if estimand is Estimand.ATT:
        raise ParameterError("the treated-effect estimand uses att_bounds, not influence_scores")

    y = data.outcome
    z = data.treatment.astype(float)
    e = eta.e_hat
    q_arr = eta.q_plus if side == "+" else eta.q_minus
    rho_arr = eta.rho_plus if side == "+" else eta.rho_minus
    if estimand is Estimand.MEAN1:
        q = q_arr[:, 1]
        rho = rho_arr[:, 1]
        kern = weighting_kernel(y, q, params, side)
        return z * y + (1.0 - z) * rho + ((1.0 - e) * z / e) * (kern - rho)
    q = q_arr[:, 0]
    rho = rho_arr[:, 0]
    kern = weighting_kernel(y, q, params, side)
    return (1.0 - z) * y + z * rho + (e * (1.0 - z) / (1.0 - e)) * (kern - rho)


@dataclass(frozen=True)
class BoundEstimate:
    """Point estimates of the lower/upper bounds with standard errors.

    For the mean and treatment-effect estimands, ``psi_lower`` /
    ``psi_upper`` are the means of the stored per-row influence values and
    each ``se`` is the ``1/(n*(n-1))`` sum-of-squared-deviations formula
    applied to them.  For the treated-effect ratio form the stored
    influence values are the recentered residuals
    ``y - phi0 - z * psi_att`` (mean zero) and the standard errors use the
    treated count; see :func:`att_bounds`.
    """

    estimand: Estimand
    lam: float
    psi_lower: float
    psi_upper: float
    se_lower: float
    se_upper: float
    influence_lower: np.ndarray
    influence_upper: np.ndarray

    @property
    def n(self) -> int:
        return self.influence_lower.shape[0]


def _se_from_influence(phi: np.ndarray, center: float) -> float:
    n = phi.shape[0]
    dev = phi - center
    return float(np.sqrt(np.sum(dev * dev) / (n * (n - 1))))


def estimate_bounds(
    data: Dataset,
    eta: NuisanceSet,
    params: SensitivityParams,
    estimand: Estimand,
) -> BoundEstimate:
    """Average the influence values into bound estimates with standard errors."""
    estimand = Estimand(estimand)
    if estimand is Estimand.ATT:
        return att_bounds(data, eta, params)
    if data.n < 2:
        raise ParameterError("at least two rows are needed to compute a standard error")
    phi_lower = influence_scores(data, eta, params, estimand, "-")
    phi_upper = influence_scores(data, eta, params, estimand, "+")
    psi_lower = float(phi_lower.mean())
    psi_upper = float(phi_upper.mean())
    return BoundEstimate(
        estimand=estimand,
        lam=params.lam,
        psi_lower=psi_lower,
        psi_upper=psi_upper,
        se_lower=_se_from_influence(phi_lower, psi_lower),
        se_upper=_se_from_influence(phi_upper, psi_upper),
        influence_lower=phi_lower,
        influence_upper=phi_upper,
    )


def wald_bounds(est: BoundEstimate, alpha: float) -> tuple[float, float]:
    """One-sided Wald limits ``(psi_lower - z*se_lower, psi_upper + z*se_upper)``.

    ``z`` is the ``1 - alpha`` standard-normal quantile.  For a two-sided
    level ``1 - alpha`` region for the whole identified set, pass
    ``alpha / 2`` (union bound over the two one-sided limits).
    """
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    z = float(norm.ppf(1.0 - alpha))
    return est.psi_lower - z * est.se_lower, est.psi_upper + z * est.se_upper


def att_bounds(data: Dataset, eta: NuisanceSet, params: SensitivityParams) -> BoundEstimate:
    """Bounds on the average effect on the treated, in ratio form.

    The point estimates are ``(mean(y) - psi0_opposite) / mean(z)`` and the
    standard errors are

        se**2 = sum((y_i - phi0_i - z_i * psi_att)**2) / (n1 * (n1 - 1))

    with ``n1`` the treated count and ``phi0`` the arm-0 influence values
    on the side opposite the bound being estimated.
    """
    z = data.treatment.astype(float)
    n1 = float(z.sum())
    if n1 < 2:
        raise FitError(f"treated-effect bounds need at least 2 treated rows, got {int(n1)}")
    y = data.outcome
    phi0_lower = influence_scores(data, eta, params, Estimand.MEAN0, "-")
    phi0_upper = influence_scores(data, eta, params, Estimand.MEAN0, "+")
    y_bar = float(y.mean())
    z_bar = float(z.mean())
    att_upper = (y_bar - float(phi0_lower.mean())) / z_bar
    att_lower = (y_bar - float(phi0_upper.mean())) / z_bar
    resid_upper = y - phi0_lower - z * att_upper
    resid_lower = y - phi0_upper - z * att_lower
    se_upper = float(np.sqrt(np.sum(resid_upper * resid_upper) / (n1 * (n1 - 1.0))))
    se_lower = float(np.sqrt(np.sum(resid_lower * resid_lower) / (n1 * (n1 - 1.0))))
    return BoundEstimate(
        estimand=Estimand.ATT,
        lam=params.lam,
        psi_lower=att_lower,
        psi_upper=att_upper,
        se_lower=se_lower,
        se_upper=se_upper,
        influence_lower=resid_lower,
        influence_upper=resid_upper,
    )


def aipw(data: Dataset, e_hat: np.ndarray, mu_hat: np.ndarray) -> float:
    """The augmented inverse-propensity estimate of the treatment effect.

    ``e_hat`` is per-row, ``mu_hat`` is per-row-per-arm with column ``z``
    holding the arm-``z`` regression.
    """
    e = np.asarray(e_hat, dtype=float)
    mu = np.asarray(mu_hat, dtype=float)
    if e.shape != (data.n,) or mu.shape != (data.n, 2):
        raise ParameterError(
            f"expected e_hat shape ({data.n},) and mu_hat shape ({data.n}, 2), got {e.shape} and {mu.shape}"
        )
    y = data.outcome
    z = data.treatment.astype(float)
    summand = (
        mu[:, 1]
        - mu[:, 0]
        + z * (y - mu[:, 1]) / e
        - (1.0 - z) * (y - mu[:, 0]) / (1.0 - e)
    )
    return float(summand.mean())


def manski_bounds_binary(data: Dataset) -> tuple[float, float]:
    """Assumption-free bounds on the treatment effect for 0/1 outcomes.

    The arm-1 mean lies in ``[E_n[zy], E_n[zy + (1 - z)]]`` and the arm-0
    mean in ``[E_n[(1 - z)y], E_n[(1 - z)y + z]]``; the effect bounds
    follow by interval subtraction.
    """
    if data.outcome_kind is not OutcomeKind.BINARY:
        raise DataError("assumption-free bounds require a binary outcome")
    y = data.outcome
    z = data.treatment.astype(float)
    mean1_lower = float((z * y).mean())
    mean1_upper = float((z * y + (1.0 - z)).mean())
    mean0_lower = float(((1.0 - z) * y).mean())
    mean0_upper = float(((1.0 - z) * y + z).mean())
    return mean1_lower - mean0_upper, mean1_upper - mean0_lower
