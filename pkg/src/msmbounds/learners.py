"""Nuisance learners.

Contracts plus small built-in implementations for the three nuisance
problems: propensity (penalized logistic regression fit by damped Newton),
conditional quantile (linear pinball regression fit by averaged
subgradient descent), and transformed-outcome regression (closed-form
ridge).  A ``constant`` kind provides intercept-only baselines for
misspecification experiments, and ``oracle_injection`` wraps
caller-supplied evaluation functions so exact nuisances can be plugged in.

All fits are deterministic functions of their inputs: closed forms or
fixed iteration schedules, no internal randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

from .core import (
    ConvergenceError,
    Dataset,
    FitError,
    ParameterError,
    SensitivityParams,
)
from .cvar import DiscreteDist, empirical_quantile, transformed_outcome

__all__ = [
    "LearnerSpec",
    "LearnerBundle",
    "FittedPredictor",
    "default_bundle",
    "expand_features",
    "fit_propensity",
    "clip_propensity",
    "fit_quantile",
    "fit_mean",
    "fit_rho",
    "binary_nuisances",
]

_KINDS = ("logistic", "ridge", "pinball_linear", "constant", "oracle_injection")
_EXPANSIONS = ("raw", "interactions")


@dataclass(frozen=True)
class LearnerSpec:
    """Configuration for one nuisance learner.

    ``feature_expansion`` controls the design matrix: ``raw`` uses the
    covariates as-is, ``interactions`` appends all pairwise products
    (including squares) so bilinear signal is within the linear span.
    ``inject`` is only consulted for ``kind == "oracle_injection"``; its
    signature depends on the fitting problem (see the ``fit_*`` functions).
    """

    kind: str
    regularization: float = 1e-2
    max_iter: int = 500
    tol: float = 1e-8
    feature_expansion: str = "interactions"
    inject: Callable | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown learner kind {self.kind!r}; expected one of {_KINDS}")
        if not (np.isfinite(self.regularization) and self.regularization >= 0.0):
            raise ParameterError(f"regularization must be >= 0, got {self.regularization!r}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if not (np.isfinite(self.tol) and self.tol > 0.0):
            raise ParameterError(f"tol must be > 0, got {self.tol!r}")
        if self.feature_expansion not in _EXPANSIONS:
            raise ParameterError(
                f"unknown feature expansion {self.feature_expansion!r}; expected one of {_EXPANSIONS}"
            )
        if self.kind == "oracle_injection" and self.inject is None:
            raise ParameterError("oracle_injection requires an inject callable")


@dataclass(frozen=True)
class LearnerBundle:
    """The three learner specs used by cross-fitting, plus the rho strategy.

    ``rho_strategy == "separate"`` fits the outcome mean and the tail part
    as two regressions and mixes them, which makes the estimator collapse
    to plain AIPW at ``lam == 1``.  ``"direct"`` regresses the transformed
    outcome in one pass.
    """

    propensity: LearnerSpec
    quantile: LearnerSpec
    regression: LearnerSpec
    rho_strategy: str = "separate"

    def __post_init__(self):
        if self.rho_strategy not in ("separate", "direct"):
            raise ParameterError(f"rho_strategy must be 'separate' or 'direct', got {self.rho_strategy!r}")


def default_bundle(outcome_kind) -> LearnerBundle:
    """Built-in defaults: logistic propensity, pinball quantiles, ridge
    (continuous) or logistic (binary) outcome regression."""
    from .core import OutcomeKind

    kind = OutcomeKind(outcome_kind)
    regression = LearnerSpec(kind="logistic" if kind is OutcomeKind.BINARY else "ridge")
    return LearnerBundle(
        propensity=LearnerSpec(kind="logistic"),
        quantile=LearnerSpec(kind="pinball_linear"),
        regression=regression,
    )


@dataclass(frozen=True)
class FittedPredictor:
    """An immutable evaluation function from covariates to predictions."""

    kind: str
    predict: Callable[[np.ndarray], np.ndarray]
    n_train: int
    components: Mapping[str, "FittedPredictor"] | None = field(default=None, compare=False)


def expand_features(x: np.ndarray, expansion: str) -> np.ndarray:
    """Apply the configured feature expansion (no intercept column)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if expansion == "raw":
        return x
    if expansion == "interactions":
        d = x.shape[1]
        cols = [x]
        for i in range(d):
            for j in range(i, d):
                cols.append((x[:, i] * x[:, j])[:, None])
        return np.hstack(cols)
    raise ParameterError(f"unknown feature expansion {expansion!r}")


def _design(x: np.ndarray, expansion: str) -> np.ndarray:
    f = expand_features(x, expansion)
    return np.hstack([np.ones((f.shape[0], 1)), f])


def _penalty(p: int, reg: float) -> np.ndarray:
    pen = np.full(p, reg)
    pen[0] = 0.0  # intercept unpenalized
    return pen


def _solve_ridge(f: np.ndarray, t: np.ndarray, reg: float) -> np.ndarray:
    n, p = f.shape
    pen = _penalty(p, max(reg, 1e-10))
    a = f.T @ f / n + np.diag(pen)
    b = f.T @ t / n
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(a, b, rcond=None)[0]


def _logistic_nll(w: np.ndarray, f: np.ndarray, t: np.ndarray, pen: np.ndarray) -> float:
    eta = f @ w
    return float(np.mean(np.logaddexp(0.0, eta) - t * eta) + 0.5 * (pen @ (w * w)))


def _fit_logistic(f: np.ndarray, t: np.ndarray, spec: LearnerSpec) -> np.ndarray:
    n, p = f.shape
    pen = _penalty(p, max(spec.regularization, 1e-10))
    w = np.zeros(p)
    nll = _logistic_nll(w, f, t, pen)
    for _ in range(spec.max_iter):
        prob = expit(f @ w)
        grad = f.T @ (prob - t) / n + pen * w
        if np.max(np.abs(grad)) <= spec.tol:
            return w
        weight = prob * (1.0 - prob) + 1e-12
        hess = (f * weight[:, None]).T @ f / n + np.diag(pen)
        try:
            direction = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            direction = np.linalg.lstsq(hess, grad, rcond=None)[0]
        step = 1.0
        while step >= 2.0**-40:
            cand = w - step * direction
            cand_nll = _logistic_nll(cand, f, t, pen)
            if cand_nll <= nll + 1e-12:
                break
            step /= 2.0
        moved = step * np.max(np.abs(direction))
        w = w - step * direction
        nll = _logistic_nll(w, f, t, pen)
        if moved <= spec.tol:
            return w
    raise ConvergenceError(
        f"logistic fit did not converge in {spec.max_iter} Newton iterations", last_iterate=w
    )


def fit_propensity(data: Dataset, rows: np.ndarray, spec: LearnerSpec) -> FittedPredictor:
    """Fit a treatment-probability model on the given rows.

    The training rows must contain both treatment values; an all-treated
    or all-control subset raises :class:`FitError`.  Supported kinds:
    ``logistic``, ``constant`` (sample treated share), and
    ``oracle_injection`` with signature ``inject(X) -> probabilities``.
    """
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise FitError("propensity fit needs a nonempty training set")
    z = data.treatment[rows].astype(float)
    if spec.kind != "oracle_injection":
        if np.all(z == 1.0):
            raise FitError("degenerate propensity fit: all training rows are treated")
        if np.all(z == 0.0):
            raise FitError("degenerate propensity fit: all training rows are control")
    if spec.kind == "oracle_injection":
        inject = spec.inject
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.asarray(inject(np.atleast_2d(xnew)), dtype=float),
            n_train=rows.size,
        )
    if spec.kind == "constant":
        mean_z = float(z.mean())
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.full(np.atleast_2d(xnew).shape[0], mean_z),
            n_train=rows.size,
        )
    if spec.kind == "logistic":
        f = _design(data.covariates[rows], spec.feature_expansion)
        w = _fit_logistic(f, z, spec)
        expansion = spec.feature_expansion
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: expit(_design(np.atleast_2d(xnew), expansion) @ w),
            n_train=rows.size,
        )
    raise ParameterError(f"learner kind {spec.kind!r} cannot fit a propensity model")


def clip_propensity(value, epsilon: float):
    """Clamp propensities into ``[epsilon, 1 - epsilon]``."""
    epsilon = float(epsilon)
    if not (0.0 < epsilon < 0.5):
        raise ParameterError(f"clip epsilon must lie in (0, 0.5), got {epsilon!r}")
    out = np.clip(np.asarray(value, dtype=float), epsilon, 1.0 - epsilon)
    return out if out.ndim else float(out)


def _arm_rows(data: Dataset, rows: np.ndarray, arm: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=int)
    sub = rows[data.treatment[rows] == arm]
    if sub.size == 0:
        raise FitError(f"degenerate fit: no training rows with treatment == {arm}")
    return sub


def _standardize(f: np.ndarray):
    center = f.mean(axis=0)
    scale = f.std(axis=0)
    scale[scale == 0.0] = 1.0
    return (f - center) / scale, center, scale


def fit_quantile(
    data: Dataset, rows: np.ndarray, arm: int, alpha: float, spec: LearnerSpec
) -> FittedPredictor:
    """Fit a conditional ``alpha``-quantile model on the arm subset of ``rows``.

    ``pinball_linear`` minimizes average pinball (check) loss by averaged
    subgradient descent over a linear model, warm-started at a ridge
    least-squares fit shifted to the empirical residual quantile.  The
    subgradient at an exactly-zero residual takes the left limit
    ``alpha - 1``, fixed for determinism.  ``constant`` returns the
    empirical quantile of the arm's outcomes.  ``oracle_injection`` wraps
    ``inject(X, arm, alpha) -> values``.
    """
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"quantile level must lie in (0, 1), got {alpha!r}")
    if arm not in (0, 1):
        raise ParameterError(f"arm must be 0 or 1, got {arm!r}")
    if spec.kind == "oracle_injection":
        inject = spec.inject
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.asarray(inject(np.atleast_2d(xnew), arm, alpha), dtype=float),
            n_train=int(np.asarray(rows).size),
        )
    sub = _arm_rows(data, rows, arm)
    y = data.outcome[sub]
    if spec.kind == "constant":
        dist = DiscreteDist(y, np.full(y.size, 1.0 / y.size))
        q = empirical_quantile(dist, alpha)
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.full(np.atleast_2d(xnew).shape[0], q),
            n_train=sub.size,
        )
    if spec.kind != "pinball_linear":
        raise ParameterError(f"learner kind {spec.kind!r} cannot fit a quantile model")

    raw = expand_features(data.covariates[sub], spec.feature_expansion)
    std, center, scale = _standardize(raw)
    f = np.hstack([np.ones((std.shape[0], 1)), std])
    n, p = f.shape
    pen = _penalty(p, spec.regularization)

    w = _solve_ridge(f, y, spec.regularization)
    resid = y - f @ w
    resid_dist = DiscreteDist(resid, np.full(n, 1.0 / n))
    w = w.copy()
    w[0] += empirical_quantile(resid_dist, alpha)

    burn = spec.max_iter // 2
    avg = np.zeros(p)
    n_avg = 0
    prev_avg = None
    step0 = 0.5
    for t in range(1, spec.max_iter + 1):
        r = y - f @ w
        # dloss/dresidual; zero residuals take the left limit alpha - 1
        gr = np.where(r > 0.0, alpha, alpha - 1.0)
        grad = -f.T @ gr / n + pen * w
        w = w - (step0 / np.sqrt(t)) * grad
        if t > burn:
            avg += w
            n_avg += 1
            if n_avg % 50 == 0:
                current = avg / n_avg
                if prev_avg is not None and np.max(np.abs(current - prev_avg)) <= spec.tol:
                    break
                prev_avg = current
    w_final = avg / n_avg if n_avg else w

    expansion = spec.feature_expansion

    def predict(xnew: np.ndarray) -> np.ndarray:
        fr = expand_features(np.atleast_2d(xnew), expansion)
        fs = np.hstack([np.ones((fr.shape[0], 1)), (fr - center) / scale])
        return fs @ w_final

    return FittedPredictor(kind=spec.kind, predict=predict, n_train=sub.size)


def fit_mean(data: Dataset, rows: np.ndarray, arm: int, spec: LearnerSpec) -> FittedPredictor:
    """Fit a conditional-mean model for the outcome on the arm subset.

    ``ridge`` is the closed-form penalized least-squares fit; ``logistic``
    is valid for 0/1 outcomes and predicts in (0, 1); ``constant`` returns
    the arm's sample mean; ``oracle_injection`` wraps
    ``inject(X, arm) -> values``.
    """
    if arm not in (0, 1):
        raise ParameterError(f"arm must be 0 or 1, got {arm!r}")
    if spec.kind == "oracle_injection":
        inject = spec.inject
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.asarray(inject(np.atleast_2d(xnew), arm), dtype=float),
            n_train=int(np.asarray(rows).size),
        )
    sub = _arm_rows(data, rows, arm)
    y = data.outcome[sub]
    if spec.kind == "constant":
        m = float(y.mean())
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.full(np.atleast_2d(xnew).shape[0], m),
            n_train=sub.size,
        )
    expansion = spec.feature_expansion
    if spec.kind == "ridge":
        f = _design(data.covariates[sub], expansion)
        w = _solve_ridge(f, y, spec.regularization)
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: _design(np.atleast_2d(xnew), expansion) @ w,
            n_train=sub.size,
        )
    if spec.kind == "logistic":
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ParameterError("logistic outcome regression requires a 0/1 outcome")
        f = _design(data.covariates[sub], expansion)
        w = _fit_logistic(f, y, spec)
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: expit(_design(np.atleast_2d(xnew), expansion) @ w),
            n_train=sub.size,
        )
    raise ParameterError(f"learner kind {spec.kind!r} cannot fit an outcome mean")


def _fit_regression_values(
    data: Dataset, sub: np.ndarray, target: np.ndarray, spec: LearnerSpec
) -> FittedPredictor:
    # Regression of an arbitrary real target on covariates (ridge or constant).
    if spec.kind == "constant":
        m = float(target.mean())
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.full(np.atleast_2d(xnew).shape[0], m),
            n_train=sub.size,
        )
    if spec.kind == "ridge":
        expansion = spec.feature_expansion
        f = _design(data.covariates[sub], expansion)
        w = _solve_ridge(f, target, spec.regularization)
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: _design(np.atleast_2d(xnew), expansion) @ w,
            n_train=sub.size,
        )
    raise ParameterError(f"learner kind {spec.kind!r} cannot fit a transformed-outcome regression")


def fit_rho(
    data: Dataset,
    rows: np.ndarray,
    arm: int,
    q_hat: FittedPredictor,
    params: SensitivityParams,
    side: str,
    spec: LearnerSpec,
    strategy: str = "separate",
) -> FittedPredictor:
    """Fit the adversarial-regression nuisance from an estimated quantile.

    ``direct`` regresses the transformed outcome built from ``q_hat`` on
    the covariates in one pass.  ``separate`` fits the outcome mean and the
    tail component as two regressions and returns their
    ``lam**-1 / (1 - lam**-1)`` mixture; at ``lam == 1`` the returned
    predictor is exactly the mean regression.  The caller is responsible
    for ``q_hat`` respecting the cross-fitting plan.  ``oracle_injection``
    wraps ``inject(X, arm, side) -> values``.
    """
    if side not in ("+", "-"):
        raise ParameterError(f"side must be '+' or '-', got {side!r}")
    if strategy not in ("separate", "direct"):
        raise ParameterError(f"strategy must be 'separate' or 'direct', got {strategy!r}")
    if spec.kind == "oracle_injection":
        inject = spec.inject
        return FittedPredictor(
            kind=spec.kind,
            predict=lambda xnew: np.asarray(inject(np.atleast_2d(xnew), arm, side), dtype=float),
            n_train=int(np.asarray(rows).size),
        )
    sub = _arm_rows(data, rows, arm)
    y = data.outcome[sub]
    q_vals = np.asarray(q_hat.predict(data.covariates[sub]), dtype=float)

    if strategy == "direct":
        target = transformed_outcome(y, q_vals, params, side)
        return _fit_regression_values(data, sub, np.asarray(target), spec)

    resid = y - q_vals
    part = np.maximum(resid, 0.0) if side == "+" else np.minimum(resid, 0.0)
    tail_target = q_vals + part / (1.0 - params.tau)
    mu_model = fit_mean(data, rows, arm, spec)
    tail_model = _fit_regression_values(data, sub, tail_target, spec)
    lam_inv = 1.0 / params.lam
    if params.lam == 1.0:
        predict = mu_model.predict
    else:
        def predict(xnew: np.ndarray) -> np.ndarray:
            return lam_inv * mu_model.predict(xnew) + (1.0 - lam_inv) * tail_model.predict(xnew)

    return FittedPredictor(
        kind=spec.kind,
        predict=predict,
        n_train=sub.size,
        components={"mu": mu_model, "tail": tail_model},
    )


def binary_nuisances(mu_hat, params: SensitivityParams):
    """Closed-form quantile and adversarial-regression nuisances for 0/1 outcomes.

    For a Bernoulli conditional law with mean ``mu_hat`` the tail quantiles
    are indicators and the adversarial regressions are piecewise-linear in
    ``mu_hat``:

        q_minus = 1{mu > tau}            q_plus = 1{mu > 1 - tau}
        rho_minus = max(1 - lam + mu*lam, mu/lam)
        rho_plus  = min(1 - 1/lam + mu/lam, mu*lam)

    Accepts scalars or arrays; returns ``(q_plus, q_minus, rho_plus,
    rho_minus)``.
    """
    mu = np.asarray(mu_hat, dtype=float)
    if not np.all(np.isfinite(mu)) or np.any(mu < 0.0) or np.any(mu > 1.0):
        raise ParameterError("binary outcome regression values must lie in [0, 1]")
    lam = params.lam
    q_plus = (mu > 1.0 - params.tau).astype(float)
    q_minus = (mu > params.tau).astype(float)
    rho_plus = np.minimum(1.0 - 1.0 / lam + mu / lam, mu * lam)
    rho_minus = np.maximum(1.0 - lam + mu * lam, mu / lam)
    if mu.ndim == 0:
        return float(q_plus), float(q_minus), float(rho_plus), float(rho_minus)
    return q_plus, q_minus, rho_plus, rho_minus
