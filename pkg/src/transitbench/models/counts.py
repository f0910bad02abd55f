"""Zero-inflated negative binomial and hurdle regressions.

Both use an NB2 count distribution with log link, ``Var = mu + mu^2 / theta``,
and a logit binary part. Optimization runs on standardized columns and the
coefficients are mapped back to the raw feature scale afterwards.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, expit, gammaln, log_expit

from ..errors import ConvergenceWarning, DataError, SeparationWarning
from .base import FittedModel, as_array, feature_names_of, reference_columns, register_predictor

LOGIT_BOUND = 25.0


def _check_counts(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y)) or np.any(y < 0) or np.any(y != np.round(y)):
        raise DataError("count models need non-negative integer targets")
    return y


class _Standardizer:
    """Center/scale the non-constant kept columns and prepend an intercept."""

    def __init__(self, A: np.ndarray, keep: np.ndarray):
        self.p = A.shape[1]
        sd = A.std(axis=0)
        self.cols = np.flatnonzero(keep & (sd > 1e-12 * (1 + np.abs(A).max(axis=0))))
        self.mean = A[:, self.cols].mean(axis=0)
        self.scale = A[:, self.cols].std(axis=0)

    def design(self, A: np.ndarray) -> np.ndarray:
        Z = (A[:, self.cols] - self.mean) / self.scale
        return np.hstack([np.ones((len(A), 1)), Z])

    def to_raw(self, b: np.ndarray) -> tuple[float, np.ndarray]:
        coef = np.zeros(self.p)
        coef[self.cols] = b[1:] / self.scale
        intercept = b[0] - np.sum(b[1:] * self.mean / self.scale)
        return float(intercept), coef


def nb_logpmf(y, mu, theta):
    return (
        gammaln(y + theta) - gammaln(theta) - gammaln(y + 1)
        + theta * (np.log(theta) - np.log(theta + mu))
        + y * (np.log(mu) - np.log(theta + mu))
    )


def _nb_negll(params, D, y, w, truncated=False):
    """Weighted NB2 negative log-likelihood (optionally zero-truncated) and gradient.

    ``params`` = (coefficients..., log theta).
    """
    b, log_theta = params[:-1], params[-1]
    theta = np.exp(log_theta)
    eta = np.clip(D @ b, -30, 30)
    mu = np.exp(eta)
    ll = nb_logpmf(y, mu, theta)
    d_eta = theta * (y - mu) / (theta + mu)
    d_theta = digamma(y + theta) - digamma(theta) + np.log(theta) + 1 - np.log(theta + mu) - (y + theta) / (theta + mu)
    if truncated:
        log_f0 = theta * (np.log(theta) - np.log(theta + mu))
        ll = ll - np.log(-np.expm1(log_f0))
        odds0 = 1.0 / np.expm1(-log_f0)  # f0 / (1 - f0)
        d_eta = d_eta - odds0 * theta * mu / (theta + mu)
        d_theta = d_theta + odds0 * (np.log(theta / (theta + mu)) + mu / (theta + mu))
    f = -np.sum(w * ll)
    g = np.concatenate([-(D.T @ (w * d_eta)), [-np.sum(w * d_theta) * theta]])
    return f, g


def _logit_negll(b, D, t, w):
    """Weighted Bernoulli negative log-likelihood with soft labels ``t`` in [0, 1]."""
    eta = D @ b
    f = -np.sum(w * (t * log_expit(eta) + (1 - t) * log_expit(-eta)))
    g = -(D.T @ (w * (t - expit(eta))))
    return f, g


def _minimize(fun, x0, args, bounds=None, maxiter=500):
    res = minimize(fun, x0, args=args, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": maxiter, "gtol": 1e-9, "ftol": 1e-14})
    return res


def zinb_loglik(params: dict, D: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    mu = np.exp(np.clip(D @ params["b"], -30, 30))
    theta = np.exp(params["log_theta"])
    log_pi = log_expit(D @ params["g"])
    log_1mpi = log_expit(-(D @ params["g"]))
    ll_nb = nb_logpmf(y, mu, theta)
    zero = y == 0
    ll = np.where(zero, np.logaddexp(log_pi, log_1mpi + ll_nb), log_1mpi + ll_nb)
    return float(np.sum(w * ll))


def fit_zinb(X, y, max_iter: int = 200, tol: float = 1e-8, sample_weight=None) -> FittedModel:
    """Zero-inflated NB2 by expectation-maximization.

    E-step: posterior probability that each zero is structural. M-step: a
    soft-label logistic fit for the inflation part and a weighted NB2 fit for
    the count part, each by L-BFGS warm-started at the current iterate.
    Converged when the per-observation log-likelihood gains less than ``tol``.
    """
    A = as_array(X)
    y = _check_counts(y)
    if len(y) != len(A):
        raise DataError("X and y lengths differ")
    if not (y == 0).any() or not (y > 0).any():
        raise DataError("zinb needs at least one zero and one positive target (degenerate likelihood)")
    n = len(y)
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    wsum = w.sum()
    std = _Standardizer(A, reference_columns(X))
    D = std.design(A)
    k = D.shape[1]

    zero = y == 0
    pos_mean = np.average(y[~zero], weights=w[~zero])
    b = np.zeros(k)
    b[0] = np.log(pos_mean)
    g = np.zeros(k)
    excess = max(np.average(zero, weights=w) - np.exp(-pos_mean), 0.05)
    g[0] = np.log(excess / (1 - excess))
    cur = {"b": b, "g": g, "log_theta": 0.0}

    history = [zinb_loglik(cur, D, y, w)]
    converged = False
    best = dict(cur), history[0]
    it = 0
    for it in range(1, max_iter + 1):
        # E-step
        mu = np.exp(np.clip(D @ cur["b"], -30, 30))
        theta = np.exp(cur["log_theta"])
        log_f0 = theta * (np.log(theta) - np.log(theta + mu))
        # posterior of a structural zero, pi / (pi + (1 - pi) f0), in log-odds form
        tau = np.where(zero, expit(D @ cur["g"] - log_f0), 0.0)

        # M-steps
        rg = _minimize(_logit_negll, cur["g"], (D, tau, w))
        rb = _minimize(_nb_negll, np.append(cur["b"], cur["log_theta"]), (D, y, w * (1 - tau)),
                       bounds=[(None, None)] * k + [(-10.0, 10.0)])
        cur = {"b": rb.x[:-1], "g": rg.x, "log_theta": float(rb.x[-1])}
        ll = zinb_loglik(cur, D, y, w)
        history.append(ll)
        if ll > best[1]:
            best = dict(cur), ll
        if (ll - history[-2]) / wsum < tol:
            converged = True
            break
    cur, ll = best
    if not converged:
        warnings.warn(f"zinb EM did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2)

    b0, beta = std.to_raw(cur["b"])
    g0, gamma = std.to_raw(cur["g"])
    return FittedModel(
        "zinb",
        {
            "count_intercept": b0, "count_coef": beta,
            "zero_intercept": g0, "zero_coef": gamma,
            "theta": float(np.exp(cur["log_theta"])),
        },
        feature_names_of(X, A.shape[1]),
        {
            "converged": converged, "iterations": it, "final_loss": -ll / wsum,
            "loglik_history": [float(v) for v in history],
        },
    )


def zinb_components(model: FittedModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(structural-zero probability, NB mean) per row."""
    p = model.params
    pi = expit(p["zero_intercept"] + X @ np.asarray(p["zero_coef"]))
    mu = np.exp(np.clip(p["count_intercept"] + X @ np.asarray(p["count_coef"]), -30, 30))
    return pi, mu


@register_predictor("zinb")
def _predict_zinb(model, X):
    pi, mu = zinb_components(model, X)
    return (1 - pi) * mu


def fit_hurdle(X, y, max_iter: int = 500, tol: float = 1e-8, sample_weight=None) -> FittedModel:
    """Logit for ``y > 0`` plus a zero-truncated NB2 on the positive rows, fitted separately."""
    A = as_array(X)
    y = _check_counts(y)
    if len(y) != len(A):
        raise DataError("X and y lengths differ")
    pos = y > 0
    if not pos.any():
        raise DataError("hurdle needs positive targets")
    if pos.all():
        raise DataError("hurdle binary part is degenerate: every target is positive")
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    keep = reference_columns(X)

    std_h = _Standardizer(A, keep)
    Dh = std_h.design(A)
    kh = Dh.shape[1]
    share = np.average(pos, weights=w)
    h0 = np.zeros(kh)
    h0[0] = np.log(share / (1 - share))
    rh = minimize(_logit_negll, h0, args=(Dh, pos.astype(float), w), jac=True, method="L-BFGS-B",
                  bounds=[(-LOGIT_BOUND, LOGIT_BOUND)] * kh,
                  options={"maxiter": max_iter, "gtol": 1e-9, "ftol": tol * 1e-6})
    at_bound = np.abs(rh.x) >= LOGIT_BOUND * (1 - 1e-6)
    separated = bool(at_bound.any())
    if separated:
        warnings.warn("hurdle logit: quasi-complete separation, coefficients capped", SeparationWarning,
                      stacklevel=2)

    Ap = A[pos]
    std_c = _Standardizer(Ap, keep)
    Dc = std_c.design(Ap)
    kc = Dc.shape[1]
    c0 = np.zeros(kc + 1)
    c0[0] = np.log(np.average(y[pos], weights=w[pos]))
    rc = minimize(_nb_negll, c0, args=(Dc, y[pos], w[pos], True), jac=True, method="L-BFGS-B",
                  bounds=[(None, None)] * kc + [(-10.0, 10.0)],
                  options={"maxiter": max_iter, "gtol": 1e-9, "ftol": tol * 1e-6})
    converged = bool(rh.success and rc.success)
    if not converged:
        warnings.warn("hurdle fit did not fully converge", ConvergenceWarning, stacklevel=2)

    hi, hc = std_h.to_raw(rh.x)
    ci, cc = std_c.to_raw(rc.x[:-1])
    return FittedModel(
        "hurdle",
        {
            "hurdle_intercept": hi, "hurdle_coef": hc,
            "count_intercept": ci, "count_coef": cc,
            "theta": float(np.exp(rc.x[-1])),
        },
        feature_names_of(X, A.shape[1]),
        {
            "converged": converged, "iterations": int(rh.nit + rc.nit),
            "final_loss": float((rh.fun + rc.fun) / w.sum()), "separation": separated,
        },
    )


def hurdle_components(model: FittedModel, X: np.ndarray):
    """(P(y > 0), untruncated NB mean, E[y | y > 0]) per row."""
    p = model.params
    p_pos = expit(p["hurdle_intercept"] + X @ np.asarray(p["hurdle_coef"]))
    mu = np.exp(np.clip(p["count_intercept"] + X @ np.asarray(p["count_coef"]), -30, 30))
    theta = p["theta"]
    log_f0 = theta * (np.log(theta) - np.log(theta + mu))
    cond_mean = mu / -np.expm1(log_f0)
    return p_pos, mu, cond_mean


@register_predictor("hurdle")
def _predict_hurdle(model, X):
    p_pos, _, cond_mean = hurdle_components(model, X)
    return p_pos * cond_mean
