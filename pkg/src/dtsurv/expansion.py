"""Collapsed-likelihood estimator on person-period data.

For each event type ``j`` the expanded data are treated as repeated binary
outcomes (event ``j`` vs. anything else) and a logistic regression with one
intercept per time point and shared covariate effects is fitted by Newton's
method. The ``M`` problems are independent.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import ExpandedDataset, SurvivalDataset, event_table, expand, regroup_hint, validate_counts
from .errors import EstimabilityError
from .model import ModelParams, logit
from .optim import GRAD_TOL, MAX_ITER, PenaltySpec, SmoothObjective, check_separation, proximal_newton_maximize
from .results import FittedModel

CHUNK_ROWS = 1 << 18


class CollapsedLikelihood(SmoothObjective):
    """log L_j over ``theta = (alpha_1..alpha_d, beta)``.

    Rows are processed in chunks so that no dense person-period design
    matrix is ever built; the intercept block of the Hessian is diagonal and
    is accumulated with ``bincount``.
    """

    def __init__(self, expanded: ExpandedDataset, j: int, chunk_rows: int = CHUNK_ROWS):
        ds = expanded.source
        self.d, self.p = ds.d, ds.p
        super().__init__(self.d + self.p)
        self.Z = ds.Z
        self.n = ds.n
        self.t = expanded.t - 1
        self.subject = expanded.subject
        self.y = expanded.response(j)
        self.chunks = [slice(a, min(a + chunk_rows, len(self.t))) for a in range(0, len(self.t), chunk_rows)]

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        alpha, beta = theta[:self.d], theta[self.d:]
        zb = self.Z @ beta
        total = 0.0
        for sl in self.chunks:
            eta = alpha[self.t[sl]] + zb[self.subject[sl]]
            total += float(self.y[sl] @ eta - np.logaddexp(0.0, eta).sum())
        return total

    def value_grad_hess(self, theta):
        theta = np.asarray(theta, dtype=float)
        d, p = self.d, self.p
        alpha, beta = theta[:d], theta[d:]
        zb = self.Z @ beta
        ll = 0.0
        g_alpha = np.zeros(d)
        h_alpha = np.zeros(d)
        h_cross = np.zeros((d, p))
        resid_subj = np.zeros(self.n)
        w_subj = np.zeros(self.n)
        for sl in self.chunks:
            t, subj, y = self.t[sl], self.subject[sl], self.y[sl]
            eta = alpha[t] + zb[subj]
            softplus = np.logaddexp(0.0, eta)
            ll += float(y @ eta - softplus.sum())
            mu = np.exp(eta - softplus)
            r = y - mu
            w = mu * (1.0 - mu)
            g_alpha += np.bincount(t, r, minlength=d)
            h_alpha += np.bincount(t, w, minlength=d)
            resid_subj += np.bincount(subj, r, minlength=self.n)
            w_subj += np.bincount(subj, w, minlength=self.n)
            Zrows = self.Z[subj]
            for k in range(p):
                h_cross[:, k] += np.bincount(t, w * Zrows[:, k], minlength=d)
        grad = np.concatenate([g_alpha, self.Z.T @ resid_subj])
        H = np.empty((d + p, d + p))
        H[:d, :d] = -np.diag(h_alpha)
        H[:d, d:] = -h_cross
        H[d:, :d] = -h_cross.T
        H[d:, d:] = -(self.Z.T * w_subj) @ self.Z
        return ll, grad, H


def _separation_guard(d, j):
    def check(theta):
        check_separation(theta[d:], None, None, f"event type {j}")
    return check


def check_estimable(ds: SurvivalDataset, min_events: int = 1) -> None:
    report = validate_counts(ds, min_events)
    if not report.ok:
        raise EstimabilityError(regroup_hint(report), cells=[(j, lab) for j, _, lab, _ in report.cells])
    if ds.p:
        spread = ds.Z.max(axis=0) - ds.Z.min(axis=0)
        if np.any(spread == 0):
            names = [ds.covariate_names[k] for k in np.flatnonzero(spread == 0)]
            raise EstimabilityError(f"constant covariate(s) {names} are collinear with the time intercepts")


def initial_alpha(ds: SurvivalDataset, j: int) -> np.ndarray:
    table = event_table(ds)
    return logit(np.maximum(table.events[:, j - 1], 0.5) / table.at_risk)


def fit_event(expanded: ExpandedDataset, j: int, penalty: PenaltySpec | None = None,
              tol=GRAD_TOL, max_iter=MAX_ITER):
    """Fit the collapsed model for one event type; returns the SolveReport."""
    ds = expanded.source
    obj = CollapsedLikelihood(expanded, j)
    init = np.concatenate([initial_alpha(ds, j), np.zeros(ds.p)])
    spec = (penalty or PenaltySpec()).padded(ds.d, ds.p)
    guard = _separation_guard(ds.d, j) if spec.is_zero else None
    report = proximal_newton_maximize(obj, spec, init, tol=tol, max_iter=max_iter, callback=guard)
    report.raise_if_failed(f"expansion fit for event type {j}")
    if spec.is_zero and ds.p:
        d = ds.d
        check_separation(report.x[d:], np.diag(report.covariance)[d:], ds.Z.std(axis=0), f"event type {j}")
    return report


def fit(ds: SurvivalDataset, penalty: PenaltySpec | None = None, min_events: int = 1,
        n_jobs: int = 1, tol=GRAD_TOL, max_iter=MAX_ITER) -> FittedModel:
    """Fit all event types on the person-period expansion of ``ds``.

    The penalty, if any, applies to the covariate coefficients only.
    Standard errors come from the inverse observed information (of the
    penalized objective when a ridge term is present).
    """
    start = time.perf_counter()
    check_estimable(ds, min_events)
    expanded = expand(ds)
    events = range(1, ds.M + 1)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            reports = list(pool.map(lambda j: fit_event(expanded, j, penalty, tol, max_iter), events))
    else:
        reports = [fit_event(expanded, j, penalty, tol, max_iter) for j in events]
    d = ds.d
    theta = np.vstack([r.x for r in reports])
    se = np.vstack([np.sqrt(np.clip(np.diag(r.covariance), 0.0, None)) for r in reports])
    return FittedModel(
        params=ModelParams(theta[:, :d], theta[:, d:]),
        beta_se=se[:, d:],
        alpha_se=se[:, :d],
        grid=ds.grid,
        covariate_names=ds.covariate_names,
        method="expansion",
        loglik=[r.value for r in reports],
        iterations=[r.iterations for r in reports],
        converged=[r.converged for r in reports],
        penalty=None if penalty is None else {"penalizer": penalty.penalizer, "l1_ratio": penalty.l1_ratio},
        seconds=time.perf_counter() - start,
    )


def loglik_j(ds: SurvivalDataset, j: int, alpha, beta) -> float:
    """log L_j at the given parameters (convenience for checks)."""
    return CollapsedLikelihood(expand(ds), j).value(np.concatenate([alpha, beta]))
