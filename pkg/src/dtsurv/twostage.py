"""Two-step estimator.

Step 1 estimates each ``beta_j`` from a partial likelihood stratified on
time, which eliminates the intercepts: stratum ``t`` contains the risk set
``{i: X_i >= t}`` and the type-``j`` events at ``t``. Step 2 then recovers
every ``alpha_jt`` separately from the original data by matching the
expected and observed event proportions at ``t``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import SurvivalDataset, event_table, regroup_hint, validate_counts
from .errors import EstimabilityError
from .model import ModelParams
from .optim import (
    GRAD_TOL, MAX_ITER, PenaltySpec, SmoothObjective, check_separation, monotone_root, proximal_newton_maximize,
)
from .results import FittedModel

ALPHA_TOL = 1e-12
TIES = ("efron", "breslow")


class StratifiedPartialLikelihood(SmoothObjective):
    """Partial log-likelihood of ``beta_j`` with one stratum per time point.

    Risk-set sums are reverse cumulative sums over subjects binned by
    observed time, so an evaluation costs O(n p^2) however large ``d`` is.
    ``ties`` selects the Efron (default) or Breslow treatment of the tied
    events inside each stratum. Every stratum is heavily tied; Breslow
    noticeably attenuates the coefficients once hazards are not small.
    """

    def __init__(self, ds: SurvivalDataset, j: int, ties: str = "efron"):
        if ties not in TIES:
            raise ValueError(f"ties must be one of {TIES}")
        super().__init__(ds.p)
        self.ties = ties
        self.d = ds.d
        x = np.minimum(ds.x, ds.d)
        order = np.argsort(x, kind="stable")
        self.Z = ds.Z[order]
        xs = x[order]
        # start offset of every time bin 1..d in the sorted arrays
        self.bounds = np.searchsorted(xs, np.arange(1, ds.d + 2))
        is_event = (ds.j[order] == j) & (ds.x[order] <= ds.d)
        self.event_idx = np.flatnonzero(is_event)
        self.n_events = np.bincount(xs[is_event], minlength=ds.d + 1)[1:].astype(float)
        self.event_bin = xs[is_event] - 1
        self.strata = np.flatnonzero(self.n_events > 0)
        self.event_sum = self.Z[is_event].sum(axis=0)
        # rank of each event among the ties of its stratum, divided by the tie count
        self._event_starts = np.searchsorted(self.event_bin, self.strata)
        rank = np.arange(len(self.event_bin)) - np.repeat(self._event_starts, self.n_events[self.strata].astype(int))
        self._tie_fraction = rank / self.n_events[self.event_bin]

    def _bin_sums(self, values):
        """Per-bin sums for bins 1..d, then reverse cumulative (risk sets)."""
        padded = np.concatenate([values, np.zeros((1,) + values.shape[1:])])
        per_bin = np.add.reduceat(padded, self.bounds[:-1], axis=0)
        empty = self.bounds[1:] == self.bounds[:-1]
        per_bin[empty] = 0.0
        return per_bin[::-1].cumsum(axis=0)[::-1]

    def _sums(self, beta, order):
        eta = self.Z @ beta
        shift = float(eta.max())
        e = np.exp(eta - shift)
        s0 = self._bin_sums(e)
        s1 = self._bin_sums(e[:, None] * self.Z) if order >= 1 else None
        s2 = None
        if order >= 2:
            outer = (e[:, None] * self.Z)[:, :, None] * self.Z[:, None, :]
            s2 = self._bin_sums(outer)
        return eta, shift, e, s0, s1, s2

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        return self._evaluate(beta, 0)[0]

    def value_grad_hess(self, beta):
        return self._evaluate(np.asarray(beta, dtype=float), 2)

    def _evaluate(self, beta, order):
        eta, shift, e, s0, s1, s2 = self._sums(beta, order)
        st = self.strata
        nt = self.n_events[st]
        ll = float(eta[self.event_idx].sum())
        p = self.dim
        grad = hess = None
        if self.ties == "breslow":
            ll -= float(nt @ (np.log(s0[st]) + shift))
            if order:
                mean = s1[st] / s0[st][:, None]
                grad = self.event_sum - nt @ mean
                second = s2[st] / s0[st][:, None, None] - mean[:, :, None] * mean[:, None, :]
                hess = -np.tensordot(nt, second, axes=1)
            return ll, grad, hess

        # Efron: the l-th of D tied events sees the risk set minus l/D of the tied mass.
        # Events are already sorted by time, so per-stratum sums are reduceat slices.
        ee = e[self.event_idx]
        frac, tie_bin = self._tie_fraction, self.event_bin
        d0 = np.bincount(tie_bin, ee, minlength=self.d)
        den = s0[tie_bin] - frac * d0[tie_bin]
        ll -= float(np.log(den).sum() + len(den) * shift)
        if order:
            ze = self.Z[self.event_idx]
            starts = self._event_starts
            d1 = np.zeros((self.d, p))
            d1[st] = np.add.reduceat(ee[:, None] * ze, starts, axis=0)
            d2 = np.zeros((self.d, p, p))
            d2[st] = np.add.reduceat((ee[:, None] * ze)[:, :, None] * ze[:, None, :], starts, axis=0)
            inv = 1.0 / den
            a = np.bincount(tie_bin, inv, minlength=self.d)
            b = np.bincount(tie_bin, frac * inv, minlength=self.d)
            mean = (s1[tie_bin] - frac[:, None] * d1[tie_bin]) * inv[:, None]
            grad = self.event_sum - mean.sum(axis=0)
            hess = -(np.tensordot(a, s2, axes=1) - np.tensordot(b, d2, axes=1)) + mean.T @ mean
        return ll, grad, hess


def _check_strata(ds: SurvivalDataset, j: int):
    table = event_table(ds)
    n_tj = table.events[:, j - 1]
    bad = np.flatnonzero((n_tj > 0) & (table.at_risk <= n_tj))
    if len(bad):
        cells = [(j, ds.grid.label(t + 1)) for t in bad]
        raise EstimabilityError(
            f"event type {j}: every subject at risk has the event at time(s) "
            f"{[c[1] for c in cells]}; these strata carry no information",
            cells=cells,
        )


def fit_beta(ds: SurvivalDataset, j: int, penalty: PenaltySpec | None = None,
             ties: str = "efron", tol=GRAD_TOL, max_iter=MAX_ITER):
    """Step 1 for event type ``j``.

    Returns ``(beta, covariance, report)``; the covariance is the inverse
    observed information of the (penalized) partial likelihood.
    """
    _check_strata(ds, j)
    obj = StratifiedPartialLikelihood(ds, j, ties)
    if len(obj.strata) == 0:
        raise EstimabilityError(f"event type {j} has no events", cells=[(j, lab) for lab in ds.grid.labels])
    spec = penalty or PenaltySpec()
    what = f"event type {j}"
    guard = (lambda beta: check_separation(beta, None, None, what)) if spec.is_zero else None
    report = proximal_newton_maximize(obj, spec.padded(0, ds.p), np.zeros(ds.p), tol=tol,
                                      max_iter=max_iter, callback=guard)
    report.raise_if_failed(f"two-stage beta fit for {what}")
    if spec.is_zero:
        check_separation(report.x, np.diag(report.covariance), ds.Z.std(axis=0), what)
    return report.x, report.covariance, report


def fit_alpha(ds: SurvivalDataset, j: int, beta_j, tol=ALPHA_TOL) -> np.ndarray:
    """Step 2 for event type ``j``: one intercept per time point.

    For each ``t`` solves ``mean_{i: X_i >= t} expit(a + Z_i beta_j) = n_tj / y_t``.
    The left side increases strictly in ``a``, so its root is the unique
    minimizer of the squared gap between expected and observed proportions.
    """
    beta_j = np.asarray(beta_j, dtype=float)
    if not np.all(np.isfinite(beta_j)):
        raise ValueError("beta must be finite")
    table = event_table(ds)
    y, n_tj = table.at_risk, table.events[:, j - 1]
    bad = [t for t in range(ds.d) if y[t] == 0 or n_tj[t] == 0 or n_tj[t] == y[t]]
    if bad:
        cells = [(j, ds.grid.label(t + 1)) for t in bad]
        raise EstimabilityError(
            f"event type {j}: observed proportion is 0 or 1 at time(s) {[c[1] for c in cells]}; "
            "regroup these times before fitting",
            cells=cells,
        )
    x = np.minimum(ds.x, ds.d)
    order = np.argsort(-x, kind="stable")
    zb_sorted = (ds.Z @ beta_j)[order]
    alpha = np.empty(ds.d)
    for t in range(ds.d):
        risk = zb_sorted[: int(y[t])]          # subjects with x >= t + 1 come first
        target = n_tj[t] / y[t]

        def resid(a, risk=risk, target=target):
            return float(np.mean(_expit(a + risk))) - target

        def slope(a, risk=risk):
            mu = _expit(a + risk)
            return float(np.mean(mu * (1.0 - mu)))

        start = np.log(target) - np.log1p(-target) - float(np.mean(risk))
        alpha[t] = monotone_root(resid, start - 1.0, start + 1.0, tol=tol, xtol=1e-14, fprime=slope)
    return alpha


def _expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def fit(ds: SurvivalDataset, penalty: PenaltySpec | None = None, min_events: int = 1,
        ties: str = "efron", n_jobs: int = 1, tol=GRAD_TOL, max_iter=MAX_ITER) -> FittedModel:
    """Run Step 1 then Step 2 for every event type."""
    start = time.perf_counter()
    report = validate_counts(ds, min_events)
    if not report.ok:
        raise EstimabilityError(regroup_hint(report), cells=[(j, lab) for j, _, lab, _ in report.cells])
    events = range(1, ds.M + 1)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            step1 = list(pool.map(lambda j: fit_beta(ds, j, penalty, ties, tol, max_iter), events))
    else:
        step1 = [fit_beta(ds, j, penalty, ties, tol, max_iter) for j in events]
    beta = np.vstack([b for b, _, _ in step1]).reshape(ds.M, ds.p)
    alpha = np.vstack([fit_alpha(ds, j, beta[j - 1]) for j in events])
    se = np.vstack([np.sqrt(np.clip(np.diag(cov), 0.0, None)) for _, cov, _ in step1]).reshape(ds.M, ds.p)
    return FittedModel(
        params=ModelParams(alpha, beta),
        beta_se=se,
        alpha_se=None,
        grid=ds.grid,
        covariate_names=ds.covariate_names,
        method="two-stage",
        loglik=[r.value for _, _, r in step1],
        iterations=[r.iterations for _, _, r in step1],
        converged=[r.converged for _, _, r in step1],
        penalty=None if penalty is None else {"penalizer": penalty.penalizer, "l1_ratio": penalty.l1_ratio},
        seconds=time.perf_counter() - start,
    )


def get_beta_se(fitted: FittedModel):
    """Standard errors of the covariate coefficients (event x covariate)."""
    return fitted.get_beta_se()
