"""Discrete-time cause-specific hazard model with a logit link.

For event type ``j`` at discrete time ``t`` the hazard is

    lambda_j(t | z) = expit(alpha[j, t] + z @ beta[j])

and all other quantities (overall survival, event probabilities, cumulative
incidence) follow from the hazards by products and partial sums.

Event types and time points are 1-based in the scalar API (``j`` in 1..M,
``t`` in 1..d) to match the event codes of the data; returned vectors are
ordinary 0-based arrays whose entry ``k`` refers to time ``k + 1`` (the
survival vector additionally carries ``S(0) = 1`` at entry 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit as _expit

from .errors import AdmissibilityError

# largest double below one; hazards are kept strictly inside (0, 1)
_ONE_MINUS = np.nextafter(1.0, 0.0)
_TINY = np.finfo(float).tiny


def expit(x):
    """Logistic function that never overflows and never returns exactly 0 or 1."""
    return np.clip(_expit(x), _TINY, _ONE_MINUS)


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class TimeGrid:
    """Display labels for the ``d`` discrete time points.

    Internally time is always indexed ``1..d``; labels only matter for
    reporting (``"21+"``, ``"6-7"`` after regrouping).
    """

    labels: tuple

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.labels)
        if len(labels) < 1:
            raise ValueError("a time grid needs at least one point")
        if len(set(labels)) != len(labels):
            raise ValueError(f"time labels must be distinct: {labels}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def range(cls, d: int) -> "TimeGrid":
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        return cls(tuple(str(t) for t in range(1, d + 1)))

    @property
    def d(self) -> int:
        return len(self.labels)

    def label(self, t: int) -> str:
        return self.labels[t - 1]

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class ModelParams:
    """Intercepts ``alpha`` (M x d) and coefficients ``beta`` (M x p)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float, ndmin=2)
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 1:
            beta = beta.reshape(alpha.shape[0], beta.size // max(alpha.shape[0], 1))
        if beta.ndim != 2 or beta.shape[0] != alpha.shape[0]:
            raise ValueError(
                f"beta must have one row per event type; got alpha {alpha.shape}, beta {beta.shape}"
            )
        if alpha.shape[1] < 1:
            raise ValueError("alpha needs at least one time point")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("model parameters must be finite")
        alpha.setflags(write=False)
        beta = beta.copy()
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def M(self) -> int:
        return self.alpha.shape[0]

    @property
    def d(self) -> int:
        return self.alpha.shape[1]

    @property
    def p(self) -> int:
        return self.beta.shape[1]


def _check_index(name, value, upper):
    if not (1 <= value <= upper) or int(value) != value:
        raise ValueError(f"{name}={value} out of range 1..{upper}")


def _as_covariates(params: ModelParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.shape[-1] != params.p and not (params.p == 0 and z.size == 0):
        raise ValueError(f"covariate length {z.shape[-1]} does not match p={params.p}")
    if not np.all(np.isfinite(z)):
        raise ValueError("covariates must be finite")
    return z


def hazard(params: ModelParams, j: int, t: int, z) -> float:
    """lambda_j(t | z) for a single event type and time."""
    _check_index("j", j, params.M)
    _check_index("t", t, params.d)
    z = _as_covariates(params, z).reshape(params.p)
    return float(expit(params.alpha[j - 1, t - 1] + z @ params.beta[j - 1]))


def hazards(params: ModelParams, Z) -> np.ndarray:
    """All hazards for a batch of covariate rows, shape (n, M, d)."""
    Z = _as_covariates(params, Z)
    Z = Z.reshape(1 if Z.ndim == 1 else len(Z), params.p)
    eta = (Z @ params.beta.T)[:, :, None] + params.alpha[None, :, :]
    return expit(eta)


class Curves(NamedTuple):
    """Batched prediction arrays.

    hazard, event_prob, cif have shape (n, M, d); survival has shape
    (n, d + 1) with ``survival[:, 0] == 1``.
    """

    hazard: np.ndarray
    event_prob: np.ndarray
    cif: np.ndarray
    survival: np.ndarray


def curves(params: ModelParams, Z) -> Curves:
    """Evaluate every derived quantity for each row of ``Z``.

    Raises AdmissibilityError (naming the first offending time) if the
    summed hazards reach one for any row.
    """
    lam = hazards(params, Z)
    total = lam.sum(axis=1)  # (n, d)
    bad = total >= 1.0
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise AdmissibilityError(int(col) + 1, float(total[row, col]))
    n, d = total.shape
    surv = np.ones((n, d + 1))
    surv[:, 1:] = np.cumprod(1.0 - total, axis=1)
    prob = lam * surv[:, None, :-1]
    return Curves(lam, prob, np.cumsum(prob, axis=2), surv)


def overall_survival(params: ModelParams, z) -> np.ndarray:
    """S(t | z) for t = 0..d."""
    return curves(params, _single(params, z)).survival[0]


def event_probability(params: ModelParams, j: int, z) -> np.ndarray:
    """Pr(T = t, J = j | z) for t = 1..d."""
    _check_index("j", j, params.M)
    return curves(params, _single(params, z)).event_prob[0, j - 1]


def cif(params: ModelParams, j: int, z) -> np.ndarray:
    """Cumulative incidence F_j(t | z) for t = 1..d."""
    _check_index("j", j, params.M)
    return curves(params, _single(params, z)).cif[0, j - 1]


def marginal_event_probability(params: ModelParams, j: int, z) -> float:
    """Pr(J = j | z), i.e. F_j(d | z)."""
    return float(cif(params, j, z)[-1])


def _single(params, z):
    z = _as_covariates(params, z)
    if z.ndim != 1:
        raise ValueError("expected a single covariate vector")
    return z.reshape(1, params.p)


def predict_curves(fitted, newdata, labels: Sequence | None = None):
    """Long-format prediction table, one row per (observation, time).

    ``fitted`` is anything with a ``params`` attribute (a FittedModel) or a
    bare ModelParams. ``newdata`` is an (n, p) array or a DataFrame holding
    the fitted covariate columns. Columns: ``obs`` (input position), ``t``,
    ``label``, then ``hazard_j``, ``prob_j``, ``cif_j`` for each event type
    and ``survival`` (S(t)).
    """
    import pandas as pd

    params = getattr(fitted, "params", fitted)
    if isinstance(newdata, pd.DataFrame):
        names = getattr(fitted, "covariate_names", None)
        newdata = newdata[list(names)] if names else newdata
        newdata = newdata.to_numpy(dtype=float)
    Z = np.asarray(newdata, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    if Z.shape[1] != params.p:
        raise ValueError(f"newdata has {Z.shape[1]} covariates, model expects {params.p}")
    if labels is None:
        grid = getattr(fitted, "grid", None)
        labels = grid.labels if grid is not None else TimeGrid.range(params.d).labels
    c = curves(params, Z)
    n, d = Z.shape[0], params.d
    out = {
        "obs": np.repeat(np.arange(n), d),
        "t": np.tile(np.arange(1, d + 1), n),
        "label": np.tile(np.asarray(labels, dtype=object), n),
    }
    for j in range(params.M):
        out[f"hazard_{j + 1}"] = c.hazard[:, j, :].ravel()
        out[f"prob_{j + 1}"] = c.event_prob[:, j, :].ravel()
        out[f"cif_{j + 1}"] = c.cif[:, j, :].ravel()
    out["survival"] = c.survival[:, 1:].ravel()
    return pd.DataFrame(out)
