"""Synthetic competing-risks data under the logit hazard model.

Random stream layout
--------------------
All randomness comes from a Philox4x64 counter generator keyed by ``seed``.
Subject ``i`` owns a fixed block of ``K`` uniforms starting at draw
``i * K``, where ``K = p + d + 2`` rounded up to a multiple of 4 (one Philox
counter step yields four doubles). Inside a block the first ``p`` uniforms
feed the covariate rule, the next ``d`` drive the event walk over
``t = 1..d`` and the last two decide censoring. Any contiguous range of
subjects can therefore be generated on its own by advancing the counter by
``first * K / 4``; output does not depend on how subjects are chunked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .data import SurvivalDataset, clip_tail, from_arrays
from .errors import AdmissibilityError
from .model import ModelParams, curves, hazards

COVARIATE_RULES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "uniform": lambda u: u,
    "normal": lambda u: ndtri(np.clip(u, 1e-16, 1 - 1e-16)),
    "binary": lambda u: (u < 0.5).astype(float),
}

PAPER_BETA = (
    -np.log([0.8, 3, 3, 2.5, 2]),
    -np.log([1, 3, 4, 3, 2]),
)


@dataclass(frozen=True, eq=False)
class CoefficientSpec:
    """True generating coefficients: ``alpha`` (M x d) and ``beta`` (M x p)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        params = ModelParams(self.alpha, self.beta)  # validates shapes and finiteness
        object.__setattr__(self, "alpha", params.alpha)
        object.__setattr__(self, "beta", params.beta)

    @classmethod
    def from_rules(cls, alpha_rules, beta, d: int) -> "CoefficientSpec":
        t = np.arange(1, d + 1, dtype=float)
        alpha = np.vstack([np.broadcast_to(np.asarray(rule(t), dtype=float), (d,)) for rule in alpha_rules])
        return cls(alpha, np.atleast_2d(np.asarray(beta, dtype=float)))

    @classmethod
    def paper(cls, d: int = 30) -> "CoefficientSpec":
        """Two event types, five covariates, log-decaying intercepts."""
        return cls.from_rules(
            [lambda t: -1.0 - 0.3 * np.log(t), lambda t: -1.75 - 0.15 * np.log(t)],
            np.vstack(PAPER_BETA),
            d,
        )

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.alpha, self.beta)

    @property
    def M(self):
        return self.alpha.shape[0]

    @property
    def d(self):
        return self.alpha.shape[1]

    @property
    def p(self):
        return self.beta.shape[1]


@dataclass(frozen=True)
class CensoringSpec:
    """``uniform_discrete``: with probability ``censoring_prob`` draw
    ``C ~ Uniform{1, ..., d + 1}``, otherwise ``C = d + 1``.
    ``none``: ``C = d + 1`` always.
    """

    kind: str = "uniform_discrete"
    censoring_prob: float = 0.8

    def __post_init__(self):
        if self.kind not in ("uniform_discrete", "none"):
            raise ValueError(f"unknown censoring kind {self.kind!r}")
        if not 0.0 <= self.censoring_prob <= 1.0:
            raise ValueError("censoring_prob must lie in [0, 1]")


def _rule(covariate_rule):
    if callable(covariate_rule):
        return covariate_rule
    try:
        return COVARIATE_RULES[covariate_rule]
    except KeyError:
        raise ValueError(f"unknown covariate rule {covariate_rule!r}") from None


def _block_size(p, d):
    k = p + d + 2
    return k + (-k) % 4


def _uniforms(seed, first, count, K):
    bitgen = np.random.Philox(key=int(seed) % 2**64)
    bitgen.advance(first * K // 4)
    return np.random.Generator(bitgen).random((count, K))


def _simulate_block(U, spec: CoefficientSpec, censoring: CensoringSpec, rule):
    p, d = spec.p, spec.d
    Z = np.asarray(rule(U[:, :p]), dtype=float).reshape(len(U), p)
    lam = hazards(spec.params, Z)                # (n, M, d)
    cum = np.cumsum(lam, axis=1)                 # cumulative over event types
    total = cum[:, -1, :]
    if np.any(total >= 1.0):
        row, col = np.argwhere(total >= 1.0)[0]
        raise AdmissibilityError(int(col) + 1, float(total[row, col]))
    walk = U[:, p:p + d]
    hit = walk < total                           # event at t, given still at risk
    any_hit = hit.any(axis=1)
    T = np.where(any_hit, hit.argmax(axis=1) + 1, d + 1)
    rows = np.flatnonzero(any_hit)
    u_event = walk[rows, T[rows] - 1]
    J_event = np.zeros(len(U), dtype=np.int64)
    J_event[rows] = 1 + (u_event[:, None] >= cum[rows, :, T[rows] - 1]).sum(axis=1)
    if censoring.kind == "none":
        C = np.full(len(U), d + 1)
    else:
        draw = U[:, p + d] < censoring.censoring_prob
        C = np.where(draw, 1 + np.floor(U[:, p + d + 1] * (d + 1)).astype(np.int64), d + 1)
    X = np.minimum(T, C)
    J = np.where(any_hit & (T <= C), J_event, 0)
    return Z, X, J, T, C


def generate(n: int, spec: CoefficientSpec, censoring: CensoringSpec = CensoringSpec(),
             covariate_rule="uniform", seed: int = 0, chunk_size: int = 100_000,
             return_truth: bool = False):
    """Simulate ``n`` subjects.

    Each subject walks ``t = 1..d`` and at every step experiences event ``j``
    with probability ``lambda_j(t | Z)`` (or survives the step with the
    remaining probability); the observed time is ``min(T, C)``, with
    ``J = 0`` when censoring comes first or no event happens on the grid.
    With ``return_truth`` the latent ``(T, C)`` arrays are also returned
    (``T = d + 1`` stands for no event).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rule = _rule(covariate_rule)
    K = _block_size(spec.p, spec.d)
    chunk_size = max(4, int(chunk_size))
    parts = []
    for first in range(0, n, chunk_size):
        count = min(chunk_size, n - first)
        parts.append(_simulate_block(_uniforms(seed, first, count, K), spec, censoring, rule))
    Z, X, J, T, C = (np.concatenate(a) for a in zip(*parts))
    ds = from_arrays(X, J, Z, ids=np.arange(n), d=spec.d, M=spec.M)
    return (ds, T, C) if return_truth else ds


@dataclass(frozen=True)
class CellProbabilities:
    """Population-averaged quantities under a spec (no censoring).

    ``event_prob[j-1, t-1] = E_Z[Pr(T = t, J = j | Z)]``,
    ``at_risk[t-1] = E_Z[S(t - 1 | Z)]``, ``survival_end = E_Z[S(d | Z)]``.
    """

    event_prob: np.ndarray
    at_risk: np.ndarray
    survival_end: float

    @property
    def hazard(self) -> np.ndarray:
        """Expected per-cell event fraction n_tj / y_t."""
        return self.event_prob / self.at_risk[None, :]


def expected_cell_probabilities(spec: CoefficientSpec, covariate_rule="uniform",
                                mc_draws: int = 100_000, seed: int = 0) -> CellProbabilities:
    if mc_draws < 1:
        raise ValueError("mc_draws must be >= 1")
    rng = np.random.default_rng(seed)
    Z = np.asarray(_rule(covariate_rule)(rng.random((mc_draws, spec.p))), dtype=float)
    c = curves(spec.params, Z.reshape(mc_draws, spec.p))
    return CellProbabilities(
        c.event_prob.mean(axis=0), c.survival[:, :-1].mean(axis=0), float(c.survival[:, -1].mean())
    )


def weekend_scenario(n: int = 1000, seed: int = 0, weekend=(7, 14, 21), fraction: float = 0.9,
                     tail: int | None = 22, spec: CoefficientSpec | None = None,
                     censoring: CensoringSpec = CensoringSpec(), max_redraws: int = 1000) -> SurvivalDataset:
    """Length-of-stay style data with almost no type-1 events on weekend days.

    A ``fraction`` of the subjects whose observed event is type 1 on a
    weekend day are regenerated (fresh draws from the same model, repeated
    until the new outcome is not a weekend type-1 event). Times from
    ``tail`` on are pooled into one category so that only the weekend days
    are short of events.
    """
    spec = spec or CoefficientSpec.paper()
    ds = generate(n, spec, censoring, seed=seed)
    rng = np.random.default_rng([int(seed), 7])
    x, j, Z = ds.x.copy(), ds.j.copy(), ds.Z.copy()
    weekend = np.asarray(weekend)
    targets = np.flatnonzero((j == 1) & np.isin(x, weekend))
    chosen = targets[rng.random(len(targets)) < fraction]
    rule = _rule("uniform")
    K = _block_size(spec.p, spec.d)
    for i in chosen:
        for _ in range(max_redraws):
            Zi, Xi, Ji, _, _ = _simulate_block(rng.random((1, K)), spec, censoring, rule)
            if not (Ji[0] == 1 and Xi[0] in weekend):
                break
        else:
            raise RuntimeError("could not redraw a non-weekend outcome")
        x[i], j[i], Z[i] = Xi[0], Ji[0], Zi[0]
    ds = ds.replace(x=x, j=j, Z=Z)
    return ds if tail is None else clip_tail(ds, tail)


def spec_to_json(spec: CoefficientSpec, censoring: CensoringSpec = CensoringSpec(),
                 covariate_rule: str = "uniform", seed: int = 0) -> str:
    doc = {
        "M": spec.M,
        "d": spec.d,
        "alpha": {str(j + 1): spec.alpha[j].tolist() for j in range(spec.M)},
        "beta": {str(j + 1): spec.beta[j].tolist() for j in range(spec.M)},
        "censoring": {"kind": censoring.kind, "censoring_prob": censoring.censoring_prob},
        "covariate_rule": covariate_rule,
        "seed": int(seed),
    }
    return json.dumps(doc, indent=2)


def spec_from_json(text: str):
    """Inverse of :func:`spec_to_json`; returns ``(spec, censoring, rule, seed)``."""
    doc = json.loads(text)
    M, d = int(doc["M"]), int(doc["d"])
    alpha = np.array([doc["alpha"][str(j + 1)] for j in range(M)], dtype=float)
    beta = np.array([doc["beta"][str(j + 1)] for j in range(M)], dtype=float)
    if alpha.shape != (M, d):
        raise ValueError(f"alpha must be {M} x {d}, got {alpha.shape}")
    cens = doc.get("censoring", {})
    censoring = CensoringSpec(cens.get("kind", "uniform_discrete"), float(cens.get("censoring_prob", 0.8)))
    rule = doc.get("covariate_rule", "uniform")
    _rule(rule)
    return CoefficientSpec(alpha, beta.reshape(M, -1)), censoring, rule, int(doc.get("seed", 0))
