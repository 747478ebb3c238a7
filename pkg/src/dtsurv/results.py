"""Fitted-model container, coefficient tables and JSON persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtr

from .model import ModelParams, TimeGrid, predict_curves


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Parameters plus standard errors and fit diagnostics.

    ``alpha_se`` is ``None`` for the two-stage method, which has no analytic
    intercept standard errors. Per-event-type lists (``loglik``,
    ``iterations``, ``converged``) are indexed by ``j - 1``.
    """

    params: ModelParams
    beta_se: np.ndarray
    alpha_se: np.ndarray | None
    grid: TimeGrid
    covariate_names: tuple
    method: str
    loglik: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    penalty: dict | None = None
    seconds: float | None = None

    @property
    def M(self):
        return self.params.M

    @property
    def d(self):
        return self.params.d

    @property
    def p(self):
        return self.params.p

    def get_beta_se(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.beta_se,
            index=pd.Index(range(1, self.M + 1), name="event"),
            columns=list(self.covariate_names),
        )

    def summary(self) -> pd.DataFrame:
        return summary(self)

    def predict(self, newdata) -> pd.DataFrame:
        return predict_curves(self, newdata)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "M": self.M,
            "d": self.d,
            "p": self.p,
            "labels": list(self.grid.labels),
            "covariate_names": list(self.covariate_names),
            "alpha": self.params.alpha.tolist(),
            "beta": self.params.beta.tolist(),
            "alpha_se": None if self.alpha_se is None else np.asarray(self.alpha_se).tolist(),
            "beta_se": np.asarray(self.beta_se).tolist(),
            "loglik": [float(v) for v in self.loglik],
            "iterations": [int(v) for v in self.iterations],
            "converged": [bool(v) for v in self.converged],
            "penalty": self.penalty,
            "seconds": self.seconds,
        }

    def to_json(self) -> str:
        # json writes floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        doc = json.loads(text)
        M, p = int(doc["M"]), int(doc["p"])
        params = ModelParams(np.array(doc["alpha"], dtype=float),
                             np.array(doc["beta"], dtype=float).reshape(M, p))
        alpha_se = doc.get("alpha_se")
        return cls(
            params=params,
            beta_se=np.array(doc["beta_se"], dtype=float).reshape(M, p),
            alpha_se=None if alpha_se is None else np.array(alpha_se, dtype=float),
            grid=TimeGrid(tuple(doc["labels"])),
            covariate_names=tuple(doc["covariate_names"]),
            method=doc["method"],
            loglik=list(doc.get("loglik", [])),
            iterations=list(doc.get("iterations", [])),
            converged=list(doc.get("converged", [])),
            penalty=doc.get("penalty"),
            seconds=doc.get("seconds"),
        )


def summary(fitted: FittedModel) -> pd.DataFrame:
    """Coefficient table with Wald z statistics and two-sided p-values.

    Columns: event, parameter, estimate, se, z, p. Intercept rows are named
    ``alpha_<time label>``; missing standard errors are NaN.
    """
    rows = []
    for j in range(fitted.M):
        for t, lab in enumerate(fitted.grid.labels):
            se = np.nan if fitted.alpha_se is None else fitted.alpha_se[j, t]
            rows.append((j + 1, f"alpha_{lab}", fitted.params.alpha[j, t], se))
        for k, name in enumerate(fitted.covariate_names):
            rows.append((j + 1, name, fitted.params.beta[j, k], fitted.beta_se[j, k]))
    table = pd.DataFrame(rows, columns=["event", "parameter", "estimate", "se"])
    with np.errstate(divide="ignore", invalid="ignore"):
        table["z"] = table["estimate"] / table["se"]
    table["p"] = 2.0 * ndtr(-table["z"].abs())
    return table


def write_table(table: pd.DataFrame, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        table.to_csv(csv_path, index=False, float_format="%.17g")
    if json_path is not None:
        records = table.astype(object).where(table.notna(), None).to_dict(orient="records")
        with open(json_path, "w") as fh:
            json.dump(records, fh, indent=2)
