"""Numerical machinery: damped Newton ascent, elastic-net penalties with a
proximal Newton solver, safeguarded monotone root finding and a
finite-difference gradient check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, RootError, SeparationError

GRAD_TOL = 1e-8
MAX_ITER = 100
ROOT_TOL = 1e-9
ROOT_LIMIT = 50.0
SEPARATION_BOUND = 30.0
FLAT_BOUND = 1e3


class SmoothObjective:
    """A twice-differentiable function to be maximized.

    Subclasses override :meth:`value_grad_hess` when value, gradient and
    Hessian share work; the individual accessors then derive from it.
    """

    def __init__(self, dim, value=None, gradient=None, hessian=None):
        self.dim = int(dim)
        self._value, self._gradient, self._hessian = value, gradient, hessian

    def value(self, x) -> float:
        if self._value is not None:
            return float(self._value(x))
        return self.value_grad_hess(x)[0]

    def gradient(self, x) -> np.ndarray:
        if self._gradient is not None:
            return np.asarray(self._gradient(x), dtype=float)
        return self.value_grad_hess(x)[1]

    def hessian(self, x) -> np.ndarray:
        if self._hessian is not None:
            return np.asarray(self._hessian(x), dtype=float)
        return self.value_grad_hess(x)[2]

    def value_grad_hess(self, x):
        return self.value(x), self.gradient(x), self.hessian(x)


@dataclass
class SolveReport:
    x: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    covariance: np.ndarray | None
    value: float
    damped: bool = False
    message: str = ""

    def raise_if_failed(self, what="solver"):
        if not self.converged:
            raise ConvergenceError(
                f"{what} did not converge after {self.iterations} iterations "
                f"(gradient max-norm {self.grad_norm:.3g}): {self.message}",
                report=self,
            )
        return self


def _neg_hessian_factor(H):
    """Cholesky factor of -H, shifting towards the identity if needed."""
    A = -0.5 * (H + H.T)
    try:
        return linalg.cho_factor(A), False
    except linalg.LinAlgError:
        pass
    scale = max(1.0, float(np.abs(np.diag(A)).max(initial=0.0)))
    shift = 1e-8 * scale
    eye = np.eye(len(A))
    while True:
        try:
            return linalg.cho_factor(A + shift * eye), True
        except linalg.LinAlgError:
            shift *= 10.0


def _covariance(H):
    A = -0.5 * (H + H.T)
    try:
        return linalg.cho_solve(linalg.cho_factor(A), np.eye(len(A)))
    except linalg.LinAlgError:
        return np.linalg.pinv(A)


def _accept(new, old):
    # tolerate rounding-level decreases near the optimum
    return np.isfinite(new) and new >= old - 1e-12 * (1.0 + abs(old))


def newton_maximize(obj: SmoothObjective, init, tol=GRAD_TOL, max_iter=MAX_ITER,
                    callback: Callable | None = None) -> SolveReport:
    """Maximize ``obj`` by Newton steps with step halving.

    Stops when the gradient max-norm drops to ``tol``. A Hessian that is not
    negative definite is shifted towards ``-I`` (recorded as ``damped``).
    ``callback(x)`` runs after every accepted step and may raise to abort.
    """
    x = np.array(init, dtype=float)
    f, g, H = obj.value_grad_hess(x)
    if not (np.isfinite(f) and np.all(np.isfinite(x))):
        raise ValueError("objective is not finite at the initial point")
    damped = False
    message = ""
    it = 0
    while it < max_iter:
        if np.max(np.abs(g), initial=0.0) <= tol:
            break
        factor, shifted = _neg_hessian_factor(H)
        damped |= shifted
        step = linalg.cho_solve(factor, g)
        t = 1.0
        for _ in range(60):
            x_new = x + t * step
            f_new = obj.value(x_new)
            if _accept(f_new, f):
                break
            t *= 0.5
        else:
            message = "line search failed"
            break
        it += 1
        x = x_new
        f, g, H = obj.value_grad_hess(x)
        if callback is not None:
            callback(x)
    gnorm = float(np.max(np.abs(g), initial=0.0))
    converged = gnorm <= tol
    if not converged and not message:
        message = "iteration limit reached"
    return SolveReport(x, converged, it, gnorm, _covariance(H), float(f), damped, message)


@dataclass(frozen=True)
class PenaltySpec:
    """Elastic-net penalty ``w * ((1 - l1_ratio)/2 * b**2 + l1_ratio * |b|)``.

    ``penalizer`` is a scalar or one non-negative weight per coefficient.
    """

    penalizer: float | tuple = 0.0
    l1_ratio: float = 0.0

    def __post_init__(self):
        pen = np.asarray(self.penalizer, dtype=float)
        if pen.ndim > 1 or np.any(pen < 0) or not np.all(np.isfinite(pen)):
            raise ValueError("penalizer must be a non-negative scalar or vector")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ValueError("l1_ratio must lie in [0, 1]")
        object.__setattr__(self, "penalizer", float(pen) if pen.ndim == 0 else tuple(pen.tolist()))

    def weights(self, dim: int) -> np.ndarray:
        pen = np.asarray(self.penalizer, dtype=float)
        if pen.ndim == 0:
            return np.full(dim, float(pen))
        if len(pen) != dim:
            raise ValueError(f"penalizer has {len(pen)} weights for {dim} coefficients")
        return pen.copy()

    @property
    def is_zero(self) -> bool:
        return not np.any(np.asarray(self.penalizer) > 0)

    def padded(self, leading: int, dim: int) -> "PenaltySpec":
        """Spec over ``leading`` unpenalized coordinates followed by ``dim`` penalized ones."""
        return PenaltySpec(tuple(np.r_[np.zeros(leading), self.weights(dim)]), self.l1_ratio)


def penalty_value(spec: PenaltySpec, beta) -> float:
    beta = np.asarray(beta, dtype=float)
    w = spec.weights(beta.size)
    r = spec.l1_ratio
    return float(np.sum(w * (0.5 * (1.0 - r) * beta**2 + r * np.abs(beta))))


def penalty_subgradient(spec: PenaltySpec, beta) -> np.ndarray:
    """Gradient of the penalty, taking ``sign(0) = 0`` for the l1 part."""
    beta = np.asarray(beta, dtype=float)
    w = spec.weights(beta.size)
    r = spec.l1_ratio
    return w * ((1.0 - r) * beta + r * np.sign(beta))


class _RidgePenalized(SmoothObjective):
    def __init__(self, obj, w2):
        super().__init__(obj.dim)
        self.obj, self.w2 = obj, w2

    def value(self, x):
        return self.obj.value(x) - 0.5 * float(np.sum(self.w2 * x * x))

    def value_grad_hess(self, x):
        f, g, H = self.obj.value_grad_hess(x)
        return (f - 0.5 * float(np.sum(self.w2 * x * x)), g - self.w2 * x,
                H - np.diag(self.w2))


def _soft(v, a):
    return np.sign(v) * np.maximum(np.abs(v) - a, 0.0)


def _prox_optimality(g, x, l1):
    """Max-norm of the minimum-norm subgradient of the penalized objective."""
    r = np.where(x != 0, g - l1 * np.sign(x), _soft(g, l1))
    return float(np.max(np.abs(r), initial=0.0))


def _cd_quadratic(A, b, l1, l2, u, sweeps=2000, tol=1e-15):
    """Maximize ``-u'Au/2 + b'u - sum(l2 u^2/2 + l1 |u|)`` by cyclic coordinate descent."""
    u = u.copy()
    diag = np.diag(A) + l2
    for _ in range(sweeps):
        biggest = 0.0
        for k in range(len(u)):
            old = u[k]
            r = b[k] - A[k] @ u + A[k, k] * old
            new = _soft(r, l1[k]) / diag[k]
            if new != old:
                u[k] = new
                biggest = max(biggest, abs(new - old))
        if biggest <= tol * (1.0 + np.max(np.abs(u), initial=0.0)):
            break
    return u


def proximal_newton_maximize(obj: SmoothObjective, spec: PenaltySpec, init,
                             tol=GRAD_TOL, max_iter=MAX_ITER,
                             callback: Callable | None = None) -> SolveReport:
    """Maximize ``obj(x) - penalty(x)``.

    Without an l1 component the problem is smooth and is handed to
    :func:`newton_maximize`. Otherwise every outer step maximizes the local
    quadratic model minus the penalty by coordinate descent with
    soft-thresholding, followed by step halving on the true objective.
    """
    w = spec.weights(obj.dim)
    l1 = w * spec.l1_ratio
    l2 = w * (1.0 - spec.l1_ratio)
    smooth = obj if not np.any(l2 > 0) else _RidgePenalized(obj, l2)
    if not np.any(l1 > 0):
        return newton_maximize(smooth, init, tol=tol, max_iter=max_iter, callback=callback)

    def total(x, f):
        return f - float(np.sum(l1 * np.abs(x)))

    x = np.array(init, dtype=float)
    f, g, H = smooth.value_grad_hess(x)
    if not (np.isfinite(f) and np.all(np.isfinite(x))):
        raise ValueError("objective is not finite at the initial point")
    F = total(x, f)
    damped = False
    message = ""
    it = 0
    while it < max_iter:
        if _prox_optimality(g, x, l1) <= tol:
            break
        A = -0.5 * (H + H.T)
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            damped = True
            A = A + (1e-8 * max(1.0, np.abs(np.diag(A)).max()) - min(0.0, np.linalg.eigvalsh(A).min())) * np.eye(len(A))
        u = _cd_quadratic(A, g + A @ x, l1, np.zeros_like(l1), x)
        step = u - x
        t = 1.0
        for _ in range(60):
            x_new = x + t * step
            f_new = smooth.value(x_new)
            F_new = total(x_new, f_new)
            if _accept(F_new, F):
                break
            t *= 0.5
        else:
            message = "line search failed"
            break
        it += 1
        if np.array_equal(x_new, x):
            message = "step underflow"
            break
        x = x_new
        f, g, H = smooth.value_grad_hess(x)
        F = total(x, f)
        if callback is not None:
            callback(x)
    opt = _prox_optimality(g, x, l1)
    converged = opt <= tol
    if converged:
        message = ""
    elif not message:
        message = "iteration limit reached"
    return SolveReport(x, converged, it, opt, _covariance(H), F, damped, message)


def check_separation(beta, variance, spread, what="model"):
    """Raise SeparationError for diverging or unidentified coefficients.

    ``beta`` beyond +-SEPARATION_BOUND means the iterates are running off to
    infinity. A standard error that is huge relative to the covariate's
    spread catches the case where the gradient has already flattened below
    the tolerance on the way there.
    """
    beta = np.asarray(beta, dtype=float)
    if np.any(np.abs(beta) > SEPARATION_BOUND):
        k = int(np.argmax(np.abs(beta)))
        raise SeparationError(
            f"{what}: coefficient {k + 1} reached {beta[k]:.3g}; "
            "the data appear (quasi-)completely separated"
        )
    if variance is not None:
        flat = np.sqrt(np.clip(variance, 0.0, None)) * np.asarray(spread, dtype=float)
        if np.any(flat > FLAT_BOUND):
            k = int(np.argmax(flat))
            raise SeparationError(
                f"{what}: coefficient {k + 1} is not identified (estimate {beta[k]:.3g}, "
                "likelihood flat along it); the data appear (quasi-)completely separated"
            )


def monotone_root(f: Callable[[float], float], lo=-1.0, hi=1.0, tol=ROOT_TOL,
                  xtol=None, fprime: Callable[[float], float] | None = None,
                  limit=ROOT_LIMIT, max_iter=200) -> float:
    """Root of a non-decreasing function by safeguarded bisection.

    The bracket ``[lo, hi]`` is widened (doubling, capped at ``+-limit``)
    until ``f(lo) <= 0 <= f(hi)``. Each iteration tries a Newton step (when
    ``fprime`` is given) or a secant step and falls back to the midpoint
    whenever that step leaves the bracket or fails to shrink it enough.
    Returns as soon as ``|f(a)| <= tol``, or when the bracket is narrower
    than ``xtol`` (by default only once it can no longer be split in floating
    point).
    """
    xtol = 0.0 if xtol is None else xtol
    lo, hi = float(min(lo, hi)), float(max(lo, hi))
    f_lo, f_hi = f(lo), f(hi)
    width = max(hi - lo, 1.0)
    while f_lo > 0 and lo > -limit:
        lo = max(lo - width, -limit)
        width *= 2
        f_lo = f(lo)
    width = max(hi - lo, 1.0)
    while f_hi < 0 and hi < limit:
        hi = min(hi + width, limit)
        width *= 2
        f_hi = f(hi)
    if f_lo > 0 or f_hi < 0:
        raise RootError(
            f"no sign change within [{lo:g}, {hi:g}]: f(lo)={f_lo:.6g}, f(hi)={f_hi:.6g}"
        )
    if abs(f_lo) <= tol:
        return lo
    if abs(f_hi) <= tol:
        return hi

    a = lo if abs(f_lo) < abs(f_hi) else hi
    fa = f_lo if a == lo else f_hi
    bisect = False
    for _ in range(max_iter):
        cand = np.nan
        if not bisect:
            slope = fprime(a) if fprime is not None else (f_hi - f_lo) / (hi - lo)
            if slope > 0:
                cand = a - fa / slope
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
            if not (lo < cand < hi):  # adjacent doubles
                break
        fc = f(cand)
        if abs(fc) <= tol:
            return float(cand)
        if fc < 0:
            lo, f_lo = cand, fc
        else:
            hi, f_hi = cand, fc
        # fall back to bisection after a step that did not halve the residual
        bisect = abs(fc) > 0.5 * abs(fa)
        a, fa = cand, fc
        if hi - lo <= xtol:
            break
    return float(lo if abs(f_lo) <= abs(f_hi) else hi)


def finite_difference_check(obj: SmoothObjective, point, h=1e-5) -> float:
    """Largest relative gap between the analytic and central-difference gradient.

    Relative errors use ``max(|analytic|, |numeric|, 1)`` as denominator so
    that near-zero components do not blow up.
    """
    x = np.asarray(point, dtype=float)
    g = obj.gradient(x)
    worst = 0.0
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        num = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
        worst = max(worst, abs(g[k] - num) / max(abs(g[k]), abs(num), 1.0))
    return worst
