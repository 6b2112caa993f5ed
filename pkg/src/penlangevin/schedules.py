"""Penalty schedules: the decay alpha(t), its derivative, and beta(t).

A schedule bundles a non-increasing penalty factor alpha >= 0 with the
strong-convexity constant m it is paired with, and exposes
beta(t) = integral_0^t (m + alpha(s)) ds, the exponent of the contraction
term in the convergence bounds.  Carrying m here keeps one beta
abstraction for both the sampling bounds (which include m) and the
gradient-flow bounds (which are always built with m = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import _kernels


@dataclass(frozen=True)
class PenaltySchedule:
    """Immutable (alpha, alpha', m, beta) bundle; safe to share across threads."""

    tag: str
    m: float
    alpha: Callable[[np.ndarray], np.ndarray]
    alpha_prime: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    _beta_closed: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def beta(self, t):
        """beta(t) = int_0^t (m + alpha(s)) ds; closed form where the tag has one."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise ValueError("beta is defined for t >= 0")
        if self._beta_closed is not None:
            out = self._beta_closed(t_arr)
        else:
            out = _beta_quad(self, t_arr)
        return out if np.ndim(t) else float(out)

    def kernel_code(self) -> tuple[int, float, float] | None:
        """(code, p0, p1) consumed by the numba kernels; None for custom tags."""
        if self.tag == "zero":
            return (_kernels.SCHED_ZERO, 0.0, 0.0)
        if self.tag == "constant":
            return (_kernels.SCHED_CONSTANT, self.params["c"], 0.0)
        if self.tag == "pld_optimal":
            return (_kernels.SCHED_INV_LINEAR, self.params["A"], 0.0)
        if self.tag == "pgf_optimal":
            return (_kernels.SCHED_SHIFTED_INV, self.params["A"], self.params["q"])
        return None


def _beta_quad(sched: PenaltySchedule, t_arr: np.ndarray):
    def one(tv: float) -> float:
        if tv == 0.0:
            return 0.0
        val, _ = integrate.quad(lambda s: sched.m + sched.alpha(s), 0.0, tv,
                                epsabs=1e-10, epsrel=1e-10, limit=400)
        return val
    return np.vectorize(one)(t_arr)


def zero(m: float = 0.0) -> PenaltySchedule:
    """No penalty: alpha = 0, beta(t) = m t."""
    return PenaltySchedule(
        tag="zero", m=m,
        alpha=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        alpha_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        _beta_closed=lambda t: m * t)


def constant(c: float, m: float = 0.0) -> PenaltySchedule:
    """Fixed penalty alpha = c; beta(t) = (m + c) t."""
    if c < 0.0:
        raise ValueError("constant penalty must be nonnegative")
    return PenaltySchedule(
        tag="constant", m=m, params={"c": c},
        alpha=lambda t: np.full_like(np.asarray(t, dtype=float), c),
        alpha_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        _beta_closed=lambda t: (m + c) * t)


def pld_optimal(A: float, m: float = 0.0) -> PenaltySchedule:
    """alpha(t) = 1 / (A + 2t), the rate-optimal vanishing penalty.

    beta(t) = m t + log(1 + 2t/A) / 2 in closed form.  The balanced choice
    for a target with second moment mu2 is A = 121 mu2 (and A = 2 mu2 for
    the convenient simplified bound).
    """
    if A <= 0.0:
        raise ValueError("A must be positive")
    return PenaltySchedule(
        tag="pld_optimal", m=m, params={"A": A},
        alpha=lambda t: 1.0 / (A + 2.0 * np.asarray(t, dtype=float)),
        alpha_prime=lambda t: -2.0 / (A + 2.0 * np.asarray(t, dtype=float)) ** 2,
        _beta_closed=lambda t: m * t + 0.5 * np.log1p(2.0 * t / A))


def pgf_optimal(D: float, q: float) -> PenaltySchedule:
    """alpha(t) = (1-q) / (t + A) with A = D^(1/(1-q)) (1-q); m = 0.

    This balances the contraction and penalty-bias terms of the
    gradient-flow bound for a target satisfying the Hoelder minimizer
    condition with constants (D, q); beta(t) = (1-q) log(1 + t/A).
    """
    if D <= 0.0:
        raise ValueError("D must be positive")
    if not (0.0 <= q < 1.0):
        raise ValueError("q must lie in [0, 1); q = 1 degenerates to the zero schedule")
    A = D ** (1.0 / (1.0 - q)) * (1.0 - q)
    return PenaltySchedule(
        tag="pgf_optimal", m=0.0, params={"D": D, "q": q, "A": A},
        alpha=lambda t: (1.0 - q) / (np.asarray(t, dtype=float) + A),
        alpha_prime=lambda t: -(1.0 - q) / (np.asarray(t, dtype=float) + A) ** 2,
        _beta_closed=lambda t: (1.0 - q) * np.log1p(t / A))


def custom(alpha, alpha_prime, m: float = 0.0, beta=None) -> PenaltySchedule:
    """User-supplied schedule; alpha' must be given explicitly (no symbolic
    differentiation), and beta falls back to adaptive quadrature if omitted."""
    return PenaltySchedule(tag="custom", m=m, alpha=alpha, alpha_prime=alpha_prime,
                           _beta_closed=beta)


def make_schedule(kind: str, m: float = 0.0, **params) -> PenaltySchedule:
    """Catalog dispatch used by the experiment config."""
    if kind == "zero":
        return zero(m)
    if kind == "constant":
        return constant(params["c"], m)
    if kind == "pld_optimal":
        return pld_optimal(params["A"], m)
    if kind == "pgf_optimal":
        return pgf_optimal(params["D"], params["q"])
    raise ValueError(f"unknown schedule kind {kind!r}")


def make_pld_optimal(A: float, m: float = 0.0) -> PenaltySchedule:
    return pld_optimal(A, m)


def make_pgf_optimal(D: float, q: float) -> PenaltySchedule:
    return pgf_optimal(D, q)


def beta_of(sched: PenaltySchedule, t) -> float:
    """Convenience wrapper for sched.beta with the t >= 0 check."""
    return sched.beta(t)
