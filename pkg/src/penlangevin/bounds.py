"""Evaluators for every closed-form or quadrature-computable convergence bound.

The sampling-side bounds control W2(law at time t, target) for the penalized
dynamics in terms of the schedule, the strong-convexity constant m and the
target second moment mu2; the optimization-side bounds control the distance
of the penalized gradient flow to the minimizer under the Hoelder condition
"||x_g - x_g'|| <= D (g' - g) ||x*|| / g'^q for g < g'" on penalized
minimizers.  Closed forms for the penalized minimizers of the cubic and
power families make that condition checkable exactly.

The constant 11 is kept literally as printed in the source analysis (it
encodes a log-concave fourth-moment bound mu4 <= 442 mu2^2); no sharpening.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DimensionError
from .potentials import Potential, penalized_minimizer
from .schedules import PenaltySchedule

_QUAD = dict(epsabs=1e-12, epsrel=1e-8, limit=400)


@dataclass(frozen=True)
class BoundCurve:
    """A labelled bound (or measured error) sampled on an increasing grid."""

    t_grid: np.ndarray
    values: np.ndarray
    label: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise DimensionError("t_grid and values must be equal-length vectors")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("t_grid must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("bound values must be finite and nonnegative")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "values", v)


def _require_decreasing_alpha(sched: PenaltySchedule, t: float) -> None:
    ss = np.linspace(0.0, max(t, 1e-6), 64)
    if np.any(sched.alpha_prime(ss) > 1e-12):
        raise ValueError("bound requires a non-increasing penalty (alpha' <= 0)")


def bound_theorem1(sched: PenaltySchedule, m: float, mu2: float, t: float) -> float:
    """Wasserstein-2 bound for the penalized dynamics started at the origin.

    sqrt(mu2) e^(-beta(t))
      + 11 mu2 [ int_0^t |alpha'(s)| e^(beta(s) - beta(t)) / sqrt(m + alpha(s)) ds
                 + alpha(t) / sqrt(m + alpha(t)) ].

    The decaying factor e^(beta(s) - beta(t)) sits inside the integral, the
    form the Gronwall argument actually produces.
    """
    if mu2 <= 0.0:
        raise ValueError("mu2 must be positive")
    if abs(sched.m - m) > 1e-12:
        raise ValueError(f"schedule carries m={sched.m}, bound called with m={m}")
    al_t = float(sched.alpha(t))
    if m + al_t <= 0.0:
        raise ValueError("need m + alpha(t) > 0")
    _require_decreasing_alpha(sched, t)
    bt = sched.beta(t)

    def integrand(s: float) -> float:
        return (abs(float(sched.alpha_prime(s)))
                * np.exp(float(sched.beta(s)) - bt)
                / np.sqrt(m + float(sched.alpha(s))))

    integral = 0.0
    if t > 0.0 and sched.tag not in ("zero", "constant"):
        integral, _ = integrate.quad(integrand, 0.0, t, **_QUAD)
    return float(np.sqrt(mu2) * np.exp(-bt)
                 + 11.0 * mu2 * (integral + al_t / np.sqrt(m + al_t)))


def bound_prop1(A: float, mu2: float, t: float) -> float:
    """Closed-form specialization of the main bound to alpha = 1/(A + 2t), m = 0:
    ( sqrt(A mu2) + 11 mu2 (1 + log(1 + 2t/A)) ) / sqrt(A + 2t)."""
    if A <= 0.0 or mu2 <= 0.0:
        raise ValueError("A and mu2 must be positive")
    return float((np.sqrt(A * mu2) + 11.0 * mu2 * (1.0 + np.log1p(2.0 * t / A)))
                 / np.sqrt(A + 2.0 * t))


def bound_prop1_simple(mu2: float, t: float) -> float:
    """Convenience form at A = 2 mu2: 10 mu2 (1 + log(1 + t/mu2)) / sqrt(mu2 + t)."""
    if mu2 <= 0.0:
        raise ValueError("mu2 must be positive")
    return float(10.0 * mu2 * (1.0 + np.log1p(t / mu2)) / np.sqrt(mu2 + t))


def bound_prop2_tpld(tau: float, mu2_tau: float, t: float) -> float:
    """Tempered analogue: 10 mu2 (1 + log(1 + t/mu2)) / sqrt(tau (mu2 + t)),
    with mu2 the second moment of the tempered target.  tau = 0 is rejected:
    the bound degenerates, which is exactly why the zero-temperature limit
    needs the separate gradient-flow analysis."""
    if tau <= 0.0:
        raise ValueError("tau must be positive (the bound is vacuous at tau = 0)")
    if mu2_tau <= 0.0:
        raise ValueError("mu2_tau must be positive")
    return float(10.0 * mu2_tau * (1.0 + np.log1p(t / mu2_tau))
                 / np.sqrt(tau * (mu2_tau + t)))


def bound_pgf(D: float, q: float, sched: PenaltySchedule, norm_xstar: float,
              t: float) -> float:
    """Gradient-flow distance bound
    ||x*|| ( e^(-beta) + D int |alpha'| alpha^(-q) e^(beta(s)-beta(t)) ds
             + D alpha(t)^(1-q) )."""
    if sched.m != 0.0:
        raise ValueError("gradient-flow bounds use schedules with m = 0")
    if not (0.0 <= q <= 1.0):
        raise ValueError("q must lie in [0, 1]")
    if D <= 0.0 or norm_xstar < 0.0:
        raise ValueError("need D > 0 and norm_xstar >= 0")
    _require_decreasing_alpha(sched, t)
    bt = sched.beta(t)
    al_t = float(sched.alpha(t))
    if sched.tag == "zero":
        bias = D if q == 1.0 else 0.0
        return float(norm_xstar * (1.0 + bias)) if q == 1.0 else float(norm_xstar)
    if al_t <= 0.0 and q > 0.0:
        raise ValueError("alpha(t) = 0 with q > 0 puts a pole in the integrand")

    def integrand(s: float) -> float:
        al = float(sched.alpha(s))
        return (abs(float(sched.alpha_prime(s))) * al ** (-q)
                * np.exp(float(sched.beta(s)) - bt))

    integral = 0.0
    if t > 0.0 and sched.tag != "constant":
        integral, _ = integrate.quad(integrand, 0.0, t, **_QUAD)
    return float(norm_xstar * (np.exp(-bt) + D * integral + D * al_t ** (1.0 - q)))


def bound_pgf2(A: float, D: float, q: float, norm_xstar: float, t: float) -> float:
    """Closed form for alpha = (1-q)/(t + A):
    (A^(1-q) + D + D log(1 + t/A)) ||x*|| / (t + A)^(1-q)."""
    if A <= 0.0 or D <= 0.0:
        raise ValueError("A and D must be positive")
    if not (0.0 <= q < 1.0):
        raise ValueError("q must lie in [0, 1)")
    return float((A ** (1.0 - q) + D + D * np.log1p(t / A)) * norm_xstar
                 / (t + A) ** (1.0 - q))


def bias_bound_lemma1(m: float, gamma: float, gamma_t: float,
                      mu2_gamma: float) -> float:
    """Penalty-bias bound W2(pi_gt, pi_g) <= 11 (gt - g) mu2(pi_g) / sqrt(m + gt)."""
    if gamma_t < gamma:
        raise ValueError("need gamma_t >= gamma")
    if m + gamma < 0.0 or m + gamma_t <= 0.0:
        raise ValueError("need m + gamma >= 0 and m + gamma_t > 0")
    return float(11.0 * (gamma_t - gamma) * mu2_gamma / np.sqrt(m + gamma_t))


# -- closed forms for penalized minimizers ---------------------------------

def lambda_cubic(gamma: float, r_star: float) -> float:
    """Shrinkage factor of the cubic potential's penalized minimizer.

    For f = ||x - x*||^3 with r* = ||x*|| > 0 the minimizer is
    x_gamma = lambda_gamma x* with
    lambda = 1 - gamma / (gamma/2 + sqrt(3 gamma r* + gamma^2/4)),
    the root in (0, 1) of 3 r* (1 - lambda)^2 = gamma lambda.
    """
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if r_star <= 0.0:
        raise ValueError("r_star must be positive (x_gamma = 0 for all gamma "
                         "when the minimizer sits at the origin)")
    if gamma == 0.0:
        return 1.0
    return float(1.0 - gamma / (0.5 * gamma + np.sqrt(3.0 * gamma * r_star
                                                      + 0.25 * gamma * gamma)))


def power_lambda_solve(a: float, gamma: float, r_star: float,
                       tol: float = 1e-12) -> float:
    """Root in [0, 1] of lambda^(a-1) = s (1 - lambda), s = gamma/(a r*^(a-2)).

    Note the inverted convention relative to the cubic closed form: here the
    penalized minimizer is x_gamma = (1 - lambda) x*, so lambda = 0 at
    gamma = 0.  Both conventions are kept as-is and cross-checked in tests;
    for a = 3 they satisfy 1 - lambda_power = lambda_cubic.
    """
    if a < 2.0:
        raise ValueError("need a >= 2")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if r_star <= 0.0:
        raise ValueError("r_star must be positive")
    if gamma == 0.0:
        return 0.0
    s = gamma / (a * r_star ** (a - 2.0))

    def g(lam: float) -> float:
        return lam ** (a - 1.0) - s * (1.0 - lam)

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def assumption_a_constants(kind: str, **params) -> tuple[float, float]:
    """Certified (D, q) pairs of the Hoelder minimizer condition.

    kinds: 'locally_strongly_convex' (m_star), 'cubic' (norm_xstar),
    'power' (a, norm_xstar), 'separable_cubic' (weights, xstar).
    """
    if kind == "locally_strongly_convex":
        m_star = params["m_star"]
        if m_star <= 0.0:
            raise ValueError("m_star must be positive")
        return 1.0 / m_star, 0.0
    if kind == "cubic":
        r = params["norm_xstar"]
        if r <= 0.0:
            raise ValueError("norm_xstar must be positive")
        return 1.0 / np.sqrt(3.0 * r), 0.5
    if kind == "power":
        a, r = params["a"], params["norm_xstar"]
        if a < 2.0 or r <= 0.0:
            raise ValueError("need a >= 2 and norm_xstar > 0")
        return (1.0 / (a * r ** (a - 2.0))) ** (1.0 / (a - 1.0)), (a - 2.0) / (a - 1.0)
    if kind == "separable_cubic":
        # coordinate-wise f = sum_i w_i |x_i - x*_i|^3; each coordinate is a
        # 1-D cubic with its own closed-form shrinkage, combined in quadrature
        w = np.asarray(params["weights"], dtype=float)
        xs = np.asarray(params["xstar"], dtype=float)
        r = np.linalg.norm(xs)
        if r == 0.0:
            raise ValueError("xstar must be nonzero")
        return float(np.sqrt(np.sum(np.abs(xs) / (3.0 * w))) / r), 0.5
    raise ValueError(f"unknown kind {kind!r}")


@dataclass(frozen=True)
class AssumptionAReport:
    passed: bool
    worst_ratio: float
    worst_pair: tuple[float, float] | None
    n_pairs: int
    details: list = field(default_factory=list, repr=False)


def verify_assumption_a(pot: Potential, D: float, q: float, gamma_grid,
                        tol: float = 1e-9) -> AssumptionAReport:
    """Check ||x_g - x_g'|| <= D (g' - g) ||x*|| / g'^q on a penalty grid.

    Every adjacent and every skip-one pair of the grid is tested with the
    Newton minimizer on both sides; the report carries the worst ratio of
    the two sides of the inequality.
    """
    if pot.minimizer is None:
        raise ValueError("potential needs a known minimizer")
    gg = np.asarray(gamma_grid, dtype=float)
    if np.any(gg <= 0.0) or np.any(np.diff(gg) <= 0.0):
        raise ValueError("gamma_grid must be positive and increasing")
    nx = float(np.linalg.norm(pot.minimizer))
    xs = [penalized_minimizer(pot, g, tol=1e-12) for g in gg]
    pairs = [(i, i + 1) for i in range(len(gg) - 1)]
    pairs += [(i, i + 2) for i in range(len(gg) - 2)]
    worst, worst_pair, details = 0.0, None, []
    for i, j in pairs:
        lhs = float(np.linalg.norm(xs[i] - xs[j]))
        rhs = D * (gg[j] - gg[i]) * nx / gg[j] ** q
        ratio = lhs / rhs if rhs > 0.0 else np.inf
        details.append((float(gg[i]), float(gg[j]), lhs, rhs, ratio))
        if ratio > worst:
            worst, worst_pair = ratio, (float(gg[i]), float(gg[j]))
    return AssumptionAReport(passed=bool(worst <= 1.0 + tol), worst_ratio=worst,
                             worst_pair=worst_pair, n_pairs=len(pairs),
                             details=details)
