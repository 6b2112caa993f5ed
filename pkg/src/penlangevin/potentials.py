"""Convex target potentials and the quadratic-penalty machinery.

A potential is the negative log-density f of the target pi ~ exp(-f),
assumed convex with Hessian eigenvalues in [m, M].  The catalog covers the
analyzable families used throughout: quadratic (gaussian), cubic and power
distances to a minimizer, the pseudo-Huber function, coordinate-weighted
power sums, and user-supplied callables.

The penalized potential f_gamma(x) = f(x) + gamma ||x||^2 / 2 is strongly
convex for gamma > 0; its minimizer x_gamma and the moments of the biased
density pi_gamma ~ exp(-f_gamma) are the quantities the convergence bounds
are built from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import (DimensionError, NonConvergenceError, NonFiniteError,
                     UnsupportedTargetError)

KINDS = ("gaussian", "cubic", "power", "pseudo_huber", "separable_power", "custom")

# f_gamma tail weight at the quadrature truncation point: exp(-40) < 1e-17
# leaves the moment integrals' tail mass far below the 1e-12 budget.
_TAIL_LOG_DROP = 40.0


@dataclass(frozen=True)
class Potential:
    """A convex potential with curvature bounds and optional metadata.

    m and M bound the Hessian spectrum; for the cubic/power kinds, whose
    gradients are only locally Lipschitz, M is the Lipschitz constant over
    the ball of radius 2 (||x*|| + 1) around the origin and is documented
    as such in the factory.  ``mu2`` optionally records the known second
    moment of the unpenalized target.
    """

    kind: str
    dim: int
    m: float
    M: float
    minimizer: np.ndarray | None = None
    mu2: float | None = None
    H: np.ndarray | None = None
    a: float = 0.0
    b: float = 0.0
    weights: np.ndarray | None = None
    f: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    fgrad: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    fhess: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not (0.0 <= self.m <= self.M):
            raise ValueError(f"need 0 <= m <= M, got m={self.m}, M={self.M}")

    # -- evaluation ----------------------------------------------------

    def value(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        u = x - self._centre()
        if self.kind == "gaussian":
            return 0.5 * np.einsum("...i,ij,...j->...", u, self.H, u)
        if self.kind == "cubic":
            return np.linalg.norm(u, axis=-1) ** 3
        if self.kind == "power":
            return np.linalg.norm(u, axis=-1) ** self.a
        if self.kind == "pseudo_huber":
            return np.sqrt(np.sum(u * u, axis=-1) + self.b * self.b)
        if self.kind == "separable_power":
            return np.sum(self.weights * np.abs(u) ** self.a, axis=-1)
        return self.f(x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        u = x - self._centre()
        if self.kind == "gaussian":
            return u @ self.H
        if self.kind == "cubic":
            return 3.0 * np.linalg.norm(u, axis=-1, keepdims=True) * u
        if self.kind == "power":
            r = np.linalg.norm(u, axis=-1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                coef = np.where(r > 0.0, self.a * r ** (self.a - 2.0), 0.0)
            if self.a == 2.0:
                coef = np.full_like(r, 2.0)
            return coef * u
        if self.kind == "pseudo_huber":
            s = np.sqrt(np.sum(u * u, axis=-1, keepdims=True) + self.b * self.b)
            return u / s
        if self.kind == "separable_power":
            au = np.abs(u)
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(au > 0.0, self.a * self.weights * au ** (self.a - 2.0) * u, 0.0)
            return g
        return self.fgrad(x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Hessian at a single point (dim, dim)."""
        x = self._check(x)
        if x.ndim != 1:
            raise DimensionError("hessian expects a single point")
        u = x - self._centre()
        eye = np.eye(self.dim)
        if self.kind == "gaussian":
            return np.array(self.H, dtype=float)
        if self.kind == "cubic":
            r = np.linalg.norm(u)
            if r == 0.0:
                return np.zeros((self.dim, self.dim))
            return 3.0 * r * eye + 3.0 * np.outer(u, u) / r
        if self.kind == "power":
            r = np.linalg.norm(u)
            if r == 0.0:
                return 2.0 * eye if self.a == 2.0 else np.zeros((self.dim, self.dim))
            uhat = u / r
            return self.a * r ** (self.a - 2.0) * (eye + (self.a - 2.0) * np.outer(uhat, uhat))
        if self.kind == "pseudo_huber":
            s2 = float(u @ u) + self.b * self.b
            s = np.sqrt(s2)
            return eye / s - np.outer(u, u) / (s2 * s)
        if self.kind == "separable_power":
            au = np.abs(u)
            d = np.where(au > 0.0, self.a * (self.a - 1.0) * self.weights * au ** (self.a - 2.0), 0.0)
            return np.diag(d)
        if self.fhess is not None:
            return self.fhess(x)
        return _fd_hessian_from_grad(self.fgrad, x)

    # -- helpers ---------------------------------------------------------

    def _centre(self) -> np.ndarray:
        if self.minimizer is not None:
            return self.minimizer
        return np.zeros(self.dim)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionError(
                f"point of dimension {x.shape[-1] if x.ndim else 0} fed to "
                f"{self.kind} potential of dimension {self.dim}")
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("non-finite input point")
        return x


def _fd_hessian_from_grad(fgrad, x, eps: float = 1e-6) -> np.ndarray:
    p = x.shape[0]
    out = np.empty((p, p))
    for j in range(p):
        e = np.zeros(p)
        e[j] = eps
        out[:, j] = (fgrad(x + e) - fgrad(x - e)) / (2.0 * eps)
    return 0.5 * (out + out.T)


# -- catalog factories ----------------------------------------------------

def gaussian(H: np.ndarray, centre: np.ndarray | None = None) -> Potential:
    """Quadratic potential f(x) = (x-c)' H (x-c) / 2 with SPD matrix H."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[0] != H.shape[1]:
        raise DimensionError("H must be square")
    if not np.allclose(H, H.T, atol=1e-12):
        raise ValueError("H must be symmetric")
    ev = np.linalg.eigvalsh(H)
    if ev[0] <= 0.0:
        raise ValueError("H must be positive definite")
    p = H.shape[0]
    c = np.zeros(p) if centre is None else np.asarray(centre, dtype=float)
    iH = np.linalg.inv(H)
    mu2 = float(np.trace(iH) + c @ c)
    return Potential(kind="gaussian", dim=p, m=float(ev[0]), M=float(ev[-1]),
                     minimizer=c, mu2=mu2, H=H)


def cubic(xstar: np.ndarray) -> Potential:
    """f(x) = ||x - x*||^3.  Weakly convex; M is taken over the ball
    of radius 2 (||x*|| + 1) where the largest Hessian eigenvalue is 6 r."""
    xs = np.atleast_1d(np.asarray(xstar, dtype=float))
    R = 2.0 * (np.linalg.norm(xs) + 1.0)
    return Potential(kind="cubic", dim=xs.size, m=0.0, M=6.0 * R, minimizer=xs)


def power(a: float, xstar: np.ndarray) -> Potential:
    """f(x) = ||x - x*||^a for a >= 2; ball-local M = a(a-1) R^(a-2)."""
    if a < 2.0:
        raise ValueError("power potential needs a >= 2")
    xs = np.atleast_1d(np.asarray(xstar, dtype=float))
    R = 2.0 * (np.linalg.norm(xs) + 1.0)
    m = 2.0 if a == 2.0 else 0.0
    return Potential(kind="power", dim=xs.size, m=m, M=a * (a - 1.0) * R ** (a - 2.0),
                     minimizer=xs, a=float(a))


def pseudo_huber(b: float, xstar: np.ndarray) -> Potential:
    """f(x) = sqrt(||x - x*||^2 + b^2); smooth with (m, M) = (0, 1/b)."""
    if b <= 0.0:
        raise ValueError("pseudo_huber needs b > 0")
    xs = np.atleast_1d(np.asarray(xstar, dtype=float))
    return Potential(kind="pseudo_huber", dim=xs.size, m=0.0, M=1.0 / b,
                     minimizer=xs, b=float(b))


def separable_power(a: float, weights: np.ndarray, xstar: np.ndarray) -> Potential:
    """f(x) = sum_i w_i |x_i - x*_i|^a with positive weights, a >= 2."""
    if a < 2.0:
        raise ValueError("separable_power needs a >= 2")
    xs = np.atleast_1d(np.asarray(xstar, dtype=float))
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if w.shape != xs.shape:
        raise DimensionError("weights and xstar must have equal length")
    if np.any(w <= 0.0):
        raise ValueError("weights must be positive")
    R = 2.0 * (np.linalg.norm(xs) + 1.0)
    m = 2.0 * float(w.min()) if a == 2.0 else 0.0
    M = a * (a - 1.0) * float(w.max()) * R ** (a - 2.0) if a > 2.0 else 2.0 * float(w.max())
    return Potential(kind="separable_power", dim=xs.size, m=m, M=M,
                     minimizer=xs, a=float(a), weights=w)


def custom(f, fgrad, dim: int, m: float, M: float,
           minimizer: np.ndarray | None = None, mu2: float | None = None,
           fhess=None) -> Potential:
    """Wrap user callables; m, M are declared, not verified."""
    mini = None if minimizer is None else np.asarray(minimizer, dtype=float)
    return Potential(kind="custom", dim=dim, m=m, M=M, minimizer=mini, mu2=mu2,
                     f=f, fgrad=fgrad, fhess=fhess)


def make_potential(kind: str, **params) -> Potential:
    """Catalog dispatch used by the experiment config."""
    if kind == "gaussian":
        return gaussian(params["H"], params.get("centre"))
    if kind == "cubic":
        return cubic(params["xstar"])
    if kind == "power":
        return power(params["a"], params["xstar"])
    if kind == "pseudo_huber":
        return pseudo_huber(params["b"], params["xstar"])
    if kind == "separable_power":
        return separable_power(params["a"], params["weights"], params["xstar"])
    raise ValueError(f"unknown potential kind {kind!r}")


# -- penalized potential ---------------------------------------------------

@dataclass(frozen=True)
class PenalizedPotential:
    """f_gamma(x) = f(x) + gamma ||x||^2 / 2, with constants (m+g, M+g)."""

    base: Potential
    gamma: float

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")

    @property
    def m(self) -> float:
        return self.base.m + self.gamma

    @property
    def M(self) -> float:
        return self.base.M + self.gamma

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base.value(x) + 0.5 * self.gamma * np.sum(x * x, axis=-1)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.base.grad(x) + self.gamma * np.asarray(x, dtype=float)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.base.hessian(x) + self.gamma * np.eye(self.base.dim)


# -- module-level operations ----------------------------------------------

def grad(pot: Potential, x: np.ndarray) -> np.ndarray:
    """Gradient of f at x; x may carry leading batch axes."""
    return pot.grad(x)


def penalized_grad(pot: Potential, gamma: float, x: np.ndarray) -> np.ndarray:
    """Gradient of f_gamma, i.e. grad f(x) + gamma x."""
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    return pot.grad(x) + gamma * np.asarray(x, dtype=float)


def penalized_minimizer(pot: Potential, gamma: float, tol: float = 1e-10,
                        max_iter: int = 200) -> np.ndarray:
    """Minimizer x_gamma of f_gamma, found by damped Newton.

    Newton directions use the exact Hessian plus gamma I; a halving line
    search enforces descent of f_gamma, with a plain gradient step as
    fallback whenever the Newton direction is unusable.  Raises
    NonConvergenceError after ``max_iter`` iterations rather than
    returning a silently wrong point.
    """
    if gamma <= 0.0:
        raise ValueError("penalized_minimizer needs gamma > 0")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    pen = PenalizedPotential(pot, gamma)
    x = np.array(pot._centre(), dtype=float)
    # the cusp of the cubic/power kinds sits exactly at x*; nudge off it
    if pot.kind in ("cubic", "power") and np.linalg.norm(x) > 0.0:
        x = x * (1.0 - min(0.5, gamma / (gamma + 1.0)))
    fx = float(pen.value(x))
    for _ in range(max_iter):
        g = pen.grad(x)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return x
        H = pen.hessian(x)
        try:
            d = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            d = -g / pen.M
        if not np.all(np.isfinite(d)) or float(d @ g) >= 0.0:
            d = -g / pen.M
        t = 1.0
        for _ in range(60):
            xn = x + t * d
            fn = float(pen.value(xn))
            if fn < fx:
                break
            t *= 0.5
        else:
            d = -g / pen.M
            xn = x + d
            fn = float(pen.value(xn))
        x, fx = xn, fn
    raise NonConvergenceError(
        f"penalized minimizer did not reach |grad| <= {tol} in {max_iter} "
        f"iterations (gamma={gamma}, kind={pot.kind})")


def _gaussian_moments(pot: Potential, gamma: float) -> tuple[float, float]:
    Hg = pot.H + gamma * np.eye(pot.dim)
    cov = np.linalg.inv(Hg)
    mean = cov @ (pot.H @ pot._centre())
    tr = float(np.trace(cov))
    mu2 = tr + float(mean @ mean)
    mu4 = (mu2 ** 2 + 2.0 * float(np.trace(cov @ cov))
           + 4.0 * float(mean @ cov @ mean))
    return mu2, mu4


def _truncation_interval(pot: Potential, gamma: float) -> tuple[float, float, float]:
    """[lo, hi] containing all but exp(-40) of pi_gamma mass, plus min f_gamma."""
    pen = PenalizedPotential(pot, gamma)
    if gamma > 0.0:
        mode = float(penalized_minimizer(pot, gamma, tol=1e-9)[0])
    elif pot.minimizer is not None:
        mode = float(pot.minimizer[0])
    else:
        mode = 0.0
    fmin = float(pen.value(np.array([mode])))
    lo = hi = mode
    width = 1.0
    while float(pen.value(np.array([hi]))) - fmin < _TAIL_LOG_DROP:
        hi = mode + width
        width *= 2.0
    width = 1.0
    while float(pen.value(np.array([lo]))) - fmin < _TAIL_LOG_DROP:
        lo = mode - width
        width *= 2.0
    return lo, hi, fmin


def target_moment(pot: Potential, gamma: float, k: int) -> float:
    """Moment mu_k(pi_gamma) = E ||X||^k under pi_gamma ~ exp(-f_gamma).

    Closed form for gaussian targets; adaptive quadrature for other
    one-dimensional targets (absolute error <= 1e-8).  Multi-dimensional
    non-gaussian targets are rejected.
    """
    if k not in (2, 4):
        raise ValueError("only moments k in {2, 4} are supported")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if pot.kind == "gaussian":
        mu2, mu4 = _gaussian_moments(pot, gamma)
        return mu2 if k == 2 else mu4
    if pot.dim != 1:
        raise UnsupportedTargetError(
            "moments of multi-dimensional non-gaussian targets are not available")
    pen = PenalizedPotential(pot, gamma)
    lo, hi, fmin = _truncation_interval(pot, gamma)

    def dens(x: float) -> float:
        return float(np.exp(-(pen.value(np.array([x])) - fmin)))

    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=400)
    Z, _ = integrate.quad(dens, lo, hi, **opts)
    num, _ = integrate.quad(lambda x: x ** k * dens(x), lo, hi, **opts)
    return num / Z
