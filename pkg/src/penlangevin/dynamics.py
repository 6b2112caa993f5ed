"""Time-stepping engines for the penalized dynamics and the gradient flow.

Variants
--------
``ld_euler`` / ``pld_euler`` / ``tpld_euler``
    Euler-Maruyama on dX = -(grad f(X) + alpha(t) X) dt + sqrt(2 tau) dW,
    with the penalty frozen at the step's start time (explicit convention).
``rlmc``
    Randomized midpoint: the drift integral over a step is estimated at a
    uniformly random intermediate time, with the two Wiener increments
    coupled as (W_Uh, W_h).
``rlmc_parallel``
    R independent uniform midpoints per step whose noise vectors realise a
    single Wiener path via sorted bridge increments; the R midpoint
    gradients average into one update.
``pld_midpoint``
    Randomized midpoint for the penalized drift; the midpoint stage uses
    alpha at the step start and the final stage alpha at the random time
    (switchable to the frozen variant).

All steppers are pure: every variate is a counter-based function of
(master seed, path, step, draw), so replay is bit-for-bit and thread
counts cannot change results.  ``run_chain`` dispatches to fused numba
kernels for catalog potentials/schedules and to the numpy reference
steppers otherwise; both walk identical noise streams.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, rng
from .errors import ConfigError, DimensionError, SimulationError
from .potentials import Potential
from .schedules import PenaltySchedule, zero as zero_schedule

VARIANTS = ("ld_euler", "pld_euler", "tpld_euler", "rlmc", "rlmc_parallel",
            "pld_midpoint")

_POT_CODES = {"gaussian": _kernels.POT_GAUSSIAN, "cubic": _kernels.POT_CUBIC,
              "power": _kernels.POT_POWER, "pseudo_huber": _kernels.POT_PSEUDO_HUBER,
              "separable_power": _kernels.POT_SEP_POWER}


@dataclass(frozen=True)
class Ensemble:
    """A set of simulated paths at a common physical time.

    Noise lineage is (master_seed, path index, step index, draw index), so
    an ensemble snapshot plus its config reproduces any later state.
    """

    states: np.ndarray
    t: float
    step_index: int
    master_seed: int

    def __post_init__(self):
        st = np.ascontiguousarray(np.asarray(self.states, dtype=float))
        if st.ndim != 2:
            raise DimensionError("states must be (n_paths, dim)")
        if not np.all(np.isfinite(st)):
            raise SimulationError("ensemble contains non-finite states",
                                  step_index=self.step_index)
        object.__setattr__(self, "states", st)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


def initial_ensemble(n_paths: int, dim: int, master_seed: int,
                     x0: np.ndarray | None = None) -> Ensemble:
    """Dirac start: every path at x0 (default: the origin)."""
    states = np.zeros((n_paths, dim))
    if x0 is not None:
        states[:] = np.asarray(x0, dtype=float)
    return Ensemble(states, t=0.0, step_index=0, master_seed=int(master_seed))


@dataclass(frozen=True)
class SamplerConfig:
    """Static description of a chain run; validated against the potential."""

    variant: str
    h: float
    n_steps: int
    tau: float = 1.0
    R: int = 1
    n_paths: int = 10_000
    master_seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    midpoint_alpha_end: bool = True   # final stage uses alpha(Th); False freezes alpha(kh)
    engine: str = "auto"              # auto | numpy | numba

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.h <= 0.0:
            raise ConfigError("step size h must be positive")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be nonnegative")
        if self.tau <= 0.0:
            raise ConfigError("temperature tau must be positive")
        if self.R < 1:
            raise ConfigError("midpoint count R must be >= 1")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.engine not in ("auto", "numpy", "numba"):
            raise ConfigError(f"unknown engine {self.engine!r}")

    def validate_against(self, pot: Potential, sched: PenaltySchedule) -> None:
        """Stability guard: h M < 1 hard (including the initial penalty for
        the penalized variants); the discretization analysis wants h M < 1/4,
        so anything above that draws a warning."""
        M_eff = pot.M
        if self.variant in ("pld_euler", "tpld_euler", "pld_midpoint"):
            M_eff = pot.M + float(sched.alpha(0.0))
        if self.h * M_eff >= 1.0:
            raise ConfigError(
                f"h * M = {self.h * M_eff:.3g} >= 1; the discretization is unstable")
        if self.h * M_eff >= 0.25:
            warnings.warn(
                f"h * M = {self.h * M_eff:.3g} >= 1/4; error guarantees assume "
                "h M < 1/4", stacklevel=2)


def _check_step(new_states: np.ndarray, step_index: int) -> None:
    if not np.all(np.isfinite(new_states)):
        raise SimulationError(
            f"non-finite state after step {step_index}; the step size is "
            "likely too large for this potential", step_index=step_index)


# -- pure update rules (hand-checkable) --------------------------------------

def euler_update(x, g, alpha: float, h: float, tau: float, z):
    """x - h (g + alpha x) + sqrt(2 tau h) z."""
    return x - h * (g + alpha * x) + np.sqrt(2.0 * tau * h) * z


def rlmc_update(x, u, xi_mid, xi_end, grad_fn, h: float):
    """(midpoint, endpoint) of the randomized-midpoint rule:
    zeta = x - u h grad(x) + sqrt2 xi_mid;  x' = x - h grad(zeta) + sqrt2 xi_end."""
    sqrt2 = np.sqrt(2.0)
    zeta = x - (u * h) * grad_fn(x) + sqrt2 * xi_mid
    return zeta, x - h * grad_fn(zeta) + sqrt2 * xi_end


def midpoint_pld_update(x, u, xi_mid, xi_end, grad_fn, alpha_k, alpha_T, h: float):
    """Penalized randomized-midpoint rule; alpha_k acts at the midpoint stage,
    alpha_T at the final stage."""
    sqrt2 = np.sqrt(2.0)
    zeta = x - (u * h) * (grad_fn(x) + alpha_k * x) + sqrt2 * xi_mid
    return zeta, x - h * (grad_fn(zeta) + alpha_T * zeta) + sqrt2 * xi_end


def rlmc_parallel_update(x, t_rel, xi, grad_fn, h: float):
    """R-midpoint rule: zeta_i = x - t_i h grad(x) + sqrt2 xi_i and
    x' = x - (h/R) sum grad(zeta_i) + sqrt2 xi_{R+1};  t_rel is (..., R),
    xi is (..., R+1, p)."""
    sqrt2 = np.sqrt(2.0)
    R = t_rel.shape[-1]
    g0 = grad_fn(x)
    zeta = x[..., None, :] - (t_rel * h)[..., None] * g0[..., None, :] \
        + sqrt2 * xi[..., :R, :]
    flat = zeta.reshape(-1, x.shape[-1])
    gz = grad_fn(flat).reshape(zeta.shape)
    return zeta, x - (h / R) * gz.sum(axis=-2) + sqrt2 * xi[..., R, :]


# -- numpy reference steppers ----------------------------------------------

def step_euler(ens: Ensemble, pot: Potential, sched: PenaltySchedule,
               h: float, tau: float = 1.0) -> Ensemble:
    """x <- x - h (grad f(x) + alpha(t) x) + sqrt(2 tau h) z.

    tau = 0 is the noise-free (gradient flow) limit, kept for testing.
    """
    if h <= 0.0 or tau < 0.0:
        raise ValueError("need h > 0 and tau >= 0")
    key = rng.derive_key(ens.master_seed)
    al = float(sched.alpha(ens.t))
    z = rng.normal_matrix(ens.n_paths, ens.dim, ens.step_index, rng.DRAW_NORMAL, key)
    new = euler_update(ens.states, pot.grad(ens.states), al, h, tau, z)
    _check_step(new, ens.step_index)
    return Ensemble(new, ens.t + h, ens.step_index + 1, ens.master_seed)


def _coupled_increments(ens: Ensemble, h: float, key) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(U, xi_mid, xi_end) with cov[(xi_mid, xi_end)] = [[Uh, Uh], [Uh, h]] given U."""
    u = rng.uniform_matrix(ens.n_paths, 1, ens.step_index, rng.DRAW_UNIFORM, key)
    e1 = rng.normal_matrix(ens.n_paths, ens.dim, ens.step_index, rng.DRAW_NORMAL, key)
    e2 = rng.normal_matrix(ens.n_paths, ens.dim, ens.step_index, rng.DRAW_NORMAL_AUX, key)
    xi_mid = np.sqrt(u * h) * e1
    xi_end = xi_mid + np.sqrt((1.0 - u) * h) * e2
    return u, xi_mid, xi_end


def step_rlmc(ens: Ensemble, pot: Potential, h: float) -> Ensemble:
    """Randomized-midpoint update (one uniform midpoint per path)."""
    if h * pot.M >= 1.0:
        raise ValueError("randomized midpoint needs h M < 1")
    key = rng.derive_key(ens.master_seed)
    u, xi_mid, xi_end = _coupled_increments(ens, h, key)
    _, new = rlmc_update(ens.states, u, xi_mid, xi_end, pot.grad, h)
    _check_step(new, ens.step_index)
    return Ensemble(new, ens.t + h, ens.step_index + 1, ens.master_seed)


def step_midpoint_pld(ens: Ensemble, pot: Potential, sched: PenaltySchedule,
                      h: float, alpha_end: bool = True) -> Ensemble:
    """Randomized midpoint for the penalized drift grad f + alpha(.) x.

    Midpoint stage: penalty frozen at the step start, alpha(k h).
    Final stage: alpha(T h) at the random time (the displayed form of the
    method); ``alpha_end=False`` freezes it at alpha(k h) instead.
    With alpha identically zero this reduces bitwise to step_rlmc.
    """
    al0 = float(sched.alpha(ens.t))
    if h * (pot.M + al0) >= 1.0:
        raise ValueError("randomized midpoint needs h (M + alpha) < 1")
    key = rng.derive_key(ens.master_seed)
    u, xi_mid, xi_end = _coupled_increments(ens, h, key)
    if alpha_end:
        al_T = np.asarray(sched.alpha(ens.t + u * h), dtype=float)
    else:
        al_T = al0
    _, new = midpoint_pld_update(ens.states, u, xi_mid, xi_end, pot.grad,
                                 al0, al_T, h)
    _check_step(new, ens.step_index)
    return Ensemble(new, ens.t + h, ens.step_index + 1, ens.master_seed)


def bridge_from_etas(times_rel: np.ndarray, etas: np.ndarray, h: float) -> np.ndarray:
    """Wiener values at relative times in (0, 1] from iid normals.

    times_rel: (..., R+1) with last entry 1 by convention (not enforced
    here); etas: (..., R+1, p) standard normals consumed in sorted-time
    order.  Output (..., R+1, p) has cov(xi^i, xi^j) = min(t_i, t_j) h I:
    sorted increments get variance (t_(i) - t_(i-1)) h and accumulate.
    """
    times_rel = np.asarray(times_rel, dtype=float)
    etas = np.asarray(etas, dtype=float)
    order = np.argsort(times_rel, axis=-1, kind="stable")
    ts = np.take_along_axis(times_rel, order, axis=-1)
    d = np.diff(ts, axis=-1, prepend=0.0)
    sd = np.sqrt(np.clip(d, 0.0, None) * h)
    incr = sd[..., None] * etas
    acc = np.cumsum(incr, axis=-2)
    out = np.empty_like(acc)
    np.put_along_axis(out, order[..., None], acc, axis=-2)
    return out


def sample_bridge_increments(times, h: float, rng_gen: np.random.Generator,
                             dim: int = 1) -> list[np.ndarray]:
    """Jointly Gaussian vectors with cov(xi^i, xi^j) = (min(t_i,t_j) - k) h I.

    ``times`` are R+1 values in (k, k+1] with the last equal to k+1 (k is
    inferred from that last entry).  Linear time after sorting.
    """
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size < 1:
        raise DimensionError("times must be a nonempty vector")
    k = ts[-1] - 1.0
    if np.any(ts <= k) or np.any(ts > k + 1.0):
        raise ValueError("all times must lie in (k, k+1] with times[-1] = k+1")
    etas = rng_gen.standard_normal((ts.size, dim))
    out = bridge_from_etas(ts - k, etas, h)
    return [out[i] for i in range(ts.size)]


def step_rlmc_parallel(ens: Ensemble, pot: Potential, h: float, R: int) -> Ensemble:
    """R-midpoint randomized update sharing one Wiener bridge per step."""
    if R < 1:
        raise ValueError("R must be >= 1")
    if h * pot.M >= 1.0:
        raise ValueError("randomized midpoint needs h M < 1")
    key = rng.derive_key(ens.master_seed)
    n, p = ens.states.shape
    t_rel = rng.uniform_matrix(n, R, ens.step_index, rng.DRAW_UNIFORM, key)
    times = np.concatenate([t_rel, np.ones((n, 1))], axis=1)
    etas = rng.normal_matrix(n, (R + 1) * p, ens.step_index, rng.DRAW_NORMAL,
                             key).reshape(n, R + 1, p)
    xi = bridge_from_etas(times, etas, h)
    _, new = rlmc_parallel_update(ens.states, t_rel, xi, pot.grad, h)
    _check_step(new, ens.step_index)
    return Ensemble(new, ens.t + h, ens.step_index + 1, ens.master_seed)


# -- chain runner ------------------------------------------------------------

def geometric_checkpoints(n_steps: int, per_decade: int = 20) -> tuple[int, ...]:
    """Log-uniform checkpoint steps including 0 and n_steps."""
    if n_steps <= 0:
        return (0,)
    decades = np.log10(max(n_steps, 2))
    k = np.unique(np.round(np.logspace(0.0, np.log10(n_steps),
                                       max(2, int(per_decade * decades))))
                  .astype(int))
    k = k[(k >= 1) & (k <= n_steps)]
    return tuple([0] + list(k) + ([n_steps] if k[-1] != n_steps else []))


def _effective(cfg: SamplerConfig, sched: PenaltySchedule):
    """Variant -> (schedule actually applied, tau actually applied)."""
    if cfg.variant == "ld_euler":
        return zero_schedule(m=sched.m), 1.0
    if cfg.variant == "pld_euler":
        return sched, 1.0
    if cfg.variant == "tpld_euler":
        return sched, cfg.tau
    return sched, 1.0


def _kernel_args(pot: Potential):
    code = _POT_CODES.get(pot.kind)
    if code is None:
        return None
    p = pot.dim
    H = pot.H if pot.H is not None else np.zeros((p, p))
    xstar = pot._centre()
    w = pot.weights if pot.weights is not None else np.ones(p)
    return (code, np.ascontiguousarray(H), np.ascontiguousarray(xstar),
            np.ascontiguousarray(w), float(pot.a), float(pot.b))


def _use_numba(cfg: SamplerConfig, pot: Potential, sched: PenaltySchedule) -> bool:
    if cfg.engine == "numpy":
        return False
    ok = _kernel_args(pot) is not None and sched.kernel_code() is not None
    if cfg.engine == "numba" and not ok:
        raise ConfigError("numba engine requested but potential or schedule "
                          "has no kernel form")
    return ok


def _advance_numba(states, step0: int, n_span: int, cfg: SamplerConfig,
                   pot: Potential, sched_eff: PenaltySchedule, tau: float,
                   key) -> None:
    scode, sp0, sp1 = sched_eff.kernel_code()
    pcode, H, xstar, w, a, b = _kernel_args(pot)
    k0, k1 = key
    if cfg.variant in ("ld_euler", "pld_euler", "tpld_euler"):
        if pot.dim == 1:
            _kernels.chain_euler_1d(states, step0, n_span, cfg.h, tau,
                                    scode, sp0, sp1, pcode,
                                    float(H[0, 0]), float(xstar[0]), float(w[0]),
                                    a, b, k0, k1)
        else:
            _kernels.chain_euler(states, step0, n_span, cfg.h, tau,
                                 scode, sp0, sp1, pcode, H, xstar, w, a, b, k0, k1)
    elif cfg.variant == "rlmc":
        _kernels.chain_rlmc(states, step0, n_span, cfg.h,
                            pcode, H, xstar, w, a, b, k0, k1)
    elif cfg.variant == "pld_midpoint":
        _kernels.chain_midpoint_pld(states, step0, n_span, cfg.h, scode, sp0, sp1,
                                    cfg.midpoint_alpha_end,
                                    pcode, H, xstar, w, a, b, k0, k1)
    else:
        _kernels.chain_rlmc_parallel(states, step0, n_span, cfg.h, cfg.R,
                                     pcode, H, xstar, w, a, b, k0, k1)


def _advance_numpy(ens: Ensemble, n_span: int, cfg: SamplerConfig,
                   pot: Potential, sched_eff: PenaltySchedule, tau: float) -> Ensemble:
    for _ in range(n_span):
        if cfg.variant in ("ld_euler", "pld_euler", "tpld_euler"):
            ens = step_euler(ens, pot, sched_eff, cfg.h, tau)
        elif cfg.variant == "rlmc":
            ens = step_rlmc(ens, pot, cfg.h)
        elif cfg.variant == "pld_midpoint":
            ens = step_midpoint_pld(ens, pot, sched_eff, cfg.h,
                                    cfg.midpoint_alpha_end)
        else:
            ens = step_rlmc_parallel(ens, pot, cfg.h, cfg.R)
    return ens


def run_chain(cfg: SamplerConfig, pot: Potential, sched: PenaltySchedule,
              x0: np.ndarray | None = None) -> list[tuple[int, Ensemble]]:
    """Advance an ensemble n_steps steps, snapshotting at checkpoint steps.

    Deterministic for fixed (config, seed): the noise is a pure function of
    (seed, path, step, draw), the engine choice is a pure function of the
    config, and path updates carry no cross-path coupling.
    """
    cfg.validate_against(pot, sched)
    sched_eff, tau = _effective(cfg, sched)
    checkpoints = cfg.checkpoints
    if checkpoints is None:
        checkpoints = geometric_checkpoints(cfg.n_steps)
    cps = sorted(set(int(c) for c in checkpoints))
    if any(c < 0 or c > cfg.n_steps for c in cps):
        raise ConfigError("checkpoints must lie in [0, n_steps]")
    ens = initial_ensemble(cfg.n_paths, pot.dim, cfg.master_seed, x0)
    out: list[tuple[int, Ensemble]] = []
    if cps and cps[0] == 0:
        out.append((0, ens))
        cps = cps[1:]
    if _use_numba(cfg, pot, sched_eff):
        key = rng.derive_key(cfg.master_seed)
        states = ens.states.copy()
        step = 0
        for c in cps:
            _advance_numba(states, step, c - step, cfg, pot, sched_eff, tau, key)
            step = c
            try:
                snap = Ensemble(states.copy(), t=c * cfg.h, step_index=c,
                                master_seed=cfg.master_seed)
            except SimulationError as exc:
                raise SimulationError(
                    f"non-finite state at or before step {c}; the step size "
                    "is likely too large", step_index=c) from exc
            out.append((c, snap))
    else:
        step = 0
        for c in cps:
            ens = _advance_numpy(ens, c - step, cfg, pot, sched_eff, tau)
            step = c
            out.append((c, ens))
    return out


# -- deterministic gradient flow ---------------------------------------------

@dataclass(frozen=True)
class FlowTrajectory:
    """Recorded (t, x_t, ||x_t - x*||) triples of a gradient-flow run."""

    t: np.ndarray
    x: np.ndarray
    dist: np.ndarray


def integrate_pgf(pot: Potential, sched: PenaltySchedule, T: float, dt: float,
                  x0: np.ndarray | None = None,
                  n_records: int = 400) -> FlowTrajectory:
    """Classical RK4 on dx/dt = -(grad f(x) + alpha(t) x) from x0 (default 0).

    Records about ``n_records`` points evenly spaced in step index (always
    including t = 0 and t = T) and the distance to the potential's
    minimizer, which must be known.
    """
    if dt <= 0.0 or T <= 0.0:
        raise ValueError("need T > 0 and dt > 0")
    if pot.minimizer is None:
        raise ValueError("integrate_pgf needs a potential with known minimizer")
    n_steps = int(np.ceil(T / dt))
    record_every = max(1, n_steps // max(1, n_records))
    x0v = np.zeros(pot.dim) if x0 is None else np.asarray(x0, dtype=float)
    n_rec_cap = n_steps // record_every + 3
    kargs = _kernel_args(pot)
    scode = sched.kernel_code()
    if kargs is not None and scode is not None:
        out_t = np.empty(n_rec_cap)
        out_x = np.empty((n_rec_cap, pot.dim))
        pcode, H, xstar, w, a, b = kargs
        nrec = _kernels.pgf_rk4(x0v, 0.0, dt, n_steps, scode[0], scode[1], scode[2],
                                pcode, H, xstar, w, a, b, record_every, out_t, out_x)
        if nrec < 0:
            raise SimulationError("gradient-flow integration diverged")
        ts, xs = out_t[:nrec], out_x[:nrec]
    else:
        ts_l, xs_l = [0.0], [x0v.copy()]
        x = x0v.copy()
        lim = 1e6 * (1.0 + float(np.linalg.norm(pot.minimizer)))

        def rhs(tv: float, xv: np.ndarray) -> np.ndarray:
            return -(pot.grad(xv) + float(sched.alpha(tv)) * xv)

        for s in range(n_steps):
            tv = s * dt
            k1 = rhs(tv, x)
            k2 = rhs(tv + 0.5 * dt, x + 0.5 * dt * k1)
            k3 = rhs(tv + 0.5 * dt, x + 0.5 * dt * k2)
            k4 = rhs(tv + dt, x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x - pot.minimizer) > lim:
                raise SimulationError("gradient-flow integration diverged",
                                      step_index=s)
            if (s + 1) % record_every == 0 or s == n_steps - 1:
                ts_l.append(tv + dt)
                xs_l.append(x.copy())
        ts, xs = np.asarray(ts_l), np.asarray(xs_l)
    dist = np.linalg.norm(xs - pot.minimizer, axis=1)
    return FlowTrajectory(t=ts, x=xs, dist=dist)


def set_threads(n: int) -> None:
    """Set the numba thread count (results are identical for any value)."""
    import numba
    numba.set_num_threads(int(n))
