"""Cross-cutting numerical verification suites.

Each check ties at least two independent routes to the same quantity
together (quadrature moments vs. analytic identities, closed-form
Gaussian distances vs. penalty-bias bounds, empirical coupling laws vs.
their stated covariances) and reports a machine-readable pass/fail with
the measured values, the tolerance budget and the seed.

Statistical checks accept at 4 standard errors: with on the order of a
hundred scalar comparisons in the suite, that keeps the false-alarm rate
below 1e-4 per run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import bias_bound_lemma1, BoundCurve
from .dynamics import sample_bridge_increments
from .metrics import rate_fit_window_by_time
from .potentials import Potential, target_moment

SE_FACTOR = 4.0


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one verification check."""

    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None
    wall_time_s: float = 0.0
    counterexample: dict | None = None
    notes: str = ""

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v
        return {
            "name": self.name, "passed": bool(self.passed),
            "measured": clean(self.measured), "tolerances": clean(self.tolerances),
            "seed": self.seed, "wall_time_s": self.wall_time_s,
            "counterexample": clean(self.counterexample), "notes": self.notes,
        }


def check_mu2_derivative(pot: Potential, gamma_grid: Sequence[float],
                         fd_step: float = 1e-3, tol: float = 1e-4) -> CheckReport:
    """d mu2(pi_gamma) / d gamma should equal (mu2^2 - mu4) / 2.

    Central finite differences of the quadrature moment against the
    analytic identity, pointwise on the grid.
    """
    t0 = time.perf_counter()
    gg = np.asarray(gamma_grid, dtype=float)
    if gg.size < 1:
        raise ValueError("gamma_grid must be nonempty")
    worst, worst_at, rows = 0.0, None, []
    for g in gg:
        step = min(fd_step, 0.5 * g) if g > 0.0 else fd_step
        lo = g - step if g - step >= 0.0 else 0.0
        hi = g + step
        fd = (target_moment(pot, hi, 2) - target_moment(pot, lo, 2)) / (hi - lo)
        mu2 = target_moment(pot, g, 2)
        mu4 = target_moment(pot, g, 4)
        ident = 0.5 * (mu2 * mu2 - mu4)
        dev = abs(fd - ident)
        rows.append({"gamma": float(g), "fd": fd, "identity": ident, "abs_dev": dev})
        if dev > worst:
            worst, worst_at = dev, float(g)
    passed = worst <= tol
    ce = None
    if not passed:
        ce = next(r for r in rows if r["gamma"] == worst_at)
    return CheckReport(
        name="mu2_derivative", passed=passed,
        measured={"max_abs_dev": worst, "at_gamma": worst_at, "rows": rows},
        tolerances={"max_abs_dev": tol, "fd_step": fd_step},
        wall_time_s=time.perf_counter() - t0, counterexample=ce)


def check_lemma1_gaussian(m_grid: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
                          n_pairs: int = 100, seed: int = 0) -> CheckReport:
    """Penalty-bias bound vs. the exact scalar-Gaussian W2, exact both sides.

    For f = m x^2 / 2 the biased target pi_g is N(0, 1/(m+g)), so
    W2(pi_g, pi_g') = |(m+g)^(-1/2) - (m+g')^(-1/2)| exactly, and the
    bound must dominate it for every pair g <= g'.
    """
    t0 = time.perf_counter()
    rs = np.random.default_rng(seed)
    worst_margin, ce = np.inf, None
    checked = 0
    for m in m_grid:
        pairs = np.sort(rs.uniform(0.0, 5.0, size=(n_pairs, 2)), axis=1)
        for g, gt in pairs:
            exact = abs(1.0 / np.sqrt(m + g) - 1.0 / np.sqrt(m + gt))
            bound = bias_bound_lemma1(m, g, gt, mu2_gamma=1.0 / (m + g))
            margin = bound - exact
            checked += 1
            if margin < worst_margin:
                worst_margin = margin
                if margin < 0.0 and ce is None:
                    ce = {"m": float(m), "gamma": float(g), "gamma_t": float(gt),
                          "exact": exact, "bound": bound}
    return CheckReport(
        name="lemma1_gaussian", passed=worst_margin >= 0.0,
        measured={"worst_margin": float(worst_margin), "n_checked": checked},
        tolerances={"margin": 0.0}, seed=seed,
        wall_time_s=time.perf_counter() - t0, counterexample=ce)


def _cov_se(vii: float, vjj: float, cij: float, n: int) -> float:
    return float(np.sqrt((vii * vjj + cij * cij) / n))


def check_coupling_laws(h: float = 0.1, U_grid: Sequence[float] = (0.3, 0.5, 0.9, 1.0),
                        n_draws: int = 100_000, seed: int = 2024,
                        bridge_times: Sequence[float] = (0.2, 0.7, 1.0)) -> CheckReport:
    """Empirical covariances of the coupled increments against the stated laws.

    At fixed U = u the pair (xi_mid, xi_end) must have covariance
    [[u h, u h], [u h, h]]; the bridge vectors at fixed times must have
    Gram matrix (min(t_i, t_j) - k) h.  Accepts within 4 standard errors.
    """
    if n_draws < 10_000:
        raise ValueError("need n_draws >= 1e4 for a meaningful check")
    t0 = time.perf_counter()
    rs = np.random.default_rng(seed)
    failures: list[dict] = []
    rows = []
    for u in U_grid:
        e1 = rs.standard_normal(n_draws)
        e2 = rs.standard_normal(n_draws)
        xi_mid = np.sqrt(u * h) * e1
        xi_end = xi_mid + np.sqrt((1.0 - u) * h) * e2
        emp = np.cov(np.stack([xi_mid, xi_end]), bias=True)
        tgt = np.array([[u * h, u * h], [u * h, h]])
        for i in range(2):
            for j in range(2):
                se = _cov_se(tgt[i, i], tgt[j, j], tgt[i, j], n_draws)
                dev = abs(emp[i, j] - tgt[i, j])
                rows.append({"U": u, "entry": (i, j), "emp": emp[i, j],
                             "target": tgt[i, j], "dev_se": dev / se})
                if dev > SE_FACTOR * se:
                    failures.append(rows[-1])
    k = 3.0
    ts = np.asarray(bridge_times, dtype=float) + k
    draws = np.stack([np.concatenate(sample_bridge_increments(ts, h, rs, dim=1))
                      for _ in range(n_draws // 10)])
    gram_emp = (draws[:, :, None, 0] * draws[:, None, :, 0]).mean(axis=0)
    gram_tgt = (np.minimum.outer(ts, ts) - k) * h
    nb = draws.shape[0]
    for i in range(ts.size):
        for j in range(ts.size):
            se = _cov_se(gram_tgt[i, i], gram_tgt[j, j], gram_tgt[i, j], nb)
            dev = abs(gram_emp[i, j] - gram_tgt[i, j])
            rows.append({"bridge_entry": (i, j), "emp": gram_emp[i, j],
                         "target": gram_tgt[i, j], "dev_se": dev / se})
            if dev > SE_FACTOR * se:
                failures.append(rows[-1])
    return CheckReport(
        name="coupling_laws", passed=not failures,
        measured={"n_draws": n_draws, "max_dev_se": max(r["dev_se"] for r in rows)},
        tolerances={"se_factor": SE_FACTOR}, seed=seed,
        wall_time_s=time.perf_counter() - t0,
        counterexample=failures[0] if failures else None,
        notes="covariance entries accepted within 4 standard errors")


@dataclass(frozen=True)
class RateWindow:
    """Slope acceptance window for one labelled curve."""

    label: str
    t_lo: float
    t_hi: float
    slope_lo: float
    slope_hi: float


def rate_suite(curves: Sequence[BoundCurve], windows: Sequence[RateWindow]) -> CheckReport:
    """Fit log-log slopes of the given curves and check the declared windows."""
    t0 = time.perf_counter()
    by_label = {c.label: c for c in curves}
    rows, failures = [], []
    for wspec in windows:
        if wspec.label not in by_label:
            raise ValueError(f"no curve labelled {wspec.label!r}")
        c = by_label[wspec.label]
        slope = rate_fit_window_by_time(c.t_grid, c.values, wspec.t_lo, wspec.t_hi)
        ok = wspec.slope_lo <= slope <= wspec.slope_hi
        rows.append({"label": wspec.label, "slope": slope,
                     "window": [wspec.slope_lo, wspec.slope_hi], "passed": ok})
        if not ok:
            failures.append(rows[-1])
    return CheckReport(
        name="rate_suite", passed=not failures,
        measured={"rows": rows}, tolerances={},
        wall_time_s=time.perf_counter() - t0,
        counterexample=failures[0] if failures else None)
