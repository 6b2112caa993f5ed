"""Numba kernels: fused time-stepping loops on counter-based noise.

Scalar twins of the stream functions in ``rng`` (same Philox blocks, same
polar accept/reject decisions) fused with the drift updates, parallelised
over paths with ``prange``.  No cross-path reduction happens inside a
kernel, so results are bitwise independent of the thread count.

Potential dispatch codes: 0 gaussian(H, centre), 1 cubic(x*), 2 power(a, x*),
3 pseudo-Huber(b, x*), 4 separable power(a, w, x*).
Schedule dispatch codes: 0 zero, 1 constant(c), 2 inverse-linear 1/(A+2t),
3 shifted-inverse (1-q)/(t+A).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange, uint32, uint64, float64

POT_GAUSSIAN = 0
POT_CUBIC = 1
POT_POWER = 2
POT_PSEUDO_HUBER = 3
POT_SEP_POWER = 4

SCHED_ZERO = 0
SCHED_CONSTANT = 1
SCHED_INV_LINEAR = 2
SCHED_SHIFTED_INV = 3

_JIT = dict(cache=True, fastmath=False)


@njit(inline="always")
def _philox4x32(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = uint64(0xD2511F53) * uint64(c0)
        p1 = uint64(0xCD9E8D57) * uint64(c2)
        h0 = uint32(p0 >> uint64(32))
        l0 = uint32(p0 & uint64(0xFFFFFFFF))
        h1 = uint32(p1 >> uint64(32))
        l1 = uint32(p1 & uint64(0xFFFFFFFF))
        c0 = uint32(h1 ^ uint32(c1) ^ uint32(k0))
        c1 = l1
        c2 = uint32(h0 ^ uint32(c3) ^ uint32(k1))
        c3 = l0
        k0 = uint32(uint32(k0) + uint32(0x9E3779B9))
        k1 = uint32(uint32(k1) + uint32(0xBB67AE85))
    return c0, c1, c2, c3


@njit(inline="always")
def _u53(a, b):
    x = (uint64(a) << uint64(21)) ^ (uint64(b) >> uint64(11))
    return (float64(x & uint64((1 << 53) - 1)) + 1.0) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _normal_pair(path, block, draw, k0, k1):
    c1w = uint32(block & uint64(0xFFFFFFFF))
    c3w = uint32(block >> uint64(32))
    attempt = uint32(0)
    while True:
        c2w = uint32(uint32(draw) | (attempt << uint32(20)))
        r0, r1, r2, r3 = _philox4x32(uint32(path), c1w, c2w, c3w, k0, k1)
        v1 = 2.0 * _u53(r0, r1) - 1.0
        v2 = 2.0 * _u53(r2, r3) - 1.0
        s = v1 * v1 + v2 * v2
        if 0.0 < s < 1.0:
            f = np.sqrt(-2.0 * np.log(s) / s)
            return v1 * f, v2 * f
        attempt = uint32(attempt + uint32(1))


@njit(inline="always")
def _uniform(path, block, draw, k0, k1):
    c1w = uint32(block & uint64(0xFFFFFFFF))
    c3w = uint32(block >> uint64(32))
    r0, r1, r2, r3 = _philox4x32(uint32(path), c1w, uint32(draw), c3w, k0, k1)
    return _u53(r0, r1)


@njit(inline="always")
def _normal_at(path, q, draw, k0, k1):
    """Normal with global lane index q (block q>>1, pair member q&1)."""
    z0, z1 = _normal_pair(path, q >> uint64(1), draw, k0, k1)
    if (q & uint64(1)) == uint64(0):
        return z0
    return z1


@njit(inline="always")
def _alpha(code, p0, p1, t):
    if code == SCHED_ZERO:
        return 0.0
    if code == SCHED_CONSTANT:
        return p0
    if code == SCHED_INV_LINEAR:
        return 1.0 / (p0 + 2.0 * t)
    return (1.0 - p1) / (t + p0)  # SCHED_SHIFTED_INV


@njit(inline="always")
def _grad_into(out, x, code, H, xstar, w, a, b):
    p = x.shape[0]
    if code == POT_GAUSSIAN:
        for r in range(p):
            acc = 0.0
            for c in range(p):
                acc += H[r, c] * (x[c] - xstar[c])
            out[r] = acc
        return
    nrm2 = 0.0
    for r in range(p):
        out[r] = x[r] - xstar[r]
        nrm2 += out[r] * out[r]
    if code == POT_CUBIC:
        coef = 3.0 * np.sqrt(nrm2)
        for r in range(p):
            out[r] *= coef
    elif code == POT_POWER:
        coef = 0.0 if nrm2 == 0.0 else a * nrm2 ** (0.5 * (a - 2.0))
        for r in range(p):
            out[r] *= coef
    elif code == POT_PSEUDO_HUBER:
        coef = 1.0 / np.sqrt(nrm2 + b * b)
        for r in range(p):
            out[r] *= coef
    else:  # POT_SEP_POWER
        for r in range(p):
            u = out[r]
            au = abs(u)
            out[r] = 0.0 if au == 0.0 else a * w[r] * au ** (a - 2.0) * u


@njit(inline="always")
def _grad_1d(x, code, h00, xs, w0, a, b):
    u = x - xs
    if code == POT_GAUSSIAN:
        return h00 * u
    if code == POT_CUBIC:
        return 3.0 * abs(u) * u
    if code == POT_POWER:
        au = abs(u)
        return 0.0 if au == 0.0 else a * au ** (a - 2.0) * u
    if code == POT_PSEUDO_HUBER:
        return u / np.sqrt(u * u + b * b)
    au = abs(u)
    return 0.0 if au == 0.0 else a * w0 * au ** (a - 2.0) * u


@njit(parallel=True, **_JIT)
def chain_euler_1d(states, step0, n_steps, h, tau,
                   scode, sp0, sp1, pcode, h00, xs, w0, a, b, k0, k1):
    """Scalar specialization of chain_euler (hot path for long 1-D runs)."""
    n = states.shape[0]
    sq = np.sqrt(2.0 * tau * h)
    for i in prange(n):
        x = states[i, 0]
        zc = 0.0
        have = False
        for s in range(n_steps):
            q = uint64(step0 + s)
            if (q & uint64(1)) == uint64(0):
                z, zc = _normal_pair(uint32(i), q >> uint64(1), 0, k0, k1)
                have = True
            else:
                if have:
                    z = zc
                else:
                    z0, z = _normal_pair(uint32(i), q >> uint64(1), 0, k0, k1)
            al = _alpha(scode, sp0, sp1, float64(step0 + s) * h)
            g = _grad_1d(x, pcode, h00, xs, w0, a, b)
            x = x - h * (g + al * x) + sq * z
        states[i, 0] = x


@njit(parallel=True, **_JIT)
def chain_euler(states, step0, n_steps, h, tau,
                scode, sp0, sp1, pcode, H, xstar, w, a, b, k0, k1):
    """In-place Euler sweep: x <- x - h (grad f(x) + alpha(t) x) + sqrt(2 tau h) z."""
    n, p = states.shape
    sq = np.sqrt(2.0 * tau * h)
    for i in prange(n):
        x = states[i].copy()
        g = np.empty(p)
        for s in range(n_steps):
            step = step0 + s
            al = _alpha(scode, sp0, sp1, float64(step) * h)
            _grad_into(g, x, pcode, H, xstar, w, a, b)
            for r in range(p):
                q = uint64(step) * uint64(p) + uint64(r)
                z = _normal_at(uint32(i), q, 0, k0, k1)
                x[r] = x[r] - h * (g[r] + al * x[r]) + sq * z
        states[i] = x


@njit(parallel=True, **_JIT)
def chain_rlmc(states, step0, n_steps, h, pcode, H, xstar, w, a, b, k0, k1):
    """In-place randomized-midpoint sweep (uniform U per path per step)."""
    n, p = states.shape
    sqrt2 = np.sqrt(2.0)
    for i in prange(n):
        x = states[i].copy()
        g = np.empty(p)
        gz = np.empty(p)
        zeta = np.empty(p)
        xi_end = np.empty(p)
        for s in range(n_steps):
            step = uint64(step0 + s)
            u = _uniform(uint32(i), step, 1, k0, k1)
            suh = np.sqrt(u * h)
            s1h = np.sqrt((1.0 - u) * h)
            _grad_into(g, x, pcode, H, xstar, w, a, b)
            for r in range(p):
                q = step * uint64(p) + uint64(r)
                e1 = _normal_at(uint32(i), q, 0, k0, k1)
                e2 = _normal_at(uint32(i), q, 2, k0, k1)
                xi_mid = suh * e1
                zeta[r] = x[r] - u * h * g[r] + sqrt2 * xi_mid
                xi_end[r] = xi_mid + s1h * e2
            _grad_into(gz, zeta, pcode, H, xstar, w, a, b)
            for r in range(p):
                x[r] = x[r] - h * gz[r] + sqrt2 * xi_end[r]
        states[i] = x


@njit(parallel=True, **_JIT)
def chain_midpoint_pld(states, step0, n_steps, h, scode, sp0, sp1, alpha_end,
                       pcode, H, xstar, w, a, b, k0, k1):
    """Randomized-midpoint sweep for the penalized drift grad f + alpha(t) x.

    The midpoint stage freezes the penalty at the step start alpha(k h); the
    final stage uses alpha(T h) when ``alpha_end`` is true, else alpha(k h).
    """
    n, p = states.shape
    sqrt2 = np.sqrt(2.0)
    for i in prange(n):
        x = states[i].copy()
        g = np.empty(p)
        zeta = np.empty(p)
        gz = np.empty(p)
        xi_end = np.empty(p)
        for s in range(n_steps):
            step = uint64(step0 + s)
            kphys = float64(step0 + s)
            u = _uniform(uint32(i), step, 1, k0, k1)
            al_k = _alpha(scode, sp0, sp1, kphys * h)
            al_T = _alpha(scode, sp0, sp1, (kphys + u) * h) if alpha_end else al_k
            suh = np.sqrt(u * h)
            s1h = np.sqrt((1.0 - u) * h)
            _grad_into(g, x, pcode, H, xstar, w, a, b)
            for r in range(p):
                q = step * uint64(p) + uint64(r)
                e1 = _normal_at(uint32(i), q, 0, k0, k1)
                e2 = _normal_at(uint32(i), q, 2, k0, k1)
                xi_mid = suh * e1
                zeta[r] = x[r] - u * h * (g[r] + al_k * x[r]) + sqrt2 * xi_mid
                xi_end[r] = xi_mid + s1h * e2
            _grad_into(gz, zeta, pcode, H, xstar, w, a, b)
            for r in range(p):
                x[r] = x[r] - h * (gz[r] + al_T * zeta[r]) + sqrt2 * xi_end[r]
        states[i] = x


@njit(parallel=True, **_JIT)
def chain_rlmc_parallel(states, step0, n_steps, h, R,
                        pcode, H, xstar, w, a, b, k0, k1):
    """R-midpoint sweep; the R+1 noise vectors realise one Wiener bridge."""
    n, p = states.shape
    sqrt2 = np.sqrt(2.0)
    for i in prange(n):
        x = states[i].copy()
        g = np.empty(p)
        gz = np.empty(p)
        gsum = np.empty(p)
        ts = np.empty(R + 1)
        order = np.empty(R + 1, dtype=np.int64)
        xi = np.empty((R + 1, p))
        zeta = np.empty(p)
        for s in range(n_steps):
            step = uint64(step0 + s)
            for r_ in range(R):
                ts[r_] = _uniform(uint32(i), step * uint64(R) + uint64(r_), 1, k0, k1)
            ts[R] = 1.0
            order[:] = np.argsort(ts[: R + 1])
            # accumulate Wiener increments in sorted-time order
            prev = 0.0
            for jj in range(R + 1):
                o = order[jj]
                dt_ = ts[o] - prev
                sd = np.sqrt(dt_ * h) if dt_ > 0.0 else 0.0
                base = step * uint64((R + 1) * p) + uint64(jj) * uint64(p)
                for r in range(p):
                    z = _normal_at(uint32(i), base + uint64(r), 0, k0, k1)
                    if jj == 0:
                        xi[o, r] = sd * z
                    else:
                        xi[o, r] = xi[order[jj - 1], r] + sd * z
                prev = ts[o]
            _grad_into(g, x, pcode, H, xstar, w, a, b)
            for r in range(p):
                gsum[r] = 0.0
            for r_ in range(R):
                for r in range(p):
                    zeta[r] = x[r] - ts[r_] * h * g[r] + sqrt2 * xi[r_, r]
                _grad_into(gz, zeta, pcode, H, xstar, w, a, b)
                for r in range(p):
                    gsum[r] += gz[r]
            for r in range(p):
                x[r] = x[r] - (h / R) * gsum[r] + sqrt2 * xi[R, r]
        states[i] = x


@njit(**_JIT)
def pgf_rk4(x0, t0, dt, n_steps, scode, sp0, sp1,
            pcode, H, xstar, w, a, b, record_every, out_t, out_x):
    """Classical RK4 on dx/dt = -(grad f(x) + alpha(t) x); records periodically.

    Returns the number of records written, or -1 on divergence.
    """
    p = x0.shape[0]
    x = x0.copy()
    k1v = np.empty(p)
    k2v = np.empty(p)
    k3v = np.empty(p)
    k4v = np.empty(p)
    tmp = np.empty(p)
    lim = 0.0
    for r in range(p):
        lim += xstar[r] * xstar[r]
    lim = 1e6 * (1.0 + np.sqrt(lim))
    nrec = 0
    out_t[nrec] = t0
    out_x[nrec] = x
    nrec += 1
    for s in range(n_steps):
        t = t0 + s * dt
        al1 = _alpha(scode, sp0, sp1, t)
        al2 = _alpha(scode, sp0, sp1, t + 0.5 * dt)
        al4 = _alpha(scode, sp0, sp1, t + dt)
        _grad_into(k1v, x, pcode, H, xstar, w, a, b)
        for r in range(p):
            k1v[r] = -(k1v[r] + al1 * x[r])
            tmp[r] = x[r] + 0.5 * dt * k1v[r]
        _grad_into(k2v, tmp, pcode, H, xstar, w, a, b)
        for r in range(p):
            k2v[r] = -(k2v[r] + al2 * tmp[r])
            tmp[r] = x[r] + 0.5 * dt * k2v[r]
        _grad_into(k3v, tmp, pcode, H, xstar, w, a, b)
        for r in range(p):
            k3v[r] = -(k3v[r] + al2 * tmp[r])
            tmp[r] = x[r] + dt * k3v[r]
        _grad_into(k4v, tmp, pcode, H, xstar, w, a, b)
        big = 0.0
        for r in range(p):
            k4v[r] = -(k4v[r] + al4 * tmp[r])
            x[r] = x[r] + (dt / 6.0) * (k1v[r] + 2.0 * k2v[r] + 2.0 * k3v[r] + k4v[r])
            d = x[r] - xstar[r]
            big += d * d
        if not np.isfinite(big) or np.sqrt(big) > lim:
            return -1
        if (s + 1) % record_every == 0 or s == n_steps - 1:
            out_t[nrec] = t + dt
            out_x[nrec] = x
            nrec += 1
    return nrec
