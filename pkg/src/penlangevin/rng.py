"""Counter-based random streams for reproducible parallel simulation.

Every random variate consumed by the samplers is a pure function of
``(master_seed, path, step, draw, index)``.  A Philox-4x32-10 block cipher
keyed by the master seed maps that tuple to 128 random bits; normals are
produced with Marsaglia's polar method, whose accept/reject decision is
exact in integer arithmetic.  Consequences:

* replaying a configuration reproduces every state bit-for-bit;
* path updates can run in any order (or on any number of threads)
  without changing the result;
* enlarging an ensemble leaves the noise of existing paths untouched.

This module holds the vectorised numpy implementation, used by the
reference steppers.  ``_kernels`` contains a scalar numba twin that walks
the identical streams (the only permitted divergence is the last ulp of
``log``/``sqrt``, which cannot flip an accept/reject decision).
"""

from __future__ import annotations

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_MASK64 = (1 << 64) - 1

# Philox-4x32 round constants (Salmon et al. counter-based RNG family).
PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint32(0x9E3779B9)
PHILOX_W1 = np.uint32(0xBB67AE85)

# Draw-lane ids; each (step, draw) pair owns an independent block range.
DRAW_NORMAL = 0
DRAW_UNIFORM = 1
DRAW_NORMAL_AUX = 2

_INV_2_53 = 1.0 / 9007199254740992.0


def derive_key(master_seed: int) -> tuple[int, int]:
    """Expand a 64-bit master seed into the two 32-bit Philox key words.

    Uses one splitmix64 step so that nearby seeds give unrelated keys.
    """
    z = (int(master_seed) + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return int(z & 0xFFFFFFFF), int(z >> 32)


def _philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Vectorised Philox-4x32-10.  Inputs are uint32 arrays (broadcastable)."""
    c0 = np.asarray(c0, dtype=np.uint32)
    c1 = np.asarray(c1, dtype=np.uint32)
    c2 = np.asarray(c2, dtype=np.uint32)
    c3 = np.asarray(c3, dtype=np.uint32)
    k0 = int(k0)
    k1 = int(k1)
    for _ in range(10):
        p0 = PHILOX_M0 * c0.astype(np.uint64)
        p1 = PHILOX_M1 * c2.astype(np.uint64)
        h0 = (p0 >> np.uint64(32)).astype(np.uint32)
        l0 = (p0 & _MASK32).astype(np.uint32)
        h1 = (p1 >> np.uint64(32)).astype(np.uint32)
        l1 = (p1 & _MASK32).astype(np.uint32)
        c0, c1, c2, c3 = h1 ^ c1 ^ np.uint32(k0), l1, h0 ^ c3 ^ np.uint32(k1), l0
        k0 = (k0 + 0x9E3779B9) & 0xFFFFFFFF
        k1 = (k1 + 0xBB67AE85) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _u53(a, b):
    """Map two uint32 words to a double in (0, 1] with 53 random bits."""
    x = (a.astype(np.uint64) << np.uint64(21)) ^ (b.astype(np.uint64) >> np.uint64(11))
    x &= np.uint64((1 << 53) - 1)
    return (x.astype(np.float64) + 1.0) * _INV_2_53


def _block_words(paths, blocks, draw: int, attempt, key: tuple[int, int]):
    blocks = np.asarray(blocks, dtype=np.uint64)
    c1 = (blocks & _MASK32).astype(np.uint32)
    c3 = (blocks >> np.uint64(32)).astype(np.uint32)
    c2 = np.uint32(draw) | (np.asarray(attempt, dtype=np.uint32) << np.uint32(20))
    return _philox4x32(paths, c1, c2, c3, key[0], key[1])


def uniform_pair(paths, blocks, draw: int, key: tuple[int, int]):
    """Two independent Unif(0,1] variates per (path, block) cell."""
    c0, c1, c2, c3 = _block_words(paths, blocks, draw, 0, key)
    return _u53(c0, c1), _u53(c2, c3)


def normal_pair(paths, blocks, draw: int, key: tuple[int, int]):
    """Two independent N(0,1) variates per (path, block) cell (polar method).

    Rejected proposals retry with an incremented attempt counter, so the
    result stays a pure function of (path, block, draw).
    """
    paths = np.broadcast_arrays(np.asarray(paths, dtype=np.uint32),
                                np.asarray(blocks, dtype=np.uint64))[0]
    blocks = np.broadcast_to(np.asarray(blocks, dtype=np.uint64), paths.shape)
    z0 = np.empty(paths.shape, dtype=np.float64)
    z1 = np.empty(paths.shape, dtype=np.float64)
    pending = np.ones(paths.shape, dtype=bool)
    attempt = 0
    while pending.any():
        c0, c1, c2, c3 = _block_words(paths[pending], blocks[pending], draw, attempt, key)
        v1 = 2.0 * _u53(c0, c1) - 1.0
        v2 = 2.0 * _u53(c2, c3) - 1.0
        s = v1 * v1 + v2 * v2
        ok = (s > 0.0) & (s < 1.0)
        f = np.zeros_like(s)
        f[ok] = np.sqrt(-2.0 * np.log(s[ok]) / s[ok])
        idx = np.flatnonzero(pending)
        accepted = idx[ok]
        z0.flat[accepted] = (v1 * f)[ok]
        z1.flat[accepted] = (v2 * f)[ok]
        pending.flat[idx[~ok]] = True
        pending.flat[accepted] = False
        attempt += 1
        if attempt > 64:  # P(reject)^64 ~ 1e-42; loud guard against stream bugs
            raise RuntimeError("polar sampler failed to accept after 64 attempts")
    return z0, z1


def normal_matrix(n_paths: int, dim: int, step: int, draw: int,
                  key: tuple[int, int], step_stride: int | None = None) -> np.ndarray:
    """(n_paths, dim) standard normals for one step of one draw lane.

    Component ``j`` of path ``i`` is pair-member ``(step*dim + j) & 1`` of
    Philox block ``(step*dim + j) >> 1``; consecutive indices share a block,
    so no half-pair is wasted for odd ``dim``.  ``step_stride`` overrides the
    per-step index stride (used by lanes that consume ``stride`` normals per
    step, e.g. the R+1 bridge vectors).
    """
    stride = dim if step_stride is None else step_stride
    q = np.uint64(step) * np.uint64(stride) + np.arange(dim, dtype=np.uint64)
    blocks = q >> np.uint64(1)
    members = (q & np.uint64(1)).astype(np.intp)
    paths = np.arange(n_paths, dtype=np.uint32)[:, None]
    z0, z1 = normal_pair(paths, blocks[None, :], draw, key)
    return np.where(members[None, :] == 0, z0, z1)


def uniform_matrix(n_paths: int, count: int, step: int, draw: int,
                   key: tuple[int, int]) -> np.ndarray:
    """(n_paths, count) Unif(0,1] variates; one Philox block per variate."""
    blocks = np.uint64(step) * np.uint64(count) + np.arange(count, dtype=np.uint64)
    paths = np.arange(n_paths, dtype=np.uint32)[:, None]
    u, _ = uniform_pair(paths, blocks[None, :], draw, key)
    return u
