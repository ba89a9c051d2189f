"""Pure-numpy implementations of the hot kernels.

Every function here has a twin in ``_numba`` with the same signature and the
same floating-point operation order, so the two backends agree to the last
bit.  The Gaussian transform's tail branch calls numpy's ``log`` in both
backends for that reason.  ``thomas`` is the exception: here it defers to
LAPACK's banded solver instead of looping in Python.
"""

import math

import numpy as np
from scipy.linalg import solve_banded

from ._coeffs import PPND_A, PPND_B, PPND_C, PPND_D, PPND_E, PPND_F

MASK32 = np.uint64(0xFFFFFFFF)
PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
INV_2_53 = 1.0 / 9007199254740992.0
KAHAN_LANES = 256


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block function on uint64 arrays holding 32-bit words."""
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = int(k0) & 0xFFFFFFFF
    k1 = int(k1) & 0xFFFFFFFF
    for _ in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> np.uint64(32)) ^ c1 ^ np.uint64(k0),
            p1 & MASK32,
            (p0 >> np.uint64(32)) ^ c3 ^ np.uint64(k1),
            p0 & MASK32,
        )
        k0 = (k0 + PHILOX_W0) & 0xFFFFFFFF
        k1 = (k1 + PHILOX_W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _horner(c, r):
    return (((((((c[7] * r + c[6]) * r + c[5]) * r + c[4]) * r + c[3]) * r + c[2]) * r
             + c[1]) * r + c[0])


def quantile(u):
    """Standard normal quantile of ``u`` in (0, 1), elementwise."""
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    r = 0.180625 - q * q
    out = q * _horner(PPND_A, r) / _horner(PPND_B, r)
    tail = np.abs(q) > 0.425
    if tail.any():
        ut = u[tail]
        s = np.sqrt(-np.log(np.where(ut < 0.5, ut, 1.0 - ut)))
        near = s <= 5.0
        v = np.empty_like(s)
        sn = s[near] - 1.6
        v[near] = _horner(PPND_C, sn) / _horner(PPND_D, sn)
        sf = s[~near] - 5.0
        v[~near] = _horner(PPND_E, sf) / _horner(PPND_F, sf)
        out[tail] = np.where(ut < 0.5, -v, v)
    return out


def _halves(w0, w1, w2, w3):
    # 52-bit midpoints (2m + 1) / 2^53 never hit 0 or 1 and are exact in float64
    m1 = ((w0 << np.uint64(32)) | w1) >> np.uint64(12)
    m2 = ((w2 << np.uint64(32)) | w3) >> np.uint64(12)
    u1 = (m1 * np.uint64(2) + np.uint64(1)).astype(np.float64) * INV_2_53
    u2 = (m2 * np.uint64(2) + np.uint64(1)).astype(np.float64) * INV_2_53
    return u1, u2


def normals(k0, k1, lane, point, particles, start, count):
    """Standard normals with counter indices ``start .. start+count-1``.

    Returns an array of shape ``(count, len(particles))``.  Normal ``c`` of a
    stream is the quantile of uniform half ``c & 1`` of Philox block
    ``c >> 1``.
    """
    particles = np.asarray(particles, dtype=np.uint64)
    n = particles.shape[0]
    if count <= 0:
        return np.empty((0, n))
    b0 = start >> 1
    b1 = (start + count - 1) >> 1
    blocks = np.arange(b0, b1 + 1, dtype=np.uint64)[:, None]
    shape = (blocks.shape[0], n)
    w = philox4x32(
        np.broadcast_to(blocks, shape),
        np.full(shape, lane, dtype=np.uint64),
        np.broadcast_to(particles[None, :], shape),
        np.full(shape, point, dtype=np.uint64),
        k0,
        k1,
    )
    u1, u2 = _halves(*w)
    pairs = np.empty((2 * shape[0], n))
    pairs[0::2] = quantile(u1)
    pairs[1::2] = quantile(u2)
    off = start & 1
    return pairs[off:off + count]


def uniforms(k0, k1, lane, point, particles, start, count):
    """Uniforms on [0, 1), one per Philox block, shape ``(count, n)``."""
    particles = np.asarray(particles, dtype=np.uint64)
    n = particles.shape[0]
    blocks = np.arange(start, start + count, dtype=np.uint64)[:, None]
    shape = (count, n)
    w0, w1, _, _ = philox4x32(
        np.broadcast_to(blocks, shape),
        np.full(shape, lane, dtype=np.uint64),
        np.broadcast_to(particles[None, :], shape),
        np.full(shape, point, dtype=np.uint64),
        k0,
        k1,
    )
    m = ((w0 << np.uint64(32)) | w1) >> np.uint64(11)
    return m.astype(np.float64) * INV_2_53


def increments(k0, k1, lane, point, particles, step0, nsteps, d, refine):
    """Per-step Gaussian vectors, shape ``(nsteps, d, n)``.

    With ``refine > 1`` each step's vector is the normalised sum of
    ``refine`` consecutive raw vectors, so a solve at step ``m*h`` shares its
    Brownian path with a solve at step ``h``.
    """
    n = len(particles)
    raw = normals(k0, k1, lane, point, particles, step0 * refine * d, nsteps * refine * d)
    raw = raw.reshape(nsteps, refine, d, n)
    if refine == 1:
        return raw[:, 0]
    z = raw[:, 0].copy()
    for j in range(1, refine):
        z = z + raw[:, j]
    return z / math.sqrt(refine)


def trace_constant(x0, particles, dts, mu, a, k0, k1, lane, point, refine):
    """Euler-Maruyama paths for coefficients frozen to constants.

    ``x0`` holds start positions with shape ``(d, n)``; returns endpoints of
    the same shape.
    """
    d = x0.shape[0]
    n = len(particles)
    x = np.array(x0, dtype=np.float64)
    nsteps = dts.shape[0]
    batch = 64
    for s0 in range(0, nsteps, batch):
        nb = min(batch, nsteps - s0)
        z = increments(k0, k1, lane, point, particles, s0, nb, d, refine)
        for s in range(nb):
            dt = dts[s0 + s]
            sdt = math.sqrt(dt)
            zs = z[s]
            new = np.empty_like(x)
            for k in range(d):
                inc = np.zeros(n)
                for l in range(d):
                    inc = inc + a[k, l] * zs[l]
                new[k] = x[k] + mu[k] * dt + inc * sdt
            x = new
    return x


def cholesky_batch(m, tol):
    """Lower-triangular factors of a stack of symmetric matrices.

    ``m`` has shape ``(n, d, d)``.  Pivots in ``[-tol*|m|_max, 0)`` are clamped
    to zero; anything more negative marks the matrix as failed and its factor
    is filled with NaN.
    """
    n, d, _ = m.shape
    low = np.zeros_like(m, dtype=np.float64)
    ok = np.ones(n, dtype=np.bool_)
    scale = np.abs(m.reshape(n, d * d)).max(axis=1)
    thresh = tol * scale
    for j in range(d):
        s = m[:, j, j].astype(np.float64)
        for k in range(j):
            s = s - low[:, j, k] * low[:, j, k]
        ok &= ~(s < -thresh)
        s = np.where(s < 0.0, 0.0, s)
        piv = np.sqrt(s)
        low[:, j, j] = piv
        pos = piv > 0.0
        safe = np.where(pos, piv, 1.0)
        for i in range(j + 1, d):
            r = m[:, i, j].astype(np.float64)
            for k in range(j):
                r = r - low[:, i, k] * low[:, j, k]
            ok &= pos | ~(np.abs(r) > thresh)
            low[:, i, j] = np.where(pos, r / safe, 0.0)
    ok &= np.isfinite(scale)
    low[~ok] = np.nan
    return low, ok


def kahan_sum(values):
    """Compensated sum with a fixed lane layout (independent of chunking)."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    n = a.shape[0]
    lanes = KAHAN_LANES
    rows = n // lanes
    s = np.zeros(lanes)
    c = np.zeros(lanes)
    for r in range(rows):
        y = a[r * lanes:(r + 1) * lanes] - c
        t = s + y
        c = (t - s) - y
        s = t
    rem = n - rows * lanes
    if rem:
        y = a[rows * lanes:] - c[:rem]
        t = s[:rem] + y
        c[:rem] = (t - s[:rem]) - y
        s[:rem] = t
    total = 0.0
    comp = 0.0
    for lane in range(lanes):
        for v in (s[lane], -c[lane]):
            y = v - comp
            t = total + y
            comp = (t - total) - y
            total = t
    return float(total)


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.shape[0]
    ab = np.empty((3, n))
    ab[0, 1:] = upper[:-1]
    ab[0, 0] = 0.0
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)
