"""Numba-compiled kernels; signatures mirror ``_numpy``."""

import math

import numba as nb
import numpy as np

from ._coeffs import PPND_A, PPND_B, PPND_C, PPND_D, PPND_E, PPND_F

MASK32 = np.uint64(0xFFFFFFFF)
PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
SH32 = np.uint64(32)
SH11 = np.uint64(11)
SH12 = np.uint64(12)
ONE = np.uint64(1)
TWO = np.uint64(2)
INV_2_53 = 1.0 / 9007199254740992.0
KAHAN_LANES = 256

# numpy's error model skips the zero-division checks that block vectorisation
_jit = nb.njit(cache=True, nogil=True, error_model="numpy")
# helpers are inlined at the numba level so callers' loops can vectorise
_inline = nb.njit(cache=True, nogil=True, error_model="numpy", inline="always")


@_inline
def _philox(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        n0 = (p1 >> SH32) ^ c1 ^ k0
        n1 = p1 & MASK32
        n2 = (p0 >> SH32) ^ c3 ^ k1
        n3 = p0 & MASK32
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


@_inline
def _horner(c, r):
    return (((((((c[7] * r + c[6]) * r + c[5]) * r + c[4]) * r + c[3]) * r + c[2]) * r
             + c[1]) * r + c[0])


@_inline
def _central(u):
    q = u - 0.5
    r = 0.180625 - q * q
    return q * _horner(PPND_A, r) / _horner(PPND_B, r)


@_jit
def _central_pass(u, out, idx, tv):
    # branch-free central pass (vectorises), then collect the tail entries
    n = u.shape[0]
    for i in range(n):
        out[i] = _central(u[i])
    m = 0
    for i in range(n):
        q = u[i] - 0.5
        idx[m] = i
        tv[m] = u[i] if q < 0.0 else 1.0 - u[i]
        m += abs(q) > 0.425
    return m


@_jit
def _tail_finish(s, idx, u, out):
    for j in range(s.shape[0]):
        r = s[j]
        if r <= 5.0:
            v = _horner(PPND_C, r - 1.6) / _horner(PPND_D, r - 1.6)
        else:
            v = _horner(PPND_E, r - 5.0) / _horner(PPND_F, r - 5.0)
        i = idx[j]
        out[i] = -v if u[i] < 0.5 else v


def _quantile_into(u, out):
    n = u.shape[0]
    idx = np.empty(n, dtype=np.int64)
    tv = np.empty(n)
    m = _central_pass(u, out, idx, tv)
    if m:
        # numpy's SIMD log is far faster than scalar libm and keeps both
        # backends on the same log implementation
        s = np.sqrt(-np.log(tv[:m]))
        _tail_finish(s, idx[:m], u, out)


def quantile(u):
    """Standard normal quantile of ``u`` in (0, 1), elementwise."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty(u.shape)
    _quantile_into(u.reshape(-1), out.reshape(-1))
    return out


@_jit
def philox4x32(c0, c1, c2, c3, k0, k1):
    return _philox(np.uint64(c0), np.uint64(c1), np.uint64(c2), np.uint64(c3),
                   np.uint64(k0) & MASK32, np.uint64(k1) & MASK32)


@_jit
def _fill_halves(k0, k1, lane, point, particles, b0, nblocks, out):
    # out[2j] and out[2j + 1] receive the two uniforms of block b0 + j
    n = particles.shape[0]
    for j in range(nblocks):
        blk = np.uint64(b0 + j)
        lo = out[2 * j]
        hi = out[2 * j + 1]
        for i in range(n):
            w0, w1, w2, w3 = _philox(blk, lane, particles[i], point, k0, k1)
            m1 = ((w0 << SH32) | w1) >> SH12
            m2 = ((w2 << SH32) | w3) >> SH12
            lo[i] = np.float64(m1 * TWO + ONE) * INV_2_53
            hi[i] = np.float64(m2 * TWO + ONE) * INV_2_53


def normals(k0, k1, lane, point, particles, start, count):
    particles = np.ascontiguousarray(particles, dtype=np.uint64)
    n = particles.shape[0]
    if count <= 0:
        return np.empty((0, n))
    b0 = start >> 1
    nblocks = ((start + count - 1) >> 1) - b0 + 1
    u = np.empty((2 * nblocks, n))
    _fill_halves(np.uint64(k0 & 0xFFFFFFFF), np.uint64(k1 & 0xFFFFFFFF), np.uint64(lane),
                 np.uint64(point), particles, np.int64(b0), np.int64(nblocks), u)
    z = np.empty_like(u)
    _quantile_into(u.reshape(-1), z.reshape(-1))
    off = start & 1
    return z[off:off + count]


@_jit
def _uniforms(k0, k1, lane, point, particles, start, count, out):
    for j in range(count):
        blk = np.uint64(start + j)
        row = out[j]
        for i in range(particles.shape[0]):
            w0, w1, _, _ = _philox(blk, lane, particles[i], point, k0, k1)
            m = ((w0 << SH32) | w1) >> SH11
            row[i] = np.float64(m) * INV_2_53


def uniforms(k0, k1, lane, point, particles, start, count):
    particles = np.ascontiguousarray(particles, dtype=np.uint64)
    out = np.empty((count, particles.shape[0]))
    _uniforms(np.uint64(k0 & 0xFFFFFFFF), np.uint64(k1 & 0xFFFFFFFF), np.uint64(lane),
              np.uint64(point), particles, np.int64(start), np.int64(count), out)
    return out


@_jit
def _coarsen(raw, refine, out):
    # raw is (nsteps, refine, d, n); sums run j = 0, 1, ... as in the numpy twin
    nsteps, _, d, n = raw.shape
    scale = math.sqrt(refine)
    for s in range(nsteps):
        for l in range(d):
            acc = out[s, l]
            for i in range(n):
                acc[i] = raw[s, 0, l, i]
            for j in range(1, refine):
                src = raw[s, j, l]
                for i in range(n):
                    acc[i] = acc[i] + src[i]
            for i in range(n):
                acc[i] = acc[i] / scale


def increments(k0, k1, lane, point, particles, step0, nsteps, d, refine):
    n = len(particles)
    raw = normals(k0, k1, lane, point, particles, step0 * refine * d, nsteps * refine * d)
    raw = raw.reshape(nsteps, refine, d, n)
    if refine == 1:
        return raw[:, 0]
    out = np.empty((nsteps, d, n))
    _coarsen(raw, np.int64(refine), out)
    return out


@_jit
def _advance(x, z, dts, s0, mu, a, tmp):
    # Euler-Maruyama with constant coefficients; operation order matches numpy
    d, n = x.shape
    for s in range(z.shape[0]):
        dt = dts[s0 + s]
        sdt = math.sqrt(dt)
        for k in range(d):
            row = tmp[k]
            for i in range(n):
                row[i] = 0.0
            for l in range(d):
                akl = a[k, l]
                zl = z[s, l]
                for i in range(n):
                    row[i] = row[i] + akl * zl[i]
            drift = mu[k] * dt
            xk = x[k]
            for i in range(n):
                row[i] = xk[i] + drift + row[i] * sdt
        for k in range(d):
            for i in range(n):
                x[k, i] = tmp[k, i]


def trace_constant(x0, particles, dts, mu, a, k0, k1, lane, point, refine):
    particles = np.ascontiguousarray(particles, dtype=np.uint64)
    x = np.array(x0, dtype=np.float64, order="C")
    dts = np.ascontiguousarray(dts, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    tmp = np.empty_like(x)
    d = x.shape[0]
    nsteps = dts.shape[0]
    batch = 64
    for s0 in range(0, nsteps, batch):
        nb_ = min(batch, nsteps - s0)
        z = np.ascontiguousarray(increments(k0, k1, lane, point, particles, s0, nb_, d, refine))
        _advance(x, z, dts, np.int64(s0), mu, a, tmp)
    return x


@_jit
def _cholesky_batch(m, tol, low, ok):
    n, d, _ = m.shape
    for p in range(n):
        scale = 0.0
        finite = True
        for i in range(d):
            for j in range(d):
                v = abs(m[p, i, j])
                if not np.isfinite(v):
                    finite = False
                elif v > scale:
                    scale = v
        good = finite
        thresh = tol * scale
        for j in range(d):
            s = m[p, j, j]
            for k in range(j):
                s = s - low[p, j, k] * low[p, j, k]
            if s < -thresh:
                good = False
            if s < 0.0:
                s = 0.0
            piv = math.sqrt(s)
            low[p, j, j] = piv
            for i in range(j + 1, d):
                r = m[p, i, j]
                for k in range(j):
                    r = r - low[p, i, k] * low[p, j, k]
                if piv > 0.0:
                    low[p, i, j] = r / piv
                else:
                    if abs(r) > thresh:
                        good = False
                    low[p, i, j] = 0.0
        ok[p] = good
        if not good:
            for i in range(d):
                for j in range(d):
                    low[p, i, j] = np.nan


def cholesky_batch(m, tol):
    m = np.ascontiguousarray(m, dtype=np.float64)
    low = np.zeros_like(m)
    ok = np.ones(m.shape[0], dtype=np.bool_)
    _cholesky_batch(m, float(tol), low, ok)
    return low, ok


@_jit
def _kahan_sum(a, lanes):
    n = a.shape[0]
    s = np.zeros(lanes)
    c = np.zeros(lanes)
    for idx in range(n):
        lane = idx % lanes
        y = a[idx] - c[lane]
        t = s[lane] + y
        c[lane] = (t - s[lane]) - y
        s[lane] = t
    total = 0.0
    comp = 0.0
    for lane in range(lanes):
        for h in range(2):
            v = s[lane] if h == 0 else -c[lane]
            y = v - comp
            t = total + y
            comp = (t - total) - y
            total = t
    return total


def kahan_sum(values):
    return float(_kahan_sum(np.ascontiguousarray(values, dtype=np.float64), KAHAN_LANES))


@_jit
def _thomas(lower, diag, upper, rhs, out):
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]


def thomas(lower, diag, upper, rhs):
    out = np.empty(diag.shape[0])
    _thomas(np.ascontiguousarray(lower, dtype=np.float64), np.ascontiguousarray(diag, dtype=np.float64),
            np.ascontiguousarray(upper, dtype=np.float64), np.ascontiguousarray(rhs, dtype=np.float64), out)
    return out
