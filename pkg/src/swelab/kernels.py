"""Hot numeric kernels, each with a numba loop version and a numpy version.

The numba versions are compiled lazily on first use.  ``backend=None`` picks
numba when it is installed and not disabled through ``SWELAB_DISABLE_NUMBA``;
``backend="numpy"`` / ``backend="numba"`` force a path (used by the tests and
the benchmark to compare both).
"""

import math

import numpy as np

from . import _accel

__all__ = [
    "cone_covariance_numpy",
    "cone_covariance_matrix",
    "counter_normals",
    "pair_band_scan",
    "resolve_backend",
]


def resolve_backend(backend=None):
    if backend is None:
        return "numba" if _accel.NUMBA_AVAILABLE else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not _accel.NUMBA_INSTALLED:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


_COMPILED = {}


def _compiled(name, func, **opts):
    fn = _COMPILED.get(name)
    if fn is None:
        import numba

        fn = numba.njit(cache=True, **opts)(func)
        _COMPILED[name] = fn
    return fn


# ---------------------------------------------------------------------------
# Light-cone covariance
# ---------------------------------------------------------------------------
#
# Cov(u(t_a, x_a), u(t_b, x_b)) restricted to the time band [lo, hi) equals
#   1/4 * int_{s_lo}^{s_hi} E(slice_a(s), slice_b(s)) ds
# with E(.) the Riesz energy of two segments.  Two of its four terms have
# arguments linear in s with slope +-2, the other two are constant.
# sign(u)|u|^(3-beta)/(3-beta) is a global C^1 antiderivative of |u|^(2-beta),
# so no splitting at roots is needed.


def _spow(u, q):
    return np.sign(u) * np.abs(u) ** q


def cone_covariance_numpy(ta, xa, tb, xb, lo, hi, beta):
    """Vectorized cone covariance; all arguments broadcast."""
    ta, xa, tb, xb, lo, hi = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (ta, xa, tb, xb, lo, hi))
    )
    p = 2.0 - beta
    q = 3.0 - beta
    s_lo = np.maximum(lo, 0.0)
    s_hi = np.minimum(np.minimum(ta, tb), hi)
    live = s_hi > s_lo
    s_hi = np.where(live, s_hi, s_lo)
    a1 = (xb - tb) - (xa + ta)
    a2 = (xb + tb) - (xa - ta)
    k1 = np.abs((xb - tb) - (xa - ta))
    k2 = np.abs((xb + tb) - (xa + ta))
    moving = (
        _spow(a1 + 2.0 * s_hi, q)
        - _spow(a1 + 2.0 * s_lo, q)
        + _spow(a2 - 2.0 * s_lo, q)
        - _spow(a2 - 2.0 * s_hi, q)
    ) / (2.0 * q)
    fixed = (k1**p + k2**p) * (s_hi - s_lo)
    out = 0.25 * (moving - fixed) / (p * (p - 1.0))
    return np.where(live, out, 0.0)


def _cone_matrix_numpy(t, x, lo, hi, beta):
    return cone_covariance_numpy(t[:, None], x[:, None], t[None, :], x[None, :], lo, hi, beta)


def _cone_matrix_loops(t, x, lo, hi, beta, out):
    n = t.shape[0]
    p = 2.0 - beta
    q = 3.0 - beta
    norm = 0.25 / (p * (p - 1.0))
    s_lo = lo if lo > 0.0 else 0.0
    for i in range(n):
        ta = t[i]
        xa = x[i]
        for j in range(i, n):
            tb = t[j]
            xb = x[j]
            s_hi = ta if ta < tb else tb
            if hi < s_hi:
                s_hi = hi
            if s_hi <= s_lo:
                out[i, j] = 0.0
                out[j, i] = 0.0
                continue
            a1 = (xb - tb) - (xa + ta)
            a2 = (xb + tb) - (xa - ta)
            k1 = abs((xb - tb) - (xa - ta))
            k2 = abs((xb + tb) - (xa + ta))
            u = a1 + 2.0 * s_hi
            g = math.copysign(abs(u) ** q, u)
            u = a1 + 2.0 * s_lo
            g -= math.copysign(abs(u) ** q, u)
            u = a2 - 2.0 * s_lo
            g += math.copysign(abs(u) ** q, u)
            u = a2 - 2.0 * s_hi
            g -= math.copysign(abs(u) ** q, u)
            val = norm * (g / (2.0 * q) - (k1**p + k2**p) * (s_hi - s_lo))
            out[i, j] = val
            out[j, i] = val


def cone_covariance_matrix(t, x, lo, hi, beta, backend=None):
    """Covariance matrix of u at apexes (t[i], x[i]) under a shared time band."""
    t = np.ascontiguousarray(t, dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    hi = math.inf if hi is None else float(hi)
    lo = 0.0 if lo is None else float(lo)
    if resolve_backend(backend) == "numpy":
        return _cone_matrix_numpy(t, x, lo, hi, float(beta))
    out = np.empty((t.shape[0], t.shape[0]))
    _compiled("cone", _cone_matrix_loops)(t, x, lo, hi, float(beta), out)
    return out


# ---------------------------------------------------------------------------
# Counter-based normals
# ---------------------------------------------------------------------------
#
# u64(seed, rep, i) = splitmix64 finalizer applied to key(seed, rep) + (i+1)*G.
# Normals come from Box-Muller on consecutive uniform pairs, so value i of a
# replication depends only on (seed, rep, i // 2).

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0x5851F42D4C957F2D)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 2.0**-53


def _mix_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_keys(seed, reps):
    """Per-replication 64-bit keys for a seed (numpy, exact integer arithmetic)."""
    seed = np.asarray([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    reps = np.asarray(reps, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix_np(seed ^ _SALT)
        return _mix_np(base + (reps + _ONE) * _GOLDEN)


def _normals_numpy(keys, n):
    m = (n + 1) // 2
    idx = np.arange(2 * m, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix_np(keys[:, None] + (idx[None, :] + _ONE) * _GOLDEN)
    u = ((bits >> _S11).astype(np.float64) + 0.5) * _TWO_M53
    u1 = u[:, 0::2]
    u2 = u[:, 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty((keys.shape[0], 2 * m))
    out[:, 0::2] = r * np.cos(2.0 * np.pi * u2)
    out[:, 1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:, :n]


def _normals_loops(keys, n, out):
    two_pi = 2.0 * math.pi
    for r in range(keys.shape[0]):
        k = keys[r]
        for i in range(0, n, 2):
            z = k + (np.uint64(i) + _ONE) * _GOLDEN
            z = (z ^ (z >> _S30)) * _M1
            z = (z ^ (z >> _S27)) * _M2
            z = z ^ (z >> _S31)
            w = k + (np.uint64(i) + np.uint64(2)) * _GOLDEN
            w = (w ^ (w >> _S30)) * _M1
            w = (w ^ (w >> _S27)) * _M2
            w = w ^ (w >> _S31)
            u1 = (float(z >> _S11) + 0.5) * _TWO_M53
            u2 = (float(w >> _S11) + 0.5) * _TWO_M53
            rad = math.sqrt(-2.0 * math.log(u1))
            out[r, i] = rad * math.cos(two_pi * u2)
            if i + 1 < n:
                out[r, i + 1] = rad * math.sin(two_pi * u2)


def counter_normals(seed, reps, n, backend=None):
    """Standard normals of shape (len(reps), n) keyed by (seed, rep, index)."""
    keys = stream_keys(seed, np.atleast_1d(reps))
    n = int(n)
    if n == 0:
        return np.zeros((keys.shape[0], 0))
    if resolve_backend(backend) == "numpy":
        return _normals_numpy(keys, n)
    out = np.empty((keys.shape[0], n))
    _compiled("normals", _normals_loops)(keys, n, out)
    return out


# ---------------------------------------------------------------------------
# Nested-interval pair scan
# ---------------------------------------------------------------------------
#
# For every left index i in [i0, left_max] and right index j in (i, i1] with
# lag = lam[j] - lam[i] <= max_lag, compute the ratio |v[j] - v[i]| / phi(lag)
# with phi(h) = phi_scale * sqrt(h**two_h * log(1/h)).  Lags are binned into
# dyadic bands below top_lag (band k: top_lag*2^-(k+1) < lag <= top_lag*2^-k,
# the last band absorbs everything finer); the best ratio and its j are kept
# per (i, band).  Lags >= 1 are skipped since phi vanishes there.


def _pair_scan_numpy(lam, v, i0, i1, left_max, max_lag, top_lag, n_bands, phi_scale, two_h):
    n_left = left_max - i0 + 1
    best_ratio = np.zeros((n_left, n_bands))
    best_j = np.full((n_left, n_bands), -1, dtype=np.int64)
    left = np.arange(i0, left_max + 1)
    rows = np.arange(n_left)
    for m in range(1, i1 - i0 + 1):
        right = left + m
        ok = right <= i1
        if not ok.any():
            break
        li = left[ok]
        rj = right[ok]
        lag = lam[rj] - lam[li]
        within = (lag <= max_lag) & (lag < 1.0)
        if not within.any():
            if np.all(lag > max_lag):
                break
            continue
        li, rj, lag, rr = li[within], rj[within], lag[within], rows[ok][within]
        k = np.minimum(np.floor(np.log2(top_lag / lag)).astype(np.int64), n_bands - 1)
        k = np.maximum(k, 0)
        phi = phi_scale * np.sqrt(lag**two_h * np.log(1.0 / lag))
        ratio = np.abs(v[rj] - v[li]) / phi
        cur = best_ratio[rr, k]
        better = ratio > cur
        best_ratio[rr[better], k[better]] = ratio[better]
        best_j[rr[better], k[better]] = rj[better]
    return best_ratio, best_j


def _pair_scan_loops(lam, v, i0, i1, left_max, max_lag, top_lag, n_bands, phi_scale, two_h, best_ratio, best_j):
    for ii in range(i0, left_max + 1):
        li = lam[ii]
        vi = v[ii]
        row = ii - i0
        for jj in range(ii + 1, i1 + 1):
            lag = lam[jj] - li
            if lag > max_lag:
                break
            k = int(math.floor(math.log2(top_lag / lag)))
            if k < 0:
                k = 0
            if k > n_bands - 1:
                k = n_bands - 1
            if lag >= 1.0:
                continue
            phi = phi_scale * math.sqrt(lag**two_h * math.log(1.0 / lag))
            ratio = abs(v[jj] - vi) / phi
            if ratio > best_ratio[row, k]:
                best_ratio[row, k] = ratio
                best_j[row, k] = jj


def pair_band_scan(lam, v, i0, i1, left_max, max_lag, top_lag, n_bands, phi_scale, two_h, backend=None):
    """Best phi-normalized oscillation per (left index, dyadic lag band).

    Returns ``(best_ratio, best_j)`` of shape ``(left_max - i0 + 1, n_bands)``;
    ``best_j == -1`` marks bands without any pair.
    """
    lam = np.ascontiguousarray(lam, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    args = (int(i0), int(i1), int(left_max), float(max_lag), float(top_lag), int(n_bands), float(phi_scale), float(two_h))
    if left_max < i0:
        return np.zeros((0, n_bands)), np.zeros((0, n_bands), dtype=np.int64)
    if resolve_backend(backend) == "numpy":
        return _pair_scan_numpy(lam, v, *args)
    n_left = int(left_max) - int(i0) + 1
    best_ratio = np.zeros((n_left, int(n_bands)))
    best_j = np.full((n_left, int(n_bands)), -1, dtype=np.int64)
    _compiled("pairs", _pair_scan_loops)(lam, v, *args, best_ratio, best_j)
    return best_ratio, best_j


def derive_seed(seed, tag):
    """Independent 64-bit sub-seed for a named stream (e.g. "v1", "u2")."""
    import zlib

    salt = zlib.crc32(str(tag).encode("utf-8"))
    return int(stream_keys(int(seed) ^ (salt << 17), [salt])[0])
