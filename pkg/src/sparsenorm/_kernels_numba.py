"""Numba-jitted batched kernels; mirrors ``_kernels_numpy`` row for row.

Each kernel loops over rows with explicit sequential reductions over
value-sorted entries, matching the accumulation order of the numpy backend
(``cumsum`` is sequential), so the two backends agree to the last ulp of the
elementwise transcendentals. ``fastmath`` stays off: reassociation would
break exact permutation equivariance.
"""

import numpy as np
from numba import njit, uint64

NAME = "numba"


@njit(cache=True)
def row_means(v):
    n, k = v.shape
    out = np.empty(n)
    for i in range(n):
        s = np.sort(v[i])
        tot = 0.0
        for j in range(k):
            tot += s[j]
        out[i] = tot / k
    return out


@njit(cache=True)
def softmax_rows(v):
    n, k = v.shape
    out = np.empty((n, k))
    for i in range(n):
        m = v[i, 0]
        for j in range(1, k):
            if v[i, j] > m:
                m = v[i, j]
        z = np.exp(v[i] - m)
        zs = np.sort(z)
        tot = 0.0
        for j in range(k):
            tot += zs[j]
        out[i] = z / tot
    return out


@njit(cache=True)
def ev_softmax_rows(v, eps):
    n, k = v.shape
    out = np.empty((n, k))
    means = np.empty(n)
    for i in range(n):
        s = np.sort(v[i])
        tot = 0.0
        for j in range(k):
            tot += s[j]
        mean = tot / k
        means[i] = mean
        m = v[i, 0]
        for j in range(1, k):
            if v[i, j] > m:
                m = v[i, j]
        num = np.empty(k)
        for j in range(k):
            w = eps + (1.0 if v[i, j] >= mean else 0.0)
            num[j] = w * np.exp(v[i, j] - m)
        ns = np.sort(num)
        denom = 0.0
        for j in range(k):
            denom += ns[j]
        if denom > 0.0:
            out[i] = num / denom
        else:
            out[i] = 1.0 / k
    return out, means


_SUPPORT_SNAP = 1e-14


@njit(cache=True)
def sparsemax_rows(v):
    # support from the threshold rule (rho largest, ties by original index),
    # so excluded classes stay exactly zero even when tau rounds past them;
    # masses at or below the snap are rounding noise and get pruned
    n, k = v.shape
    out = np.empty((n, k))
    for i in range(n):
        u = -np.sort(-v[i])
        css = 0.0
        rho = 0
        tau = 0.0
        for j in range(k):
            css += u[j]
            if 1.0 + (j + 1) * u[j] > css:
                rho = j + 1
                tau = (css - 1.0) / rho
        cutoff = u[rho - 1]
        need = rho
        for j in range(k):
            if v[i, j] > cutoff:
                need -= 1
        for j in range(k):
            d = v[i, j] - tau
            if v[i, j] > cutoff:
                out[i, j] = d if d > _SUPPORT_SNAP else 0.0
            elif v[i, j] == cutoff and need > 0:
                need -= 1
                out[i, j] = d if d > _SUPPORT_SNAP else 0.0
            else:
                out[i, j] = 0.0
    return out


_ENTMAX_ITERS = 64


@njit(cache=True)
def entmax15_rows(v):
    n, k = v.shape
    out = np.empty((n, k))
    for i in range(n):
        m = v[i, 0]
        for j in range(1, k):
            if v[i, j] > m:
                m = v[i, j]
        z = 0.5 * (v[i] - m)
        zs = np.sort(z)
        lo = -1.0
        hi = 0.0
        for _ in range(_ENTMAX_ITERS):
            mid = 0.5 * (lo + hi)
            s = 0.0
            for j in range(k):
                d = zs[j] - mid
                if d > 0.0:
                    s += d * d
            if s >= 1.0:
                lo = mid
            else:
                hi = mid
        tau = 0.5 * (lo + hi)
        p = np.empty(k)
        for j in range(k):
            d = z[j] - tau
            p[j] = d * d if d > 0.0 else 0.0
        ps = np.sort(p)
        tot = 0.0
        for j in range(k):
            tot += ps[j]
        out[i] = p / tot
    return out


@njit(cache=True)
def xoshiro_fill(state, out):
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    for i in range(out.shape[0]):
        r = s0 + s3
        out[i] = ((r << uint64(23)) | (r >> uint64(41))) + s0
        t = s1 << uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << uint64(45)) | (s3 >> uint64(19))
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
