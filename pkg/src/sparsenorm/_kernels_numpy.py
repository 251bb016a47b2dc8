"""Pure-numpy batched kernels.

Reference implementations of the hot inner loops. The numba backend in
``_kernels_numba`` mirrors these function-for-function; either module can be
swapped in through ``sparsenorm.backend``.

All reductions that feed an indicator or a normalizing constant are taken
over value-sorted entries (``cumsum`` accumulates sequentially), so permuting
the entries of an input row permutes the output row exactly.
"""

import numpy as np

NAME = "numpy"

_U64 = 0xFFFFFFFFFFFFFFFF

# sparsemax masses at or below this are rounding noise from the threshold
# computation, not signal; prune them so boundary inputs resolve cleanly
SUPPORT_SNAP = 1e-14


def _row_sum_sorted(x):
    # sequential sum over ascending values: permutation invariant
    return np.cumsum(np.sort(x, axis=1), axis=1)[:, -1]


def row_means(v):
    """Per-row arithmetic mean, accumulated in ascending value order."""
    return _row_sum_sorted(v) / v.shape[1]


def softmax_rows(v):
    """Row-wise softmax with max-shift."""
    z = np.exp(v - v.max(axis=1, keepdims=True))
    return z / _row_sum_sorted(z)[:, None]


def ev_softmax_rows(v, eps):
    """Row-wise mean-thresholded exponential normalization.

    Entries scoring at or above the row mean keep weight 1, the rest weight
    ``eps`` (0 gives the sparse test-time form). Returns the probabilities
    and the row means (callers use the means for boundary checks).

    Rows whose indicator comes out empty, which can only happen through
    rounding when every entry is within an ulp of the mean, fall back to
    uniform.
    """
    n, k = v.shape
    means = row_means(v)
    ind = v >= means[:, None]
    z = np.exp(v - v.max(axis=1, keepdims=True))
    num = (ind.astype(np.float64) + eps) * z
    denom = _row_sum_sorted(num)
    out = np.empty_like(num)
    ok = denom > 0.0
    out[ok] = num[ok] / denom[ok, None]
    out[~ok] = 1.0 / k
    return out, means


def sparsemax_rows(v):
    """Row-wise Euclidean projection onto the simplex (sort-and-threshold).

    The support is taken from the threshold rule itself (the rho largest
    entries, ties broken by original index ascending) rather than from the
    sign of v - tau, so excluded classes stay exactly zero even when tau
    rounds past them. Masses at or below SUPPORT_SNAP are pruned: they sit
    below the rounding floor of the threshold computation, so an input
    written on a support boundary resolves to the boundary.
    """
    n, k = v.shape
    u = -np.sort(-v, axis=1)  # descending
    css = np.cumsum(u, axis=1)
    j = np.arange(1, k + 1, dtype=np.float64)
    rho = np.sum(1.0 + j * u > css, axis=1)
    rows = np.arange(n)
    tau = (css[rows, rho - 1] - 1.0) / rho
    cutoff = u[rows, rho - 1][:, None]
    above = v > cutoff
    need = rho[:, None] - above.sum(axis=1, keepdims=True)
    at = v == cutoff
    keep = above | (at & (np.cumsum(at, axis=1) <= need))
    p = np.where(keep, np.maximum(v - tau[:, None], 0.0), 0.0)
    return np.where(p > SUPPORT_SNAP, p, 0.0)


_ENTMAX_ITERS = 64


def entmax15_rows(v):
    """Row-wise entmax-1.5: p_k = [max(0, v_k/2 - tau)]^2 with tau found by
    bisection on the normalization residual.

    tau lies in [max(z) - 1, max(z)] for z = v/2; a fixed 64 halvings of that
    unit interval pin tau well below the 1e-12 residual target.
    """
    z = 0.5 * (v - v.max(axis=1, keepdims=True))  # max(z) == 0 per row
    zs = np.sort(z, axis=1)
    n = v.shape[0]
    lo = np.full(n, -1.0)
    hi = np.zeros(n)
    for _ in range(_ENTMAX_ITERS):
        mid = 0.5 * (lo + hi)
        s = np.cumsum(np.square(np.maximum(zs - mid[:, None], 0.0)), axis=1)[:, -1]
        ge = s >= 1.0
        lo = np.where(ge, mid, lo)
        hi = np.where(ge, hi, mid)
    tau = 0.5 * (lo + hi)
    p = np.square(np.maximum(z - tau[:, None], 0.0))
    return p / _row_sum_sorted(p)[:, None]


def xoshiro_fill(state, out):
    """Fill ``out`` (uint64) from the xoshiro256++ stream in ``state``
    (uint64[4], updated in place)."""
    s0 = int(state[0])
    s1 = int(state[1])
    s2 = int(state[2])
    s3 = int(state[3])
    for i in range(out.shape[0]):
        r = (s0 + s3) & _U64
        out[i] = ((((r << 23) & _U64) | (r >> 41)) + s0) & _U64
        t = (s1 << 17) & _U64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) & _U64) | (s3 >> 19)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
