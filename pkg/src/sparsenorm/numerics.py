"""Verification utilities: deterministic RNG streams, finite-difference
Jacobians, and distances between discrete distributions."""

import math
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .errors import ShapeError

_U64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 2.0 ** -53


def _mix64(z):
    z &= _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


class RngStream:
    """xoshiro256++ stream with a fixed 64-bit seeding contract.

    Identical seeds produce identical draws on every platform: the integer
    recurrence is exact, uniforms are exact dyadic rationals, and the normal
    transform runs through the same vectorized numpy code regardless of the
    kernel backend.

    A stream is single-owner mutable state. Parallel consumers must derive
    independent children with :meth:`split` instead of sharing one stream.
    """

    algorithm = "xoshiro256++"

    def __init__(self, seed):
        self.seed = int(seed) & _U64
        x = self.seed
        s = []
        for _ in range(4):
            x = (x + _GOLDEN) & _U64
            s.append(_mix64(x))
        if not any(s):
            s[0] = 1  # xoshiro state must not be all zero
        self._state = np.array(s, dtype=np.uint64)

    def raw(self, n):
        """Next ``n`` raw 64-bit outputs."""
        out = np.empty(int(n), dtype=np.uint64)
        kernels.xoshiro_fill(self._state, out)
        return out

    def next_u64(self):
        return int(self.raw(1)[0])

    def uniforms(self, n):
        """``n`` doubles in [0, 1) with 53-bit resolution."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normals(self, n):
        """``n`` standard normals via Box-Muller on consecutive pairs.

        Consumes ``2 * ceil(n / 2)`` raw outputs. The transform itself is
        plain numpy so the values do not depend on the kernel backend.
        """
        n = int(n)
        m = (n + 1) // 2
        w = self.raw(2 * m)
        u1 = ((w[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53  # (0, 1]
        u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def integers(self, n, bound):
        """``n`` integers uniform on [0, bound)."""
        return np.minimum(
            (self.uniforms(n) * bound).astype(np.int64), bound - 1
        )

    def split(self, index):
        """Independent child stream; deterministic in (seed, index)."""
        child = _mix64((self.seed + _GOLDEN * (int(index) + 1)) & _U64)
        return RngStream(child)


def _probs(p):
    arr = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError("expected a 1-D probability vector")
    return arr


def _pair(p, q):
    a, b = _probs(p), _probs(q)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def tv_distance(p, q):
    """Total variation distance, (1/2) sum |p_k - q_k|."""
    a, b = _pair(p, q)
    return 0.5 * float(np.abs(a - b).sum())


def w1_line(p, q):
    """1-Wasserstein distance with classes embedded at 0..K-1:
    sum_k |CDF_p(k) - CDF_q(k)|."""
    a, b = _pair(p, q)
    return float(np.abs(np.cumsum(a) - np.cumsum(b)).sum())


def kl_divergence(p, q):
    """KL(p || q); +inf when q lacks support somewhere p has mass."""
    a, b = _pair(p, q)
    live = a > 0.0
    if np.any(b[live] == 0.0):
        return math.inf
    return float(np.sum(a[live] * (np.log(a[live]) - np.log(b[live]))))


def eps_kl(p, q, eps):
    """KL of p from the eps-smoothed q' = (q + eps) / sum(q + eps).

    Always finite: zero-mass terms of p contribute 0, and q' has full
    support for eps > 0.
    """
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    a, b = _pair(p, q)
    bp = (b + eps) / (b + eps).sum()
    live = a > 0.0
    return float(np.sum(a[live] * (np.log(a[live]) - np.log(bp[live]))))


@dataclass(frozen=True)
class DistanceReport:
    tv: float
    w1_line: float
    kl: float  # may be +inf
    eps_kl: float


def distance_report(p, q, eps=1e-6):
    return DistanceReport(
        tv=tv_distance(p, q),
        w1_line=w1_line(p, q),
        kl=kl_divergence(p, q),
        eps_kl=eps_kl(p, q, eps),
    )


def finite_diff_jacobian(f, v, h=1e-5):
    """Central-difference Jacobian of ``f`` at ``v``; column j is
    (f(v + h e_j) - f(v - h e_j)) divided by the realized step
    (the rounded perturbations are used verbatim, so the identity map
    differentiates exactly)."""
    if not h > 0.0:
        raise ValueError("h must be positive")
    v = np.asarray(v, dtype=np.float64)
    k = v.shape[0]
    cols = []
    for j in range(k):
        vp = v.copy()
        vp[j] += h
        vm = v.copy()
        vm[j] -= h
        hi = np.asarray(f(vp), dtype=np.float64)
        lo = np.asarray(f(vm), dtype=np.float64)
        cols.append((hi - lo) / (vp[j] - vm[j]))
    return np.stack(cols, axis=1)


def lipschitz_probe(normalizer, rng, trials, k=6, scale=2.0, step=1.0):
    """Max of ||f(v1) - f(v2)||_2 / ||v1 - v2||_2 over sampled pairs whose
    outputs share a support mask.

    ``normalizer`` maps a logit vector to an object with ``probs`` and
    ``support`` attributes. Pairs with differing masks are discarded; a
    correct normalizer stays at ratio <= 1 on the kept pairs.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    v1 = scale * rng.normals(trials * k).reshape(trials, k)
    v2 = v1 + step * rng.normals(trials * k).reshape(trials, k)
    worst = 0.0
    for i in range(trials):
        d1 = normalizer(v1[i])
        d2 = normalizer(v2[i])
        if not np.array_equal(d1.support, d2.support):
            continue
        dv = float(np.linalg.norm(v1[i] - v2[i]))
        if dv == 0.0:
            continue
        ratio = float(np.linalg.norm(d1.probs - d2.probs)) / dv
        if ratio > worst:
            worst = ratio
    return worst
