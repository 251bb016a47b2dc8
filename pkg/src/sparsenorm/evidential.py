"""Independent evidential (Dempster-Shafer) route to the mean-threshold
normalizer.

A linear layer's pre-activations, centered per class, act as evidence for a
class (positive part) or against it (negative part). Fusing the induced
simple mass functions with Dempster's rule yields a belief mass per singleton
class; filtering the softmax output to classes with nonzero singleton mass
reproduces ``ev_softmax`` of the pre-activations exactly for inputs that
never tie the mean. This module implements that route explicitly, as a
ground-truth oracle for the closed-form normalizer:

* closed-form singleton/subset masses (``singleton_masses``, ``subset_mass``)
* the full subset-lattice route (``simple_mass_functions``,
  ``dempster_combine``, ``combine_simple``), brute force, capped at K <= 16
* the filtered softmax (``posthoc_filter``) and a vectorized equivalence
  fuzzer (``theorem_fuzz``)

Everything here is deliberately plain numpy, independent of the kernel
backend used by ``normalize``.
"""

from dataclasses import dataclass

import numpy as np

from . import normalize
from .errors import ShapeError, SubsetError, TotalConflictError

MAX_LATTICE_CLASSES = 16
CONFLICT_TOL = 1e-12


@dataclass(frozen=True)
class LinearLayer:
    """Weights (J, K) and bias (K,) of a final linear layer."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1:
            raise ShapeError("weights must be (J, K), bias (K,)")
        if w.shape[1] != b.shape[0]:
            raise ShapeError(
                f"weights have K={w.shape[1]} but bias has K={b.shape[0]}"
            )
        if w.shape[0] < 1:
            raise ShapeError("feature dimension J must be >= 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_features(self):
        return self.weights.shape[0]

    @property
    def n_classes(self):
        return self.weights.shape[1]

    def preactivations(self, phi):
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (self.n_features,):
            raise ShapeError(
                f"feature vector has shape {phi.shape}, "
                f"expected ({self.n_features},)"
            )
        return phi @ self.weights + self.bias


@dataclass(frozen=True)
class EvidentialWeights:
    """Per-class evidence: w sums to zero, w_plus/w_minus are its split."""

    w: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray


def evidential_weights(phi, layer):
    """Mean-centered pre-activations of the layer, split by sign."""
    v = layer.preactivations(phi)
    w = v - v.mean()
    return EvidentialWeights(
        w=w, w_plus=np.maximum(w, 0.0), w_minus=np.maximum(-w, 0.0)
    )


def weights_from_scores(w):
    """Evidential weights directly from a centered score vector."""
    w = np.asarray(w, dtype=np.float64)
    w = w - w.mean()
    return EvidentialWeights(
        w=w, w_plus=np.maximum(w, 0.0), w_minus=np.maximum(-w, 0.0)
    )


def singleton_masses(ew):
    """Unnormalized belief mass of each singleton class:

        m_k = exp(-w_k^-) (exp(w_k^+) - 1 + prod_{l != k} (1 - exp(-w_l^-)))

    ``expm1`` keeps the two vanishing terms exactly zero / exactly positive,
    so {k : m_k != 0} matches {k : w_k > 0} down to subnormal weights.
    """
    return _singleton_mass_rows(ew.w_plus[None, :], ew.w_minus[None, :])[0]


def _singleton_mass_rows(wp, wm):
    against = -np.expm1(-wm)  # 1 - exp(-w^-), exact near zero
    n, k = wp.shape
    prefix = np.ones((n, k))
    suffix = np.ones((n, k))
    if k > 1:
        prefix[:, 1:] = np.cumprod(against[:, :-1], axis=1)
        suffix[:, :-1] = np.cumprod(against[:, :0:-1], axis=1)[:, ::-1]
    return np.exp(-wm) * (np.expm1(wp) + prefix * suffix)


def subset_mass(ew, subset):
    """Unnormalized mass of a non-singleton subset (bitmask over classes):

        m(A) = prod_{k not in A} (1 - exp(-w_k^-)) * prod_{k in A} exp(-w_k^-)
    """
    k = ew.w.shape[0]
    subset = int(subset)
    if subset < 0 or subset >= (1 << k):
        raise SubsetError(f"bitmask {subset:#x} out of range for K={k}")
    if _popcount(subset) <= 1:
        raise SubsetError("subset mass is defined for |A| > 1 only")
    members = np.array([(subset >> i) & 1 for i in range(k)], dtype=bool)
    against = -np.expm1(-ew.w_minus)
    return float(np.prod(against[~members]) * np.prod(np.exp(-ew.w_minus[members])))


def _popcount(x):
    return bin(x).count("1")


@dataclass(frozen=True)
class MassFunction:
    """Belief mass over the subset lattice of {0..k-1}, indexed by bitmask."""

    k: int
    masses: np.ndarray  # shape (2**k,)

    def __post_init__(self):
        if not 1 <= self.k <= MAX_LATTICE_CLASSES:
            raise ValueError(f"lattice limited to 1..{MAX_LATTICE_CLASSES} classes")
        m = np.asarray(self.masses, dtype=np.float64)
        if m.shape != (1 << self.k,):
            raise ShapeError(f"masses must have length 2**{self.k}")
        if m[0] != 0.0:
            raise ValueError("mass of the empty set must be 0")
        if np.any(m < -1e-12) or np.any(m > 1.0 + 1e-12):
            raise ValueError("masses must lie in [0, 1]")
        if abs(float(m.sum()) - 1.0) > 1e-10:
            raise ValueError("masses must sum to 1")
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_focal(cls, k, focal):
        m = np.zeros(1 << k)
        for mask, value in focal.items():
            m[int(mask)] += value
        return cls(k=k, masses=m)

    @classmethod
    def vacuous(cls, k):
        return cls.from_focal(k, {(1 << k) - 1: 1.0})

    def singleton_slice(self):
        return np.array([self.masses[1 << i] for i in range(self.k)])


def dempster_combine(m1, m2):
    """Dempster's rule on the full subset lattice.

    Masses of intersecting focal pairs accumulate on their intersection; the
    mass landing on the empty set is the degree of conflict ``kappa`` and the
    rest renormalizes by 1/(1 - kappa).
    """
    if m1.k != m2.k:
        raise ShapeError("mass functions live on different frames")
    f1 = np.flatnonzero(m1.masses)
    f2 = np.flatnonzero(m2.masses)
    inter = f1[:, None] & f2[None, :]
    prod = m1.masses[f1][:, None] * m2.masses[f2][None, :]
    out = np.zeros(1 << m1.k)
    np.add.at(out, inter.ravel(), prod.ravel())
    kappa = out[0]
    if kappa >= 1.0 - CONFLICT_TOL:
        raise TotalConflictError(f"degree of conflict {kappa} leaves no mass")
    out[0] = 0.0
    out /= 1.0 - kappa
    return MassFunction(k=m1.k, masses=out)


def simple_mass_functions(ew):
    """The 2K simple mass functions the evidence decomposes into: for each
    class, mass 1 - exp(-w^+) on the singleton (rest on the frame) and mass
    1 - exp(-w^-) on its complement (rest on the frame)."""
    k = ew.w.shape[0]
    if k > MAX_LATTICE_CLASSES:
        raise ValueError(f"lattice limited to {MAX_LATTICE_CLASSES} classes")
    full = (1 << k) - 1
    out = []
    for i in range(k):
        on = -float(np.expm1(-ew.w_plus[i]))
        out.append(MassFunction.from_focal(k, {1 << i: on, full: 1.0 - on}))
        off = -float(np.expm1(-ew.w_minus[i]))
        out.append(
            MassFunction.from_focal(k, {full ^ (1 << i): off, full: 1.0 - off})
        )
    return out

def combine_simple(ew):
    """Fuse all 2K simple mass functions over the lattice (brute force)."""
    fused = None
    for m in simple_mass_functions(ew):
        fused = m if fused is None else dempster_combine(fused, m)
    return fused


def closed_form_masses(ew):
    """Closed-form unnormalized masses for the whole lattice, bitmask-indexed
    (empty set and singletons via the singleton formula, larger subsets via
    the product formula)."""
    k = ew.w.shape[0]
    out = np.zeros(1 << k)
    singles = singleton_masses(ew)
    for i in range(k):
        out[1 << i] = singles[i]
    for mask in range(1, 1 << k):
        if _popcount(mask) > 1:
            out[mask] = subset_mass(ew, mask)
    return out


def posthoc_filter(phi, layer):
    """Softmax of the raw pre-activations, zeroed on classes whose singleton
    belief mass is 0, renormalized. Vacuous evidence (w identically zero)
    yields the uniform distribution."""
    v = layer.preactivations(phi)
    p = _softmax(v)
    keep = singleton_masses(evidential_weights(phi, layer)) != 0.0
    if not keep.any():
        k = v.shape[0]
        return normalize.Distribution(
            probs=np.full(k, 1.0 / k), support=np.ones(k, dtype=bool)
        )
    p = np.where(keep, p, 0.0)
    p /= p.sum()
    return normalize.Distribution(probs=p, support=p > 0.0)


def _softmax(v):
    z = np.exp(v - v.max())
    return z / z.sum()


def _softmax_rows(v):
    z = np.exp(v - v.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def theorem_fuzz(rng, trials, k=10, j=8, spot_checks=100, chunk=20000):
    """Fuzz the equivalence of the evidential route and the closed-form
    normalizer on random linear layers.

    Per draw: phi, weights, bias are standard normal; the filtered softmax is
    computed through evidential masses, the direct side through
    ``normalize.ev_softmax_rows`` on the same pre-activations. Reports the
    max entrywise deviation and the number of support-mask mismatches. The
    first ``spot_checks`` draws are recomputed through the scalar
    :func:`posthoc_filter` to tie the vectorized path to the public one
    (agreement to ~1e-15; the batched matmul and the scalar gemv round
    differently in the last ulp).
    """
    trials = int(trials)
    max_dev = 0.0
    mismatches = 0
    spot_dev = 0.0
    remaining = trials
    first_chunk = True
    while remaining > 0:
        c = min(chunk, remaining)
        remaining -= c
        phi = rng.normals(c * j).reshape(c, j)
        beta = rng.normals(c * j * k).reshape(c, j, k)
        alpha = rng.normals(c * k).reshape(c, k)
        v = np.einsum("cj,cjk->ck", phi, beta) + alpha

        w = v - v.mean(axis=1, keepdims=True)
        masses = _singleton_mass_rows(np.maximum(w, 0.0), np.maximum(-w, 0.0))
        keep = masses != 0.0
        p_soft = _softmax_rows(v)
        num = np.where(keep, p_soft, 0.0)
        denom = num.sum(axis=1, keepdims=True)
        filtered = np.where(
            denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 1.0 / k
        )

        direct, _ = normalize.ev_softmax_rows(v, 0.0)
        max_dev = max(max_dev, float(np.abs(filtered - direct).max()))
        mismatches += int(np.sum(np.any((filtered > 0.0) != (direct > 0.0), axis=1)))

        if first_chunk:
            for i in range(min(spot_checks, c)):
                layer = LinearLayer(weights=beta[i], bias=alpha[i])
                d = posthoc_filter(phi[i], layer)
                spot_dev = max(spot_dev, float(np.abs(d.probs - filtered[i]).max()))
            first_chunk = False
    return {
        "trials": trials,
        "k": k,
        "j": j,
        "max_deviation": max_dev,
        "support_mismatches": mismatches,
        "spot_check_deviation": spot_dev,
    }


def lattice_fuzz(rng, trials, k=6, scale=2.0):
    """Check the closed-form lattice masses against brute-force Dempster
    fusion of the simple mass functions, on random zero-sum weights.

    Returns the max relative deviation after fitting the single global
    normalization constant, plus the worst absolute mismatch on entries the
    closed form says are exactly zero.
    """
    if not 2 <= k <= MAX_LATTICE_CLASSES:
        raise ValueError(f"lattice fuzz needs 2 <= k <= {MAX_LATTICE_CLASSES}")
    worst_rel = 0.0
    worst_zero = 0.0
    for _ in range(int(trials)):
        ew = weights_from_scores(scale * rng.normals(k))
        fused = combine_simple(ew).masses
        closed = closed_form_masses(ew)
        live = closed > 0.0
        scale_fit = fused[live].sum() / closed[live].sum()
        rel = np.abs(fused[live] - scale_fit * closed[live]) / (
            scale_fit * closed[live]
        )
        worst_rel = max(worst_rel, float(rel.max()))
        if np.any(~live):
            worst_zero = max(worst_zero, float(np.abs(fused[~live]).max()))
    return {"max_rel_deviation": worst_rel, "max_zero_mass": worst_zero}
