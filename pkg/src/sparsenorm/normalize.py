"""Normalization functions mapping real score vectors onto the probability
simplex, their closed-form Jacobians, and log-likelihood gradient kernels.

The normalizers:

* ``softmax``           - dense exponential normalization
* ``ev_softmax``        - keeps classes scoring at or above the mean of the
                          scores, exponentiates, renormalizes
* ``ev_softmax_strict`` - variant thresholding strictly above the mean, with
                          a uniform fallback for centered-zero input
* ``ev_softmax_train``  - full-support relaxation: indicator + eps weights,
                          so log-probabilities stay defined during training
* ``sparsemax``         - Euclidean projection onto the simplex
* ``entmax15``          - 1.5-entmax via bisection on the threshold

All of them are translation invariant (up to the exponential's rounding),
monotone, and exactly permutation equivariant: every internal reduction runs
over value-sorted entries.

Scalar functions return a :class:`Distribution`; the ``*_rows`` variants work
on (n, k) batches and return bare arrays. Support masks are derived from the
normalized probabilities (``probs > 0``), which coincides with the defining
indicator except when an exponential underflows at score spreads beyond ~745.
"""

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .errors import BoundaryError

DEFAULT_EPS = 1e-6

# |v_k - mean(v)| at or below this margin counts as an indicator boundary,
# where the sparse map is not differentiable.
BOUNDARY_MARGIN = 1e-9


@dataclass(frozen=True)
class Distribution:
    """A point on the simplex with an explicit support mask."""

    probs: np.ndarray
    support: np.ndarray

    def validate(self, tol=1e-12):
        p = self.probs
        if p.ndim != 1 or p.shape != self.support.shape:
            raise ValueError("probs and support must be 1-D and congruent")
        if not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite")
        if np.any(p < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(p.sum()) - 1.0) > tol:
            raise ValueError("probabilities must sum to 1")
        if not np.array_equal(p > 0.0, self.support):
            raise ValueError("support mask must match the positive entries")
        return self

    def __len__(self):
        return self.probs.shape[0]


def _as_logits(v):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("logit vector must be 1-D")
    if arr.shape[0] < 1:
        raise ValueError("logit vector must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits must be finite")
    return arr


def _dist(p):
    return Distribution(probs=p, support=p > 0.0)


def row_means(v):
    """Per-row means accumulated in value order (permutation invariant)."""
    return kernels.row_means(np.ascontiguousarray(v, dtype=np.float64))


def mean_of(v):
    return float(row_means(_as_logits(v)[None, :])[0])


def center(v):
    """Shift ``v`` to zero mean."""
    v = _as_logits(v)
    return v - mean_of(v)


# ---------------------------------------------------------------------------
# batched forms


def softmax_rows(v):
    return kernels.softmax_rows(np.ascontiguousarray(v, dtype=np.float64))


def ev_softmax_rows(v, eps=0.0):
    """Batched mean-thresholded normalization; returns (probs, row_means).

    ``eps == 0`` is the sparse test-time form; ``eps > 0`` the full-support
    training relaxation.
    """
    return kernels.ev_softmax_rows(
        np.ascontiguousarray(v, dtype=np.float64), float(eps)
    )


def sparsemax_rows(v):
    return kernels.sparsemax_rows(np.ascontiguousarray(v, dtype=np.float64))


def entmax15_rows(v):
    return kernels.entmax15_rows(np.ascontiguousarray(v, dtype=np.float64))


# ---------------------------------------------------------------------------
# scalar normalizers


def softmax(v):
    """Dense normalizer: probs proportional to exp(v_k)."""
    v = _as_logits(v)
    return _dist(softmax_rows(v[None, :])[0])


def ev_softmax(v):
    """Sparse normalizer: probs proportional to 1{v_k >= mean(v)} exp(v_k)."""
    v = _as_logits(v)
    p, _ = ev_softmax_rows(v[None, :], 0.0)
    return _dist(p[0])


def ev_softmax_strict(v):
    """Strict-threshold variant: center first, uniform when the centered
    vector is zero, otherwise keep entries strictly above the mean.

    Coincides with :func:`ev_softmax` whenever no entry ties the mean.
    """
    v = _as_logits(v)
    k = v.shape[0]
    centered = center(v)
    mask = centered > 0.0
    if not mask.any():
        # centered == 0 exactly, or every entry within rounding of the mean
        p = np.full(k, 1.0 / k)
        return _dist(p)
    num = np.where(mask, np.exp(v - v.max()), 0.0)
    p = num / np.cumsum(np.sort(num))[-1]
    return _dist(p)


def ev_softmax_train(v, eps=DEFAULT_EPS):
    """Training relaxation: probs proportional to
    (1{v_k >= mean(v)} + eps) exp(v_k). Full support for eps > 0."""
    v = _as_logits(v)
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    p, _ = ev_softmax_rows(v[None, :], eps)
    return _dist(p[0])


def sparsemax(v):
    """Euclidean projection of ``v`` onto the simplex."""
    v = _as_logits(v)
    return _dist(sparsemax_rows(v[None, :])[0])


def entmax15(v):
    """1.5-entmax: probs are [max(0, v_k/2 - tau)]^2 at the normalizing tau."""
    v = _as_logits(v)
    return _dist(entmax15_rows(v[None, :])[0])


NORMALIZERS = {
    "softmax": softmax,
    "ev_softmax": ev_softmax,
    "ev_softmax_strict": ev_softmax_strict,
    "sparsemax": sparsemax,
    "entmax15": entmax15,
}


# ---------------------------------------------------------------------------
# Jacobians and gradients


def indicator_margin(v):
    """Smallest |v_k - mean(v)|: distance to the nearest indicator boundary."""
    v = _as_logits(v)
    return float(np.abs(v - mean_of(v)).min())


def _require_margin(v):
    if v.shape[0] > 1 and indicator_margin(v) <= BOUNDARY_MARGIN:
        raise BoundaryError(
            "some score is within the boundary margin of the mean; "
            "the map is not differentiable there"
        )


def jacobian_softmax(v):
    """d softmax_i / d v_j = p_i (delta_ij - p_j)."""
    p = softmax(v).probs
    return np.diag(p) - np.outer(p, p)


def jacobian_ev_softmax(v):
    """Same form as the softmax Jacobian with the sparse output: rows and
    columns of zero-probability classes vanish. Raises
    :class:`BoundaryError` within ``BOUNDARY_MARGIN`` of the indicator
    boundary, where the derivative does not exist."""
    v = _as_logits(v)
    if v.shape[0] == 1:
        return np.zeros((1, 1))  # constant map
    _require_margin(v)
    p = ev_softmax(v).probs
    return np.diag(p) - np.outer(p, p)


def jacobian_sparsemax(v):
    """diag(s) - s s^T / |S| on the support indicator s."""
    p = sparsemax(v).probs
    s = (p > 0.0).astype(np.float64)
    return np.diag(s) - np.outer(s, s) / s.sum()


def jacobian_entmax15(v):
    """diag(d) - d d^T / sum(d) with d = sqrt(p)."""
    p = entmax15(v).probs
    d = np.sqrt(p)
    return np.diag(d) - np.outer(d, d) / d.sum()


JACOBIANS = {
    "softmax": jacobian_softmax,
    "ev_softmax": jacobian_ev_softmax,
    "sparsemax": jacobian_sparsemax,
    "entmax15": jacobian_entmax15,
}


def _check_index(v, target):
    if not 0 <= target < v.shape[0]:
        raise IndexError(f"target {target} out of range for K={v.shape[0]}")


def grad_log_ev_softmax_train(v, target, eps=DEFAULT_EPS):
    """Gradient of log of the eps-relaxed normalizer at class ``target``:
    delta_target - probs. Defined away from indicator boundaries; as eps
    shrinks it converges to delta_target - ev_softmax(v)."""
    v = _as_logits(v)
    _check_index(v, target)
    if v.shape[0] == 1:
        return np.zeros(1)  # log of the constant 1
    _require_margin(v)
    g = -ev_softmax_train(v, eps).probs
    g[target] += 1.0
    return g


def grad_loss_sparsemax(v, target):
    """Gradient of the sparsemax loss: sparsemax(v) - delta_target."""
    v = _as_logits(v)
    _check_index(v, target)
    g = sparsemax(v).probs.copy()
    g[target] -= 1.0
    return g


def grad_loss_entmax15(v, target):
    """Gradient of the 1.5-Tsallis loss: entmax15(v) - delta_target."""
    v = _as_logits(v)
    _check_index(v, target)
    g = entmax15(v).probs.copy()
    g[target] -= 1.0
    return g
