"""Example-driven tests for the normalizers, Jacobians, and gradient kernels."""

import numpy as np
import pytest

from sparsenorm import (
    BoundaryError,
    center,
    entmax15,
    ev_softmax,
    ev_softmax_strict,
    ev_softmax_train,
    finite_diff_jacobian,
    grad_log_ev_softmax_train,
    grad_loss_entmax15,
    grad_loss_sparsemax,
    jacobian_entmax15,
    jacobian_ev_softmax,
    jacobian_softmax,
    jacobian_sparsemax,
    softmax,
    sparsemax,
)

V_FIG = np.array([0.4, 1.4, -0.8])

# back-solved from the figure's plotted simplex coordinates
SOFTMAX_FIG = np.array([0.24878864557372468, 0.6762776543899932, 0.07493370003628208])
EV_FIG = np.array([0.2689414213699951, 0.7310585786300049, 0.0])


def test_center_direct_arithmetic():
    out = center(V_FIG)
    assert np.allclose(out, [0.0667, 1.0667, -1.1333], atol=5e-5)
    assert abs(out.sum()) <= 1e-12


def test_center_constant_and_single():
    assert np.allclose(center([3.3] * 5), np.zeros(5), atol=1e-12)
    assert center([5.0]) == pytest.approx(0.0)


def test_softmax_fig_values():
    p = softmax(V_FIG)
    assert np.abs(p.probs - SOFTMAX_FIG).max() <= 1e-12
    assert p.support.all()


def test_softmax_symmetry_and_analytic():
    assert np.allclose(softmax([0.0, 0.0, 0.0]).probs, 1 / 3, atol=1e-15)
    p = softmax(np.log([1.0, 2.0, 3.0]))
    assert np.allclose(p.probs, [1 / 6, 2 / 6, 3 / 6], atol=1e-14)


def test_ev_softmax_fig_values():
    p = ev_softmax(V_FIG)
    assert np.abs(p.probs - EV_FIG).max() <= 1e-12
    assert list(p.support) == [True, True, False]


def test_ev_softmax_uniform_on_constant():
    p = ev_softmax([2.5] * 4)
    assert np.allclose(p.probs, 0.25, atol=1e-15)
    assert p.support.all()


def test_ev_softmax_tie_at_mean_is_kept():
    # mean of (1,2,3) is exactly 2; the >= indicator keeps it
    p = ev_softmax([1.0, 2.0, 3.0])
    assert np.allclose(p.probs, [0.0, 0.2689414213699951, 0.7310585786300048],
                       atol=1e-12)


def test_ev_softmax_is_argmax_in_two_dims():
    p = ev_softmax([3.0, 5.0])
    assert np.array_equal(p.probs, [0.0, 1.0])


def test_ev_softmax_strict_cases():
    assert np.allclose(ev_softmax_strict([7.0] * 3).probs, 1 / 3, atol=1e-15)
    assert np.allclose(
        ev_softmax_strict(V_FIG).probs, ev_softmax(V_FIG).probs, atol=0
    )
    p = ev_softmax_strict([1.0, 1.0, -2.0])
    assert np.allclose(p.probs, [0.5, 0.5, 0.0], atol=1e-15)
    assert np.allclose(ev_softmax([1.0, 1.0, -2.0]).probs, p.probs, atol=0)


def test_ev_softmax_strict_drops_mean_ties():
    p = ev_softmax_strict([1.0, 2.0, 3.0])
    assert list(p.support) == [False, False, True]


def test_ev_softmax_train_matches_sparse_at_tiny_eps():
    p_eps = ev_softmax_train(V_FIG, 1e-6).probs
    p0 = ev_softmax(V_FIG).probs
    assert np.abs(p_eps - p0).max() <= 1e-5
    assert (p_eps > 0).all()


def test_ev_softmax_train_limits():
    v = np.array([0.3, -1.2, 2.0, 0.1])
    assert np.abs(ev_softmax_train(v, 1e-12).probs - ev_softmax(v).probs).max() <= 1e-6
    assert np.abs(ev_softmax_train(v, 1e12).probs - softmax(v).probs).max() <= 1e-6
    assert np.allclose(ev_softmax_train([1.5] * 6, 0.37).probs, 1 / 6, atol=1e-15)


def test_ev_softmax_train_requires_positive_eps():
    with pytest.raises(ValueError):
        ev_softmax_train(V_FIG, 0.0)


def test_sparsemax_fig_exact():
    p = sparsemax(V_FIG)
    assert np.array_equal(p.probs, [0.0, 1.0, 0.0])
    assert list(p.support) == [False, True, False]


def test_sparsemax_uniform_and_identity():
    assert np.allclose(sparsemax([0.9] * 5).probs, 0.2, atol=1e-12)
    p = sparsemax([0.5, 0.5, 0.0])
    assert np.array_equal(p.probs, [0.5, 0.5, 0.0])


def test_sparsemax_matches_simplex_grid_search():
    # dense grid over the K=3 simplex: the projection must be the nearest point
    rng = np.random.default_rng(7)
    grid = []
    step = 1e-2
    for a in np.arange(0.0, 1.0 + step / 2, step):
        for b in np.arange(0.0, 1.0 - a + step / 2, step):
            grid.append((a, b, 1.0 - a - b))
    grid = np.array(grid)
    for _ in range(25):
        v = rng.normal(size=3) * 2
        p = sparsemax(v).probs
        d_grid = np.square(grid - v).sum(axis=1).min()
        d_ours = np.square(p - v).sum()
        assert d_ours <= d_grid + 1e-12


def test_entmax15_uniform_and_saturation():
    assert np.allclose(entmax15([1.1] * 4).probs, 0.25, atol=1e-12)
    p = entmax15([10.0, 0.0, 0.0]).probs
    assert np.abs(p - [1.0, 0.0, 0.0]).max() <= 1e-10


def _entmax_bisection_oracle(v, iters=200):
    """Independent coarse-grid + local bisection solver for the threshold."""
    z = np.asarray(v, dtype=float) / 2.0
    taus = np.linspace(z.max() - 1.0, z.max(), 4001)
    sums = np.array([np.square(np.maximum(z - t, 0.0)).sum() for t in taus])
    idx = int(np.searchsorted(-sums, -1.0))  # sums decreasing
    lo, hi = taus[max(idx - 1, 0)], taus[min(idx, 4000)]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.square(np.maximum(z - mid, 0.0)).sum() >= 1.0:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    p = np.square(np.maximum(z - tau, 0.0))
    return p / p.sum()


def test_entmax15_matches_independent_bisection_oracle():
    rng = np.random.default_rng(123)
    for _ in range(40):
        v = rng.normal(size=5) * 2.5
        mine = entmax15(v).probs
        oracle = _entmax_bisection_oracle(v)
        assert np.abs(mine - oracle).max() <= 1e-8
        assert abs(mine.sum() - 1.0) <= 1e-10


def test_jacobian_softmax_two_point():
    j = jacobian_softmax([0.0, 0.0])
    assert np.allclose(j, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)


def test_jacobian_softmax_matches_finite_differences():
    fd = finite_diff_jacobian(lambda u: softmax(u).probs, V_FIG, 1e-5)
    assert np.abs(jacobian_softmax(V_FIG) - fd).max() <= 1e-6


def test_jacobian_row_sums_vanish():
    rng = np.random.default_rng(5)
    for _ in range(50):
        v = rng.normal(size=6) * 3
        for jac in (jacobian_softmax, jacobian_ev_softmax,
                    jacobian_sparsemax, jacobian_entmax15):
            assert np.abs(jac(v).sum(axis=1)).max() <= 1e-12


def test_jacobian_ev_softmax_fig_point():
    j = jacobian_ev_softmax(V_FIG)
    q = 0.19661193324148185
    assert np.allclose(
        j, [[q, -q, 0.0], [-q, q, 0.0], [0.0, 0.0, 0.0]], atol=1e-10
    )
    fd = finite_diff_jacobian(lambda u: ev_softmax(u).probs, V_FIG, 1e-6)
    assert np.abs(j - fd).max() <= 1e-6


def test_jacobian_ev_softmax_boundary_rejected():
    with pytest.raises(BoundaryError):
        jacobian_ev_softmax([1.0, 1.0, 1.0])
    with pytest.raises(BoundaryError):
        jacobian_ev_softmax([1.0, 2.0, 3.0])  # middle entry ties the mean


def test_jacobian_ev_softmax_one_hot_output_is_zero():
    j = jacobian_ev_softmax([10.0, 0.0, 0.0])
    assert np.abs(j).max() <= 1e-12


def test_grad_log_ev_train_in_support():
    # delta_i - probs at the first supported class, minus an O(eps) correction
    g = grad_log_ev_softmax_train(V_FIG, 0, 1e-6)
    expect = np.array([0.7310585786300049, -0.7310585786300049, 0.0])
    assert np.abs(g - expect).max() <= 1e-5
    fd = finite_diff_jacobian(
        lambda u: np.array([np.log(ev_softmax_train(u, 1e-6).probs[0])]),
        V_FIG,
        1e-6,
    )[0]
    assert np.abs(g - fd).max() <= 1e-5


def test_grad_log_ev_train_eps_sequence_decreases():
    rng = np.random.default_rng(11)
    for _ in range(20):
        v = rng.normal(size=6) * 2
        sparse = ev_softmax(v)
        i = int(np.flatnonzero(sparse.support)[0])
        limit = -sparse.probs
        limit[i] += 1.0
        prev = np.inf
        for e in range(2, 9):
            eps = 10.0 ** -e
            d = np.abs(grad_log_ev_softmax_train(v, i, eps) - limit).max()
            assert d <= 10.0 * eps
            assert d <= prev
            prev = d


def test_grad_log_ev_train_single_class():
    assert np.array_equal(grad_log_ev_softmax_train([3.0], 0), [0.0])


def test_grad_loss_sparsemax_examples():
    assert np.array_equal(grad_loss_sparsemax(V_FIG, 0), [-1.0, 1.0, 0.0])
    assert np.abs(grad_loss_sparsemax([9.0, 0.0, 0.0], 0)).max() <= 1e-12
    g = grad_loss_sparsemax([2.0] * 4, 0)
    assert np.allclose(g, [0.25 - 1.0, 0.25, 0.25, 0.25], atol=1e-12)


def test_grad_loss_entmax15_examples():
    assert np.abs(grad_loss_entmax15([9.0, 0.0, 0.0], 0)).max() <= 1e-9
    g = grad_loss_entmax15([2.0] * 4, 0)
    assert np.allclose(g, [0.25 - 1.0, 0.25, 0.25, 0.25], atol=1e-10)
    rng = np.random.default_rng(3)
    v = rng.normal(size=5)
    expect = entmax15(v).probs.copy()
    expect[2] -= 1.0
    assert np.array_equal(grad_loss_entmax15(v, 2), expect)


def test_ev_softmax_not_idempotent_witness():
    once = ev_softmax(V_FIG).probs
    twice = ev_softmax(once).probs
    assert np.abs(once - twice).max() > 0.2


def test_input_validation():
    for fn in (softmax, ev_softmax, sparsemax, entmax15):
        with pytest.raises(ValueError):
            fn([np.nan, 1.0])
        with pytest.raises(ValueError):
            fn([np.inf, 1.0])
        with pytest.raises(ValueError):
            fn([])
    with pytest.raises(IndexError):
        grad_loss_sparsemax(V_FIG, 3)


def test_distribution_validates():
    for fn in (softmax, ev_softmax, ev_softmax_strict, sparsemax, entmax15):
        fn(V_FIG).validate()
        fn([4.0]).validate()
