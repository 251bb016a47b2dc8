"""Tests for the desk-scale mixture benchmark: dataset generation, the
exactly-marginalized objective, its analytic gradient, training, and
evaluation."""

import numpy as np
import pytest

from sparsenorm import ConfigError
from sparsenorm.mixture import (
    BENCH_NORMALIZERS,
    BenchMetrics,
    DatasetConfig,
    MixtureModel,
    TrainConfig,
    compare,
    elbo,
    elbo_grad,
    evaluate,
    gen_dataset,
    init_model,
    train,
)

EPS = 1e-6


def small_dataset(seed=7, n=64, d=6, m=4, noise=0.05):
    return gen_dataset(
        DatasetConfig(n_prototypes=m, n_bits=d, noise_rate=noise,
                      n_samples=n, seed=seed)
    )


def small_model(dataset, k=4, seed=7):
    return init_model(dataset, TrainConfig(normalizer="softmax", seed=seed,
                                           n_latent=k))


# ---------------------------------------------------------------------------
# dataset


def test_dataset_noise_free_copies():
    ds = gen_dataset(DatasetConfig(noise_rate=0.0, n_samples=500, seed=3))
    assert np.array_equal(ds.x, ds.prototypes[ds.source_index].astype(float))


def test_dataset_deterministic():
    a = gen_dataset(DatasetConfig(seed=11))
    b = gen_dataset(DatasetConfig(seed=11))
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.prototypes, b.prototypes)
    assert np.array_equal(a.y, b.y)


def test_dataset_flip_rate_concentrates():
    ds = gen_dataset(DatasetConfig(noise_rate=0.05, n_samples=10_000, seed=4))
    flips = ds.x != ds.prototypes[ds.source_index]
    rate = flips.mean()
    assert abs(rate - 0.05) <= 0.005


def test_dataset_labels_are_parities():
    ds = small_dataset()
    assert np.array_equal(ds.y, ds.source_index % 2)


def test_dataset_prototype_separation():
    ds = gen_dataset(DatasetConfig(seed=42))
    m = ds.prototypes.shape[0]
    for a in range(m):
        for b in range(a + 1, m):
            assert np.sum(ds.prototypes[a] != ds.prototypes[b]) >= 4


def test_dataset_separation_failure_raises():
    # 18 prototypes cannot be pairwise distinct over 16 four-bit patterns
    with pytest.raises(ConfigError):
        gen_dataset(DatasetConfig(n_prototypes=18, n_bits=4, n_samples=10,
                                  seed=0, max_attempts=20))


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(steps=0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(normalizer="relu")
    with pytest.raises(ConfigError):
        DatasetConfig(noise_rate=0.5)
    with pytest.raises(ConfigError):
        DatasetConfig(n_prototypes=5)


# ---------------------------------------------------------------------------
# objective


def test_elbo_flat_decoder_reconstruction_term():
    ds = small_dataset()
    model = small_model(ds)
    model.decoder_logits[:] = 0.0  # every bit Bernoulli(1/2)
    model.encoder_weights[:] = 0.0
    model.prior_logits[:] = 0.0
    # with q equal to the prior the divergence vanishes up to eps terms,
    # leaving exactly -D log 2
    value = elbo(model, ds.x, ds.y, "softmax", EPS)
    assert value == pytest.approx(-ds.n_bits * np.log(2.0), abs=1e-10)


def test_elbo_kl_vanishes_when_posterior_equals_prior():
    ds = small_dataset()
    model = small_model(ds)
    model.encoder_weights[:] = 0.0
    model.prior_logits[:] = 0.0
    flat = elbo(model, ds.x, ds.y, "softmax", EPS)
    recon_only = np.mean(
        np.sum(
            0.25 * _log_bernoulli_oracle(model, ds.x), axis=1
        )
    )
    assert flat == pytest.approx(recon_only, abs=1e-6)


def _log_bernoulli_oracle(model, x):
    sig = 1.0 / (1.0 + np.exp(-model.decoder_logits))
    out = np.zeros((x.shape[0], model.n_latent))
    for n in range(x.shape[0]):
        for k in range(model.n_latent):
            out[n, k] = np.sum(
                x[n] * np.log(sig[k]) + (1 - x[n]) * np.log(1 - sig[k])
            )
    return out


def test_elbo_matches_hand_enumeration_k2():
    # single sample, K = 2: enumerate both latent classes explicitly
    ds = small_dataset(n=1)
    model = MixtureModel(
        prior_logits=np.array([[0.3, -0.2], [0.1, 0.4]]),
        encoder_weights=np.linspace(-0.5, 0.5, (ds.n_bits + 2) * 2).reshape(-1, 2),
        decoder_logits=np.array([[0.5] * ds.n_bits, [-0.25] * ds.n_bits]),
    )
    x, y = ds.x[:1], ds.y[:1]
    t = np.concatenate([x[0], [1.0 - y[0], float(y[0])]])
    u = t @ model.encoder_weights
    ez = np.exp(u - u.max())
    q = ez / ez.sum()
    r = model.prior_logits[y[0]]
    ep = np.exp(r - r.max())
    p = ep / ep.sum()
    p_smooth = (p + EPS) / (p + EPS).sum()
    sig = 1.0 / (1.0 + np.exp(-model.decoder_logits))
    expected = 0.0
    for k in (0, 1):
        loglik = np.sum(x[0] * np.log(sig[k]) + (1 - x[0]) * np.log(1 - sig[k]))
        expected += q[k] * loglik - q[k] * (np.log(q[k]) - np.log(p_smooth[k]))
    assert elbo(model, x, y, "softmax", EPS) == pytest.approx(expected, abs=1e-12)


def test_elbo_support_restriction_matches_full_sum():
    # full-support q: the eps^2 restriction drops nothing
    ds = small_dataset()
    model = small_model(ds)
    v1 = elbo(model, ds.x, ds.y, "softmax", EPS)
    v2 = elbo(model, ds.x, ds.y, "softmax", 1e-12)
    # different eps changes the prior smoothing only at eps scale
    assert v1 == pytest.approx(v2, abs=1e-4)


def test_elbo_shape_errors():
    ds = small_dataset()
    model = small_model(ds)
    from sparsenorm import ShapeError

    with pytest.raises(ShapeError):
        elbo(model, ds.x[:, :3], ds.y, "softmax", EPS)
    with pytest.raises(ShapeError):
        elbo(model, ds.x, ds.y[:-1], "softmax", EPS)


# ---------------------------------------------------------------------------
# gradient


def _fd_grad(model, x, y, name, eps, h=1e-5):
    blocks = []
    for attr in ("prior_logits", "encoder_weights", "decoder_logits"):
        theta = getattr(model, attr)
        flat = theta.ravel()
        g = np.zeros_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            hi = elbo(model, x, y, name, eps)
            flat[i] = old - h
            lo = elbo(model, x, y, name, eps)
            flat[i] = old
            g[i] = (hi - lo) / (2.0 * h)
        blocks.append(g)
    return np.concatenate(blocks)


@pytest.mark.parametrize("name", BENCH_NORMALIZERS)
def test_elbo_grad_matches_finite_differences(name):
    ds = small_dataset(seed=9, n=64, d=6, m=4)
    cfg = TrainConfig(normalizer=name, seed=9, n_latent=4, eps=0.05)
    model, _ = _short_train(ds, cfg, steps=40)
    analytic = elbo_grad(model, ds.x, ds.y, name, cfg.eps).flat()
    fd = _fd_grad(model, ds.x, ds.y, name, cfg.eps)
    err = np.abs(analytic - fd)
    tol = 1e-5 * np.maximum(np.abs(analytic), np.abs(fd)) + 1e-8
    assert np.all(err <= tol), f"worst {err.max()} vs tol {tol[err.argmax()]}"


def _short_train(dataset, config, steps):
    cfg = TrainConfig(
        normalizer=config.normalizer, eps=config.eps,
        learning_rate=config.learning_rate, steps=steps,
        batch_size=config.batch_size, seed=config.seed,
        n_latent=config.n_latent,
    )
    return train(dataset, cfg)


def test_zero_learning_signal_at_optimum():
    # sparse one-hot posterior on the true class, near-perfect decoder,
    # matching one-hot prior: gradient norm is at the sigmoid saturation floor
    ds = small_dataset(seed=5, n=32, d=6, m=4, noise=0.0)
    k = 4
    model = MixtureModel(
        prior_logits=np.zeros((2, k)),
        encoder_weights=np.zeros((ds.n_bits + 2, k)),
        decoder_logits=25.0 * (2.0 * ds.prototypes.astype(float) - 1.0),
    )
    # route each sample hard to its generating class through the encoder:
    # u_k proportional to the (+-1)-agreement between x and prototype k,
    # with the class-dependent constant folded into the query slots
    scale = 30.0
    signed = 2.0 * ds.prototypes.astype(float) - 1.0
    c = scale / ds.n_bits
    model.encoder_weights[: ds.n_bits] = c * (2.0 * signed).T
    model.encoder_weights[ds.n_bits:] = np.tile(-c * signed.sum(axis=1), (2, 1))
    # prior logits: one-hot-ish on the true classes per query via sparsemax
    model.prior_logits = np.array(
        [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]
    ) * 0.5
    q = _posterior_rows(model, ds)
    assert np.all((q > 0).sum(axis=1) == 1)  # sparsemax one-hot
    g = elbo_grad(model, ds.x, ds.y, "sparsemax", EPS)
    # decoder/encoder blocks are saturated; prior feels only eps-level pull
    assert np.abs(g.encoder_weights).max() <= 1e-8
    assert np.abs(g.decoder_logits).max() <= 1e-8


def _posterior_rows(model, ds):
    from sparsenorm.mixture import _encoder_inputs
    from sparsenorm import sparsemax

    u = _encoder_inputs(ds.x, ds.y) @ model.encoder_weights
    return np.stack([sparsemax(row).probs for row in u])


@pytest.mark.parametrize("name", BENCH_NORMALIZERS)
def test_prior_gradient_rows_sum_to_zero(name):
    ds = small_dataset(seed=13)
    model, _ = _short_train(ds, TrainConfig(normalizer=name, seed=13,
                                            n_latent=4, eps=0.05), steps=25)
    g = elbo_grad(model, ds.x, ds.y, name, 0.05)
    assert np.abs(g.prior_logits.sum(axis=1)).max() <= 1e-12


# ---------------------------------------------------------------------------
# training and evaluation


def test_train_rejects_zero_steps():
    with pytest.raises(ConfigError):
        TrainConfig(steps=0)


def test_train_deterministic_bitwise():
    ds = small_dataset()
    cfg = TrainConfig(normalizer="ev_softmax", steps=120, seed=21, n_latent=4)
    _, m1 = train(ds, cfg)
    _, m2 = train(ds, cfg)
    assert m1.elbo_curve == m2.elbo_curve
    assert m1.to_payload() == m2.to_payload()


def test_train_curve_sampled_every_50_steps():
    ds = small_dataset()
    _, met = train(ds, TrainConfig(normalizer="softmax", steps=120, seed=2,
                                   n_latent=4))
    assert len(met.elbo_curve) == 120 // 50 + 2  # steps 0, 50, 100 + final


def test_train_elbo_slope_non_divergent():
    ds = small_dataset(n=256)
    for name in BENCH_NORMALIZERS:
        _, met = train(ds, TrainConfig(normalizer=name, steps=400, seed=3,
                                       n_latent=4))
        curve = np.array(met.elbo_curve)
        tail = curve[3 * len(curve) // 4:]
        slope = np.polyfit(np.arange(len(tail)), tail, 1)[0]
        assert slope >= -1e-4


def test_evaluate_perfect_oracle_model():
    ds = gen_dataset(DatasetConfig(seed=42))
    k = 10
    decoder = 10.0 * (2.0 * ds.prototypes.astype(float) - 1.0)
    prior = np.zeros((2, k))
    prior[0, np.arange(k) % 2 == 0] = 5.0
    prior[0, np.arange(k) % 2 == 1] = -5.0
    prior[1] = -prior[0]
    model = MixtureModel(
        prior_logits=prior,
        encoder_weights=np.zeros((ds.n_bits + 2, k)),
        decoder_logits=decoder,
    )
    met = evaluate(model, ds, "ev_softmax")
    assert met.prior_tv == pytest.approx(0.0, abs=1e-12)
    assert met.prior_support_size == (5, 5)
    assert met.mode_assignment == list(range(10))


def test_evaluate_softmax_has_full_support():
    ds = small_dataset()
    model, met = train(ds, TrainConfig(normalizer="softmax", steps=60,
                                       seed=5, n_latent=4))
    assert met.prior_support_size == (4, 4)


def test_evaluate_collapsed_prior_tv():
    ds = gen_dataset(DatasetConfig(seed=42))
    k = 10
    prior = np.full((2, k), -8.0)
    prior[0, 0] = 8.0  # all mass on one correct even mode
    prior[1, 1] = 8.0
    model = MixtureModel(
        prior_logits=prior,
        encoder_weights=np.zeros((ds.n_bits + 2, k)),
        decoder_logits=10.0 * (2.0 * ds.prototypes.astype(float) - 1.0),
    )
    met = evaluate(model, ds, "ev_softmax")
    assert met.prior_tv == pytest.approx(0.8, abs=1e-12)


def test_train_test_support_consistency():
    # the sparse test-time support equals the above-mean indicator of the
    # same prior logits used with the relaxed training form
    ds = small_dataset()
    model, _ = train(ds, TrainConfig(normalizer="ev_softmax", steps=150,
                                     seed=6, n_latent=4))
    from sparsenorm import ev_softmax

    for q in (0, 1):
        r = model.prior_logits[q]
        test_support = ev_softmax(r).support
        assert np.array_equal(test_support, r >= np.mean(r))


def test_compare_shapes_and_stability():
    ds = small_dataset(n=128)
    cfgs = [TrainConfig(normalizer=n, steps=80, seed=4, n_latent=4)
            for n in BENCH_NORMALIZERS]
    rows = compare(ds, cfgs)
    assert [c.normalizer for c, _ in rows] == list(BENCH_NORMALIZERS)
    for _, met in rows:
        assert isinstance(met, BenchMetrics)
        payload = met.to_payload()
        assert set(payload) >= {"normalizer", "prior_tv", "prior_w1",
                                "support_size", "final_elbo"}
    again = compare(ds, cfgs)
    for (_, a), (_, b) in zip(rows, again):
        assert a.to_payload() == b.to_payload()
    single = compare(ds, cfgs[:1])
    assert len(single) == 1
    with pytest.raises(ConfigError):
        compare(ds, [])
