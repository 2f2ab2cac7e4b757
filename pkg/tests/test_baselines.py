import numpy as np
import pytest

from skelgan import baselines, data, nets
from skelgan.errors import ConfigError
from skelgan.priors import LengthPrior

SHORT_LENGTH = LengthPrior(offset=20, alpha=12.5, beta=2.5, scale=8.0, cap=30)


def fixture_split(n_train=40, n_test=12, seed=0):
    return data.synth_make(3, n_train, seed=seed, n_test_per_class=n_test,
                           length_prior=SHORT_LENGTH)


def quick_config(**kw):
    base = dict(lr=1e-3, batch_size=32, max_steps=150, seed=0, log_every=50)
    base.update(kw)
    return baselines.BaselineConfig(**base)


def test_capacity_parity_with_encoder():
    cfg = nets.NetConfig(n_categories=60)
    encoder_side = nets.init_model(cfg, seed=0, spectral_norm=False)
    cnn = baselines.init_cnn(cfg, seed=1)
    encoder_count = sum(p.data.size for p in encoder_side.encoder_params())
    assert cnn.n_params() == encoder_count


def test_dropout_disabled_at_eval():
    cfg = nets.NetConfig(n_categories=3)
    cnn = baselines.init_cnn(cfg, seed=2)
    x = np.random.default_rng(0).standard_normal((4, 12, 75)).astype(np.float32)
    p1 = cnn.predict_proba(x)
    p2 = cnn.predict_proba(x)
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_allclose(p1.sum(axis=1), 1.0, atol=1e-6)


def test_dropout_active_and_seeded_in_training():
    cfg = nets.NetConfig(n_categories=3)
    cnn = baselines.init_cnn(cfg, seed=3)
    x = np.random.default_rng(1).standard_normal((4, 12, 75)).astype(np.float32)
    r1 = np.random.default_rng(7)
    r2 = np.random.default_rng(7)
    l1 = cnn.logits(x, dropout_rng=r1).data
    l2 = cnn.logits(x, dropout_rng=r2).data
    np.testing.assert_array_equal(l1, l2)  # same seed, same mask
    l3 = cnn.logits(x, dropout_rng=r1).data  # mask resampled on the next batch
    assert np.any(l3 != l1)


def test_training_ignores_unlabeled_samples():
    split = fixture_split()
    masked = data.mask_labels(split, 0.5, seed=4)
    pruned = data.DatasetSplit(
        train=[s for s in masked.train if s.labeled],
        test=masked.test, label_fraction=masked.label_fraction)
    cfg = quick_config(max_steps=30)
    m1, _ = baselines.train_cnn(masked, cfg, n_categories=3)
    m2, _ = baselines.train_cnn(pruned, cfg, n_categories=3)
    for a, b in zip(m1.params(), m2.params()):
        np.testing.assert_array_equal(a.data, b.data)


def test_no_labeled_samples_is_config_error():
    split = fixture_split(n_train=4, n_test=2)
    for s in split.train:
        s.labeled = False
    with pytest.raises(ConfigError):
        baselines.train_cnn(split, quick_config(max_steps=5), n_categories=3)


def test_rnn_readout_ignores_masked_padding():
    cfg = nets.NetConfig(n_categories=3)
    rnn = baselines.init_rnn(cfg, seed=5)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 15, 75)).astype(np.float32)
    mask = np.ones((3, 15), dtype=bool)
    base = rnn.logits(x, mask).data
    xp = np.concatenate([x, np.zeros((3, 6, 75), dtype=np.float32)], axis=1)
    mp = np.concatenate([mask, np.zeros((3, 6), dtype=bool)], axis=1)
    padded = rnn.logits(xp, mp).data
    assert padded.tobytes() == base.tobytes()


def test_rnn_eval_deterministic():
    cfg = nets.NetConfig(n_categories=3)
    rnn = baselines.init_rnn(cfg, seed=6)
    x = np.random.default_rng(3).standard_normal((2, 10, 75)).astype(np.float32)
    np.testing.assert_array_equal(rnn.predict_proba(x), rnn.predict_proba(x))


def test_classify_tie_breaks_to_lowest_index():
    cfg = nets.NetConfig(n_categories=3)
    cnn = baselines.init_cnn(cfg, seed=7)
    cnn.head_w.data[...] = 0.0
    cnn.head_b.data[...] = 0.0  # uniform posterior
    seq = fixture_split(n_train=1, n_test=1).train[0]
    cls, proba = baselines.classify(cnn, seq)
    assert cls == 0
    np.testing.assert_allclose(proba.sum(), 1.0, atol=1e-6)
    np.testing.assert_allclose(proba, 1.0 / 3.0, atol=1e-6)


def test_cnn_learns_separable_fixture():
    from skelgan.evaluate import evaluate
    split = fixture_split(n_train=50, n_test=15, seed=8)
    model, metrics = baselines.train_cnn(split, quick_config(max_steps=250),
                                         n_categories=3)
    assert metrics[-1].loss < metrics[0].loss
    report, _ = evaluate(model, split.test, n_classes=3)
    assert report.accuracy >= 0.95


def test_rnn_learns_separable_fixture():
    from skelgan.evaluate import evaluate
    split = fixture_split(n_train=50, n_test=15, seed=9)
    model, _ = baselines.train_rnn(split, quick_config(max_steps=200),
                                   n_categories=3)
    report, _ = evaluate(model, split.test, n_classes=3)
    assert report.accuracy >= 0.95
