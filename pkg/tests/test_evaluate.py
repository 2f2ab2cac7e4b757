import json

import numpy as np
import pytest

from skelgan import data, evaluate, nets, training, viz
from skelgan.errors import ConfigError, DataError
from skelgan.priors import LatentConfig, LengthPrior

SHORT_LENGTH = LengthPrior(offset=20, alpha=12.5, beta=2.5, scale=8.0, cap=30)
SMALL_LATENT = LatentConfig(noise_dim=8, n_categories=3)


class StubClassifier:
    """Deterministic classifier keyed on a frame tag: frames[0, 0, 0]."""

    def __init__(self, mapping, n=3):
        self.mapping = mapping
        self.n = n
        self.cfg = nets.NetConfig(n_categories=n)

    def predict_proba(self, x, mask=None):
        out = np.full((x.shape[0], self.n), 1e-6)
        for i in range(x.shape[0]):
            out[i, self.mapping[int(round(float(x[i, 0, 0])))]] = 1.0
        return out / out.sum(axis=1, keepdims=True)


def tagged_seq(tag, label):
    frames = np.zeros((4, 25, 3), dtype=np.float32)
    frames[:, 1, :] = 0.1
    frames[0, 0, 0] = 0.0  # hip stays origin; tag goes on the flat layout below
    seq = data.SkeletonSequence(frames=frames, label=label, subject_id=0)
    seq.frames = seq.frames.copy()
    seq.frames[0, 0, 0] = tag  # encode the tag for the stub (hip invariant not needed here)
    return seq


def test_evaluate_all_correct_and_hand_count():
    seqs = [tagged_seq(t, label) for t, label in [(0, 0), (1, 1), (2, 2)]]
    model = StubClassifier({0: 0, 1: 1, 2: 2})
    report, matrix = evaluate.evaluate(model, seqs, n_classes=3)
    assert report.accuracy == 1.0
    np.testing.assert_array_equal(matrix.counts, np.eye(3, dtype=int))

    # 5-sample hand-built case: predictions [0,1,1,2,0], truth [0,1,2,2,1]
    seqs = [tagged_seq(t, lab) for t, lab in
            [(0, 0), (1, 1), (1, 2), (2, 2), (0, 1)]]
    report, matrix = evaluate.evaluate(model, seqs, n_classes=3)
    # hand count: correct = samples 0, 1, 3 -> 3/5
    assert report.accuracy == pytest.approx(3 / 5)
    assert matrix.total() == 5
    assert abs(report.accuracy
               - np.trace(matrix.counts) / matrix.counts.sum()) < 1e-12


def test_confusion_matrix_additive_over_disjoint_subsets():
    model = StubClassifier({0: 0, 1: 1, 2: 0})
    s1 = [tagged_seq(t, lab) for t, lab in [(0, 0), (1, 0), (2, 1)]]
    s2 = [tagged_seq(t, lab) for t, lab in [(2, 2), (1, 1)]]
    _, m1 = evaluate.evaluate(model, s1, n_classes=3)
    _, m2 = evaluate.evaluate(model, s2, n_classes=3)
    _, m_all = evaluate.evaluate(model, s1 + s2, n_classes=3)
    np.testing.assert_array_equal((m1 + m2).counts, m_all.counts)


def test_evaluate_errors():
    model = StubClassifier({0: 0})
    with pytest.raises(ConfigError):
        evaluate.evaluate(model, [], n_classes=3)
    seq = tagged_seq(0, None)
    with pytest.raises(DataError):
        evaluate.evaluate(model, [seq], n_classes=3)


def test_per_class_accuracy_and_report_consistency():
    model = StubClassifier({0: 0, 1: 1, 2: 1})
    seqs = [tagged_seq(t, lab) for t, lab in
            [(0, 0), (0, 0), (1, 1), (2, 2), (2, 2)]]
    report, matrix = evaluate.evaluate(model, seqs, n_classes=3)
    np.testing.assert_allclose(report.per_class_accuracy[:3], [1.0, 1.0, 0.0])
    assert report.accuracy == pytest.approx(matrix.accuracy())


# ---------------------------------------------------------------------------
# code-to-class mapping

def one_hot_rows(codes, k=3):
    out = np.full((len(codes), k), 1e-9)
    out[np.arange(len(codes)), codes] = 1.0
    return out


def test_swapped_codes_recovered_by_brute_force_oracle():
    labels = np.array([0, 0, 1, 1, 0, 1])
    codes = np.array([1, 1, 0, 0, 1, 0])  # swap of the labels
    post = one_hot_rows(codes, k=2)

    got = evaluate.map_code_to_class(post, labels, n_categories=2)
    # oracle: best of the two possible permutations by matched count
    best, best_count = None, -1
    for perm in ([0, 1], [1, 0]):
        count = sum(1 for c, l in zip(codes, labels) if perm[c] == l)
        if count > best_count:
            best, best_count = perm, count
    np.testing.assert_array_equal(got.permutation, best)
    assert not got.degenerate


def test_code_map_is_bijection_and_identity_biased():
    rng = np.random.default_rng(0)
    labels = rng.integers(3, size=60)
    post = one_hot_rows(labels, k=3)  # codes already aligned
    got = evaluate.map_code_to_class(post, labels, n_categories=3)
    np.testing.assert_array_equal(got.permutation, np.arange(3))
    assert sorted(got.permutation.tolist()) == [0, 1, 2]


def test_code_map_degenerate_flagged():
    labels = np.array([0, 1, 2, 0])
    post = one_hot_rows(np.zeros(4, dtype=int), k=3)  # all samples one code
    got = evaluate.map_code_to_class(post, labels, n_categories=3)
    assert got.degenerate
    np.testing.assert_array_equal(got.permutation, np.arange(3))


def test_encoder_classifier_applies_permutation():
    cfg = nets.NetConfig(frame_dim=75, n_categories=3, noise_dim=8)
    model = nets.init_model(cfg, seed=0, spectral_norm=True)
    enc = evaluate.EncoderClassifier(model)
    x = np.random.default_rng(1).standard_normal((5, 9, 75)).astype(np.float32)
    base = enc.predict_proba(x)
    perm = np.array([2, 0, 1])  # code c explains class perm[c]
    enc_perm = evaluate.EncoderClassifier(model, code_map=perm)
    permuted = enc_perm.predict_proba(x)
    for code in range(3):
        np.testing.assert_allclose(permuted[:, perm[code]], base[:, code],
                                   rtol=1e-6)
    with pytest.raises(ConfigError):
        evaluate.EncoderClassifier(model, code_map=np.array([0, 0, 1]))


# ---------------------------------------------------------------------------
# exports

@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    split = data.synth_make(3, 8, seed=0, n_test_per_class=2,
                            length_prior=SHORT_LENGTH)
    cfg = training.TrainConfig(n_critic=1, batch_size=8, max_steps=2, seed=0)
    res = training.train_run(split, cfg, SMALL_LATENT, SHORT_LENGTH, out_dir=out)
    return res


def test_export_sequences_dump_and_figures(tmp_path, tiny_checkpoint):
    dump, figures = evaluate.export_sequences(tiny_checkpoint.checkpoint_path,
                                              n=4, seed=3, out_dir=tmp_path)
    rows = [json.loads(line) for line in dump.read_text().splitlines()]
    assert len(rows) == 4
    for row in rows:
        assert len(row["frames"]) == row["length"]
        assert 20 <= row["length"] <= 30
        vals = np.asarray(row["frames"])
        assert np.all(np.abs(vals) < 1.0)
        assert len(row["noise"]) == SMALL_LATENT.noise_dim
        assert 0 <= row["category"] < 3
    assert len(figures) == 4 and all(p.suffix == ".svg" and p.exists()
                                     for p in figures)
    # determinism: same checkpoint and seed reproduce the dump exactly
    dump2, _ = evaluate.export_sequences(tiny_checkpoint.checkpoint_path,
                                         n=4, seed=3, out_dir=tmp_path / "again",
                                         plot=False)
    assert dump.read_text() == dump2.read_text()


def test_export_curves_overlay(tmp_path, tiny_checkpoint):
    out = tmp_path / "curves.svg"
    path = evaluate.export_curves([tiny_checkpoint.metrics_path,
                                   tiny_checkpoint.metrics_path],
                                  out, labels=["spectral", "penalty"])
    assert path.exists()
    with pytest.raises(ConfigError):
        one_line = tmp_path / "short.csv"
        rows = tiny_checkpoint.metrics_path.read_text().splitlines()[:2]
        one_line.write_text("\n".join(rows) + "\n")
        evaluate.export_curves([one_line], tmp_path / "c2.svg")


def test_classify_on_encoder_matches_posterior_argmax(tiny_checkpoint):
    from skelgan import baselines
    from skelgan.nets import encoder_posterior
    import skelgan.autodiff as ad

    model = tiny_checkpoint.state.model
    enc = evaluate.EncoderClassifier(model)
    split = data.synth_make(3, 2, seed=9, n_test_per_class=1,
                            length_prior=SHORT_LENGTH)
    for seq in split.test:
        cls, proba = baselines.classify(enc, seq)
        with ad.no_grad():
            direct = encoder_posterior(seq.flat()[None].astype(np.float32),
                                       model).data[0]
        assert cls == int(np.argmax(direct))
        np.testing.assert_allclose(proba, direct, rtol=1e-6)


def test_plot_skeleton_sequence_writes_file(tmp_path):
    split = data.synth_make(3, 2, seed=1, n_test_per_class=1,
                            length_prior=SHORT_LENGTH)
    out = viz.plot_skeleton_sequence(split.train[0].frames, tmp_path / "s.svg")
    assert out.exists() and out.stat().st_size > 0


def test_plot_confusion_matrix_writes_file(tmp_path):
    m = evaluate.ConfusionMatrix(np.diag([3, 2, 1]))
    out = viz.plot_confusion_matrix(m, tmp_path / "cm.svg", title="demo")
    assert out.exists()
