"""Supervised baselines vs labeled fraction, with confusion matrices.

The CNN classifier reuses the encoder's exact layer shapes (capacity
parity); the RNN classifier is a 2-layer GRU reading out at the last
unmasked step. Both see only the labeled slice of the training set.
"""
from pathlib import Path

from skelgan import baselines, data, evaluate, viz

OUT = Path(__file__).parent / "output" / "05_baselines"
OUT.mkdir(parents=True, exist_ok=True)

split_full = data.synth_make(n_classes=3, n_per_class=200, seed=13,
                             n_test_per_class=60)

config = baselines.BaselineConfig(lr=1e-3, batch_size=32, max_steps=250, seed=0)

print(f"{'fraction':>8} {'labeled':>8} {'cnn acc':>8} {'rnn acc':>8}")
for fraction in (0.1, 0.5, 1.0):
    split = data.mask_labels(split_full, fraction, seed=3)
    n_labeled = sum(s.labeled for s in split.train)
    cnn, _ = baselines.train_cnn(split, config, n_categories=3)
    rnn, _ = baselines.train_rnn(split, config, n_categories=3)
    cnn_rep, cnn_cm = evaluate.evaluate(cnn, split.test, n_classes=3,
                                        label_fraction=fraction, model_tag="cnn")
    rnn_rep, _ = evaluate.evaluate(rnn, split.test, n_classes=3,
                                   label_fraction=fraction, model_tag="rnn")
    print(f"{fraction:8.0%} {n_labeled:8d} {cnn_rep.accuracy:8.1%} "
          f"{rnn_rep.accuracy:8.1%}")
    viz.plot_confusion_matrix(cnn_cm, OUT / f"cnn_confusion_{int(fraction*100)}.svg",
                              title=f"CNN, {fraction:.0%} labels")

seq = split_full.test[0]
cls, proba = baselines.classify(cnn, seq)
print(f"\nsingle-sequence classify: true={seq.label} predicted={cls} "
      f"posterior={proba.round(3)}")
print(f"figures in {OUT}")
