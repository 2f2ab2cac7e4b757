"""Accuracy, confusion matrices, code-to-class alignment, exports.

Any object exposing `predict_proba(x, mask) -> (B, K)` can be evaluated:
the supervised baselines do so directly, and `EncoderClassifier` adapts a
trained generative model's encoder (optionally composed with a learned
code-to-class permutation, which is only needed for fully unsupervised
runs; the supervised term pins codes to classes otherwise).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import autodiff as ad
from .data import make_batch
from .errors import ConfigError, DataError
from .nets import ModelParams, encoder_posterior, generate
from .priors import sample_seed_batch


@dataclass
class ConfusionMatrix:
    """Integer grid: rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / max(self.total(), 1)

    def per_class_accuracy(self) -> np.ndarray:
        row = self.counts.sum(axis=1)
        diag = np.diag(self.counts).astype(np.float64)
        return np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: np.ndarray
    label_fraction: float
    model_tag: str


class EncoderClassifier:
    """Classify via the encoder posterior of a trained model.

    Spectral estimates are re-converged once at construction (eval-mode
    normalization); `code_map` permutes salient codes onto class labels.
    """

    def __init__(self, model: ModelParams, code_map: Optional[np.ndarray] = None):
        self.model = model
        model.update_spectral(50)
        model.converge_spectral()
        self.cfg = model.cfg
        self.code_map = None if code_map is None else np.asarray(code_map)
        if self.code_map is not None:
            if sorted(self.code_map.tolist()) != list(range(self.cfg.n_categories)):
                raise ConfigError("code_map must be a permutation of 0..K-1")

    def predict_proba(self, x, mask=None) -> np.ndarray:
        with ad.no_grad():
            proba = encoder_posterior(x, self.model, mask).data
        if self.code_map is not None:
            permuted = np.empty_like(proba)
            permuted[:, self.code_map] = proba
            proba = permuted
        return proba


def _predict_all(model, seqs, batch_size=64):
    dtype = model.cfg.np_dtype if hasattr(model, "cfg") else np.float32
    preds, probas = [], []
    for start in range(0, len(seqs), batch_size):
        batch = make_batch(seqs[start:start + batch_size], dtype=dtype)
        p = model.predict_proba(batch.x, batch.mask)
        preds.extend(np.argmax(p, axis=1).tolist())
        probas.append(p)
    return np.array(preds), np.concatenate(probas, axis=0)


def evaluate(model, test_seqs, n_classes: int = 60, label_fraction: float = 1.0,
             model_tag: str = "model", batch_size: int = 64):
    """Classify every test sequence; returns (EvalReport, ConfusionMatrix)."""
    if not test_seqs:
        raise ConfigError("test set is empty")
    labels = []
    for s in test_seqs:
        if s.label is None:
            raise DataError("test sample without a label")
        labels.append(s.label)
    labels = np.asarray(labels)
    preds, _ = _predict_all(model, list(test_seqs), batch_size)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    matrix = ConfusionMatrix(counts)
    report = EvalReport(accuracy=matrix.accuracy(),
                        per_class_accuracy=matrix.per_class_accuracy(),
                        label_fraction=label_fraction, model_tag=model_tag)
    return report, matrix


@dataclass
class CodeClassMap:
    permutation: np.ndarray  # permutation[code] = class
    degenerate: bool = False


def map_code_to_class(posteriors: np.ndarray, labels,
                      n_categories: int = 60) -> CodeClassMap:
    """Match encoder codes to class labels by maximal co-occurrence.

    Hungarian assignment on the (argmax code, label) count matrix gives a
    bijection over 0..K-1. With semi-supervision the result is expected to
    be the identity. If every sample lands in a single code, the matching
    carries no signal: flagged degenerate, identity returned.
    """
    labels = np.asarray(labels)
    codes = np.argmax(posteriors, axis=1)
    if len(np.unique(codes)) <= 1 < len(labels):
        return CodeClassMap(np.arange(n_categories), degenerate=True)
    co = np.zeros((n_categories, n_categories), dtype=np.int64)
    np.add.at(co, (codes, labels), 1)
    # maximize matched counts; break ties toward the identity mapping
    cost = -(co.astype(np.float64) + 0.5 * np.eye(n_categories))
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(n_categories, dtype=np.int64)
    perm[rows] = cols
    return CodeClassMap(perm)


def fit_code_map(model: EncoderClassifier, labeled_seqs,
                 batch_size: int = 64) -> CodeClassMap:
    """Fit `map_code_to_class` from labeled sequences via the raw encoder."""
    with_labels = [s for s in labeled_seqs if s.labeled and s.label is not None]
    if not with_labels:
        raise ConfigError("need at least one labeled sample to map codes")
    raw = EncoderClassifier(model.model)  # without any permutation applied
    _, probas = _predict_all(raw, with_labels, batch_size)
    labels = [s.label for s in with_labels]
    return map_code_to_class(probas, labels, model.cfg.n_categories)


# ---------------------------------------------------------------------------
# exports

def export_sequences(checkpoint_path, n: int, seed: int, out_dir,
                     plot: bool = True):
    """Generate `n` sequences from a checkpoint; dump records and figures.

    The dump is line-delimited JSON, one sequence per line with fields
    (index, category, length, noise, frames); frames are the masked
    (length x 75) outputs. Deterministic given (checkpoint, seed).
    """
    from .training import load_checkpoint  # local import to avoid a cycle
    from . import viz

    bundle = load_checkpoint(checkpoint_path)
    model = bundle.state.model
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    seeds = sample_seed_batch(rng, n, bundle.latent, bundle.length)
    with ad.no_grad():
        frames, mask = generate(seeds, model.gen,
                                n_steps=int(seeds.lengths.max()))
    dump_path = out_dir / "sequences.jsonl"
    figures = []
    with dump_path.open("w") as fh:
        for i in range(n):
            length = int(seeds.lengths[i])
            record = {
                "index": i,
                "category": int(np.argmax(seeds.c[i])),
                "length": length,
                "noise": seeds.z[i].tolist(),
                "frames": frames.data[i, :length].tolist(),
            }
            fh.write(json.dumps(record) + "\n")
            if plot:
                fig_path = out_dir / f"sequence_{i:03d}.svg"
                viz.plot_skeleton_sequence(frames.data[i, :length], fig_path)
                figures.append(fig_path)
    return dump_path, figures


def export_curves(metrics_paths, out_path, labels=None):
    """Overlay Wasserstein-estimate curves (vs step and vs wall-clock)."""
    from .training import read_metrics_csv
    from . import viz

    paths = list(metrics_paths)
    if labels is None:
        labels = [Path(p).stem if len(paths) == 1 else Path(p).parent.name
                  for p in paths]
    runs = [(label, read_metrics_csv(p)) for label, p in zip(labels, paths)]
    for label, rows in runs:
        if len(rows) < 2:
            raise ConfigError(f"run {label!r} has fewer than 2 logged steps")
    return viz.plot_curves(runs, out_path)
