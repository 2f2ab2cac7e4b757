"""skelgan: semi-supervised Wasserstein InfoGAN for skeleton sequences.

A numpy/scipy library modeling variable-length 25-joint motion capture
sequences with an autoregressive GRU generator, a spectrally normalized
convolutional critic, and a categorical encoder sharing the critic trunk.
Includes data preparation for NTU-style skeleton files, a synthetic
fixture generator, supervised CNN/RNN baselines, evaluation tooling, and
a CLI (`skelgan`).
"""

__version__ = "0.1.0"

from .data import (Batch, DatasetSplit, SkeletonSequence, mask_labels,
                   preprocess, read_dataset, split_cross_subject, synth_make,
                   write_dataset)
from .priors import (LatentConfig, LatentSeed, LengthPrior, SeedBatch,
                     sample_length, sample_noise, sample_salient, sample_seed,
                     sample_seed_batch)
from .nets import (ModelParams, NetConfig, critic_score, encoder_posterior,
                   generate, gru_step, init_model, spectral_normalize,
                   trunk_forward)
from .training import (TrainConfig, critic_objective, generator_adv_loss,
                       gradient_penalty, load_checkpoint, mi_lower_bound,
                       save_checkpoint, supervised_ce, train_run, train_step)
from .baselines import BaselineConfig, classify, train_cnn, train_rnn
# NB: the evaluate *function* stays in its submodule (skelgan.evaluate.evaluate)
# so the submodule attribute is not shadowed
from .evaluate import (ConfusionMatrix, EncoderClassifier, EvalReport,
                       export_curves, export_sequences, map_code_to_class)

__all__ = [name for name in dir() if not name.startswith("_")]
