"""Train the Wasserstein InfoGAN on a small synthetic fixture.

A short semi-supervised run (10% labels): n_critic critic updates per
joint generator/encoder update; the Wasserstein estimate is the
convergence signal. Writes metrics, a checkpoint, and the curve figure.

Takes a few minutes on a laptop CPU; shrink MAX_STEPS for a quicker look.
"""
from pathlib import Path

from skelgan import data, evaluate, training
from skelgan.priors import LatentConfig, LengthPrior

OUT = Path(__file__).parent / "output" / "04_train_fixture_gan"
MAX_STEPS = 300

split = data.synth_make(n_classes=3, n_per_class=200, seed=11,
                        n_test_per_class=60)
split = data.mask_labels(split, fraction=0.10, seed=2)

latent = LatentConfig(noise_dim=64, n_categories=3)
length = LengthPrior()
config = training.TrainConfig(lr_g=1e-3, lr_d=1e-3, lr_e=1e-3, n_critic=2,
                              batch_size=32, max_steps=MAX_STEPS, seed=0)


def report(m):
    if m.step % 25 == 0:
        print(f"step {m.step:4d}  W={m.critic_wasserstein:+.4f}  "
              f"MI={m.mi_lower_bound:+.4f}  CE={m.supervised_ce:.4f}")


result = training.train_run(split, config, latent, length, out_dir=OUT,
                            progress=report)

encoder = evaluate.EncoderClassifier(result.state.model)
rep, matrix = evaluate.evaluate(encoder, split.test, n_classes=3,
                                label_fraction=0.10, model_tag="infogan")
print(f"\nencoder test accuracy at 10% labels: {rep.accuracy:.1%}")
print(f"confusion matrix:\n{matrix.counts}")

evaluate.export_curves([result.metrics_path], OUT / "curves.svg",
                       labels=["spectral_norm"])
print(f"metrics: {result.metrics_path}")
print(f"checkpoint: {result.checkpoint_path}")
print(f"curves: {OUT / 'curves.svg'}")
