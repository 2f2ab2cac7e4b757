"""Command-line interface.

Subcommands: prepare, train, baseline, evaluate, generate, curves.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every subcommand's randomness hangs off its --seed flag.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, data, evaluate as eval_mod, training
from .config import default_run_config, load_run_config
from .errors import ConfigError, DataError, ParseError, TrainingDiverged


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skelgan",
                     description="Semi-supervised Wasserstein InfoGAN for "
                                 "skeleton action sequences")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse NTU .skeleton files into a "
                                       "dataset file")
    p.add_argument("--input", required=True, help="directory of .skeleton files")
    p.add_argument("--output", required=True, help="dataset file to write")
    p.add_argument("--filter-single-subject", action="store_true")
    p.add_argument("--multi-subject-classes", choices=["mutual", "last10"],
                   default="mutual",
                   help="class set removed by the single-subject filter")
    p.add_argument("--split", choices=["cross-subject"], default="cross-subject")
    p.add_argument("--label-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the adversarial model")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--lipschitz", choices=["spectral", "gp"], default=None)
    p.add_argument("--label-fraction", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="train a supervised classifier")
    p.add_argument("--model", choices=["cnn", "rnn"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-fraction", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="accuracy and confusion matrix on "
                                        "the test split")
    p.add_argument("--model", choices=["infogan", "cnn", "rnn"], required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="directory for report files")
    p.add_argument("--map-codes", action="store_true",
                   help="align encoder codes to classes on labeled train data")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="sample sequences from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("curves", help="plot Wasserstein curves from metrics "
                                      "CSVs")
    p.add_argument("--logs", required=True, help="csv path, or two joined "
                                                 "with a comma")
    p.add_argument("--labels", default=None, help="comma-separated legend "
                                                  "labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)
    return parser


# ---------------------------------------------------------------------------
# subcommand bodies

def cmd_prepare(args) -> int:
    recordings = data.load_ntu_directory(args.input)
    print(f"parsed {len(recordings)} recordings from {args.input}")
    if args.filter_single_subject:
        classes = (data.MUTUAL_ACTION_CLASSES if args.multi_subject_classes ==
                   "mutual" else data.LAST_TEN_CLASSES)
        recordings = data.filter_single_subject(recordings, classes)
        print(f"kept {len(recordings)} single-subject recordings")
    sequences, dropped = [], 0
    for rec in recordings:
        try:
            sequences.append(data.preprocess(rec))
        except DataError:
            dropped += 1
    if dropped:
        print(f"dropped {dropped} recordings during preprocessing")
    split = data.split_cross_subject(sequences, data.NTU_XSUB_TRAIN_SUBJECTS,
                                     data.NTU_ALL_SUBJECTS
                                     - data.NTU_XSUB_TRAIN_SUBJECTS)
    if args.label_fraction < 1.0:
        split = data.mask_labels(split, args.label_fraction, args.seed)
    data.write_dataset(args.output, split)
    print(f"wrote {len(split.train)} train / {len(split.test)} test "
          f"sequences to {args.output}")
    return 0


def _load_run_config(path):
    return load_run_config(path) if path else default_run_config()


def cmd_train(args) -> int:
    run = _load_run_config(args.config)
    cfg = run.train
    if args.lipschitz is not None:
        mode = (training.SPECTRAL_NORM if args.lipschitz == "spectral"
                else training.GRADIENT_PENALTY)
        cfg = training.TrainConfig(**{**_as_dict(cfg), "lipschitz_mode": mode})
    if args.seed is not None:
        cfg = training.TrainConfig(**{**_as_dict(cfg), "seed": args.seed})
    split = data.read_dataset(args.data)
    if args.label_fraction is not None:
        split = data.mask_labels(split, args.label_fraction, cfg.seed)

    def progress(m):
        if m.step % max(1, cfg.max_steps // 20) == 0:
            print(f"step {m.step}/{cfg.max_steps} "
                  f"W={m.critic_wasserstein:+.4f} MI={m.mi_lower_bound:.4f} "
                  f"CE={m.supervised_ce:.4f}")

    result = training.train_run(split, cfg, run.latent, run.length,
                                out_dir=args.out, progress=progress)
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_baseline(args) -> int:
    run = _load_run_config(args.config)
    bcfg = baselines.BaselineConfig(
        lr=run.train.lr_e, batch_size=run.train.batch_size,
        max_steps=run.train.max_steps,
        seed=run.train.seed if args.seed is None else args.seed,
        adam_beta1=run.train.adam_beta1, adam_beta2=run.train.adam_beta2,
        dtype=run.train.dtype)
    split = data.read_dataset(args.data)
    if args.label_fraction is not None:
        split = data.mask_labels(split, args.label_fraction, bcfg.seed)
    train_fn = baselines.train_cnn if args.model == "cnn" else baselines.train_rnn
    model, metrics = train_fn(split, bcfg, n_categories=run.latent.n_categories)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{args.model}.npz"
    baselines.save_classifier(ckpt, model)
    print(f"final loss {metrics[-1].loss:.4f} after {metrics[-1].step} steps")
    print(f"classifier: {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    split = data.read_dataset(args.data)
    if args.model == "infogan":
        bundle = training.load_checkpoint(args.checkpoint)
        classifier = eval_mod.EncoderClassifier(bundle.state.model)
        if args.map_codes:
            code_map = eval_mod.fit_code_map(
                classifier, [s for s in split.train if s.labeled])
            classifier = eval_mod.EncoderClassifier(bundle.state.model,
                                                    code_map=code_map.permutation)
            if code_map.degenerate:
                print("warning: degenerate code map, identity fallback")
        n_classes = bundle.state.model.cfg.n_categories
    else:
        classifier = baselines.load_classifier(args.checkpoint)
        n_classes = classifier.cfg.n_categories
    report, matrix = eval_mod.evaluate(classifier, split.test,
                                       n_classes=n_classes,
                                       label_fraction=split.label_fraction,
                                       model_tag=args.model)
    print(f"accuracy: {report.accuracy:.4f} on {matrix.total()} test samples")
    if args.out:
        from . import viz
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "confusion.csv", matrix.counts, fmt="%d", delimiter=",")
        viz.plot_confusion_matrix(matrix, out / "confusion.svg",
                                  title=f"{args.model} "
                                        f"({report.accuracy:.1%})")
        (out / "report.json").write_text(json.dumps({
            "accuracy": report.accuracy,
            "per_class_accuracy": report.per_class_accuracy.tolist(),
            "label_fraction": report.label_fraction,
            "model_tag": report.model_tag,
        }, indent=2))
        print(f"report: {out / 'report.json'}")
    return 0


def cmd_generate(args) -> int:
    dump, figures = eval_mod.export_sequences(args.checkpoint, n=args.n,
                                              seed=args.seed, out_dir=args.out,
                                              plot=not args.no_plot)
    print(f"dump: {dump}")
    if figures:
        print(f"figures: {len(figures)} files in {Path(args.out)}")
    return 0


def cmd_curves(args) -> int:
    logs = [p for p in args.logs.split(",") if p]
    labels = args.labels.split(",") if args.labels else None
    out = eval_mod.export_curves(logs, args.out, labels=labels)
    print(f"curves: {out}")
    return 0


def _as_dict(cfg) -> dict:
    from dataclasses import fields
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1
    except (ParseError, DataError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except TrainingDiverged as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
