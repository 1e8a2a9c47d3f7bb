"""Command-line interface.

Subcommands: dataset gen, model train, attack, denoise, score,
detect train, detect eval, experiment run.

Seed precedence for `experiment run`: --seed flag > FMD_SEED environment
variable > config file > built-in default.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import data as datagen
from . import detectors as det
from .attacks import AttackConfig, bim, fgsm, quantize_budget
from .data import DatasetSpec
from .errors import ConfigError, DataError, FmdError, NumericalError
from .experiment import ExperimentConfig, run_experiment
from .filters import median_filter, wiener_adaptive, wiener_deconvolve
from .image import load_ppm, quantize01, save_ppm, to_grayscale
from .nn import TrainConfig, forward, load_weights_file, save_weights_file, train
from .rng import derive_seed
from .scoring import read_scores, score_dataset, write_scores


def _load_dir(path):
    """Images in a directory: (names, images, labels) via manifest.csv,
    falling back to sorted *.ppm with label -1."""
    if os.path.exists(os.path.join(path, "manifest.csv")):
        names_labels = datagen.load_manifest(path)
    else:
        names = sorted(n for n in os.listdir(path) if n.endswith(".ppm"))
        if not names:
            raise DataError(f"no .ppm files in {path}")
        names_labels = [(n, -1) for n in names]
    images = [load_ppm(os.path.join(path, n)) for n, _ in names_labels]
    return [n for n, _ in names_labels], images, [l for _, l in names_labels]


def cmd_dataset_gen(args) -> int:
    spec = DatasetSpec(seed=args.seed, per_class=args.per_class, noise_sigma=args.noise_sigma)
    dataset = [(quantize01(img), label) for img, label in datagen.generate(spec)]
    datagen.save_dataset(args.out, dataset)
    print(f"wrote {len(dataset)} images to {args.out}")
    return 0


def cmd_model_train(args) -> int:
    names, images, labels = _load_dir(args.data)
    images = np.stack(images)
    labels = np.asarray(labels)
    if labels.min() < 0:
        raise DataError(f"{args.data} has no manifest.csv with labels")
    config = TrainConfig(
        seed=args.seed, lr=args.lr, momentum=args.momentum,
        batch_size=args.batch_size, epochs=args.epochs,
    )
    if args.split_ratio is not None:
        tr, te = datagen.split_indices(labels, args.split_ratio, args.seed)
        params, log = train(images[tr], labels[tr], config,
                            val_images=images[te], val_labels=labels[te])
    else:
        params, log = train(images, labels, config)
    save_weights_file(args.out, params)
    for e in log:
        val = "" if e.val_accuracy is None else f"  val {e.val_accuracy:.4f}"
        print(f"epoch {e.epoch:>3}  loss {e.loss:.4f}  train {e.train_accuracy:.4f}{val}")
    print(f"wrote weights to {args.out}")
    return 0


def cmd_attack(args) -> int:
    params = load_weights_file(args.model)
    cfg = AttackConfig(epsilon=args.epsilon, iterations=args.iterations, step=args.step)
    names, images, labels = _load_dir(args.in_dir)
    if min(labels) < 0:
        raise DataError(f"{args.in_dir} needs a manifest.csv with labels to attack")
    attack_fn = fgsm if args.method == "fgsm" else bim
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "log.csv")
    with open(log_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "label", "pred_clean", "pred_adv", "linf"])
        for name, img, label in zip(names, images, labels):
            adv = quantize_budget(img, attack_fn(params, img, label, cfg), cfg.epsilon)
            save_ppm(os.path.join(args.out, name), adv)
            pred_clean = int(np.argmax(forward(params, img)))
            pred_adv = int(np.argmax(forward(params, adv)))
            linf = float(np.max(np.abs(adv - img)))
            writer.writerow([name, label, pred_clean, pred_adv, f"{linf:.9g}"])
    with open(os.path.join(args.out, "manifest.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "label"])
        writer.writerows(zip(names, labels))
    print(f"attacked {len(names)} images -> {args.out}")
    return 0


def cmd_denoise(args) -> int:
    names, images, labels = _load_dir(args.in_dir)
    os.makedirs(args.out, exist_ok=True)
    for name, img in zip(names, images):
        if args.filter == "median":
            out = median_filter(img, args.window)
        elif args.filter == "wiener-adaptive":
            gray = to_grayscale(img) if img.shape[2] == 3 else img
            out = wiener_adaptive(gray, args.window)
        else:  # wiener-deconv
            gray = to_grayscale(img) if img.shape[2] == 3 else img
            kernel = np.full((args.kernel_size, args.kernel_size),
                             1.0 / args.kernel_size**2)
            out = wiener_deconvolve(gray, kernel, args.K)
        save_ppm(os.path.join(args.out, name), out)
    if labels and min(labels) >= 0:
        with open(os.path.join(args.out, "manifest.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["filename", "label"])
            writer.writerows(zip(names, labels))
    print(f"denoised {len(names)} images -> {args.out}")
    return 0


def cmd_score(args) -> int:
    params = load_weights_file(args.model)
    names, images, _ = _load_dir(args.in_dir)
    ids = [f"{args.attack}/{os.path.splitext(n)[0]}" for n in names]
    records = score_dataset(
        params, np.stack(images), ids, [args.adv_label] * len(names),
        args.attack, args.filter, k=args.k, norm=args.norm,
    )
    if args.append and os.path.exists(args.out):
        records = read_scores(args.out) + records
    write_scores(args.out, records)
    print(f"scored {len(names)} images -> {args.out}")
    return 0


def cmd_detect_train(args) -> int:
    records = read_scores(args.scores)
    scores = np.array([r.score for r in records])
    labels = np.array([r.label for r in records])
    kinds = list(det.KINDS) if args.classifier == "auto" else [args.classifier]
    best = None
    for kind in kinds:  # ties keep the earliest kind
        hyper, cv_acc = det.tune(scores, labels, kind, folds=args.folds,
                                 seed=derive_seed(args.seed, "tune", kind))
        if best is None or cv_acc > best[2]:
            best = (kind, hyper, cv_acc)
    kind, hyper, cv_acc = best
    model = det.fit_detector(kind, scores, labels, hyper,
                             seed=derive_seed(args.seed, "fit", kind))
    with open(args.out, "w") as f:
        json.dump(det.model_to_json(model), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"{kind} cv_accuracy {cv_acc:.4f} hyperparameters {hyper} -> {args.out}")
    return 0


def cmd_detect_eval(args) -> int:
    with open(args.model) as f:
        model = det.model_from_json(json.load(f))
    records = read_scores(args.scores)
    metrics = det.evaluate(model, records)
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    return 0


def cmd_experiment_run(args) -> int:
    base = {}
    if args.config:
        with open(args.config) as f:
            base = json.load(f)
    if "FMD_SEED" in os.environ:
        try:
            base["seed"] = int(os.environ["FMD_SEED"])
        except ValueError:
            raise ConfigError(f"FMD_SEED must be an integer, got {os.environ['FMD_SEED']!r}")
    for key in ExperimentConfig.__dataclass_fields__:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    cfg = ExperimentConfig.from_dict(base)
    report = run_experiment(cfg, args.out, resume=args.resume, figures=not args.no_figures)
    with open(os.path.join(args.out, "report.txt")) as f:
        print(f.read())
    hybrid = report["hybrid"]
    for flt in ("median", "wiener"):
        print(f"hybrid {flt}: accuracy {hybrid[flt]['metrics']['accuracy']:.4f} "
              f"({hybrid[flt]['best_classifier']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="synthetic dataset tools")
    dsub = p_dataset.add_subparsers(dest="subcommand", required=True)
    p = dsub.add_parser("gen", help="generate the synthetic dataset")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_gen)

    p_model = sub.add_parser("model", help="classifier tools")
    msub = p_model.add_subparsers(dest="subcommand", required=True)
    p = msub.add_parser("train", help="train the classifier on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--split-ratio", type=float, default=None,
                   help="hold out this fraction's complement for validation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_model_train)

    p = sub.add_parser("attack", help="generate adversarial images")
    p.add_argument("--method", choices=("fgsm", "bim"), required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("denoise", help="run a denoising filter over a directory")
    p.add_argument("--filter", choices=("median", "wiener-adaptive", "wiener-deconv"),
                   required=True)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--K", type=float, default=0.01)
    p.add_argument("--kernel-size", type=int, default=3,
                   help="box blur kernel size for wiener-deconv")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("score", help="compute prediction-shift scores")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--filter", choices=("median", "wiener"), required=True)
    p.add_argument("--attack", choices=("clean", "fgsm", "bim"), required=True)
    p.add_argument("--adv-label", type=int, choices=(0, 1), required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--norm", choices=("l1", "l2"), default="l1")
    p.add_argument("--out", required=True)
    p.add_argument("--append", action="store_true")
    p.set_defaults(func=cmd_score)

    p_detect = sub.add_parser("detect", help="train and evaluate detectors")
    dtsub = p_detect.add_subparsers(dest="subcommand", required=True)
    p = dtsub.add_parser("train", help="tune and fit a detector on a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--classifier", choices=det.KINDS + ("auto",), default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect_train)
    p = dtsub.add_parser("eval", help="evaluate a detector on a scores CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect_eval)

    p_exp = sub.add_parser("experiment", help="run the end-to-end experiment")
    esub = p_exp.add_subparsers(dest="subcommand", required=True)
    p = esub.add_parser("run", help="run the full seeded pipeline")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--per-class", dest="per_class", type=int, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--split-ratio", dest="split_ratio", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--bim-step", dest="bim_step", type=float, default=None)
    p.add_argument("--bim-iterations", dest="bim_iterations", type=int, default=None)
    p.add_argument("--n-attack", dest="n_attack", type=int, default=None)
    p.add_argument("--candidate-floor", dest="candidate_floor", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--norm", choices=("l1", "l2"), default=None)
    p.add_argument("--alignment", choices=("union", "orig"), default=None)
    p.add_argument("--median-window", dest="median_window", type=int, default=None)
    p.add_argument("--wiener-window", dest="wiener_window", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--classifier", choices=det.KINDS + ("auto",), default=None)
    p.set_defaults(func=cmd_experiment_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except FmdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
