"""Command-line entry points: train, eval, transfer, sweep.

Every run is driven by a RunConfig assembled from (defaults, config
file, command-line flags), most specific last.  Outputs land in the
--out directory: delimited logs and reports, the checkpoint, and
rendered figures.  Paths of written files are echoed on stdout.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import _KEY_TO_FIELD, RunConfig, make_config, parse_config_file
from .data import (
    Dataset,
    TEST,
    load_adult,
    load_german,
    load_mnist,
    make_synthetic,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    TrainingDiverged,
)
from .evaluation import (
    CSV_COLUMNS,
    evaluate,
    export_codes,
    posterior_means,
    style_transfer_grid,
    write_pgm,
)
from .figures import ladder_figure, sweep_figure, training_figure, transfer_figure
from .train import (
    load_model_checkpoint,
    save_model_checkpoint,
    train_model,
    write_loss_log,
)

CHECKPOINT_NAME = "checkpoint.ckpt"

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def load_dataset(cfg: RunConfig) -> Dataset:
    """Resolve conventional file names under ``data_dir`` and load."""
    d = cfg.data_dir
    if cfg.dataset == "synthetic":
        return make_synthetic(cfg.synthetic_n, seed=cfg.seed)
    if cfg.dataset == "german":
        return load_german(os.path.join(d, "german.data"), seed=cfg.seed)
    if cfg.dataset == "adult":
        return load_adult(os.path.join(d, "adult.data"),
                          os.path.join(d, "adult.test"), seed=cfg.seed)
    paths = [os.path.join(d, name) for name in MNIST_FILES]
    return load_mnist(*paths, seed=cfg.seed,
                      limit_train=cfg.limit_train, limit_test=cfg.limit_test)


def _emit(path):
    print(f"wrote {path}")


def _run_train(cfg: RunConfig, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    dataset = load_dataset(cfg)

    card_path = os.path.join(out_dir, "data_card.txt")
    with open(card_path, "w") as f:
        f.write(dataset.card)
    _emit(card_path)

    result = train_model(cfg, dataset)

    config_path = os.path.join(out_dir, "config.txt")
    with open(config_path, "w") as f:
        f.write("\n".join(cfg.echo_lines()) + "\n")
    _emit(config_path)

    log_path = os.path.join(out_dir, "loss_log.csv")
    write_loss_log(log_path, result.history)
    _emit(log_path)

    fig_path = os.path.join(out_dir, "training_curves.png")
    training_figure(result.history, fig_path)
    _emit(fig_path)

    ckpt_path = os.path.join(out_dir, CHECKPOINT_NAME)
    save_model_checkpoint(ckpt_path, cfg, dataset, result.models)
    _emit(ckpt_path)
    return dataset, result


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    _run_train(cfg, cfg.out_dir)
    return 0


def _run_eval(cfg: RunConfig, models, out_dir, adversary_seed=None):
    os.makedirs(out_dir, exist_ok=True)
    dataset = load_dataset(cfg)
    report = evaluate(
        models["encoder"], models.get("predictor"), dataset,
        objective=cfg.objective, seed=cfg.seed, lam=cfg.lam, beta=cfg.beta,
        adversary_seed=adversary_seed,
    )

    report_path = os.path.join(out_dir, "report.txt")
    with open(report_path, "w") as f:
        f.write(report.to_text())
    _emit(report_path)

    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w") as f:
        f.write(report.to_csv())
    _emit(csv_path)

    codes_path = os.path.join(out_dir, "codes.csv")
    export_codes(models["encoder"], dataset, codes_path)
    _emit(codes_path)

    fig_path = os.path.join(out_dir, "ladder.png")
    ladder_figure(report, fig_path)
    _emit(fig_path)
    return report


def cmd_eval(args) -> int:
    cfg, _, models = load_model_checkpoint(args.checkpoint)
    if args.data_dir is not None:
        cfg.data_dir = args.data_dir
    out_dir = args.out if args.out is not None else os.path.dirname(args.checkpoint) or "."
    _run_eval(cfg, models, out_dir, adversary_seed=args.adversary_seed)
    return 0


def cmd_transfer(args) -> int:
    cfg, meta, models = load_model_checkpoint(args.checkpoint)
    if cfg.objective != "vae" or cfg.dataset != "mnist":
        raise ConfigError("transfer requires an mnist vae checkpoint")
    if args.data_dir is not None:
        cfg.data_dir = args.data_dir
    dataset = load_dataset(cfg)

    test_idx = np.flatnonzero(dataset.split == TEST)
    if args.sources:
        sources = [int(t) for t in args.sources.split(",") if t.strip()]
    else:
        sources = list(range(min(8, test_idx.size)))
    bad = [s for s in sources if s < 0 or s >= test_idx.size]
    if bad:
        raise ConfigError(f"source index out of range: {bad}")
    digits = ([int(t) for t in args.digits.split(",") if t.strip()]
              if args.digits else list(range(10)))
    if any(k < 0 or k >= dataset.d_c for k in digits):
        raise ConfigError(f"digit out of range: {digits}")

    x_src = dataset.x[test_idx[sources]]
    means = posterior_means(models["encoder"], x_src)
    shape = tuple(int(t) for t in meta["image-shape"].split(","))
    grid = style_transfer_grid(models["decoder"], means, shape,
                               n_covariates=dataset.d_c)
    h, w = shape
    cols = np.concatenate([grid[:, k * w : (k + 1) * w] for k in digits], axis=1)

    out_dir = args.out if args.out is not None else os.path.dirname(args.checkpoint) or "."
    os.makedirs(out_dir, exist_ok=True)
    pgm_path = os.path.join(out_dir, "transfer.pgm")
    write_pgm(pgm_path, cols)
    _emit(pgm_path)
    png_path = os.path.join(out_dir, "transfer.png")
    transfer_figure(cols, png_path)
    _emit(png_path)
    return 0


def cmd_sweep(args) -> int:
    failures = []
    reports = []
    lams = [float(t) for t in args.lambdas.split(",") if t.strip()]
    seeds = [int(t) for t in args.seeds.split(",") if t.strip()]
    if not lams:
        raise ConfigError("lambdas: empty list")
    base_overrides = _flag_overrides(args)
    out_root = base_overrides.pop("out", None) or "runs/sweep"
    file_values = parse_config_file(args.config) if args.config else {}

    os.makedirs(out_root, exist_ok=True)
    for lam in lams:
        for seed in seeds:
            run_dir = os.path.join(out_root, "lam%g_seed%d" % (lam, seed))
            overrides = dict(base_overrides)
            overrides["lambda"] = lam
            overrides["seed"] = seed
            overrides["out"] = run_dir
            try:
                cfg = make_config(file_values, overrides)
                _, result = _run_train(cfg, run_dir)
                report = _run_eval(cfg, result.models, run_dir)
                reports.append(report)
            except (ConfigError, DataFormatError, CheckpointError,
                    TrainingDiverged, OSError) as e:
                failures.append((run_dir, str(e)))
                print(f"run {run_dir} failed: {e}", file=sys.stderr)

    table_path = os.path.join(out_root, "sweep.csv")
    with open(table_path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for report in reports:
            f.write(report.to_csv(header=False))
    _emit(table_path)
    if reports:
        fig_path = os.path.join(out_root, "sweep.png")
        sweep_figure(reports, fig_path)
        _emit(fig_path)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# argument plumbing


def _add_config_flags(p, keys):
    for key in keys:
        p.add_argument(f"--{key}", dest=_KEY_TO_FIELD[key], type=str,
                       default=None, metavar="V")


_TRAIN_KEYS = tuple(k for k in _KEY_TO_FIELD)


def _flag_overrides(args):
    out = {}
    for key, attr in _KEY_TO_FIELD.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    # sweep owns lambda and seed; they are layered per run
    for owned in ("lambda", "seed"):
        out.pop(owned, None)
    return out


def _config_from_args(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {}
    for key, attr in _KEY_TO_FIELD.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return make_config(file_values, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invarep",
        description="Invariant-representation training and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model, save a checkpoint")
    p_train.add_argument("--config", default=None, metavar="FILE")
    _add_config_flags(p_train, _TRAIN_KEYS)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data-dir", default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--adversary-seed", type=int, default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_tr = sub.add_parser("transfer", help="style-transfer grid from a vae checkpoint")
    p_tr.add_argument("--checkpoint", required=True)
    p_tr.add_argument("--data-dir", default=None)
    p_tr.add_argument("--out", default=None)
    p_tr.add_argument("--sources", default=None,
                      help="comma-separated test image indices (default: first 8)")
    p_tr.add_argument("--digits", default=None,
                      help="comma-separated target digits (default: all 10)")
    p_tr.set_defaults(func=cmd_transfer)

    p_sw = sub.add_parser("sweep", help="train+eval across a lambda list")
    p_sw.add_argument("--config", default=None, metavar="FILE")
    p_sw.add_argument("--lambdas", default="0,0.1,1,10")
    p_sw.add_argument("--seeds", default="0")
    _add_config_flags(p_sw, _TRAIN_KEYS)
    p_sw.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, CheckpointError, TrainingDiverged) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename or e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
