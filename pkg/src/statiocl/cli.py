"""Command line entry point: ``statiocl <subcommand> [--config F] [--seed S] [--out DIR]``.

Every subcommand writes into ``<out>/<confighash>-s<seed>/`` together with
the fully resolved ``config.ini``.  Exit status is 0 on success, 1 for invalid
input (bad config, missing or malformed files, shape mismatches) and 2 for any
other failure at run time.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import numcore as nc
from .config import RunConfig, config_hash, parse_config, run_directory, to_ini
from .data import ConfigError, DatasetError, gen_synthetic, load_dataset, write_dataset
from .encoder import embed
from .evaluate import (embed_export, fnp_audit, format_fnp_comparison, format_label_curve, label_fraction_protocol,
                       linear_probe, load_encoder)
from .stationarity import channel_pvalues, summarize_states
from .train import batch_schedule, pretrain, stationarity_states

logger = logging.getLogger("statiocl")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
_INVALID = (ConfigError, DatasetError, nc.CheckpointError, nc.ShapeError, FileNotFoundError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


# -- shared helpers ------------------------------------------------------

def _resolve(args) -> RunConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.explicit.add(("run", "seed"))
    if getattr(args, "manifest", None):
        cfg.data = dataclasses.replace(cfg.data, manifest=str(args.manifest))
    return cfg


def _run_dir(args, cfg: RunConfig) -> Path:
    run_dir = run_directory(args.out, cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    text = to_ini(cfg)
    (run_dir / "config.ini").write_text(text)
    logger.info("run directory %s (config %s, seed %d)", run_dir, config_hash(cfg), cfg.seed)
    logger.debug("resolved configuration:\n%s", text)
    return run_dir


def _dataset(cfg: RunConfig):
    if cfg.data.manifest:
        ds = load_dataset(cfg.data.manifest)
    else:
        logger.info("no manifest given; generating the synthetic corpus described by [data]")
        ds = gen_synthetic(cfg.data.synth_spec(cfg.seed)).normalize()
    if ("encoder", "in_channels") not in cfg.explicit:
        cfg.encoder = dataclasses.replace(cfg.encoder, in_channels=ds.channels)
    return ds


def _checkpoint(path):
    if path is None:
        raise ConfigError("this subcommand needs --checkpoint")
    return nc.load_checkpoint(path)


def _embeddings(ckpt, ds):
    params, enc = load_encoder(ckpt)
    if enc.in_channels != ds.channels:
        raise nc.ShapeError(f"checkpoint encoder expects {enc.in_channels} channels, dataset has {ds.channels}")
    return embed(params, ds.values, enc)


def _require_labels(ds):
    if ds.labels is None:
        raise DatasetError("this subcommand needs class labels, but the dataset has none")


def _emit(path: Path, text: str) -> None:
    path.write_text(text)
    sys.stdout.write(text)
    logger.info("wrote %s", path)


def _probe_table(result) -> str:
    lines = ["metric\tvalue"]
    for key in ("accuracy", "macro_f1", "macro_recall", "auprc"):
        v = getattr(result, key)
        lines.append(f"{key}\t{'NA' if v is None else f'{v:.6f}'}")
    for c, stats in result.per_class.items():
        for key, v in stats.items():
            lines.append(f"class_{c}_{key}\t{'NA' if v is None else f'{v:.6f}' if isinstance(v, float) else v}")
    lines.append(f"n_test\t{result.n_test}")
    return "\n".join(lines) + "\n"


def _training_batches(ds, cfg: RunConfig) -> list[np.ndarray]:
    train = ds.indices("train")
    tc = cfg.train_config()
    return [train[rows] for epoch in range(tc.epochs)
            for rows in batch_schedule(train.size, tc.batch_size, tc.seed, epoch, tc.shuffle)]


def _fnp_reports(ds, states, cfg: RunConfig):
    batches = _training_batches(ds, cfg)
    return [fnp_audit(ds.labels, states, ds.recording, ds.position, cfg.contrast, batches, policy)
            for policy in ("statiocl", "random")]


# -- subcommands ---------------------------------------------------------

def cmd_gen_synth(args) -> int:
    cfg = _resolve(args)
    run_dir = _run_dir(args, cfg)
    ds = gen_synthetic(cfg.data.synth_spec(cfg.seed))
    manifest = write_dataset(ds, run_dir / "data")
    print(manifest)
    return EXIT_OK


def cmd_adf(args) -> int:
    cfg = _resolve(args)
    if args.threshold is not None:
        cfg.contrast = dataclasses.replace(cfg.contrast, adf_threshold=args.threshold)
    ds = _dataset(cfg)
    run_dir = _run_dir(args, cfg)
    threshold = cfg.contrast.adf_threshold
    lines = ["segment\trecording\tposition\t" + "\t".join(f"p_ch{v}" for v in range(ds.channels)) + "\tstate"]
    states = stationarity_states(ds, threshold, run_dir / "cache")
    for i in range(len(ds)):
        pvals = channel_pvalues(ds.values[i])
        cells = "\t".join("NA" if p is None else repr(p) for p in pvals)
        lines.append(f"{ds.segment_id[i]}\t{ds.recording[i]}\t{ds.position[i]}\t{cells}\t{states[i]}")
    (run_dir / "adf.tsv").write_text("\n".join(lines) + "\n")
    summary = summarize_states(states, ds.labels)
    print(f"threshold\t{threshold}")
    for key, v in summary.items():
        print(f"{key}\t{v}")
    logger.info("wrote %s", run_dir / "adf.tsv")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _resolve(args)
    ds = _dataset(cfg)
    run_dir = _run_dir(args, cfg)
    result = pretrain(ds, cfg.encoder, cfg.augment, cfg.contrast, cfg.train_config(), out_dir=run_dir,
                      resume_from=args.resume)
    last = result.history[-1] if result.history else None
    if last:
        print(f"epoch\t{last['epoch']}\tL\t{last['loss']:.6f}\tL_NC\t{last['nc']:.6f}\tL_TC\t{last['tc']:.6f}")
    print(run_dir / "final.ckpt")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _resolve(args)
    ds = _dataset(cfg)
    _require_labels(ds)
    ckpt = _checkpoint(args.checkpoint)
    run_dir = _run_dir(args, cfg)
    result = linear_probe(_embeddings(ckpt, ds), ds.labels, ds.split, cfg.seed, **cfg.eval.probe_kwargs())
    _emit(run_dir / "probe.tsv", _probe_table(result))
    return EXIT_OK


def cmd_label_curve(args) -> int:
    cfg = _resolve(args)
    ds = _dataset(cfg)
    _require_labels(ds)
    ckpt = _checkpoint(args.checkpoint)
    run_dir = _run_dir(args, cfg)
    curve = label_fraction_protocol(_embeddings(ckpt, ds), ds.labels, ds.split, cfg.eval.fractions, cfg.seed,
                                    **cfg.eval.probe_kwargs())
    _emit(run_dir / "label_curve.tsv", format_label_curve(curve))
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = _resolve(args)
    ds = _dataset(cfg)
    ckpt = _checkpoint(args.checkpoint)
    run_dir = _run_dir(args, cfg)
    out = Path(args.output) if args.output else run_dir / "embeddings.csv"
    params, enc = load_encoder(ckpt)
    if enc.in_channels != ds.channels:
        raise nc.ShapeError(f"checkpoint encoder expects {enc.in_channels} channels, dataset has {ds.channels}")
    embed_export(ckpt, ds, out)
    print(out)
    return EXIT_OK


def cmd_fnp_report(args) -> int:
    cfg = _resolve(args)
    ds = _dataset(cfg)
    _require_labels(ds)
    run_dir = _run_dir(args, cfg)
    states = stationarity_states(ds, cfg.contrast.adf_threshold, run_dir / "cache")
    _emit(run_dir / "fnp_report.tsv", format_fnp_comparison(_fnp_reports(ds, states, cfg)))
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = _resolve(args)
    ds = _dataset(cfg)
    _require_labels(ds)
    run_dir = _run_dir(args, cfg)
    if args.values:
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    else:
        values = list(cfg.eval.grid_betas if args.param == "beta" else cfg.eval.grid_thresholds)
    field = "beta" if args.param == "beta" else "adf_threshold"
    rows = [f"{args.param}\taccuracy\tmacro_f1\thard_fnp_rate\tcombined_rate\tfinal_loss"]
    for value in values:
        contrast = dataclasses.replace(cfg.contrast, **{field: value})
        sub = dataclasses.replace(cfg, contrast=contrast)
        sub_dir = run_dir / f"{args.param}-{value:g}"
        states = stationarity_states(ds, contrast.adf_threshold, run_dir / "cache")
        result = pretrain(ds, cfg.encoder, cfg.augment, contrast, sub.train_config(), states=states, out_dir=sub_dir)
        (sub_dir / "config.ini").write_text(to_ini(sub))
        z = embed(result.params, ds.values, cfg.encoder)
        probe = linear_probe(z, ds.labels, ds.split, cfg.seed, **cfg.eval.probe_kwargs())
        report = _fnp_reports(ds, states, sub)[0]

        def fmt(v):
            return "NA" if v is None else f"{v:.4f}"

        rows.append(f"{value:g}\t{probe.accuracy:.4f}\t{probe.macro_f1:.4f}\t{fmt(report.hard_fnp_rate)}\t"
                    f"{fmt(report.combined_rate)}\t{result.history[-1]['loss']:.5f}")
    _emit(run_dir / f"grid_{args.param}.tsv", "\n".join(rows) + "\n")
    return EXIT_OK


# -- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--out", type=Path, default=Path("runs"), help="parent of the run directory (default: runs)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    data = _Parser(add_help=False)
    data.add_argument("--manifest", type=Path, help="dataset manifest; default: synthetic corpus from [data]")

    ckpt = _Parser(add_help=False)
    ckpt.add_argument("--checkpoint", type=Path, required=True)

    parser = _Parser(prog="statiocl", description="Stationarity-aware contrastive pretraining for time series.")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("gen-synth", parents=[common], help="write the synthetic corpus described by [data]")
    p.set_defaults(func=cmd_gen_synth)

    p = subs.add_parser("adf", parents=[common, data], help="per-segment ADF p-values and stationarity states")
    p.add_argument("--threshold", type=float, help="overrides [contrast] adf_threshold")
    p.set_defaults(func=cmd_adf)

    p = subs.add_parser("pretrain", parents=[common, data], help="contrastive pretraining")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p.set_defaults(func=cmd_pretrain)

    p = subs.add_parser("probe", parents=[common, data, ckpt], help="linear probe on frozen embeddings")
    p.set_defaults(func=cmd_probe)

    p = subs.add_parser("label-curve", parents=[common, data, ckpt], help="probe accuracy against label fraction")
    p.set_defaults(func=cmd_label_curve)

    p = subs.add_parser("embed", parents=[common, data, ckpt], help="export embeddings as CSV")
    p.add_argument("--output", type=Path, help="CSV path (default: <run dir>/embeddings.csv)")
    p.set_defaults(func=cmd_embed)

    p = subs.add_parser("fnp-report", parents=[common, data], help="false negative pair rates, ours vs random")
    p.set_defaults(func=cmd_fnp_report)

    p = subs.add_parser("grid", parents=[common, data], help="sweep beta or the ADF threshold")
    p.add_argument("--param", choices=("beta", "threshold"), required=True)
    p.add_argument("--values", help="comma-separated values (default: [eval] grid_betas / grid_thresholds)")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
