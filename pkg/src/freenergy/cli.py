"""Command-line front end: train, eval, reconstruct, compare, inspect.

Every failure exits nonzero after printing a single machine-parseable
line: ``error=<code> detail=<human readable text>``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .archive import ArchiveError, archive_load, archive_save
from .config import ConfigError, parse_config
from .core import InferenceConfig
from .data import CorruptionSpec, corrupt
from .runs import (
    COMPARE_HEADER,
    METRIC_HEADER,
    RECON_HEADER,
    RunError,
    compare_run,
    evaluate,
    load_datasets,
    model_from_archive,
    reconstruct_run,
    train_run,
)
from . import graph as graph_mod
from . import reports


class CliError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args):
    try:
        return parse_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        raise CliError("config_invalid", str(exc)) from exc
    except OSError as exc:
        raise CliError("config_unreadable", str(exc)) from exc


def _load_archive(path):
    try:
        return archive_load(path)
    except ArchiveError as exc:
        raise CliError("archive_invalid", str(exc)) from exc
    except OSError as exc:
        raise CliError("archive_unreadable", str(exc)) from exc


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train, test = load_datasets(cfg)
    arch, rows = train_run(cfg, train, test)
    out = _out_dir(args)
    archive_save(out / "model.fen", arch)
    reports.write_csv(out / "metrics.csv", METRIC_HEADER, rows)
    label = "accuracy" if cfg.task == "classify" else "mse"
    reports.render_training_figure(out / "metrics.png", rows, label)
    _say(args, f"trained {cfg.framework}/{cfg.task} for {cfg.epochs} epochs -> {out}")
    if rows:
        _say(args, f"final eval {label}={rows[-1][2]}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    arch = _load_archive(args.archive)
    _, test = load_datasets(cfg)
    icfg = InferenceConfig(
        gamma=cfg.inference["gamma"],
        iterations=cfg.inference["iterations"],
        tol=cfg.inference["tol"],
        backtracking=cfg.inference["backtracking"],
        alpha=cfg.inference["alpha"],
        schedule=cfg.inference["schedule"],
    )
    kind, value = evaluate(arch, test, icfg, cfg.seed)
    print(f"{kind}={value!r}")
    if args.out:
        out = _out_dir(args)
        reports.write_csv(out / "eval.csv", ["metric", "value"], [[kind, value]])
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _load_config(args)
    arch = _load_archive(args.archive)
    _, test = load_datasets(cfg)
    spec = CorruptionSpec(
        cfg.corruption["kind"], cfg.corruption["fraction"], cfg.corruption["seed"]
    )
    icfg = InferenceConfig(
        gamma=cfg.inference["gamma"],
        iterations=cfg.inference["iterations"],
        tol=cfg.inference["tol"],
        backtracking=cfg.inference["backtracking"],
        alpha=cfg.inference["alpha"],
    )
    rows = reconstruct_run(arch, test, spec, icfg)
    out = _out_dir(args)
    reports.write_csv(out / "reconstruction.csv", RECON_HEADER, rows)

    # Render a small gallery of completions next to the table.
    g = model_from_archive(arch)
    originals, cues, retrieved = [], [], []
    for i, v in enumerate(test.inputs[:8]):
        cue, known = corrupt(v, CorruptionSpec(spec.kind, spec.fraction, spec.seed + i))
        originals.append(v)
        cues.append(cue)
        retrieved.append(graph_mod.memory_retrieve(g, cue, known, icfg))
    reports.render_reconstruction_figure(out / "reconstruction.png", originals, cues, retrieved)

    mean_agree = float(np.mean([r[2] for r in rows])) if rows else 1.0
    _say(args, f"reconstructed {len(rows)} items, mean agreement {mean_agree:.4f} -> {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    train, test = load_datasets(cfg)
    rows, gap = compare_run(cfg, train, test)
    out = _out_dir(args)
    reports.write_csv(out / "compare.csv", COMPARE_HEADER, rows)
    reports.render_compare_figure(out / "compare.png", rows)
    _say(args, f"final accuracy gap {gap!r} -> {out}")
    return 0


def cmd_inspect(args) -> int:
    arch = _load_archive(args.archive)
    print(f"framework={arch.framework}")
    print(f"dims={','.join(str(d) for d in arch.dims)}")
    print(f"activation={arch.activation}")
    for k, v in arch.meta.items():
        print(f"meta.{k}={v}")
    for name, mat in arch.matrices.items():
        print(f"matrix {name} shape={mat.shape}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freenergy", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True, archive=False, out_required=True):
        if config:
            p.add_argument("--config", required=True, help="run configuration file")
        if archive:
            p.add_argument("--archive", required=True, help="model archive path")
        p.add_argument("--out", required=out_required, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress chatter")

    p = sub.add_parser("train", help="train a model and write archive + metrics")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate an archive on a dataset")
    common(p, archive=True, out_required=False)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("reconstruct", help="retrieve corrupted patterns with a graph archive")
    common(p, archive=True)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("compare", help="train pc and backprop side by side")
    common(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("inspect", help="print archive header and shapes")
    p.add_argument("--archive", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_inspect)

    return parser


def main(argv=None) -> int:
    # Worker pools, when used, are capped by FREENERGY_THREADS; the current
    # orchestration is single-threaded, which trivially respects any cap.
    cap = os.environ.get("FREENERGY_THREADS")
    if cap is not None:
        try:
            if int(cap) < 1:
                print("error=config_invalid detail=FREENERGY_THREADS must be >= 1", file=sys.stderr)
                return 1
        except ValueError:
            print(f"error=config_invalid detail=FREENERGY_THREADS is not an integer: {cap!r}", file=sys.stderr)
            return 1
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error={exc.code} detail={exc.detail}", file=sys.stderr)
        return 1
    except RunError as exc:
        print(f"error={exc.code} detail={exc.detail}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
