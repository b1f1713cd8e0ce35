"""
mamsketch command-line driver.

Subcommands: generate, sketch, recover, evaluate, all.  Parameters come from a
flat key=value file (``--config``) and can be overridden by flags named after
the config keys (``--N 4095 --s 10 ...``).

Exit codes: 0 success, 2 configuration/usage, 3 I/O or file format, 4 numeric.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .eig import EigenError, read_eigpairs_csv, write_eigpairs_csv
from .decode import DecodeError
from .measure import SizingWarning, ensemble_from_descriptor
from .metrics import aggregate, evaluate_trial, write_aggregate_csv, write_trial_csv
from .pipeline import (
    _FIELD_TYPES,
    ConfigError,
    load_config,
    make_ensemble,
    recover,
    run_experiment,
)
from .sparse import read_sparse_csv, write_sparse_csv
from .stream import (
    StreamError,
    columns_from_entries,
    finalize,
    read_entries_binary,
    read_entries_csv,
    read_sketch,
    sketch_columns,
    sketch_entry_chunks,
    sketch_lowrank,
    write_entries_binary,
    write_entries_csv,
    write_sketch,
)
from .synth import generate, lowrank_entries, read_ground_truth, write_ground_truth

log = logging.getLogger("mamsketch")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _config(args):
    text = ""
    if args.config:
        text = Path(args.config).read_text()
    overrides = {k: getattr(args, "cfg_" + k, None) for k in _FIELD_TYPES}
    if getattr(args, "command", None) == "all":
        overrides["out"] = args.out
    return load_config(text, overrides)


def _entries_path(out: Path, fmt: str) -> Path:
    return out / ("entries.csv" if fmt == "csv" else "entries.bin")


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(args.out or Path(cfg.out) / "truth")
    gt = generate(cfg.matrix_spec(cfg.seed_list()[0]))
    write_ground_truth(out, gt)
    if args.entries or cfg.input_kind != "factors":
        rows, cols, vals = lowrank_entries(gt)
        path = _entries_path(out, cfg.format)
        (write_entries_csv if cfg.format == "csv" else write_entries_binary)(path, rows, cols, vals)
        log.info("wrote %d entries to %s", rows.size, path)
    log.info("wrote ground truth to %s", out)
    return EXIT_OK


def cmd_sketch(args) -> int:
    cfg = _config(args)
    seed = cfg.seed_list()[0]
    ens = make_ensemble(cfg, seed)
    if cfg.input_kind == "factors":
        if not args.truth:
            raise ConfigError("--truth is required for input_kind=factors")
        sk = sketch_lowrank(ens, read_ground_truth(args.truth).factors())
    else:
        src = Path(args.entries) if args.entries else _entries_path(Path(args.truth or "."), cfg.format)
        if not src.exists():
            raise FileNotFoundError(f"entry stream {src} not found")
        reader = read_entries_csv if cfg.format == "csv" else read_entries_binary
        chunks = reader(src, cfg.chunk)
        if cfg.input_kind == "entries":
            sk = sketch_entry_chunks(ens, chunks, compensated=cfg.compensated)
        else:
            sk = sketch_columns(ens, columns_from_entries(chunks, cfg.N), compensated=cfg.compensated)
    sk = finalize(sk)
    out = Path(args.out or Path(cfg.out) / "sketch.bin")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sketch(out, sk)
    log.info("sketch m=%d written to %s", sk.m, out)
    return EXIT_OK


def cmd_recover(args) -> int:
    cfg = _config(args)
    sk_path = Path(args.sketch or Path(cfg.out) / "sketch.bin")
    sk = read_sketch(sk_path)
    ens = ensemble_from_descriptor(sk.ensemble_ref)
    if cfg.ell > sk.m:
        raise ConfigError(f"ell={cfg.ell} exceeds the sketch size m={sk.m}")
    cfg = cfg.replace(decoder="sublinear" if ens.kind == "coherent" else "cosamp", ensemble=ens.kind, m=ens.m)
    pairs, decodes = recover(cfg, ens, sk)
    out = Path(args.out or Path(cfg.out) / "recovered")
    out.mkdir(parents=True, exist_ok=True)
    write_eigpairs_csv(out / "eigpairs.csv", pairs)
    for p, x in zip(pairs, decodes):
        write_sparse_csv(out / f"rec_{p.index:03d}.csv", x)
    log.info("recovered %d eigenvectors into %s", len(pairs), out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    base = Path(cfg.out)
    truth = Path(args.truth or base / "truth")
    rec = Path(args.recovered or base / "recovered")
    sk_path = Path(args.sketch or base / "sketch.bin")
    for p in (truth, rec, sk_path):
        if not p.exists():
            raise FileNotFoundError(f"missing artifact {p}")
    gt = read_ground_truth(truth)
    sk = read_sketch(sk_path)
    ens = ensemble_from_descriptor(sk.ensemble_ref)
    pairs = read_eigpairs_csv(rec / "eigpairs.csv")
    decodes = []
    for p in pairs:
        f = rec / f"rec_{p.index:03d}.csv"
        if not f.exists():
            raise FileNotFoundError(f"missing recovered vector {f}")
        decodes.append(read_sparse_csv(f))
    seed = gt.spec.seed if gt.spec is not None else 0
    records = {cfg.s: evaluate_trial(gt, pairs, decodes, ens, cfg.s, trial=seed)}
    _write_results(Path(args.out or base), records)
    return EXIT_OK


def _write_results(out: Path, records) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_trial_csv(out / "trials.csv", records)
    rows = aggregate(records)
    write_aggregate_csv(out / "aggregate.csv", rows)
    for row in rows:
        log.info(
            "x=%s j=%d pre=%.4g post=%.4g beta=%.4g",
            row["x"], row["j"], row["mean_pre_err"], row["mean_post_err"], row["mean_beta"],
        )


def cmd_all(args) -> int:
    cfg = _config(args)
    records = run_experiment(cfg)
    _write_results(Path(args.out or cfg.out), records)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("-v", "--verbose", action="store_true")
    for name in _FIELD_TYPES:
        if name == "out":
            continue  # each subcommand has its own --out
        flag = "--" + name.replace("_", "-")
        kw = {"dest": "cfg_" + name, "default": None, "metavar": name.upper()}
        if name == "format":
            kw["choices"] = ["csv", "binary"]
        elif name == "input_kind":
            kw["choices"] = ["factors", "entries", "columns"]
        common.add_argument(flag, **kw)

    ap = argparse.ArgumentParser(prog="mamsketch", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a random test matrix (ground truth)")
    p.add_argument("--out", dest="out", help="output directory (default <out>/truth)")
    p.add_argument("--entries", action="store_true", help="also write the dense entry stream of A")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sketch", parents=[common], help="one-pass MAM* sketch of a matrix")
    p.add_argument("--truth", help="ground-truth directory (factors input)")
    p.add_argument("--entries", help="entry stream file (entries/columns input)")
    p.add_argument("--out", dest="out", help="sketch file (default <out>/sketch.bin)")
    p.set_defaults(func=cmd_sketch)

    p = sub.add_parser("recover", parents=[common], help="top eigenvectors of a sketch, decoded")
    p.add_argument("--sketch", help="sketch file (default <out>/sketch.bin)")
    p.add_argument("--out", dest="out", help="output directory (default <out>/recovered)")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("evaluate", parents=[common], help="error records against the ground truth")
    p.add_argument("--truth")
    p.add_argument("--recovered")
    p.add_argument("--sketch")
    p.add_argument("--out", dest="out", help="directory for trials.csv and aggregate.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("all", parents=[common], help="full experiment over seeds (and a sweep)")
    p.add_argument("--out", dest="out", help="directory for trials.csv and aggregate.csv")
    p.set_defaults(func=cmd_all)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args.verbose:
        warnings.simplefilter("ignore", SizingWarning)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"mamsketch: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, StreamError, KeyError) as exc:
        print(f"mamsketch: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DecodeError, EigenError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"mamsketch: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"mamsketch: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
