"""Command line front end.

    wavesrc synthesize   --config run.yaml [--delta 0.02 ...]  -> cauchy.csv
    wavesrc differentiate INPUT.csv --diff-eps 1.0             -> second derivatives CSV
    wavesrc reconstruct  --config run.yaml [--cauchy cauchy.csv]
    wavesrc sweep        sweep.yaml --out DIR
    wavesrc inspect      report.json

Exit codes: 0 success, 2 configuration/model error, 3 numerical failure,
4 solver did not converge.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, RunConfig, SweepConfig
from .errors import ConfigError, WavesrcError
from .forward import CauchyRecord
from .pipeline import run_pipeline, run_sweep, synthesize
from .regdiff import differentiate_record

log = logging.getLogger("wavesrc")

_SKIP = {"schema_version", "source", "extent"}


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    hints = typing.get_type_hints(RunConfig)
    for f in dataclasses.fields(RunConfig):
        if f.name in _SKIP:
            continue
        hint = str(hints[f.name])
        conv = _bool if "bool" in hint else int if "int" in hint else float if "float" in hint else str
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=conv, default=None,
                       metavar=f.name.upper())
    p.add_argument("--extent", type=float, nargs=4, default=None, metavar=("X0", "X1", "Y0", "Y1"))


def resolve_config(args) -> RunConfig:
    data = {"schema_version": SCHEMA_VERSION}
    if args.config:
        cfg = RunConfig.load(args.config)
        data = cfg.to_dict()
        # profile-derived sizes stay overridable by a profile flag
        if getattr(args, "profile", None):
            for k in ("inverse_n", "fine_n", "n_t"):
                data[k] = None
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if f.name not in ("schema_version", "source") and v is not None:
            data[f.name] = v
    return RunConfig.from_dict(data)


def cmd_synthesize(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out or Path(cfg.output_dir) / "cauchy.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    synthesize(cfg).to_csv(out)
    print(out)
    return 0


def cmd_differentiate(args) -> int:
    rec = CauchyRecord.from_csv(args.input)
    F_tt, G_tt = differentiate_record(rec, args.diff_eps, form=args.diff_form, lag=args.diff_lag)
    nb, nt = F_tt.shape
    out = Path(args.out or Path(args.input).with_name("cauchy_tt.csv"))
    header = {**rec.header(), "format": "wavesrc-cauchy-tt/1", "diff_eps": args.diff_eps,
              "diff_lag": args.diff_lag, "diff_form": args.diff_form}
    with open(out, "w", newline="\n") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write("node,j,F_tt,G_tt\n")
        np.savetxt(fh, np.column_stack([np.repeat(np.arange(1, nb + 1), nt), np.tile(np.arange(1, nt + 1), nb),
                                        F_tt.ravel(), G_tt.ravel()]),
                   fmt=["%d", "%d", "%.17g", "%.17g"], delimiter=",")
    print(out)
    return 0


def cmd_reconstruct(args) -> int:
    cfg = resolve_config(args)
    record = CauchyRecord.from_csv(args.cauchy) if args.cauchy else None
    res = run_pipeline(cfg, record=record)
    m = res.report["metrics"]
    print(f"status={res.report['status']} min={m['min_comp']:.4g} ({m['err_min_rel']:.2%}) "
          f"max={m['max_comp']:.4g} ({m['err_max_rel']:.2%}) l2={m['l2_rel']:.4g} -> {cfg.output_dir}")
    return res.status


def cmd_sweep(args) -> int:
    sweep = SweepConfig.load(args.sweep)
    rows, _ = run_sweep(sweep.expand(), args.out, workers=args.workers or sweep.workers)
    failed = sum(not str(r["status"]).startswith(("ok", "not_converged")) for r in rows)
    print(f"{len(rows)} runs, {failed} failed -> {args.out}")
    return 0


def cmd_inspect(args) -> int:
    report = json.loads(Path(args.report).read_text())
    m = report["metrics"]
    print(f"status     {report['status']}")
    print(f"source     {report['source']}")
    print(f"delta      {report['delta']}  seed {report['seed']}")
    print(f"min        true {m['min_true']:.6g}  computed {m['min_comp']:.6g}  error {m['err_min_rel']:.2%}")
    print(f"max        true {m['max_true']:.6g}  computed {m['max_comp']:.6g}  error {m['err_max_rel']:.2%}")
    print(f"L2 error   {m['l2_rel']:.6g}{' (absolute)' if m['l2_is_absolute'] else ''}")
    s = report["solver"]
    print(f"solver     {s['method']}  iterations {s['iterations']}  residual {s['residual_rel']:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wavesrc", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synthesize", help="forward solve and write noisy Cauchy data")
    _add_config_flags(p)
    p.add_argument("--out", help="output CSV (default OUTPUT_DIR/cauchy.csv)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("differentiate", help="regularised second time derivatives of a Cauchy CSV")
    p.add_argument("input")
    p.add_argument("--diff-eps", type=float, default=RunConfig.diff_eps)
    p.add_argument("--diff-lag", type=int, default=RunConfig.diff_lag)
    p.add_argument("--diff-form", choices=("unscaled", "scaled", "verbatim"), default=RunConfig.diff_form)
    p.add_argument("--out")
    p.set_defaults(func=cmd_differentiate)

    p = sub.add_parser("reconstruct", help="full pipeline")
    _add_config_flags(p)
    p.add_argument("--cauchy", help="use this Cauchy CSV instead of synthesising")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("sweep", help="YAML with base, axes, workers")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="print a report")
    p.add_argument("report")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except WavesrcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
