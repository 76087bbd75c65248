"""Command-line front end.

    blsmo synth    --config cfg.json | --example example1   [--out DIR] [--sdpa]
    blsmo run      --config cfg.json | --example example1   [--gains gains.json] [--out DIR]
    blsmo sweep    --config cfg.json | --example example1   --param eta --values 1e-2,1e-3
    blsmo examples list | show NAME

Exit codes: 0 success, 1 invalid config or model, 2 infeasible synthesis,
3 numerical synthesis failure, 4 simulation failure, 5 reconstruction
failure, 6 unknown sweep parameter, 7 bad command-line usage, 10 other
toolkit errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Optional, Sequence

from .errors import BLSMOError, ConfigInvalid
from .scenarios import (
    EXAMPLES,
    SWEEP_PARAMETERS,
    build_plant,
    example_config,
    load_config,
    run_pipeline,
    run_synthesis,
    synthesis_config,
    sweep,
)

USAGE_EXIT = 7


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _dump_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(args) -> dict:
    if args.example:
        cfg = example_config(args.example)
    else:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_dir(args, cfg) -> str:
    out = args.out or cfg.get("output", {}).get("directory") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _formats(args, cfg) -> set[str]:
    if args.format:
        return set(args.format)
    return set(cfg.get("output", {}).get("formats", ["csv", "json"]))


def cmd_synth(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    res = run_synthesis(cfg)
    _dump_json(os.path.join(out, "gains.json"), res.gains_document())
    if args.sdpa:
        from .descriptor import build_descriptor
        from .sdp import write_sdpa
        from .synthesis import assemble_lmi

        plant = build_plant(cfg)
        write_sdpa(assemble_lmi(build_descriptor(plant), synthesis_config(cfg, plant)),
                   os.path.join(out, "synthesis.dat-s"))
    d = res.diagnostics
    print(f"feasible: mu={d['mu']:.6g} lambda1={d['lambda1']:.6g} bound={d['ultimate_bound']:.6g}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.gains:
        try:
            with open(args.gains, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read gains {args.gains}: {exc}") from None
        doc.pop("diagnostics", None)
        cfg["gains"] = doc
    out = _out_dir(args, cfg)
    fmts = _formats(args, cfg)
    res = run_pipeline(cfg)
    if "csv" in fmts:
        res.trace.to_csv(os.path.join(out, "trace.csv"))
        if res.reconstruction is not None:
            res.reconstruction.to_csv(os.path.join(out, "reconstruction.csv"))
    summary = res.summary()
    summary["seed"] = cfg.get("seed", 0)
    if "json" in fmts:
        _dump_json(os.path.join(out, "metrics.json"), summary)
    m = res.metrics
    line = f"terminal error {m.terminal_sup_error:.4g} (bound {m.bound:.4g}, within={m.within_bound})"
    if res.reconstruction is not None and res.reconstruction.mse is not None:
        line += f", reconstruction mse {res.reconstruction.mse:.4g}"
    print(line)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigInvalid(f"--values must be comma-separated numbers, got {args.values!r}") from None
    rows = sweep(cfg, args.param, values, jobs=args.jobs)
    out = _out_dir(args, cfg)
    fmts = _formats(args, cfg)
    if "csv" in fmts:
        keys = list(dict.fromkeys(k for r in rows for k in r))
        with open(os.path.join(out, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in rows:
                w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})
    if "json" in fmts:
        _dump_json(os.path.join(out, "sweep.json"), rows)
    for r in rows:
        print(f"{r['parameter']}={r['value']:g}: terminal error {r['terminal_sup_error']:.4g}")
    return 0


def cmd_examples(args) -> int:
    if args.action == "list":
        for name in sorted(EXAMPLES):
            print(name)
        return 0
    if not args.name:
        raise _UsageError("examples show: NAME is required")
    print(json.dumps(example_config(args.name), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blsmo", description="Boundary-layer sliding-mode observer toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_args(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="scenario JSON file")
        src.add_argument("--example", choices=sorted(EXAMPLES), help="built-in scenario")
        sp.add_argument("--out", help="output directory (default: config output.directory or .)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--format", action="append", choices=["csv", "json"],
                        help="output format; repeat for several (default: both)")

    sp = sub.add_parser("synth", help="solve for observer gains")
    scenario_args(sp)
    sp.add_argument("--sdpa", action="store_true", help="also write the problem in SDPA format")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("run", help="synthesize, simulate and reconstruct")
    scenario_args(sp)
    sp.add_argument("--gains", help="gains.json from a previous synth run")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="repeat the pipeline over one parameter")
    scenario_args(sp)
    sp.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMETERS)}")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("examples", help="list or print built-in scenarios")
    sp.add_argument("action", choices=["list", "show"])
    sp.add_argument("name", nargs="?")
    sp.set_defaults(func=cmd_examples)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return USAGE_EXIT
    except BLSMOError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
