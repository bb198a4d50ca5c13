"""Command-line entry point: ``fedmarket <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from ..errors import MarketError
from ..market import run
from ..settlement import TERMS, BudgetWarning, compensate, contribution_value
from . import export
from .config import PRESET_NAMES, ExperimentPreset, config_hash, load_config, preset, to_document, with_seed
from .experiments import ablation, compare_strategies, ledger_for, partition_hash, removal_study

EXIT_RUN_ERROR = 1
EXIT_USAGE = 2  # argparse's own code for unknown flags and bad values
EXIT_BAD_CONFIG = 3
EXIT_UNWRITABLE = 4
EXIT_EXISTS = 5

OUTPUT_ROOT_ENV = "FEDMARKET_OUTPUT_ROOT"

class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _add_run_options(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="JSON config file")
    src.add_argument("--preset", choices=PRESET_NAMES, help="named preset")
    p.add_argument("--seed", type=int, help="override market and data seed")
    p.add_argument("--strategy", choices=["ucb", "random", "greedy", "worst"], help="override the selection strategy")
    _add_output_options(p)


def _add_output_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help="output directory (default: <root>/<command>-<config hash>)")
    p.add_argument("--out-root", type=Path, help=f"root for derived output dirs (env {OUTPUT_ROOT_ENV}, default ./runs)")
    p.add_argument("--overwrite", action="store_true", help="allow writing into a non-empty output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedmarket", description="Federated data market simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "run one market and write its ledgers"),
        ("compare", "run several strategies on a shared data draw"),
        ("remove", "retrain on the top, bottom or all sellers ranked by contribution"),
        ("ablate", "settle under every subset of CE terms"),
    ]:
        _add_run_options(sub.add_parser(name, help=help_))
    s = sub.add_parser("settle", help="recompute payouts from a clients ledger")
    s.add_argument("--clients", type=Path, required=True, help="clients.csv from an earlier run")
    s.add_argument("--budget", type=float, default=100.0)
    s.add_argument("--q", type=float, default=0.0)
    s.add_argument("--terms", default=",".join(TERMS), help="comma-separated subset of P,GS,CEMD")
    _add_output_options(s)
    return parser


def resolve_config(args) -> ExperimentPreset:
    if args.config is not None:
        p = load_config(args.config)
    else:
        p = preset(args.preset or "strategy-compare")
    if args.seed is not None:
        p = dataclasses.replace(p, market=with_seed(p.market, args.seed))
    if args.strategy is not None:
        p = dataclasses.replace(p, market=dataclasses.replace(p.market, strategy=args.strategy))
    p.market.validate()
    return p


def prepare_output(args, tag: str) -> Path:
    if args.out is not None:
        out = args.out
    else:
        root = args.out_root or Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        out = root / f"{args.command}-{tag}"
    if out.exists() and not out.is_dir():
        raise CliError(EXIT_UNWRITABLE, f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not args.overwrite:
        raise CliError(EXIT_EXISTS, f"output directory {out} is not empty; pass --overwrite to replace its files")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write to output directory {out}: {exc.strerror}") from exc
    return out


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(p: ExperimentPreset, out: Path) -> dict:
    result = run(p.market)
    ledger = ledger_for(result, p.market)
    export.export_run(out, result, ledger)
    export.write(out / "curve.csv", "curve", export.CURVE_COLUMNS, export.curve_rows(result.records))
    return {
        "partition_hash": partition_hash(result),
        "final_test_accuracy": result.final_test_accuracy,
        "unallocated_budget": ledger.unallocated,
    }


def cmd_compare(p: ExperimentPreset, out: Path) -> dict:
    comparison = compare_strategies(p.market, p.experiment.strategies)
    for name, r in comparison.results.items():
        arm = out / name
        arm.mkdir(exist_ok=True)
        export.export_run(arm, r, ledger_for(r, dataclasses.replace(p.market, strategy=name)))
    names = list(comparison.results)
    columns = ["t"] + [f"{s}_{k}" for s in names for k in ("train_acc", "val_acc", "test_acc")]
    rows = []
    for t in range(p.market.rounds):
        row = [t]
        for s in names:
            rec = comparison.results[s].records[t]
            row += [rec.train_acc, rec.val_acc, rec.test_acc]
        rows.append(row)
    export.write(out / "comparison.csv", "comparison", columns, rows)
    return {"partition_hash": comparison.partition, "final_test_accuracy": comparison.final_test_accuracy()}


def cmd_remove(p: ExperimentPreset, out: Path) -> dict:
    study = removal_study(p.market, keep=p.experiment.keep, groups=p.experiment.groups)
    base = out / "contribution"
    base.mkdir(exist_ok=True)
    export.export_run(base, study.contribution, ledger_for(study.contribution, p.market))
    for group, r in study.runs.items():
        name = "all" if group == "all" else f"{group}{p.experiment.keep}"
        export.write(out / f"remove_{name}.csv", "curve", export.CURVE_COLUMNS, export.curve_rows(r.records))
    return {
        "partition_hash": partition_hash(study.contribution),
        "kept": study.kept,
        "final_test_accuracy": study.final_test_accuracy(),
    }


def cmd_ablate(p: ExperimentPreset, out: Path) -> dict:
    table = ablation(p.market, p.experiment.strategies)
    rows = [
        (strategy, variant, i, ledger.CE[i], ledger.CV[i])
        for strategy, variants in table.items()
        for variant, ledger in variants.items()
        for i in range(ledger.n_clients)
    ]
    export.write(out / "ablation.csv", "ablation", ("strategy", "variant", "client_id", "CE", "CV"), rows)
    return {
        "unallocated": {s: [v for v, led in vs.items() if led.unallocated] for s, vs in table.items()},
    }


def _terms(args) -> tuple[str, ...]:
    return tuple(t.strip() for t in args.terms.split(",") if t.strip())


def cmd_settle(args, out: Path) -> dict:
    inputs = export.read_clients(args.clients)
    terms = _terms(args)
    ce = [
        contribution_value(P, GS, C, E, args.q, terms)
        for P, GS, C, E in zip(inputs["P"], inputs["GS"], inputs["C"], inputs["EMD"])
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BudgetWarning)
        cv, flagged = compensate(ce, args.budget)
    rows = [(i, ce[i], cv[i]) for i in range(len(ce))]
    export.write(out / "settlement.csv", "settlement", export.SETTLEMENT_COLUMNS, rows)
    return {"unallocated_budget": flagged, "terms": list(terms), "budget": args.budget, "q": args.q}


def _run(args) -> tuple[Path, dict]:
    if args.command == "settle":
        tag = config_hash(preset("strategy-compare"), f"settle:{args.clients}:{args.budget}:{args.q}:{args.terms}")
        try:
            export.read_clients(args.clients)
            contribution_value(1, 0.0, 0.0, 0.0, args.q, _terms(args))
            if args.budget < 0:
                raise MarketError("bad-budget", "budget must be >= 0")
        except (MarketError, OSError) as exc:
            raise CliError(EXIT_BAD_CONFIG, f"invalid clients ledger: {exc}") from exc
        out = prepare_output(args, tag)
        return out, cmd_settle(args, out)
    try:
        p = resolve_config(args)
    except MarketError as exc:
        raise CliError(EXIT_BAD_CONFIG, f"invalid configuration: {exc}") from exc
    out = prepare_output(args, config_hash(p, args.command))
    handler = {"simulate": cmd_simulate, "compare": cmd_compare, "remove": cmd_remove, "ablate": cmd_ablate}
    try:
        _dump_json(out / "config.json", to_document(p))
        return out, handler[args.command](p, out)
    except MarketError as exc:
        raise CliError(EXIT_RUN_ERROR, f"run failed: {exc}") from exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        out, summary = _run(args)
        _dump_json(out / "summary.json", summary)
    except CliError as exc:
        print(f"fedmarket: error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"fedmarket: error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE
    print(out)
    return 0

if __name__ == "__main__":
    sys.exit(main())
