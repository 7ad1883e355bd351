"""Command-line front end: seasonal batch analysis as composable subcommands.

Every subcommand reads and writes plain CSV/JSON, takes its randomness from
an explicit --seed, and drops a manifest next to its primary output so any
artifact can be traced back and re-run byte-identically.
"""

from __future__ import annotations

import argparse
import re
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__, domain, evaluation, manifest, market, prepack, report
from . import robustness as robust
from . import tdi as tdi_mod


class CliError(Exception):
    """Input-level failure: bad flags, missing files, schema violations."""


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # no flag of ours starts with a digit, so tokens like "-0.0,-0.25"
        # (scenario lists) must parse as values, not options
        self._negative_number_matcher = re.compile(r"^-\d[\d.,\-]*$")

    def error(self, message):  # argparse default exits 2; bad input is exit 1
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _fmt_fraction(v: Fraction) -> str:
    return str(int(v)) if v.denominator == 1 else f"{float(v):g}"


def _resolve(out_dir: str, path: str) -> Path:
    p = Path(path)
    full = p if p.is_absolute() else Path(out_dir) / p
    full.parent.mkdir(parents=True, exist_ok=True)
    return full


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} file not found: {path}")
    return p


def _load_inputs(args) -> tuple[domain.SchemaConfig, domain.TransactionSet]:
    if not args.config:
        raise CliError("--config with the size schema is required")
    cfg = domain.load_config(_require_file(args.config, "config"))
    endstates = None
    if getattr(args, "endstates", None):
        endstates = _require_file(args.endstates, "endstates")
    ts = domain.parse_transactions(_require_file(args.input, "input"), cfg, endstates)
    return cfg, ts


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_simulate(args) -> None:
    cfg_path = _require_file(args.config, "config")
    config = market.load_market_config(cfg_path)
    result = market.generate(config, seed=args.seed)
    out = _resolve(args.out_dir, args.out)
    truth_path = _resolve(args.out_dir, args.truth)
    domain.serialize_transactions(result.transactions, out)
    market.write_truth(truth_path, result.truth, config.sizes)
    manifest.write_manifest("simulate", {"config": cfg_path},
                            {"data": out, "truth": truth_path},
                            seed=args.seed if args.seed is not None else config.seed)
    _say(args, f"simulated {len(result.transactions.transactions)} transactions "
               f"across {config.branches} branches -> {out}")


def cmd_validate(args) -> None:
    _, ts = _load_inputs(args)
    rep = domain.validate(ts)
    out = _resolve(args.out_dir, args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch", "product", "size", "kind", "magnitude"])
        for a in rep.anomalies:
            writer.writerow([a.branch, a.product, a.size, a.kind, a.magnitude])
    manifest.write_manifest("validate", _input_files(args), {"anomalies": out},
                            seed=None)
    _say(args, f"{len(rep.anomalies)} anomalies -> {out}")


def cmd_repair(args) -> None:
    _, ts = _load_inputs(args)
    rep = domain.validate(ts)
    fix = domain.repair_ignore if args.strategy == "ignore" else domain.repair_estimate
    repaired = fix(ts, rep)
    out = _resolve(args.out_dir, args.out)
    domain.serialize_transactions(repaired, out)
    manifest.write_manifest("repair", _input_files(args), {"repaired": out},
                            seed=None, config={"strategy": args.strategy})
    _say(args, f"repaired {len(rep.anomalies)} anomalies ({args.strategy}) -> {out}")


def cmd_tdi(args) -> None:
    cfg, ts = _load_inputs(args)
    dampening = args.dampening if args.dampening is not None else cfg.dampening
    profiles = tdi_mod.all_profiles(ts, dampening)
    out = _resolve(args.out_dir, args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch", "size", "tdc", "fdc", "tdi", "rank"])
        for b in ts.branches:
            profile = profiles[b]
            ranking = tdi_mod.rank_sizes(profile, ts.sizes)
            for s in ts.sizes.order:
                writer.writerow([b, s, profile.tdc[s], profile.fdc[s],
                                 f"{float(profile.tdi[s]):.6f}",
                                 ranking.index(s) + 1])
    manifest.write_manifest("tdi", _input_files(args), {"tdi": out},
                            seed=None, config={"dampening": str(dampening)})
    _say(args, f"index profiles for {len(ts.branches)} branches -> {out}")


def cmd_robustness(args) -> None:
    cfg, ts = _load_inputs(args)
    if args.seed is None:
        raise CliError("--seed is required: the product partition must be reproducible")
    dampening = args.dampening if args.dampening is not None else cfg.dampening
    outs = [s.strip() for s in args.out.split(",")]
    if len(outs) != 2:
        raise CliError("--out needs two comma-separated paths: shares.csv,discrepancy.csv")
    partition = robust.partition_products(ts, args.seed)
    shares = robust.tdi_shares(ts, partition, dampening)
    curve = robust.discrepancy_curve(ts, partition, range(args.days + 1))
    shares_path = _resolve(args.out_dir, outs[0])
    disc_path = _resolve(args.out_dir, outs[1])
    with open(shares_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch", "size"] + [f"d{i}" for i in range(1, 8)]
                        + ["mean", "median"])
        for row in shares:
            writer.writerow([row.branch, row.size,
                             *[f"{v:.6f}" for v in row.shares],
                             f"{row.mean:.6f}", f"{row.median:.6f}"])
    with open(disc_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["day", "avg_delta", "coverage"])
        for day, avg, coverage in curve:
            writer.writerow([day, "" if avg is None else f"{avg:.6f}", coverage])
    manifest.write_manifest("robustness", _input_files(args),
                            {"shares": shares_path, "discrepancy": disc_path},
                            seed=args.seed,
                            config={"dampening": str(dampening), "days": args.days,
                                    "partition_rng": partition.rng_name})
    _say(args, f"{len(shares)} share rows -> {shares_path}; "
               f"discrepancy grid -> {disc_path}")


def cmd_optimize(args) -> None:
    cfg, ts = _load_inputs(args)
    dampening = args.dampening if args.dampening is not None else cfg.dampening
    lots = prepack.read_lots(_require_file(args.lots, "lots"), cfg.sizes)
    plans = prepack.optimization_step(ts, lots, dampening, args.threshold)
    out = _resolve(args.out_dir, args.out)
    prepack.write_plans(out, plans, cfg.sizes)
    inputs = _input_files(args)
    inputs["lots"] = Path(args.lots)
    manifest.write_manifest("optimize", inputs, {"plans": out}, seed=None,
                            config={"dampening": str(dampening),
                                    "threshold": args.threshold})
    acted = sum(1 for p in plans.values() if p.variants[prepack.PLAIN].acted)
    _say(args, f"plans for {len(plans)} branches ({acted} with swaps) -> {out}")


def cmd_evaluate(args) -> None:
    cfg, ts = _load_inputs(args)
    if args.assign:
        if args.seed is None:
            raise CliError("--assign requires --seed for the random split")
        groups = evaluation.assign_groups(list(ts.branches), args.seed)
        groups_path = _resolve(args.out_dir, args.groups)
        evaluation.write_groups(groups_path, groups)
    else:
        groups_path = _require_file(args.groups, "groups")
        groups = evaluation.read_groups(groups_path)
    unknown = sorted(set(groups) - set(ts.branches))
    if unknown:
        raise CliError(f"groups file names unknown branches: {', '.join(unknown)}")
    rep = domain.validate(ts)
    ts_ignore = domain.repair_ignore(ts, rep)
    ts_estimate = domain.repair_estimate(ts, rep)
    shifts = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    for s in shifts:
        try:
            Fraction(s)
        except ValueError as exc:
            raise CliError(f"bad scenario shift {s!r}: {exc}") from exc
    study = evaluation.run_study(ts_ignore, ts_estimate, groups, shifts,
                                 mc_seed=args.seed or 0)
    out = _resolve(args.out_dir, args.out)
    _write_study(out, study, shifts)
    outputs = {"study": out,
               "group_stats": out.with_name(out.stem + "_groups.csv"),
               "branches": out.with_name(out.stem + "_branches.csv")}
    if args.assign:
        outputs["groups"] = groups_path
    inputs = _input_files(args)
    if not args.assign:
        inputs["groups"] = groups_path
    manifest.write_manifest("evaluate", inputs, outputs, seed=args.seed,
                            config={"scenarios": shifts})
    if study.excluded:
        _say(args, f"note: excluded branches without revenue: "
                   f"{', '.join(study.excluded)}")
    _say(args, f"{len(study.scenarios)} scenario rows -> {out}")


def _write_study(out: Path, study, shifts: list[str]) -> None:
    label = {}  # keep the user's own shift spelling for the grid labels
    for s in shifts:
        label[Fraction(s)] = s
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "shift_pp", "control_rank_sum",
                         "test_rank_sum", "certainty_pct", "exact"])
        for row in study.scenarios:
            writer.writerow([row.method, label.get(row.shift_pp, str(row.shift_pp)),
                             _fmt_fraction(row.control_sum),
                             _fmt_fraction(row.test_sum),
                             f"{row.certainty * 100:.1f}", int(row.exact)])
    with open(out.with_name(out.stem + "_groups.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "metric", "mean_pct", "min_pct", "stddev_pp"])
        for group in (evaluation.CONTROL, evaluation.TEST):
            for metric in evaluation.METRICS:
                stats = study.group_stats.get(group, {}).get(metric)
                if stats is None:
                    continue
                writer.writerow([group, metric, f"{stats.mean * 100:.4f}",
                                 f"{stats.minimum * 100:.4f}",
                                 f"{stats.stddev * 100:.4f}"])
    with open(out.with_name(out.stem + "_branches.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch", "group", *evaluation.METRICS])
        for o in study.outcomes:
            writer.writerow([o.branch, o.group,
                             *[f"{float(o.metric(m)):.8f}" for m in evaluation.METRICS]])


def cmd_report(args) -> None:
    study = _require_file(args.study, "study")
    optional = {}
    for name in ("groups_stats", "shares", "discrepancy", "tdi"):
        value = getattr(args, name)
        if value:
            optional[name] = _require_file(value, name.replace("_", " "))
    out = _resolve(args.out_dir, args.out)
    outputs = report.render_report(
        study, out,
        groups_path=optional.get("groups_stats"),
        shares_path=optional.get("shares"),
        discrepancy_path=optional.get("discrepancy"),
        tdi_path=optional.get("tdi"),
        figures_dir=_resolve(args.out_dir, args.figures_dir) if args.figures_dir else None)
    inputs = {"study": study, **optional}
    manifest.write_manifest("report", inputs, outputs, seed=None)
    _say(args, f"report with {len(outputs) - 1} artifacts -> {out}")


def _input_files(args) -> dict[str, Path]:
    files = {"input": Path(args.input)}
    if getattr(args, "config", None):
        files["config"] = Path(args.config)
    if getattr(args, "endstates", None):
        files["endstates"] = Path(args.endstates)
    return files


# ---------------------------------------------------------------------------
# Parser wiring


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed for every random choice in the subcommand")
    common.add_argument("--out-dir", default=".",
                        help="directory for relative output paths")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress messages")

    parser = _Parser(prog="topdog",
                     description="Size-demand consistency analytics from censored sales data")
    parser.add_argument("--version", action="version", version=f"topdog {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = subs.add_parser("simulate", parents=[common],
                        help="generate a synthetic market with known ground truth")
    p.add_argument("--config", required=True, help="market config JSON")
    p.add_argument("--out", default="data.csv")
    p.add_argument("--truth", default="truth.json")
    p.set_defaults(handler=cmd_simulate)

    def data_parser(name, help_text):
        sp = subs.add_parser(name, parents=[common], help=help_text)
        sp.add_argument("--input", required=True, help="transaction CSV")
        sp.add_argument("--config", required=True, help="size schema JSON")
        sp.add_argument("--endstates", default=None, help="optional endstates CSV")
        return sp

    p = data_parser("validate", "report oversell/leftover anomalies")
    p.add_argument("--out", default="anomalies.csv")
    p.set_defaults(handler=cmd_validate)

    p = data_parser("repair", "apply a repair strategy to inconsistent data")
    p.add_argument("--strategy", choices=["ignore", "estimate"], required=True)
    p.add_argument("--out", default="repaired.csv")
    p.set_defaults(handler=cmd_repair)

    p = data_parser("tdi", "per-branch scarcity index and size ranking")
    p.add_argument("--dampening", type=int, default=None)
    p.add_argument("--out", default="tdi.csv")
    p.set_defaults(handler=cmd_tdi)

    p = data_parser("robustness", "subset shares and half-sample discrepancy")
    p.add_argument("--dampening", type=int, default=None)
    p.add_argument("--days", type=int, default=60,
                   help="last day of the discrepancy grid")
    p.add_argument("--out", default="shares.csv,discrepancy.csv",
                   help="two comma-separated paths: shares, discrepancy")
    p.set_defaults(handler=cmd_robustness)

    p = data_parser("optimize", "one-piece pre-pack swap plans per branch")
    p.add_argument("--lots", required=True, help="current lots CSV")
    p.add_argument("--dampening", type=int, default=None)
    p.add_argument("--threshold", type=float, default=1.0,
                   help="minimum max/min index ratio to act on")
    p.add_argument("--out", default="plans.csv")
    p.set_defaults(handler=cmd_optimize)

    p = data_parser("evaluate", "blind-study metrics, rank sums, certainties")
    p.add_argument("--groups", required=True,
                   help="test/control CSV (written, not read, with --assign)")
    p.add_argument("--assign", action="store_true",
                   help="randomly assign branches to test/control first")
    p.add_argument("--scenarios", default="-0.0,-0.25,-0.5,-0.75,-1.0,-1.5",
                   help="comma-separated shifts in percentage points")
    p.add_argument("--out", default="study.csv")
    p.set_defaults(handler=cmd_evaluate)

    p = subs.add_parser("report", parents=[common],
                        help="consolidated Markdown report with figures")
    p.add_argument("--study", required=True, help="study.csv from evaluate")
    p.add_argument("--groups-stats", dest="groups_stats", default=None)
    p.add_argument("--shares", default=None)
    p.add_argument("--discrepancy", default=None)
    p.add_argument("--tdi", default=None)
    p.add_argument("--figures-dir", default=None)
    p.add_argument("--out", default="report.md")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.handler(args)
    except (CliError, domain.ParseError, FileNotFoundError,
            json.JSONDecodeError, ValueError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AssertionError, RuntimeError) as exc:  # broken internal invariant
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
