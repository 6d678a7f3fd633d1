"""Command-line front end: simulate, transform, filter, discover, train, diagnose, report.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from .dcbn import Dcbn, fit_cpts, fit_discretizer, heldout_rmse
from .diagnosis import DEFAULT_THETA, DiagnosisReport, diagnose
from .errors import ValidationError
from .events import count_transform, parse_event_log, read_panel_csv, relevance_filter, write_panel_csv
from .fileio import atomic_write
from .graph import LaggedDag, shd
from .simulator import ALARM, Dataset, SimConfig, generate_dataset, ground_truth_graph, load_dataset, save_dataset
from .discovery import discover

log = logging.getLogger("cfrca")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO = 0, 2, 3, 4
TRAIN_SPLIT = 80  # instances [0, 80) train, the rest are held out


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _alpha_list(text: str) -> list[float]:
    try:
        alphas = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not alphas or any(not 0 < a < 1 for a in alphas):
        raise argparse.ArgumentTypeError("alphas must lie in (0, 1)")
    return alphas


def _out_dir(args) -> Path:
    out = Path(args.out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    config = SimConfig(
        n_slots=args.n_slots,
        baseline_rate=args.baseline_rate,
        coupling_weight=args.coupling_weight,
        alarm_gain=args.alarm_gain,
        nominal_threshold=args.nominal_threshold,
        fault_ramp=args.fault_ramp,
        seed=args.seed,
    )
    dataset = generate_dataset(config, args.instances)
    out = save_dataset(dataset, _out_dir(args))
    by_channel = Counter(inst.injected_channel for inst in dataset.instances)
    print(f"wrote {len(dataset)} instances to {out}")
    print("injected channels: " + ", ".join(f"{c}={n}" for c, n in sorted(by_channel.items())))
    return EXIT_OK


def cmd_transform(args) -> int:
    with open(args.events, encoding="utf-8") as fh:
        events = parse_event_log(fh)
    variables = args.variables.split(",") if args.variables else events.channels()
    panel = count_transform(events, args.slot_width, variables, args.start_time, args.n_slots)
    buf = io.StringIO()
    write_panel_csv(panel, buf)
    out = _out_dir(args) / "panel.csv"
    atomic_write(out, buf.getvalue())
    print(f"{len(events.records)} events -> {panel.n_slots} slots x {len(variables)} variables ({out})")
    return EXIT_OK


def cmd_filter(args) -> int:
    with open(args.panel, encoding="utf-8") as fh:
        panel = read_panel_csv(fh)
    report = relevance_filter(panel, args.target, args.alpha, args.periodicity_threshold, args.seed)
    out = atomic_write(_out_dir(args) / "relevance.json", _dump(report.to_dict()))
    print("retained: " + ", ".join(report.retained_names))
    log.info("relevance report written to %s", out)
    return EXIT_OK


def cmd_discover(args) -> int:
    dataset = load_dataset(args.data)
    windows = [inst.window() for inst in dataset.instances]
    truth = ground_truth_graph()
    out = _out_dir(args)
    rows = ["alpha,shd"]
    for alpha in args.alphas:
        graph = discover(windows, alpha, args.max_lag, args.max_depth, args.sink)
        atomic_write(out / f"graph_alpha_{alpha:g}.json", graph.dumps())
        score = shd(graph, truth) if graph.max_lag == truth.max_lag else -1
        rows.append(f"{alpha:g},{score}")
        print(f"alpha={alpha:g}: {len(graph.edges)} edges, SHD={score}")
    atomic_write(out / "shd.csv", "\n".join(rows) + "\n")
    return EXIT_OK


def _split(dataset: Dataset) -> tuple[Dataset, Dataset]:
    if len(dataset) < 2:
        raise ValidationError("need at least 2 instances for a train/test split")
    cut = min(TRAIN_SPLIT, len(dataset) - 1)
    return Dataset(dataset.config, dataset.instances[:cut]), Dataset(dataset.config, dataset.instances[cut:])


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    if args.ground_truth:
        graph = ground_truth_graph()
    elif args.graph:
        graph = LaggedDag.loads(Path(args.graph).read_text(encoding="utf-8"))
    else:
        raise ValidationError("give --graph FILE or --ground-truth")
    train, test = _split(dataset)
    cut = len(train)
    disc = fit_discretizer(train, args.K, graph.variables)
    model = fit_cpts(graph, train, disc, args.smoothing, ALARM if ALARM in graph.variables else None)
    rmse = heldout_rmse(model, [inst.window() for inst in test.instances])
    train_ids, test_ids = list(range(cut)), list(range(cut, len(dataset)))
    metrics = {
        "rmse": rmse,
        "train_instances": [train_ids[0], train_ids[-1]],
        "test_instances": [test_ids[0], test_ids[-1]],
        "split_disjoint": not set(train_ids) & set(test_ids),
        "K": args.K,
        "smoothing": args.smoothing,
    }
    out = _out_dir(args)
    atomic_write(out / "model.json", model.dumps())
    atomic_write(out / "metrics.json", _dump(metrics))
    print(f"rmse={rmse:.4f} (train {cut} instances, test {len(test_ids)})")
    return EXIT_OK


def _load_model(path) -> Dcbn:
    return Dcbn.loads(Path(path).read_text(encoding="utf-8"))


def cmd_diagnose(args) -> int:
    model = _load_model(args.model)
    if args.panel:
        with open(args.panel, encoding="utf-8") as fh:
            panel = read_panel_csv(fh)
    else:
        dataset = load_dataset(args.data)
        if not 0 <= args.instance < len(dataset):
            raise ValidationError(f"instance {args.instance} outside dataset of {len(dataset)}")
        panel = dataset[args.instance].window()
    report = diagnose(model, panel, args.theta, args.alpha_grid)
    out = _out_dir(args)
    atomic_write(out / "report.json", report.dumps())
    pf_rows = ["slot,p_f"] + [f"{s},{v!r}" for s, v in zip(report.pf.slots.tolist(), report.pf.values.tolist())]
    atomic_write(out / "pf_series.csv", "\n".join(pf_rows) + "\n")
    sweep_rows = ["alpha,mean,sd,p_low"] + [f"{r.alpha!r},{r.mean!r},{r.sd!r},{r.p_low!r}" for r in report.recourse_sweep]
    atomic_write(out / "recourse_sweep.csv", "\n".join(sweep_rows) + "\n")
    print(_summary(report))
    return EXIT_OK


def _summary(report: DiagnosisReport) -> str:
    lines = [f"status: {report.status}"]
    if report.poif.T is None:
        return "\n".join(lines)
    lines.append(f"PoIF T={report.poif.T} (theta={report.poif.theta:g}), paths ranked at slot {report.eval_slot}")
    for rank, path in enumerate(report.ranked_paths, 1):
        lines.append(f"  {rank}. {path.label()}  {path.likelihood:.4f}")
    if report.recourse_sweep:
        best = max(report.recourse_sweep, key=lambda r: r.p_low)
        lines.append(f"recourse on {report.recourse_node.label()}: best alpha={best.alpha:g} gives P(L)={best.p_low:.3f}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    report = DiagnosisReport.loads(Path(args.report).read_text(encoding="utf-8"))
    text = _summary(report) + "\n"
    if args.out:
        atomic_write(_out_dir(args) / "summary.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="cfrca", description="Counterfactual root cause analysis on event counts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a seeded failure dataset")
    d = SimConfig()
    p.add_argument("--instances", type=_positive_int, default=100)
    p.add_argument("--n-slots", type=_positive_int, default=d.n_slots)
    p.add_argument("--baseline-rate", type=_positive_float, default=d.baseline_rate)
    p.add_argument("--coupling-weight", type=float, default=d.coupling_weight)
    p.add_argument("--alarm-gain", type=float, default=d.alarm_gain)
    p.add_argument("--nominal-threshold", type=float, default=d.nominal_threshold)
    p.add_argument("--fault-ramp", type=float, default=d.fault_ramp)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transform", parents=[common], help="event log CSV -> per-slot count panel")
    p.add_argument("--events", required=True)
    p.add_argument("--slot-width", type=_positive_float, default=1.0)
    p.add_argument("--variables", help="comma-separated channels (default: all seen)")
    p.add_argument("--start-time", type=float)
    p.add_argument("--n-slots", type=_positive_int)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("filter", parents=[common], help="relevance and periodicity filter")
    p.add_argument("--panel", required=True)
    p.add_argument("--target", default=ALARM)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--periodicity-threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("discover", parents=[common], help="PC-stable over lag-augmented data")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--alphas", type=_alpha_list, default=[0.01, 0.03, 0.05])
    p.add_argument("--max-lag", type=int, default=2)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--sink", default=ALARM, help="variable with no outgoing edges ('' to disable)")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("train", parents=[common], help="fit discretizer and CPTs, score held-out RMSE")
    p.add_argument("--data", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--graph", help="graph JSON from discover")
    g.add_argument("--ground-truth", action="store_true", help="use the simulator's true graph")
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--smoothing", type=_positive_float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diagnose", parents=[common], help="PoIF, ranked paths and recourse sweep")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--panel", help="panel CSV")
    src.add_argument("--data", help="dataset directory (with --instance)")
    p.add_argument("--instance", type=int, default=TRAIN_SPLIT)
    p.add_argument("--theta", type=_positive_float, default=DEFAULT_THETA)
    p.add_argument("--alpha-grid", type=_positive_int, default=11)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("report", parents=[common], help="print a saved diagnosis report")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report, out=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    if getattr(args, "sink", None) == "":
        args.sink = None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        # a corrupt JSON file is reported as an I/O problem, not bad flags
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
