"""Command line: ``cpsfuzz <subcommand> [flags]``.

Every subcommand writes under ``--out`` and prints a one-line JSON summary
on stdout.  Failures print a one-line JSON error on stderr and exit
nonzero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import experiments as ex
from . import regress
from .activefuzz import (STRATEGIES, active_learn_loop, record_normal, training_set,
                         write_session_log)
from .attack import (Objective, model_chooser, normal_snapshots, random_chooser, run_trials,
                     save_suite, success_rate)
from .defend import eval_anomaly_detector, eval_early_warning
from .netbus import write_capture
from .sensors import SENSORS, default_horizon, is_level


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv(kind=str):
    def parse(text: str):
        try:
            return tuple(kind(x) for x in text.split(",") if x)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _config_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", help="JSON file of experiment settings; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--plant-config")
    p.add_argument("--protocol-map")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--sensors", type=_csv())
    p.add_argument("--models", type=_csv())
    p.add_argument("--strategies", type=_csv())
    p.add_argument("--rows", type=_csv(), help="subset of table rows, e.g. gbdt/EBCM,random")
    p.add_argument("--pretrain-ticks", type=int)
    p.add_argument("--al-budget", type=int)
    p.add_argument("--n-m", type=int)
    p.add_argument("--pool-size", type=int)
    p.add_argument("--retrain-every", type=int)
    p.add_argument("--flip-budgets", "--flips", dest="flip_budgets", type=_csv(int))
    p.add_argument("--trials", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--test-ticks", type=int)
    p.add_argument("--pretrain-budgets", type=_csv(int))
    p.add_argument("--spoofs", type=int)
    p.add_argument("--warning-attacks", type=int)
    p.add_argument("--r2-target", type=float)
    return p


def build_config(args: argparse.Namespace) -> ex.ExperimentConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    for f in fields(ex.ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    return ex.ExperimentConfig.from_dict(data).validate()


def build_parser() -> argparse.ArgumentParser:
    common = _config_flags()
    parser = _Parser(prog="cpsfuzz", description="Active fuzzing testbench for a simulated plant.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the plant and capture the bus")
    p.add_argument("--ticks", type=int, default=1000)

    sensor = _Parser(add_help=False)
    sensor.add_argument("--sensor", required=True, choices=SENSORS)
    kind = _Parser(add_help=False)
    kind.add_argument("--model", default="gbdt", choices=ex.MODEL_KINDS)

    sub.add_parser("pretrain", parents=[common, sensor, kind],
                   help="learn from normal traffic only")
    p = sub.add_parser("activelearn", parents=[common, sensor, kind],
                       help="pre-train, then learn by spoofing chosen packets")
    p.add_argument("--strategy", default="EBCM", type=str.upper, choices=STRATEGIES)

    p = sub.add_parser("fuzz", parents=[common, sensor],
                       help="search and execute attacks (random flips without --model-file)")
    p.add_argument("--model-file")
    p = sub.add_parser("defend", parents=[common, sensor],
                       help="evaluate a model as anomaly detector and early-warning monitor")
    p.add_argument("--model-file", required=True)

    for name, text in (("rq1", "model quality vs pre-training and active learning"),
                       ("rq2", "attack success grid"),
                       ("rq4", "detection and early-warning tables")):
        sub.add_parser(name, parents=[common], help=text)
    p = sub.add_parser("report", parents=[common], help="collate experiment outputs into markdown")
    return parser


def _out(cfg: ex.ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg, args) -> dict:
    if args.ticks < 1:
        raise ValueError("--ticks must be >= 1")
    out = _out(cfg)
    bus = ex.base_bus(cfg)
    first = bus.tick + 1
    packets = bus.sniff_window(args.ticks)
    write_capture(out / "capture.csv", packets, bus.protocol_digest)
    lines = ["tick," + ",".join(SENSORS)]
    series = {s: bus.history(s, first, bus.tick) for s in SENSORS}
    for i, tick in enumerate(range(first, bus.tick + 1)):
        lines.append(f"{tick}," + ",".join(f"{series[s][i]:.6g}" for s in SENSORS))
    (out / "historian.csv").write_text("\n".join(lines) + "\n")
    return {"capture": str(out / "capture.csv"), "historian": str(out / "historian.csv"),
            "packets": len(packets)}


def _pretrained(cfg, sensor, kind):
    bus = ex.base_bus(cfg)
    data = training_set(record_normal(bus, cfg.pretrain_ticks, [sensor]), sensor,
                        default_horizon(sensor))
    return bus, data, regress.fit(kind, data, **ex.harness_hp(kind, sensor))


def cmd_pretrain(cfg, args) -> dict:
    out = _out(cfg)
    _, data, model = _pretrained(cfg, args.sensor, args.model)
    path = out / f"{args.model}-pretrain-{args.sensor}.json"
    regress.save_model(model, path)
    data.save(out / f"training-{args.sensor}.txt")
    return {"model": str(path), "rows": len(data)}


def cmd_activelearn(cfg, args) -> dict:
    out = _out(cfg)
    bus, data, model = _pretrained(cfg, args.sensor, args.model)
    state = active_learn_loop(bus, args.sensor, model, data,
                              ex.al_config(cfg, args.sensor, args.strategy),
                              ex.substream(cfg.seed, "active-learning", args.sensor,
                                           f"{args.model}/{args.strategy}"),
                              kind=args.model, hp=ex.harness_hp(args.model, args.sensor))
    path = out / f"{args.model}-{args.strategy}-{args.sensor}.json"
    regress.save_model(state.model, path)
    write_session_log(out / f"{args.model}-{args.strategy}-{args.sensor}.jsonl", state.log)
    return {"model": str(path), "rounds": state.rounds, "rows": len(state.data)}


def cmd_fuzz(cfg, args) -> dict:
    out = _out(cfg)
    safety = ex.plant_config(cfg).safety_ranges()[args.sensor]
    model = regress.load_model(args.model_file) if args.model_file else None
    snaps = normal_snapshots(ex.base_bus(cfg), cfg.trials,
                             ex.substream(cfg.seed, "snapshots", args.sensor))
    rates = {}
    for n in cfg.flip_budgets:
        if model is None:
            choose = random_chooser(n, ex.substream(cfg.seed, "random-flips", args.sensor, str(n)))
        else:
            choose = model_chooser(model, n, Objective.from_range(safety))
        results = run_trials(snaps, safety, choose, cfg.trials)
        save_suite(out / f"suite-{args.sensor}-{n}.jsonl", results)
        rates[str(n)] = success_rate(results)
    return {"sensor": args.sensor, "success_rate": rates}


def cmd_defend(cfg, args) -> dict:
    out = _out(cfg)
    model = regress.load_model(args.model_file)
    clean = ex.clean_recording(cfg)
    rep = eval_anomaly_detector(model, clean, args.sensor, ex.detector_config(cfg), cfg.spoofs,
                                ex.substream(cfg.seed, "spoofs", args.sensor, "cli"))
    summary = {"sensor": args.sensor, "detection_rate": rep.detection_rate,
               "false_positive_rate": rep.false_positive_rate, "usable": rep.usable}
    if is_level(args.sensor):
        cases = ex.warning_cases(cfg, args.sensor, model, cfg.warning_attacks, cfg.trials)
        summary["warning_attacks"] = len(cases)
        if cases:
            safety = ex.plant_config(cfg).safety_ranges()[args.sensor]
            w = eval_early_warning(model, cases, safety, clean)
            summary.update(warning_successes=w.successes, warning_failures=w.failures,
                           warning_false_positive_rate=w.false_positive_rate)
    (out / f"defend-{args.sensor}.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


COMMANDS = {
    "simulate": cmd_simulate,
    "pretrain": cmd_pretrain,
    "activelearn": cmd_activelearn,
    "fuzz": cmd_fuzz,
    "defend": cmd_defend,
    "rq1": lambda cfg, args: {"out": str(ex.cmd_rq1(cfg))},
    "rq2": lambda cfg, args: {"out": str(ex.cmd_rq2(cfg))},
    "rq4": lambda cfg, args: {"out": str(ex.cmd_rq4(cfg))},
    "report": lambda cfg, args: {"report": str(ex.cmd_report(cfg.out))},
}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    try:
        cfg = build_config(args)
        summary = COMMANDS[args.command](cfg, args)
    except (OSError, ValueError, LookupError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc).replace("\n", " "), 1)
    print(json.dumps({"command": args.command, **summary}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
