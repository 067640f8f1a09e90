"""Experiment orchestration behind the command line.

One seed drives everything: the plant's noise seed and every random
stream (candidate pools, roulette draws, snapshot times, spoof points)
are named substreams of it.  Models are trained once per sensor and
cached under ``<out>/models`` keyed by a hash of the settings that shape
them, so the attack and defence experiments share them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import regress
from .activefuzz import (STRATEGIES, ActiveLearnConfig, Recording, active_learn_loop,
                         record_normal, training_set, write_session_log)
from .attack import (Objective, default_attack_horizon, model_chooser, normal_snapshots,
                     random_chooser, run_trials, save_suite, success_rate, summary_table)
from .defend import (DetectorConfig, detection_report_csv, detection_table,
                     eval_anomaly_detector, eval_early_warning, warning_table)
from .netbus import Bus
from .plantsim import PlantConfig
from .sensors import LEVEL_SENSORS, SENSORS, default_horizon, is_level

MODEL_KINDS = ("linear", "gbdt")
PRETRAIN = "pretrain"
PRETRAIN_LONG = "pretrain-long"
RANDOM = "random"
PAPER_FLIPS = (1, 2, 3, 4, 5, 10)


class ConfigError(ValueError):
    pass


def substream(seed: int, *names: str) -> np.random.Generator:
    """Independent generator for a named subsystem of a seeded run."""
    return np.random.default_rng([seed, *(zlib.crc32(n.encode()) for n in names)])


def derived_seed(seed: int, *names: str) -> int:
    return int(substream(seed, *names).integers(2 ** 31))


@dataclass
class ExperimentConfig:
    seed: int = 0
    plant_config: str | None = None
    protocol_map: str | None = None
    sensors: tuple[str, ...] = SENSORS
    models: tuple[str, ...] = MODEL_KINDS
    strategies: tuple[str, ...] = STRATEGIES
    pretrain_ticks: int = 2400
    al_budget: int = 600
    n_m: int = 128
    pool_size: int = 64
    retrain_every: int = 10
    flip_budgets: tuple[int, ...] = PAPER_FLIPS
    trials: int = 200
    repeats: int = 5
    rows: tuple[str, ...] = ()
    out: str = "results"
    warmup: int = 500
    test_ticks: int = 3000
    pretrain_budgets: tuple[int, ...] = (300, 600, 1200, 2400, 4800)
    spoofs: int = 1000
    warning_attacks: int = 10
    r2_target: float = 0.9
    workers: int = 1

    def __post_init__(self):
        for name in ("sensors", "models", "strategies", "flip_budgets", "rows", "pretrain_budgets"):
            setattr(self, name, tuple(getattr(self, name)))
        self.strategies = tuple(s.upper() for s in self.strategies)

    def validate(self) -> "ExperimentConfig":
        for label, path in (("plant config", self.plant_config), ("protocol map", self.protocol_map)):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{label} {path} does not exist")
        unknown = [s for s in self.sensors if s not in SENSORS]
        if unknown or not self.sensors:
            raise ConfigError(f"unknown or empty sensor list: {unknown or self.sensors}")
        if not self.models or any(m not in MODEL_KINDS for m in self.models):
            raise ConfigError(f"models must be drawn from {MODEL_KINDS}")
        if any(s not in STRATEGIES for s in self.strategies):
            raise ConfigError(f"strategies must be drawn from {STRATEGIES}")
        if not self.flip_budgets or min(self.flip_budgets) < 1:
            raise ConfigError("flip budgets must be positive")
        positive = ("pretrain_ticks", "trials", "repeats", "n_m", "pool_size", "retrain_every",
                    "test_ticks", "spoofs", "warning_attacks", "workers")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.al_budget < 0 or self.warmup < 0:
            raise ConfigError("al_budget and warmup must be >= 0")
        bad_rows = [r for r in self.rows if r not in all_rows(self.models, self.strategies)]
        if bad_rows:
            raise ConfigError(f"unknown rows {bad_rows}; choose from {all_rows(self.models, self.strategies)}")
        return self

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**data)

    def digest(self, keys: Sequence[str] | None = None) -> str:
        """Short hash of the config (or of some of its keys); the output dir is excluded."""
        data = self.to_dict()
        data.pop("out")
        data.pop("workers")
        if keys is not None:
            data = {k: data[k] for k in keys}
        for key in ("plant_config", "protocol_map"):
            if key in data and data[key] is not None:
                data[key] = hashlib.sha256(Path(data[key]).read_bytes()).hexdigest()
        blob = json.dumps(data, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def training_digest(self) -> str:
        return self.digest(("seed", "plant_config", "protocol_map", "pretrain_ticks", "al_budget",
                            "n_m", "pool_size", "retrain_every", "warmup"))


def all_rows(models: Sequence[str] = MODEL_KINDS, strategies: Sequence[str] = STRATEGIES) -> tuple[str, ...]:
    """Table rows: per model kind two pre-train-only variants and one per strategy, then random."""
    rows = []
    for kind in models:
        rows += [f"{kind}/{PRETRAIN}", f"{kind}/{PRETRAIN_LONG}"]
        rows += [f"{kind}/{s}" for s in strategies]
    return tuple(rows) + (RANDOM,)


def model_rows(cfg: ExperimentConfig) -> tuple[str, ...]:
    rows = cfg.rows or all_rows(cfg.models, cfg.strategies)
    return tuple(r for r in rows if r != RANDOM)


def plant_config(cfg: ExperimentConfig) -> PlantConfig:
    base = PlantConfig.load(cfg.plant_config) if cfg.plant_config else PlantConfig()
    return PlantConfig.from_dict({**base.to_dict(), "seed": derived_seed(cfg.seed, "plant")})


def base_bus(cfg: ExperimentConfig) -> Bus:
    """A fresh plant past its warm-up, the common starting point of every experiment."""
    bus = Bus.create(plant_config(cfg), cfg.protocol_map)
    bus.idle(cfg.warmup)
    return bus


def harness_hp(kind: str, sensor_id: str) -> dict:
    """Fitting hyperparameters used by the experiments."""
    if kind == "gbdt":
        return {"n_trees": 100, "max_depth": 3, "learning_rate": 0.1,
                "min_leaf": 2.0 * default_horizon(sensor_id)}
    return {"ridge": 1.0}


def al_config(cfg: ExperimentConfig, sensor_id: str, strategy: str) -> ActiveLearnConfig:
    return ActiveLearnConfig.for_sensor(sensor_id, strategy=strategy, n_m=cfg.n_m,
                                        pool_size=cfg.pool_size, retrain_every=cfg.retrain_every,
                                        budget=cfg.al_budget, stop_on_convergence=False)


def long_pretrain_ticks(cfg: ExperimentConfig, sensor_id: str) -> int:
    """Ticks of a pre-train-only run as long as pre-training plus an EBCM session.

    An EBCM round sniffs one tick, watches t_s + 1 unspoofed ticks and
    then spoofs for t_s + 1 ticks.
    """
    return cfg.pretrain_ticks + cfg.al_budget * (2 * default_horizon(sensor_id) + 3)


# ---------------------------------------------------------------- models

def _model_path(cfg: ExperimentConfig, row: str, sensor_id: str) -> Path:
    return Path(cfg.out) / "models" / f"{row.replace('/', '-')}-{sensor_id}.json"


def _load_cached(cfg: ExperimentConfig, rows: Sequence[str], sensor_id: str) -> dict | None:
    manifest = Path(cfg.out) / "models" / "manifest.json"
    if not manifest.is_file():
        return None
    if json.loads(manifest.read_text()).get("training_digest") != cfg.training_digest():
        return None
    paths = [_model_path(cfg, r, sensor_id) for r in rows]
    if not all(p.is_file() for p in paths):
        return None
    return {r: regress.load_model(p) for r, p in zip(rows, paths)}


def train_models(cfg: ExperimentConfig, sensor_id: str, rows: Sequence[str]) -> dict:
    """Models for the requested table rows, trained from one plant history.

    Pre-training records normal traffic from the warmed-up plant; each
    active-learning session continues from the state right after the
    pre-training window.  Sessions are logged under ``<out>/logs``.
    """
    rows = [r for r in rows if r != RANDOM]
    cached = _load_cached(cfg, rows, sensor_id)
    if cached is not None:
        return cached
    t_s = default_horizon(sensor_id)
    base = base_bus(cfg)
    need_long = any(r.endswith(PRETRAIN_LONG) for r in rows)
    ticks = long_pretrain_ticks(cfg, sensor_id) if need_long else cfg.pretrain_ticks
    rec = record_normal(base.fork(), ticks, [sensor_id])
    short = training_set(rec.slice(0, cfg.pretrain_ticks), sensor_id, t_s)
    models = {}
    log_dir = Path(cfg.out) / "logs"
    for row in rows:
        kind, variant = row.split("/")
        hp = harness_hp(kind, sensor_id)
        if variant == PRETRAIN_LONG:
            models[row] = regress.fit(kind, training_set(rec, sensor_id, t_s), **hp)
            continue
        pre = models.get(f"{kind}/{PRETRAIN}") or regress.fit(kind, short, **hp)
        if variant == PRETRAIN:
            models[row] = pre
            continue
        bus = base.fork()
        bus.idle(cfg.pretrain_ticks)
        state = active_learn_loop(bus, sensor_id, pre, short.copy(), al_config(cfg, sensor_id, variant),
                                  substream(cfg.seed, "active-learning", sensor_id, row),
                                  kind=kind, hp=hp)
        models[row] = state.model
        log_dir.mkdir(parents=True, exist_ok=True)
        write_session_log(log_dir / f"{row.replace('/', '-')}-{sensor_id}.jsonl", state.log)
    _save_models(cfg, models, sensor_id)
    return {r: models[r] for r in rows}


def _save_models(cfg: ExperimentConfig, models: dict, sensor_id: str) -> None:
    mdir = Path(cfg.out) / "models"
    mdir.mkdir(parents=True, exist_ok=True)
    manifest = mdir / "manifest.json"
    digest = cfg.training_digest()
    if not manifest.is_file() or json.loads(manifest.read_text()).get("training_digest") != digest:
        for old in mdir.glob("*.json"):
            old.unlink()
        manifest.write_text(json.dumps({"training_digest": digest}) + "\n")
    for row, model in models.items():
        regress.save_model(model, _model_path(cfg, row, sensor_id))


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def clean_recording(cfg: ExperimentConfig) -> Recording:
    """Held-out normal traffic, recorded after a gap following pre-training."""
    bus = base_bus(cfg)
    bus.idle(cfg.pretrain_ticks + 1000)
    return record_normal(bus, cfg.test_ticks)


def heldout_r2(model, rec: Recording, sensor_id: str) -> float:
    """r2 of the model on its own target (the t_s-tick delta for tank levels)."""
    data = training_set(rec, sensor_id, default_horizon(sensor_id))
    return regress.r2_score(model.predict(data.X), data.y)


def _write_config(cfg: ExperimentConfig, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    record = {"config": cfg.to_dict(), "config_hash": cfg.digest(), "seed": cfg.seed}
    record["config"].pop("out")
    record["config"].pop("workers")
    (directory / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _fmt(value: float, digits: int = 4) -> str:
    if value is None or not np.isfinite(value):
        return "-"
    return f"{value:.{digits}f}"


# ---------------------------------------------------------------- RQ1

def _rq1_pretrain_job(args) -> dict:
    cfg, repeat = args
    rng = substream(cfg.seed, "rq1", "offset", str(repeat))
    bus = base_bus(cfg)
    bus.idle(int(rng.integers(0, 3000)))
    longest = max(cfg.pretrain_budgets)
    rec = record_normal(bus, longest + cfg.test_ticks, cfg.sensors)
    test = rec.slice(longest, len(rec))
    out = {}
    for sensor in cfg.sensors:
        t_s = default_horizon(sensor)
        for kind in cfg.models:
            for budget in cfg.pretrain_budgets:
                data = training_set(rec.slice(0, budget), sensor, t_s)
                model = regress.fit(kind, data, **harness_hp(kind, sensor))
                out[(sensor, kind, budget)] = heldout_r2(model, test, sensor)
    return out


def rq1_pretrain_table(cfg: ExperimentConfig) -> str:
    """Median held-out r2 per (sensor, model) and pre-training budget."""
    runs = _parallel_map(_rq1_pretrain_job, [(cfg, r) for r in range(cfg.repeats)], cfg.workers)
    lines = ["sensor,model," + ",".join(str(b) for b in cfg.pretrain_budgets)]
    for sensor in cfg.sensors:
        for kind in cfg.models:
            cells = [_fmt(float(np.median([run[(sensor, kind, b)] for run in runs])))
                     for b in cfg.pretrain_budgets]
            lines.append(f"{sensor},{kind}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def rounds_to_target(cfg: ExperimentConfig, sensor_id: str, kind: str, strategy: str,
                     test: Recording) -> tuple[int | None, list[tuple[int, float]], object]:
    """Active-learning rounds until held-out r2 first exceeds the target.

    Returns (rounds or None, [(round, r2)] at round 0 and every retrain,
    final model).
    """
    t_s = default_horizon(sensor_id)
    hp = harness_hp(kind, sensor_id)
    bus = base_bus(cfg)
    rec = record_normal(bus, cfg.pretrain_ticks, [sensor_id])
    data = training_set(rec, sensor_id, t_s)
    model = regress.fit(kind, data, **hp)
    curve = [(0, heldout_r2(model, test, sensor_id))]
    curve_cb = lambda rnd, m: curve.append((rnd, heldout_r2(m, test, sensor_id)))  # noqa: E731
    state = active_learn_loop(bus, sensor_id, model, data, al_config(cfg, sensor_id, strategy),
                              substream(cfg.seed, "rq1", "active-learning", sensor_id, kind,
                                        strategy),
                              kind=kind, hp=hp, on_retrain=curve_cb)
    hit = next((rnd for rnd, r2 in curve if r2 > cfg.r2_target), None)
    return hit, curve, state.model


def _rq1_al_job(args):
    cfg, sensor = args
    test = clean_recording(cfg)
    return {(sensor, kind, strategy): rounds_to_target(cfg, sensor, kind, strategy, test)
            for kind in cfg.models for strategy in cfg.strategies}


def rq1_al_tables(cfg: ExperimentConfig, model_dir: Path | None = None) -> tuple[str, str]:
    """(rounds to reach the r2 target, r2 curve in long form).

    The final models are saved under ``model_dir`` when given.
    """
    results = {}
    for part in _parallel_map(_rq1_al_job, [(cfg, s) for s in cfg.sensors], cfg.workers):
        results.update(part)
    if model_dir is not None:
        model_dir.mkdir(parents=True, exist_ok=True)
        for (sensor, kind, strategy), (_, _, model) in results.items():
            regress.save_model(model, model_dir / f"{kind}-{strategy}-{sensor}.json")
    lines = ["row," + ",".join(cfg.sensors)]
    for kind in cfg.models:
        for strategy in cfg.strategies:
            cells = []
            for sensor in cfg.sensors:
                hit = results[(sensor, kind, strategy)][0]
                cells.append("-" if hit is None else str(hit))
            lines.append(f"{kind}/{strategy}," + ",".join(cells))
    curve = ["sensor,model,strategy,round,r2"]
    for (sensor, kind, strategy), (_, points, _) in results.items():
        curve += [f"{sensor},{kind},{strategy},{rnd},{_fmt(r2)}" for rnd, r2 in points]
    return "\n".join(lines) + "\n", "\n".join(curve) + "\n"


def cmd_rq1(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out) / "rq1"
    _write_config(cfg, out)
    (out / "pretrain_r2.csv").write_text(rq1_pretrain_table(cfg))
    rounds, curve = rq1_al_tables(cfg, out / "models")
    (out / "al_rounds.csv").write_text(rounds)
    (out / "al_r2_curve.csv").write_text(curve)
    return out


# ---------------------------------------------------------------- RQ2

def _rq2_sensor_job(args) -> list[tuple[str, str, int, float, str]]:
    cfg, sensor, rows = args
    safety = plant_config(cfg).safety_ranges()[sensor]
    models = train_models(cfg, sensor, rows)
    snaps = normal_snapshots(base_bus(cfg), cfg.trials, substream(cfg.seed, "snapshots", sensor))
    obj = Objective.from_range(safety)
    suite_dir = Path(cfg.out) / "rq2" / "suites"
    suite_dir.mkdir(parents=True, exist_ok=True)
    cells = []
    for row in rows:
        for n in cfg.flip_budgets:
            if row == RANDOM:
                choose = random_chooser(n, substream(cfg.seed, "random-flips", sensor, str(n)))
            else:
                choose = model_chooser(models[row], n, obj)
            results = run_trials(snaps, safety, choose, cfg.trials)
            name = f"{row.replace('/', '-')}-{sensor}-{n}.jsonl"
            save_suite(suite_dir / name, results, trajectory=False)
            cells.append((row, sensor, n, success_rate(results), f"suites/{name}"))
    return cells


def rq2_grid(cfg: ExperimentConfig) -> list[tuple[str, str, int, float, str]]:
    """Success rate for every (row, sensor, flip budget) cell."""
    rows = cfg.rows or all_rows(cfg.models, cfg.strategies)
    jobs = [(cfg, s, rows) for s in cfg.sensors]
    cells = []
    for part in _parallel_map(_rq2_sensor_job, jobs, cfg.workers):
        cells += part
    return cells


def cmd_rq2(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out) / "rq2"
    _write_config(cfg, out)
    cells = rq2_grid(cfg)
    lines = ["row,sensor,flips,success_rate,trials,suite"]
    lines += [f"{r},{s},{n},{rate:.1f},{cfg.trials},{suite}" for r, s, n, rate, suite in cells]
    (out / "success_rates.csv").write_text("\n".join(lines) + "\n")
    for n in cfg.flip_budgets:
        rates: dict[str, dict[str, float]] = {}
        for r, s, m, rate, _ in cells:
            if m == n:
                rates.setdefault(r, {})[s] = rate
        (out / f"table_{n}flips.csv").write_text(summary_table(rates, cfg.sensors))
    return out


def read_rates(path: str | Path) -> dict[tuple[str, str, int], float]:
    with open(path) as fh:
        return {(r["row"], r["sensor"], int(r["flips"])): float(r["success_rate"])
                for r in csv.DictReader(fh)}


# ---------------------------------------------------------------- RQ4

def detector_config(cfg: ExperimentConfig) -> DetectorConfig:
    plant = plant_config(cfg)
    return DetectorConfig(max_values={s: plant.max_value(s) for s in SENSORS})


def warning_cases(cfg: ExperimentConfig, sensor_id: str, model, count: int,
                  attempts: int) -> list[tuple[Bus, object]]:
    """Overflow attacks found by the model at 10 flips, with their snapshots."""
    safety = plant_config(cfg).safety_ranges()[sensor_id]
    snaps = normal_snapshots(base_bus(cfg), attempts, substream(cfg.seed, "warning", sensor_id))
    choose = model_chooser(model, 10, Objective.from_range(safety, overflow_only=True))
    cases = []
    for snap in snaps:
        result = run_trials([snap], safety, choose, 1)[0]
        if result.success and result.trajectory[-1] >= safety.high:
            cases.append((snap, result))
            if len(cases) == count:
                break
    return cases


def _rq4_sensor_job(args):
    cfg, sensor, rows, attack_row = args
    models = train_models(cfg, sensor, sorted(set(rows) | {attack_row}))
    clean = clean_recording(cfg)
    det = detector_config(cfg)
    detection = {}
    for row in rows:
        rng = substream(cfg.seed, "spoofs", sensor, row)
        detection[row] = eval_anomaly_detector(models[row], clean, sensor, det, cfg.spoofs, rng)
    warning = {}
    generated = 0
    if is_level(sensor):
        cases = warning_cases(cfg, sensor, models[attack_row], cfg.warning_attacks, cfg.trials)
        generated = len(cases)
        safety = plant_config(cfg).safety_ranges()[sensor]
        if cases:
            for row in rows:
                warning[row] = eval_early_warning(models[row], cases, safety, clean,
                                                  default_attack_horizon(sensor))
    return sensor, detection, warning, generated


def rq4_reports(cfg: ExperimentConfig, attack_row: str | None = None):
    rows = model_rows(cfg)
    attack_row = attack_row or next((r for r in rows if r.startswith("gbdt/") and
                                     r.split("/")[1] in STRATEGIES), rows[-1])
    jobs = [(cfg, s, rows, attack_row) for s in cfg.sensors]
    detection: dict[str, dict] = {r: {} for r in rows}
    warning: dict[str, dict] = {r: {} for r in rows}
    generated = {}
    for sensor, det, warn, count in _parallel_map(_rq4_sensor_job, jobs, cfg.workers):
        for row, rep in det.items():
            detection[row][sensor] = rep
        for row, rep in warn.items():
            warning[row][sensor] = rep
        if is_level(sensor):
            generated[sensor] = count
    return detection, warning, generated, attack_row


def cmd_rq4(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out) / "rq4"
    _write_config(cfg, out)
    detection, warning, generated, attack_row = rq4_reports(cfg)
    (out / "detection.csv").write_text(detection_table(detection, cfg.sensors))
    (out / "detection_long.csv").write_text(detection_report_csv(detection))
    levels = [s for s in cfg.sensors if s in LEVEL_SENSORS]
    (out / "warning.csv").write_text(warning_table(warning, levels))
    lines = ["row,sensor,successes,failures,never_left_range,false_positive_rate"]
    for row, per in warning.items():
        for s, r in per.items():
            lines.append(f"{row},{s},{r.successes},{r.failures},{r.never_left_range},"
                         f"{r.false_positive_rate:.4f}")
    (out / "warning_long.csv").write_text("\n".join(lines) + "\n")
    attacks = ["sensor,attack_model,generated,requested"]
    attacks += [f"{s},{attack_row},{n},{cfg.warning_attacks}" for s, n in generated.items()]
    (out / "warning_attacks.csv").write_text("\n".join(attacks) + "\n")
    return out


# ---------------------------------------------------------------- report

REPORT_SECTIONS = (
    ("rq1", "Pre-training budget vs held-out r2 (median over repeats)", ("pretrain_r2.csv",)),
    ("rq1", "Active-learning rounds to reach the r2 target", ("al_rounds.csv",)),
    ("rq2", "Attack success rates (%)", None),
    ("rq4", "Anomaly detection rate (%; * = false-positive rate above 5%)", ("detection.csv",)),
    ("rq4", "Early-warning success (%; - = false-positive rate above 5%)", ("warning.csv",)),
)


def csv_to_markdown(text: str) -> str:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return "(empty)\n"
    out = ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
    out += ["| " + " | ".join(r) + " |" for r in rows[1:]]
    return "\n".join(out) + "\n"


def _flip_tables(directory: Path) -> list[Path]:
    def flips(p: Path) -> int:
        return int(p.stem.removeprefix("table_").removesuffix("flips"))
    return sorted(directory.glob("table_*flips.csv"), key=flips)


def build_report(out_dir: str | Path) -> str:
    """Markdown summary of whatever experiment outputs exist under ``out_dir``."""
    out_dir = Path(out_dir)
    parts = ["# Experiment report", ""]
    for rq in ("rq1", "rq2", "rq4"):
        meta = out_dir / rq / "config.json"
        if meta.is_file():
            info = json.loads(meta.read_text())
            parts.append(f"- {rq}: seed {info['seed']}, config hash {info['config_hash']}")
        else:
            parts.append(f"- {rq}: absent")
    parts.append("")
    for rq, title, names in REPORT_SECTIONS:
        parts.append(f"## {title}")
        parts.append("")
        directory = out_dir / rq
        files = _flip_tables(directory) if names is None else [directory / n for n in names]
        files = [f for f in files if f.is_file()]
        if not files:
            parts += ["absent", ""]
            continue
        for f in files:
            if names is None:
                parts += [f"### {f.stem.removeprefix('table_').replace('flips', ' bit flips')}", ""]
            parts += [csv_to_markdown(f.read_text())]
    return "\n".join(parts)


def cmd_report(out_dir: str | Path) -> Path:
    path = Path(out_dir) / "report.md"
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    path.write_text(build_report(out_dir))
    return path

