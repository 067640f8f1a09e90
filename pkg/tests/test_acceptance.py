"""End-to-end acceptance gate: one test per criterion, each timed against its budget.

Every test records a PASS/FAIL line that the terminal summary prints.
"""

import ast
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

import cpsfuzz
from cpsfuzz import experiments as ex
from cpsfuzz import regress
from cpsfuzz.activefuzz import Candidate, roulette_select
from cpsfuzz.attack import F_MAX, Objective, discover
from cpsfuzz.netbus import FEATURE_BITS, PAYLOAD_LENGTHS, TYPE_KEYS, assemble, decompose, PacketRecord
from cpsfuzz.plantsim import STAGES, PlantConfig, PlantState, ProtocolMap, apply_payload
from cpsfuzz.regress import LinearModel, TrainingSet, best_split, fit_gbdt, r2_score
from cpsfuzz.sensors import FLOW_SENSORS, LEVEL_SENSORS, SENSORS

from conftest import ACCEPTANCE_LINES

FULL_SEED = 0


class Gate:
    """Collects checks for one criterion and records the verdict line."""

    def __init__(self, number: int, budget_s: float):
        self.number, self.budget = number, budget_s
        self.failures: list[str] = []
        self.notes: list[str] = []
        self.start = time.monotonic()

    def check(self, ok: bool, what: str) -> None:
        if not ok:
            self.failures.append(what)

    def note(self, text: str) -> None:
        self.notes.append(text)

    def finish(self) -> None:
        elapsed = time.monotonic() - self.start
        self.check(elapsed < self.budget, f"runtime {elapsed:.0f}s >= {self.budget:.0f}s")
        verdict = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.notes + [f"failed: {f}" for f in self.failures])
        ACCEPTANCE_LINES.append(f"criterion {self.number}: {verdict} ({elapsed:.1f}s) {detail}")
        print(ACCEPTANCE_LINES[-1])
        assert not self.failures, "; ".join(self.failures)


def test_criterion_1_codec_and_bus_algebra():
    gate = Gate(1, 10)
    pmap = ProtocolMap.load()
    combos = 0
    for stage in STAGES:
        for mv, p, override in itertools.product((False, True), repeat=3):
            payloads = pmap.encode(stage, {f"MV{stage}01": mv, f"P{stage}01": p}, override=override)
            for ptype, payload in payloads.items():
                gate.check(pmap.classify(payload) == ptype, f"classify stage {stage} {ptype}")
                for (actuator, role), value in pmap.decode(ptype, payload).items():
                    want = override if role == "override" else (mv if actuator == "MV" else p)
                    gate.check(value == want, f"decode stage {stage} {ptype} {actuator}/{role}")
            state = PlantState(levels=dict(PlantConfig().initial_levels))
            for ptype, payload in payloads.items():
                state = apply_payload(state, pmap, stage, ptype, payload)
            gate.check(state.commands[f"MV{stage}01"] == mv and state.commands[f"P{stage}01"] == p,
                       f"plant applies commands stage {stage}")
            gate.check(state.overrides[stage] == override, f"plant applies override stage {stage}")
            combos += 1
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        chosen = {k: rng.integers(0, 256, PAYLOAD_LENGTHS[k[1]], dtype=np.uint8).tobytes()
                  for k in TYPE_KEYS}
        capture = [PacketRecord(s, t, chosen[(s, t)], 1) for s, t in TYPE_KEYS]
        capture += [PacketRecord(s, t, bytes(PAYLOAD_LENGTHS[t]), 1) for s, t in TYPE_KEYS[:3]]
        order = rng.permutation(16)
        capture = [capture[i] for i in order] + capture[16:]
        v = assemble(capture)
        if v.shape != (FEATURE_BITS,) or decompose(v) != chosen:
            gate.check(False, "assemble/decompose inverse")
            break
    gate.check(FEATURE_BITS == 2752, "feature width 2752")
    gate.note(f"{combos} stage/command combos, 10^4 random captures")
    gate.finish()


def _exhaustive_split(X, r, w, min_leaf):
    best_j, best_gain = -1, 0.0
    base = np.sum(w * (r - np.average(r, weights=w)) ** 2)
    for j in range(X.shape[1]):
        m = X[:, j] == 1
        if w[m].sum() < min_leaf or w[~m].sum() < min_leaf or m.all() or not m.any():
            continue
        sse = sum(np.sum(w[s] * (r[s] - np.average(r[s], weights=w[s])) ** 2) for s in (m, ~m))
        if base - sse > best_gain * (1 + 1e-9) + 1e-12:
            best_j, best_gain = j, base - sse
    return best_j


def test_criterion_2_regression_oracles():
    gate = Gate(2, 30)
    rng = np.random.default_rng(2)
    for _ in range(200):
        n, d = rng.integers(2, 65, size=2)
        X = rng.integers(0, 2, size=(n, d)).astype(np.uint8)
        r, w = rng.normal(size=n), rng.integers(1, 4, size=n).astype(float)
        min_leaf = float(rng.integers(1, 4))
        gate.check(best_split(X, r, w, min_leaf)[0] == _exhaustive_split(X, r, w, min_leaf),
                   "split matches exhaustive search")
    for kind, hp in (("linear", {"ridge": 0.1}), ("gbdt", {"n_trees": 20, "min_leaf": 2})):
        for _ in range(5):
            X = rng.integers(0, 2, size=(30, 16)).astype(np.uint8)
            y, w = rng.normal(size=30), rng.integers(1, 6, size=30)
            a = regress.fit(kind, TrainingSet(X, y, w.astype(float)), **hp)
            b = regress.fit(kind, TrainingSet(np.repeat(X, w, axis=0), np.repeat(y, w)), **hp)
            probe = rng.integers(0, 2, size=(50, 16)).astype(np.uint8)
            gate.check(np.allclose(a.predict(probe), b.predict(probe), atol=1e-6, rtol=0),
                       f"{kind} weights == duplication")
    X = rng.integers(0, 2, size=(200, FEATURE_BITS)).astype(np.uint8)
    model = fit_gbdt(X, X[:, :5] @ rng.normal(size=5) + rng.normal(0, 0.1, 200), min_leaf=2)
    for x in X[:50]:
        gate.check(abs(model.predict(x) - model.base_value - model.super_features(x).sum()) <= 1e-9,
                   "predict = base + sum(super features)")
    a = rng.normal(size=40)
    gate.check(r2_score(a, a) == 1.0, "r2 perfect = 1")
    gate.check(abs(r2_score(np.full(40, a.mean()), a)) < 1e-12, "r2 mean = 0")
    gate.note("200 split instances, 10 weighted fits, 50 super-feature sums")
    gate.finish()


def test_criterion_3_discovery_oracle():
    gate = Gate(3, 60)
    rng = np.random.default_rng(3)
    for _ in range(100):
        width = int(rng.integers(12, 17))
        if rng.random() < 0.5:
            model = LinearModel(rng.normal(size=width), float(rng.normal()), 0.0)
        else:
            X = rng.integers(0, 2, size=(60, width)).astype(np.uint8)
            model = fit_gbdt(X, X @ rng.normal(size=width), n_trees=10, min_leaf=2)
        p_o = rng.integers(0, 2, size=width).astype(np.uint8)
        single = model.predict(np.eye(width, dtype=np.uint8) ^ p_o)
        obj = Objective("DPIT301", float(single.min()) - 0.5, float(single.max()) + 0.5)
        lo, hi = obj.low, obj.high
        for n in (1, 2, 3):
            best = 0.0
            count = 0
            for s in itertools.combinations(range(width), n):
                x = p_o.copy()
                x[list(s)] ^= 1
                v = float(model.predict(x))
                d = min(v - lo, hi - v)
                best = max(best, F_MAX if d <= 0 else min(F_MAX, (hi - lo) / d))
                count += 1
            d = discover(model, p_o, n, obj)
            gate.check(math.isclose(d.f_max, best, rel_tol=1e-9), f"argmax n={n}")
            gate.check(d.evaluated == count, "every subset evaluated once")
    gate.note("100 toy models, n in {1,2,3}")
    gate.finish()


def test_criterion_4_roulette_statistics():
    gate = Gate(4, 60)
    rng = np.random.default_rng(4)
    for fitness in ([1.0, 3.0], [0.2, 1.0, 2.0, 0.0, 5.0, 1.8]):
        pool = [Candidate(np.zeros(1), (i,), f) for i, f in enumerate(fitness)]
        counts = np.bincount([roulette_select(pool, rng).flipped_bits[0] for _ in range(10_000)],
                             minlength=len(pool))
        expected = 10_000 * np.array(fitness) / sum(fitness)
        keep = expected > 0
        p = stats.chisquare(counts[keep], expected[keep]).pvalue
        gate.check(p > 0.05 and counts[~keep].sum() == 0, f"chi2 p={p:.3f} for {fitness}")
        gate.note(f"p={p:.2f}")
    gate.finish()


def test_criterion_5_active_learning_quality(tmp_path):
    gate = Gate(5, 600)
    cfg = ex.ExperimentConfig(seed=FULL_SEED, out=str(tmp_path)).validate()
    test = ex.clean_recording(cfg)
    for sensor in FLOW_SENSORS + ("DPIT301",):
        best = None
        for strategy in ("EBCM", "EMCM"):
            hit, curve, _ = ex.rounds_to_target(cfg, sensor, "gbdt", strategy, test)
            best = max(r2 for _, r2 in curve) if best is None else max(best, *(r for _, r in curve))
            if hit is not None:
                gate.note(f"{sensor} gbdt/{strategy} r2>0.9 after {hit} rounds")
                break
        else:
            gate.check(False, f"{sensor} gbdt best r2 {best:.3f}")
    hit, curve, _ = ex.rounds_to_target(cfg, "FIT101", "linear", "EBCM", test)
    gate.check(hit is not None, f"FIT101 linear best r2 {max(r for _, r in curve):.3f}")
    gate.note(f"FIT101 linear/EBCM r2>0.9 after {hit} rounds")
    gate.finish()


@pytest.fixture(scope="module")
def full_out(tmp_path_factory):
    """Shared output directory: criterion 7 reuses the models trained for criterion 6."""
    return tmp_path_factory.mktemp("full")


AL_ROW, PRE_ROW = "gbdt/EBCM", "gbdt/pretrain"


def test_criterion_6_attack_success(full_out):
    gate = Gate(6, 1800)
    cfg = ex.ExperimentConfig(seed=FULL_SEED, models=("gbdt",), strategies=("EBCM",),
                              rows=(PRE_ROW, AL_ROW, ex.RANDOM), flip_budgets=(10,), trials=200,
                              out=str(full_out)).validate()
    rates = ex.read_rates(ex.cmd_rq2(cfg) / "success_rates.csv")
    dominated = 0
    for s in SENSORS:
        al, pre, rnd = (rates[(r, s, 10)] for r in (AL_ROW, PRE_ROW, ex.RANDOM))
        gate.note(f"{s} AL {al:.1f} pre {pre:.1f} rand {rnd:.1f}")
        gate.check(al >= 90.0, f"{s} AL {al:.1f}% < 90%")
        gate.check(rnd <= 2.0, f"{s} random {rnd:.1f}% > 2%")
        dominated += al > pre
    gate.check(dominated >= 6, f"AL beats pre-train-only on {dominated}/8 sensors")
    gate.note(f"AL > pre-train on {dominated}/8")
    gate.finish()


def test_criterion_7_detection_and_early_warning(full_out):
    gate = Gate(7, 600)
    cfg = ex.ExperimentConfig(seed=FULL_SEED, models=("gbdt",), strategies=("EBCM",),
                              rows=(AL_ROW,), out=str(full_out)).validate()
    detection, warning, generated, _ = ex.rq4_reports(cfg, attack_row=AL_ROW)
    for s in SENSORS:
        rep = detection[AL_ROW][s]
        need = 0.80 if s in LEVEL_SENSORS else 0.95
        gate.note(f"{s} det {100 * rep.detection_rate:.1f} fpr {100 * rep.false_positive_rate:.1f}")
        gate.check(rep.detection_rate >= need, f"{s} detection {rep.detection_rate:.3f} < {need}")
        gate.check(rep.usable, f"{s} detector FPR {rep.false_positive_rate:.3f} > 0.05")
    for s in LEVEL_SENSORS:
        gate.check(generated[s] == 10, f"{s}: only {generated[s]} overflow attacks generated")
        w = warning[AL_ROW].get(s)
        if w is None:
            continue
        gate.note(f"{s} warned {w.successes}/{len(w.outcomes)} fpr {100 * w.false_positive_rate:.1f}")
        gate.check(w.successes == 10, f"{s} early warning {w.successes}/10")
        gate.check(w.usable, f"{s} warning FPR {w.false_positive_rate:.3f} > 0.05")
    gate.finish()


FORBIDDEN_NAMES = {"ProtocolMap", "_plant", "protocol", "TypeLayout", "Field"}
ATTACKER_MODULES = ("activefuzz.py", "attack.py", "defend.py")


def _boundary_violations(path: Path) -> list[str]:
    tree = ast.parse(path.read_text())
    bad = []
    for node in ast.walk(tree):
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            module = getattr(node, "module", None) or ""
            names = [a.name for a in node.names]
            if "plantsim" in module or any("plantsim" in n for n in names):
                bad.append(f"line {node.lineno}: imports plantsim")
            if any(n in FORBIDDEN_NAMES for n in names):
                bad.append(f"line {node.lineno}: imports {names}")
        elif isinstance(node, ast.Attribute) and node.attr in FORBIDDEN_NAMES:
            bad.append(f"line {node.lineno}: .{node.attr}")
        elif isinstance(node, ast.Name) and node.id in FORBIDDEN_NAMES:
            bad.append(f"line {node.lineno}: {node.id}")
        elif isinstance(node, ast.Constant) and isinstance(node.value, str) and (
                "protocol_map" in node.value or "cpsfuzz-protocol" in node.value):
            bad.append(f"line {node.lineno}: protocol map reference in a string")
    return bad


def test_criterion_8_black_box_boundary(tmp_path):
    gate = Gate(8, 60)
    root = Path(cpsfuzz.__file__).parent
    for name in ATTACKER_MODULES:
        for v in _boundary_violations(root / name):
            gate.check(False, f"{name} {v}")
    # the bus hands attackers payload bytes and the map's digest, never the map
    import cpsfuzz.netbus as netbus
    public = {n for n in dir(netbus.Bus) if not n.startswith("_")}
    gate.check(public == {"create", "fork", "step", "sniff_window", "sniff_vector", "spoof", "hold",
                          "idle", "observe", "query", "history", "tick", "protocol_digest"},
               f"unexpected Bus surface {sorted(public)}")
    # the checker itself catches a violation
    probe = tmp_path / "probe.py"
    probe.write_text("from .plantsim import ProtocolMap\nx = bus._plant\n")
    gate.check(len(_boundary_violations(probe)) >= 3, "checker misses planted violations")
    gate.note("activefuzz/attack/defend scanned")
    gate.finish()


def test_criterion_9_determinism(tmp_path):
    gate = Gate(9, 1800)
    base = dict(seed=11, sensors=("FIT101", "LIT101"), al_budget=30, trials=10, pretrain_ticks=1200,
                flip_budgets=(1, 2, 3, 4, 5, 10))
    dirs = []
    for name in ("a", "b"):
        cfg = ex.ExperimentConfig(**base, out=str(tmp_path / name)).validate()
        dirs.append(ex.cmd_rq2(cfg))
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    gate.check(len(files) > 0, "no outputs")
    for rel in files:
        gate.check((dirs[0] / rel).read_bytes() == (dirs[1] / rel).read_bytes(), f"{rel} differs")
    csvs = [f for f in files if f.suffix == ".csv"]
    gate.note(f"{len(csvs)} CSVs and {len(files) - len(csvs)} other files byte-identical; "
              "9 rows x 2 sensors x 6 budgets")
    gate.finish()
