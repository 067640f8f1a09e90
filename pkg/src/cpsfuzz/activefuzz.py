"""Learning a sensor's response to packets: passive pre-training and
active learning by spoofing chosen bit-flipped packets.

Everything here goes through the attacker's interface to the plant:
sniffing and spoofing on the bus, and reading the historian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import regress
from .netbus import FEATURE_BITS, Bus
from .regress import TrainingSet
from .sensors import SENSORS, default_horizon, is_level

STRATEGIES = ("EBCM", "EMCM")


class InsufficientData(ValueError):
    pass


class EmptyPool(ValueError):
    pass


class EnsembleUnfit(RuntimeError):
    pass


@dataclass
class ActiveLearnConfig:
    strategy: str = "EBCM"
    t_s: int = 5
    n_m: int = 32
    pool_size: int = 64
    retrain_every: int = 10
    budget: int = 600
    tolerance: float = 0.005
    ensemble_size: int = 4
    stop_on_convergence: bool = True

    def __post_init__(self):
        self.strategy = self.strategy.upper()
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.n_m < 1 or self.pool_size < 1 or self.t_s < 1:
            raise ValueError("need n_m >= 1, pool_size >= 1 and t_s >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.retrain_every < 1 or self.budget < 0 or self.ensemble_size < 2:
            raise ValueError("need retrain_every >= 1, budget >= 0, ensemble_size >= 2")

    @classmethod
    def for_sensor(cls, sensor_id: str, **overrides) -> "ActiveLearnConfig":
        """Defaults for a sensor: horizon 30 and tolerance 5% for tanks."""
        level = is_level(sensor_id)
        base = {"t_s": default_horizon(sensor_id), "tolerance": 0.05 if level else 0.005}
        return cls(**{**base, **overrides})


@dataclass
class Candidate:
    vector: np.ndarray
    flipped_bits: tuple[int, ...]
    fitness: float = 0.0


@dataclass
class Recording:
    """Normal traffic and the historian over the same ticks.

    ``vectors[i]`` was on the wire during tick ``start + i``, and
    ``readings[s][i]`` is the value of sensor s recorded at that tick.
    """

    vectors: np.ndarray
    readings: dict[str, np.ndarray]
    start: int = 0

    def __len__(self) -> int:
        return len(self.vectors)

    def slice(self, first: int, last: int) -> "Recording":
        return Recording(self.vectors[first:last],
                         {s: v[first:last] for s, v in self.readings.items()},
                         self.start + first)


def record_normal(bus: Bus, duration: int, sensors: Sequence[str] = SENSORS) -> Recording:
    """Sit silently on the bus for ``duration`` ticks."""
    vectors = np.zeros((duration, FEATURE_BITS), dtype=np.uint8)
    start = bus.tick + 1
    for i in range(duration):
        vectors[i] = bus.sniff_vector()
    readings = {s: np.array(bus.history(s, start, start + duration - 1)) for s in sensors}
    return Recording(vectors, readings, start)


def targets(rec: Recording, sensor_id: str, t_s: int) -> np.ndarray:
    """Value t_s ticks ahead of each usable vector (delta for tank levels)."""
    values = rec.readings[sensor_id]
    ahead = values[t_s:]
    return ahead - values[:-t_s] if is_level(sensor_id) else ahead.copy()


def training_set(rec: Recording, sensor_id: str, t_s: int) -> TrainingSet:
    if len(rec) < t_s + 2:
        raise InsufficientData(f"need at least {t_s + 2} ticks, have {len(rec)}")
    y = targets(rec, sensor_id, t_s)
    return TrainingSet(rec.vectors[:len(y)], y)


def fit_model(kind: str, data: TrainingSet, hp: dict | None = None):
    return regress.fit(kind, data, **(hp or {}))


def pretrain(bus: Bus, sensor_id: str, duration: int, t_s: int | None = None,
             kind: str | None = "gbdt", hp: dict | None = None):
    """Observe normal operation for ``duration`` ticks.

    Returns (model, training set); the model is None when ``kind`` is None.
    """
    t_s = default_horizon(sensor_id) if t_s is None else t_s
    if duration < t_s + 2:
        raise InsufficientData(f"pre-training needs at least {t_s + 2} ticks")
    data = training_set(record_normal(bus, duration, [sensor_id]), sensor_id, t_s)
    model = fit_model(kind, data, hp) if kind else None
    return model, data


def roulette_select(candidates: Sequence[Candidate], rng: np.random.Generator) -> Candidate:
    """Fitness-proportional choice; uniform when every fitness is zero."""
    if not candidates:
        raise EmptyPool("no candidates")
    fitness = np.array([c.fitness for c in candidates], dtype=float)
    if np.any(fitness < 0) or not np.all(np.isfinite(fitness)):
        raise ValueError("fitness must be finite and non-negative")
    total = fitness.sum()
    if total == 0:
        return candidates[int(rng.integers(len(candidates)))]
    r = rng.uniform(0, total)
    acc = np.cumsum(fitness)
    i = int(np.searchsorted(acc, r, side="right"))
    return candidates[min(i, len(candidates) - 1)]


def make_pool(p_o: np.ndarray, n_m: int, pool_size: int,
              rng: np.random.Generator) -> list[Candidate]:
    """Copies of p_o with a uniform number in [1, n_m] of distinct bits flipped."""
    p_o = np.asarray(p_o, dtype=np.uint8)
    n_m = min(n_m, p_o.size)
    pool = []
    for _ in range(pool_size):
        n = int(rng.integers(1, n_m + 1))
        bits = np.sort(rng.choice(p_o.size, size=n, replace=False))
        v = p_o.copy()
        v[bits] ^= 1
        pool.append(Candidate(v, tuple(int(b) for b in bits)))
    return pool


def _predict_rows(model, X: np.ndarray) -> np.ndarray:
    return np.atleast_1d(np.asarray(model.predict(np.atleast_2d(X)), dtype=float))


def observe_effect(bus: Bus, vector: np.ndarray | None, sensor_id: str, t_s: int) -> float:
    """Run t_s + 1 ticks (spoofing ``vector`` on each if given) and return the target.

    The first tick puts the packets on the wire; the value t_s ticks later
    is the target (its change over those t_s ticks for tank levels).
    """
    run = bus.idle if vector is None else (lambda n: bus.hold(vector, n))
    run(1)
    start = bus.observe(sensor_id)
    run(t_s)
    end = bus.observe(sensor_id)
    return end - start if is_level(sensor_id) else end


def ebcm_sample(bus: Bus, model, sensor_id: str, cfg: ActiveLearnConfig,
                rng: np.random.Generator) -> Candidate:
    """Prefer candidates whose predicted effect is far from what the plant does now."""
    p_o = bus.sniff_vector()
    v_s = observe_effect(bus, None, sensor_id, cfg.t_s)
    pool = make_pool(p_o, cfg.n_m, cfg.pool_size, rng)
    pred = _predict_rows(model, np.stack([c.vector for c in pool]))
    for c, p in zip(pool, pred):
        c.fitness = abs(v_s - float(p))
    return roulette_select(pool, rng)


def bootstrap_ensemble(kind: str, data: TrainingSet, k: int, hp: dict | None,
                       rng: np.random.Generator) -> list:
    """k models refit on row resamples (with replacement) of the training set."""
    X, y, w = data.X, data.y, data.w
    models = []
    for _ in range(k):
        rows = rng.integers(0, len(y), size=len(y))
        try:
            models.append(regress.fit(kind, TrainingSet(X[rows], y[rows], w[rows]), **(hp or {})))
        except ValueError as exc:
            raise EnsembleUnfit(f"bootstrap refit failed: {exc}") from exc
    return models


def model_change_scores(model, ensemble: Sequence, X: np.ndarray) -> np.ndarray:
    """Mean disagreement with the bootstrap models times the norm of phi(x)."""
    X = np.atleast_2d(X)
    pred = _predict_rows(model, X)
    spread = np.mean([np.abs(pred - _predict_rows(m, X)) for m in ensemble], axis=0)
    if getattr(model, "kind", None) == "gbdt":
        phi = np.linalg.norm(model.tree_outputs(X), axis=1)
    else:
        phi = np.sqrt(X.astype(float).sum(axis=1))
    return spread * phi


def emcm_sample(model, pool: Sequence[Candidate], ensemble: Sequence) -> Candidate:
    """Candidate with the largest estimated model change (first on ties)."""
    if not pool:
        raise EmptyPool("no candidates")
    if not ensemble:
        raise EnsembleUnfit("empty ensemble")
    scores = model_change_scores(model, ensemble, np.stack([c.vector for c in pool]))
    for c, s in zip(pool, scores):
        c.fitness = float(s)
    return pool[int(np.argmax(scores))]


def normalized(importance: np.ndarray) -> np.ndarray:
    importance = np.asarray(importance, dtype=float)
    total = importance.sum()
    return importance / total if total > 0 else importance


def convergence_check(history: Sequence[np.ndarray], tolerance: float) -> bool:
    """True iff the last two normalized importance vectors differ by <= tolerance."""
    if len(history) < 2:
        return False
    a, b = normalized(history[-2]), normalized(history[-1])
    return float(np.max(np.abs(a - b))) <= tolerance


@dataclass
class LoopState:
    """What the loop leaves behind: data, model, log and importance history."""

    model: object
    data: TrainingSet
    log: list[dict] = field(default_factory=list)
    importance_history: list[np.ndarray] = field(default_factory=list)
    rounds: int = 0
    converged: bool = False


def active_learn_loop(bus: Bus, sensor_id: str, model, data: TrainingSet,
                      cfg: ActiveLearnConfig, rng: np.random.Generator, *,
                      kind: str | None = None, hp: dict | None = None,
                      on_retrain: Callable[[int, object], None] | None = None) -> LoopState:
    """Sample, spoof, observe, append with weight t_s; retrain periodically.

    ``data`` is extended in place.  With budget 0 the given model comes
    back untouched.
    """
    kind = kind or model.kind
    state = LoopState(model, data)
    if cfg.budget == 0:
        return state
    ensemble = None
    state.importance_history.append(model.feature_importance())
    dirty = False
    for rnd in range(1, cfg.budget + 1):
        if cfg.strategy == "EBCM":
            chosen = ebcm_sample(bus, state.model, sensor_id, cfg, rng)
        else:
            if ensemble is None:
                ensemble = bootstrap_ensemble(kind, data, cfg.ensemble_size, hp, rng)
            p_o = bus.sniff_vector()
            chosen = emcm_sample(state.model, make_pool(p_o, cfg.n_m, cfg.pool_size, rng), ensemble)
        value = observe_effect(bus, chosen.vector, sensor_id, cfg.t_s)
        data.append(chosen.vector, value, cfg.t_s)
        dirty = True
        retrained = False
        if rnd % cfg.retrain_every == 0 or rnd == cfg.budget:
            state.model = fit_model(kind, data, hp)
            ensemble = None
            dirty = False
            retrained = True
            state.importance_history.append(state.model.feature_importance())
            if on_retrain:
                on_retrain(rnd, state.model)
        state.rounds = rnd
        state.log.append({"round": rnd, "strategy": cfg.strategy,
                          "flipped_bits": list(chosen.flipped_bits),
                          "fitness": chosen.fitness, "observed": value, "retrained": retrained})
        if retrained and cfg.stop_on_convergence and convergence_check(
                state.importance_history, cfg.tolerance):
            state.converged = True
            break
    if dirty:
        state.model = fit_model(kind, data, hp)
    return state


def write_session_log(path, log: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for row in log:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_session_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
