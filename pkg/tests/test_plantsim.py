import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpsfuzz.plantsim import (ACTUATORS, STAGES, Controller, Historian, NotRecorded, PacketRejected,
                              Plant, PlantConfig, PlantState, ProtocolMap, apply_payload,
                              hysteresis, line_flows, read_sensor, step)
from cpsfuzz.sensors import SENSORS

PMAP = ProtocolMap.load()


def test_hysteresis_rule():
    assert hysteresis(450, 500, 800, False) is True
    assert hysteresis(850, 500, 800, True) is False
    assert hysteresis(650, 500, 800, True) is True
    assert hysteresis(650, 500, 800, False) is False


@pytest.mark.parametrize("level,previous,expected", [(450, False, True), (850, True, False),
                                                     (650, True, True), (650, False, False)])
def test_controller_fill_valve(level, previous, expected):
    ctl = Controller(PlantConfig(), fill=previous)
    cmds = ctl.decide({"LIT101": level, "LIT301": 650, "LIT401": 650})
    assert cmds["MV101"] is expected


def test_payload_lengths_and_magic():
    for stage in STAGES:
        out = PMAP.encode(stage, {f"MV{stage}01": True, f"P{stage}01": False})
        assert {k: len(v) for k, v in out.items()} == {"A": 10, "B": 32, "C": 22, "D": 22}
        assert [out[t][0] for t in "ABCD"] == [0x7E, 0xA5, 0x3C, 0x3D]


def test_stage1_type_a_layout():
    a = PMAP.encode(1, {"MV101": True, "P101": False})["A"]
    assert a[4] & 1 == 1 and a[4] >> 1 & 1 == 0 and a[1] == 1


def test_stage2_all_off_command_word():
    b = PMAP.encode(2, {"MV201": False, "P201": False})["B"]
    assert b[6:8] == b"\x00\x00" and b[0] == 0xA5


def test_codec_round_trip_all_combinations():
    for stage in STAGES:
        for mv, p in itertools.product((False, True), repeat=2):
            cmds = {f"MV{stage}01": mv, f"P{stage}01": p}
            state = PlantState(levels=dict(PlantConfig().initial_levels))
            for ptype, payload in PMAP.encode(stage, cmds).items():
                state = apply_payload(state, PMAP, stage, ptype, payload)
            assert state.commands[f"MV{stage}01"] == mv and state.commands[f"P{stage}01"] == p
            assert state.latches[f"MV{stage}01"] == mv and state.latches[f"P{stage}01"] == p
            assert state.overrides[stage] is False


def test_magic_mismatch_rejected_state_untouched():
    state = PlantState(levels=dict(PlantConfig().initial_levels))
    payload = bytearray(PMAP.encode(1, {"MV101": True, "P101": True})["A"])
    payload[0] ^= 0xFF
    with pytest.raises(PacketRejected):
        apply_payload(state, PMAP, 1, "A", bytes(payload))
    assert state.commands["MV101"] is False


def _reserved(ptype):
    return PMAP.types[ptype].reserved_positions()


@given(st.sampled_from(STAGES), st.sampled_from("ABCD"), st.data())
def test_reserved_bits_are_inert(stage, ptype, data):
    cmds = {f"MV{stage}01": True, f"P{stage}01": False}
    payload = bytearray(PMAP.encode(stage, cmds)[ptype])
    flips = data.draw(st.lists(st.sampled_from(_reserved(ptype)), min_size=1, max_size=20, unique=True))
    for pos in flips:
        payload[pos // 8] ^= 1 << (pos % 8)
    assert PMAP.decode(ptype, bytes(payload)) == PMAP.decode(ptype, PMAP.encode(stage, cmds)[ptype])


@given(st.binary(min_size=22, max_size=22))
def test_validation_soundness(payload):
    state = PlantState(levels=dict(PlantConfig().initial_levels))
    before = state.copy()
    if payload[0] == 0x3C:
        return
    with pytest.raises(PacketRejected):
        apply_payload(state, PMAP, 3, "C", payload)
    assert state == before


def test_protocol_digest_is_stable_and_short():
    assert PMAP.digest == ProtocolMap.load().digest
    assert len(PMAP.digest) == 16


def test_filler_is_deterministic_per_stage():
    assert PMAP.filler(1, "B") == PMAP.filler(1, "B")
    assert PMAP.filler(1, "B") != PMAP.filler(2, "B")


def test_noiseless_reading_equals_true_value():
    cfg = PlantConfig(noise={"level": 0.0, "flow": 0.0, "pressure": 0.0})
    state = PlantState(levels={"LIT101": 700.0, "LIT301": 600.0, "LIT401": 650.0})
    assert read_sensor(state, "LIT101", cfg).value == 700.0


def test_noise_deterministic_and_flow_clamped():
    cfg = PlantConfig(seed=3)
    state = PlantState(levels=dict(cfg.initial_levels), tick=17)
    assert read_sensor(state, "LIT101", cfg) == read_sensor(state, "LIT101", cfg)
    values = [read_sensor(PlantState(levels=dict(cfg.initial_levels), tick=t), "FIT101", cfg).value
              for t in range(500)]
    assert min(values) >= 0.0 and max(values) > 0.0


def test_historian_query_and_boundary():
    plant = Plant()
    plant.run(5)
    assert plant.historian.query("LIT101", plant.tick).value == plant.latest()["LIT101"]
    with pytest.raises(NotRecorded):
        plant.historian.query("LIT101", -1)


def test_historian_file_round_trip(tmp_path):
    plant = Plant()
    plant.run(20)
    plant.historian.write(tmp_path / "h.csv")
    back = Historian.read(tmp_path / "h.csv")
    assert back.rows == plant.historian.rows and back.start == plant.historian.start


@given(st.lists(st.sampled_from(ACTUATORS), unique=True), st.integers(1, 200))
def test_mass_conservation_noiseless(on, ticks):
    cfg = PlantConfig()
    state = PlantState(levels={"LIT101": 650.0, "LIT301": 650.0, "LIT401": 650.0})
    for a in on:
        state.commands[a] = True
    start = dict(state.levels)
    inflow = dict.fromkeys(start, 0.0)
    for _ in range(ticks):
        flows = line_flows(state, cfg)
        for tank, (q_in, q_out) in {"LIT101": ("FIT101", "FIT201"), "LIT301": ("FIT201", "FIT301"),
                                    "LIT401": ("FIT301", "FIT401")}.items():
            inflow[tank] += (flows[q_in] - flows[q_out]) * cfg.mm_per_s_per_m3h
        state = step(state, cfg)
    for tank in start:
        assert state.levels[tank] - start[tank] == pytest.approx(inflow[tank], abs=1e-9)


def test_override_boosts_flow_and_bypasses_switch():
    cfg = PlantConfig()
    state = PlantState(levels={"LIT101": 1050.0, "LIT301": 650.0, "LIT401": 650.0})
    state.commands["MV101"] = True
    assert line_flows(state, cfg)["FIT101"] == 0.0  # high level switch
    state.overrides[1] = True
    assert line_flows(state, cfg)["FIT101"] == pytest.approx(2.0 * cfg.nominal_flow["FIT101"])


def test_pressure_is_quadratic_in_uf_flow():
    cfg = PlantConfig()
    state = PlantState(levels={"LIT101": 650.0, "LIT301": 650.0, "LIT401": 650.0})
    state.commands.update(MV301=True, P301=True)
    after = step(state, cfg)
    assert after.pressure == pytest.approx(cfg.dpit_coeff * cfg.nominal_flow["FIT301"] ** 2)


def test_determinism_same_seed_same_log():
    a, b = Plant(PlantConfig(seed=5)), Plant(PlantConfig(seed=5))
    a.run(300)
    b.run(300)
    assert a.historian.rows == b.historian.rows


def test_fork_is_independent():
    plant = Plant()
    plant.run(10)
    twin = plant.fork()
    twin.state.commands["MV101"] = not twin.state.commands["MV101"]
    twin.run(3)
    assert plant.tick == 10 and twin.tick == 13


def test_normal_operation_stays_in_band():
    plant = Plant()
    plant.run(6000)
    cfg = plant.config
    for s in ("LIT101", "LIT301", "LIT401"):
        series = np.array(plant.historian.series(s, 200))
        assert series.min() > cfg.level_range[2] - 10 and series.max() < cfg.level_range[3] + 10


def test_config_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        PlantConfig(switch_high=700.0)
    cfg = PlantConfig(seed=9)
    cfg.save(tmp_path / "p.json")
    assert PlantConfig.load(tmp_path / "p.json") == cfg


def test_max_values_positive():
    cfg = PlantConfig()
    assert all(cfg.max_value(s) > 0 for s in SENSORS)
