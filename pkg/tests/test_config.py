"""Scenario config: defaults, derived flit lengths, INI parsing."""
import configparser
from dataclasses import replace

import pytest

from kfnoc.config import (ENGINES, MODES, ScenarioConfig, config_from_parser,
                          load_config, parse_phases)
from kfnoc.controller import PolicyParams
from kfnoc.traffic import Phase, TrafficClass, TrafficProfile


def test_defaults_are_valid_and_kf_mode():
    cfg = ScenarioConfig()
    assert cfg.mode == "two_subnet_kf"
    assert cfg.subnet_count == 2
    assert cfg.width == cfg.height == 6
    assert cfg.policy == PolicyParams()


def test_two_subnet_flit_lengths():
    cfg = ScenarioConfig(mode="two_subnet_rr")
    # 32-byte channels: an 8-byte header fits one flit, 8+128 takes 5
    assert cfg.request_flits_for(TrafficClass.CPU) == 1
    assert cfg.reply_flits_for(TrafficClass.CPU) == 5
    assert cfg.reply_flits_for(TrafficClass.GPU) == 5


def test_four_subnet_halves_channels_and_stretches_replies():
    cfg = ScenarioConfig(mode="four_subnet")
    assert cfg.subnet_count == 4
    assert cfg.channel_bytes_per_subnet == 16
    assert cfg.request_flits_for(TrafficClass.CPU) == 1
    assert cfg.reply_flits_for(TrafficClass.GPU) == 9


def test_flit_override_wins():
    cfg = ScenarioConfig(request_flits=2, reply_flits=7)
    assert cfg.request_flits_for(TrafficClass.GPU) == 2
    assert cfg.reply_flits_for(TrafficClass.CPU) == 7


@pytest.mark.parametrize("kwargs", [
    {"mode": "three_subnet"},
    {"engine": "fortran"},
    {"max_cycles": 0},
    {"pin_signal": 1, "mode": "two_subnet_fair"},
    {"pin_signal": 2},
    {"static_partition": "2:2"},                       # needs fair mode
    {"static_partition": "4:0", "mode": "two_subnet_fair"},
    {"static_partition": "1:2", "mode": "two_subnet_fair"},
    {"static_partition": "nope", "mode": "two_subnet_fair"},
    {"kalman_h": (0.6, 0.5)},
    {"queue_capacity": 0},
    {"vcs_per_port": 1},
])
def test_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        ScenarioConfig(**kwargs)


def test_static_partition_parse():
    cfg = ScenarioConfig(mode="two_subnet_fair", static_partition="3:1")
    assert cfg.parse_static_partition() == (3, 1)


def test_pin_signal_allowed_in_kf_mode():
    cfg = ScenarioConfig(mode="two_subnet_kf", pin_signal=0)
    assert cfg.pin_signal == 0


def test_with_mode_preserves_workload():
    base = ScenarioConfig(mode="two_subnet_kf", pin_signal=1, seed=9)
    fp = base.workload_fingerprint()
    for mode in MODES:
        other = base.with_mode(mode)
        assert other.mode == mode
        assert other.pin_signal is None
        assert other.workload_fingerprint() == fp


def test_fingerprint_tracks_workload_changes():
    base = ScenarioConfig()
    assert replace(base, seed=2).workload_fingerprint() \
        != base.workload_fingerprint()
    assert replace(base, service_latency=10).workload_fingerprint() \
        != base.workload_fingerprint()


def test_parse_phases():
    assert parse_phases("0:0.02") == (Phase(0, 0.02),)
    assert parse_phases("0:0.01, 5000:0.2,9000:0") == (
        Phase(0, 0.01), Phase(5000, 0.2), Phase(9000, 0.0))
    with pytest.raises(ValueError):
        parse_phases("5000")


def _parser(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    return parser


def test_ini_full_round_trip(tmp_path):
    path = tmp_path / "scenario.ini"
    path.write_text("""
[sim]
mode = two_subnet_fair
seed = 42
max_cycles = 5000
engine = py
drain = false
static_partition = 3:1

[topology]
width = 5
height = 4

[router]
vcs_per_port = 4
buffer_depth = 2

[traffic.cpu]
phases = 0:0.01, 2000:0.05
reply_payload_bytes = 64

[traffic.gpu]
phases = 0:0.02
cores_per_node = 4

[mc]
queue_capacity = 8
service_latency = 12

[link]
channel_bytes = 16
header_bytes = 4

[kalman]
a = 0.9
h = 1,2,3

[policy]
epoch_len = 250
warmup_cycles = 500
""")
    cfg = load_config(str(path))
    assert cfg.mode == "two_subnet_fair"
    assert cfg.seed == 42
    assert cfg.max_cycles == 5000
    assert cfg.engine == "py"
    assert cfg.drain is False
    assert cfg.static_partition == "3:1"
    assert (cfg.width, cfg.height) == (5, 4)
    assert cfg.buffer_depth == 2
    assert cfg.cpu_traffic.phases == (Phase(0, 0.01), Phase(2000, 0.05))
    assert cfg.cpu_traffic.reply_payload_bytes == 64
    assert cfg.gpu_traffic.cores_per_node == 4
    assert cfg.queue_capacity == 8
    assert cfg.service_latency == 12
    assert cfg.channel_bytes == 16
    assert cfg.kalman_a == 0.9
    assert cfg.kalman_h == (1.0, 2.0, 3.0)
    assert cfg.policy.epoch_len == 250
    assert cfg.policy.warmup_cycles == 500
    # untouched keys keep their defaults
    assert cfg.policy.hold_min_cycles == 5000
    assert cfg.kalman_q == 0.01


def test_ini_empty_gives_defaults():
    cfg = config_from_parser(_parser(""))
    assert cfg == ScenarioConfig()


def test_ini_rejects_unknown_section_and_key():
    with pytest.raises(ValueError, match="unknown config section"):
        config_from_parser(_parser("[simm]\nseed = 1\n"))
    with pytest.raises(ValueError, match="unknown key"):
        config_from_parser(_parser("[sim]\nsede = 1\n"))


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/scenario.ini")


def test_traffic_class_mismatch_rejected():
    gpu_profile = TrafficProfile(TrafficClass.GPU, (Phase(0, 0.1),))
    with pytest.raises(ValueError):
        ScenarioConfig(cpu_traffic=gpu_profile)


def test_engine_names_listed():
    assert set(ENGINES) == {"auto", "py", "native"}
