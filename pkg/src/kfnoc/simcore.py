"""Simulation driver: epoch loop, filter hookup, reconfiguration, outputs.

One run proceeds in epochs.  Each epoch the engine advances ``epoch_len``
cycles and hands back its telemetry counters.  Under ``two_subnet_kf``
the counters feed the Kalman filter, the thresholded estimate feeds the
deployment policy, and an accepted change is pushed back into the engine
as a new VC partition and switch arbitration policy before the next
epoch starts.  The other three modes run the same loop without the
filter so their telemetry traces are directly comparable.

Measurement windows:

* throughput counts reply flits delivered inside the active window and
  after warmup, divided by the post-warmup active cycles;
* latency averages over every packet injected after warmup, including
  deliveries that happen during the drain, so slow packets are not
  silently dropped from the mean.

Output files are written atomically (temp file + rename) so a crash
never leaves a truncated artifact behind.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ScenarioConfig
from .controller import (PolicyState, arb_policy_for, epoch_decide,
                         vc_partition_for)
from .engine import build_spec, create_engine
from .kalman import (KalmanModel, TelemetryScaler, initial_state, predict,
                     signal_from_state, update)
from .router import ArbMode, VcPartition
from .topology import build_topology
from .traffic import EpochCounters, TrafficClass, collect_epoch

DRAIN_CHUNK = 64


@dataclass(frozen=True)
class KfTraceRow:
    epoch: int
    end_cycle: int
    z_dramfull: float
    z_icnt_push: float
    z_shader: float
    x_prior: float
    p_prior: float
    gain_dramfull: float
    gain_icnt_push: float
    gain_shader: float
    x_post: float
    p_post: float
    signal: int


@dataclass(frozen=True)
class ControlRow:
    epoch: int
    cycle: int
    kf_signal: int
    applied_signal: int
    changed: bool
    reason: str


@dataclass
class RunResult:
    config: ScenarioConfig
    engine_name: str
    active_cycles: int
    drain_cycles: int
    quiescent: bool
    telemetry: list = field(default_factory=list)
    kf_trace: list = field(default_factory=list)
    control_trace: list = field(default_factory=list)
    reconfigurations: int = 0
    totals_active: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)
    state_digest: int = 0

    def _latency(self, cls: str) -> float:
        cnt = self.totals[f"lat_cnt_{cls}"]
        return self.totals[f"lat_sum_{cls}"] / cnt if cnt else math.nan

    def _throughput(self, cls: str) -> float:
        window = self.active_cycles - self.config.policy.warmup_cycles
        if window <= 0:
            return math.nan
        return self.totals_active[f"post_reply_{cls}"] / window

    @property
    def cpu_avg_latency(self) -> float:
        return self._latency("cpu")

    @property
    def gpu_avg_latency(self) -> float:
        return self._latency("gpu")

    @property
    def cpu_reply_throughput(self) -> float:
        return self._throughput("cpu")

    @property
    def gpu_reply_throughput(self) -> float:
        return self._throughput("gpu")


# ----------------------------------------------------------------------
# mode semantics

def _mask(vcs) -> int:
    out = 0
    for v in vcs:
        out |= 1 << v
    return out


def _policy_tuple(config: ScenarioConfig, applied_signal: int) -> tuple:
    """Engine policy for a mode, in set_policy argument order:
    (gpu_mask, cpu_mask, enabled, arb_mode, pattern)."""
    if config.mode in ("four_subnet", "two_subnet_rr"):
        return 0, 0, False, int(ArbMode.ROUND_ROBIN), ()
    if config.mode == "two_subnet_fair":
        if config.static_partition is not None:
            gpu_n, _ = config.parse_static_partition()
            part = VcPartition(
                gpu_vcs=frozenset(range(gpu_n)),
                cpu_vcs=frozenset(range(gpu_n, config.vcs_per_port)))
        else:
            part = vc_partition_for(0, config.vcs_per_port)
        return (_mask(part.gpu_vcs), _mask(part.cpu_vcs), True,
                int(ArbMode.ROUND_ROBIN), ())
    part = vc_partition_for(applied_signal, config.vcs_per_port)
    policy = arb_policy_for(applied_signal)
    pattern = tuple(int(s) for s in policy.pattern) \
        if policy.mode == ArbMode.PATTERN else ()
    return (_mask(part.gpu_vcs), _mask(part.cpu_vcs), True,
            int(policy.mode), pattern)


def _model_from_config(config: ScenarioConfig) -> KalmanModel:
    return KalmanModel(a=[[config.kalman_a]],
                       h=[[w] for w in config.kalman_h],
                       q=[[config.kalman_q]],
                       r=np.eye(len(config.kalman_h)) * config.kalman_r)


def build_engine(config: ScenarioConfig, applied_signal: int | None = None):
    """Engine wired for the config's mode; exposed for equivalence tests."""
    if applied_signal is None:
        applied_signal = config.pin_signal or 0
    topo = build_topology(config.width, config.height, config.placement,
                          config.subnet_count)
    gmask, cmask, enabled, arb, pattern = _policy_tuple(config, applied_signal)
    spec = build_spec(
        topo, seed=config.seed,
        qmc=config.queue_capacity, svc_lat=config.service_latency,
        vcs=config.vcs_per_port, buf=config.buffer_depth,
        cpu_profile=config.cpu_traffic, gpu_profile=config.gpu_traffic,
        req_flits=(config.request_flits_for(TrafficClass.CPU),
                   config.request_flits_for(TrafficClass.GPU)),
        reply_flits=(config.reply_flits_for(TrafficClass.CPU),
                     config.reply_flits_for(TrafficClass.GPU)),
        warmup_cutoff=config.policy.warmup_cycles,
        partition_enabled=enabled, gpu_mask=gmask, cpu_mask=cmask,
        arb_mode=arb, pattern=pattern,
        debug_invariants=config.debug_invariants)
    return create_engine(spec, config.engine)


# ----------------------------------------------------------------------
# the run loop

def run(config: ScenarioConfig) -> RunResult:
    applied = config.pin_signal if config.pin_signal is not None else 0
    engine = build_engine(config, applied)
    kf_mode = config.mode == "two_subnet_kf"
    params = config.policy

    model = state = scaler = None
    if kf_mode:
        model = _model_from_config(config)
        state = initial_state(model, config.kalman_x0, config.kalman_p0)
        scaler = TelemetryScaler()
    policy_state = PolicyState(applied_signal=applied)

    telemetry, kf_rows, control_rows = [], [], []
    reconfigurations = 0
    cycle = 0
    epoch = 0
    while cycle < config.max_cycles:
        n = min(params.epoch_len, config.max_cycles - cycle)
        engine.run_cycles(n)
        cycle += n
        raw = engine.epoch_counters()
        counters = EpochCounters(
            cpu_icnt_push=raw[0], cpu_stall_icnt_shader=raw[1],
            cpu_stall_dramfull=raw[2], cpu_reply_flits=raw[3],
            gpu_icnt_push=raw[4], gpu_stall_icnt_shader=raw[5],
            gpu_stall_dramfull=raw[6], gpu_reply_flits=raw[7])
        tele = collect_epoch(epoch, cycle, counters, n)
        telemetry.append(tele)

        # the filter and the policy only see full epochs; a trailing
        # partial epoch still lands in the telemetry trace
        if kf_mode and n == params.epoch_len:
            z = scaler.observe(tele)
            x_prior, p_prior = predict(model, state)
            state = update(model, x_prior, p_prior, z)
            signal = signal_from_state(state)
            gain = state.last_gain[0]
            kf_rows.append(KfTraceRow(
                epoch=epoch, end_cycle=cycle,
                z_dramfull=float(z[0]), z_icnt_push=float(z[1]),
                z_shader=float(z[2]),
                x_prior=float(x_prior[0]), p_prior=float(p_prior[0, 0]),
                gain_dramfull=float(gain[0]), gain_icnt_push=float(gain[1]),
                gain_shader=float(gain[2]),
                x_post=float(state.x[0]), p_post=float(state.p[0, 0]),
                signal=signal))
            if config.pin_signal is not None:
                control_rows.append(ControlRow(
                    epoch, cycle, signal, applied, False, "pinned"))
            else:
                decision = epoch_decide(params, policy_state, cycle, signal)
                control_rows.append(ControlRow(
                    epoch, cycle, signal, decision.applied_signal,
                    decision.changed, decision.reason))
                if decision.changed:
                    engine.set_policy(*_policy_tuple(
                        config, decision.applied_signal))
                    reconfigurations += 1
                policy_state = decision.state
        epoch += 1

    totals_active = engine.totals()
    drain_cycles = 0
    if config.drain:
        engine.set_generation(False)
        limit = config.drain_limit_factor * config.max_cycles
        while not engine.is_quiescent() and drain_cycles < limit:
            step = min(DRAIN_CHUNK, limit - drain_cycles)
            engine.run_cycles(step)
            drain_cycles += step

    return RunResult(
        config=config, engine_name=engine.name,
        active_cycles=cycle, drain_cycles=drain_cycles,
        quiescent=engine.is_quiescent(),
        telemetry=telemetry, kf_trace=kf_rows, control_trace=control_rows,
        reconfigurations=reconfigurations,
        totals_active=totals_active, totals=engine.totals(),
        state_digest=engine.state_digest())


# ----------------------------------------------------------------------
# artifacts

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header: tuple, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


METRICS_FIELDS = ("epoch", "end_cycle",
                  "cpu_icnt_push", "cpu_stall_icnt_shader",
                  "cpu_stall_dramfull", "cpu_throughput_proxy",
                  "gpu_icnt_push", "gpu_stall_icnt_shader",
                  "gpu_stall_dramfull", "gpu_throughput_proxy")

KF_TRACE_FIELDS = ("epoch", "end_cycle", "z_dramfull", "z_icnt_push",
                   "z_shader", "x_prior", "p_prior", "gain_dramfull",
                   "gain_icnt_push", "gain_shader", "x_post", "p_post",
                   "signal")

CONTROL_FIELDS = ("epoch", "cycle", "kf_signal", "applied_signal",
                  "changed", "reason")


def metrics_csv_text(result: RunResult) -> str:
    rows = [tuple(getattr(t, f) for f in METRICS_FIELDS)
            for t in result.telemetry]
    return _csv(METRICS_FIELDS, rows)


def summary_text(result: RunResult) -> str:
    totals = result.totals
    created = sum(totals[k] for k in totals if k.startswith("created_")
                  and not k.endswith("_flits"))
    delivered = sum(totals[k] for k in totals if k.startswith("delivered_")
                    and not k.endswith("_flits"))
    pairs = [
        ("mode", result.config.mode),
        ("engine", result.engine_name),
        ("seed", result.config.seed),
        ("active_cycles", result.active_cycles),
        ("drain_cycles", result.drain_cycles),
        ("quiescent", result.quiescent),
        ("created_packets", created),
        ("delivered_packets", delivered),
        ("cpu_avg_latency", result.cpu_avg_latency),
        ("gpu_avg_latency", result.gpu_avg_latency),
        ("cpu_reply_throughput", result.cpu_reply_throughput),
        ("gpu_reply_throughput", result.gpu_reply_throughput),
        ("reconfigurations", result.reconfigurations),
        ("state_digest", f"0x{result.state_digest:016x}"),
    ]
    return "".join(f"{k}: {_fmt(v)}\n" for k, v in pairs)


def write_run_outputs(result: RunResult, out_dir: str) -> list:
    """metrics.csv and summary.txt always; filter and policy traces only
    for the filter-driven mode.  Returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "metrics.csv")
    _atomic_write(path, metrics_csv_text(result))
    written.append(path)

    if result.config.mode == "two_subnet_kf":
        path = os.path.join(out_dir, "kf_trace.csv")
        rows = [tuple(getattr(r, f) for f in KF_TRACE_FIELDS)
                for r in result.kf_trace]
        _atomic_write(path, _csv(KF_TRACE_FIELDS, rows))
        written.append(path)

        path = os.path.join(out_dir, "controller_trace.csv")
        rows = [tuple(getattr(r, f) for f in CONTROL_FIELDS)
                for r in result.control_trace]
        _atomic_write(path, _csv(CONTROL_FIELDS, rows))
        written.append(path)

    path = os.path.join(out_dir, "summary.txt")
    _atomic_write(path, summary_text(result))
    written.append(path)
    return written


# ----------------------------------------------------------------------
# multi-run drivers

COMPARISON_MODES = ("four_subnet", "two_subnet_rr", "two_subnet_fair",
                    "two_subnet_kf")

SUMMARY_ROW_FIELDS = ("cpu_avg_latency", "gpu_avg_latency",
                      "cpu_reply_throughput", "gpu_reply_throughput",
                      "reconfigurations")


def compare(base: ScenarioConfig, modes: tuple = COMPARISON_MODES) -> list:
    """The same workload under each network configuration."""
    fingerprint = base.workload_fingerprint()
    results = []
    for mode in modes:
        cfg = base.with_mode(mode)
        if cfg.workload_fingerprint() != fingerprint:
            raise ValueError(f"mode {mode} altered the workload")
        results.append(run(cfg))
    return results


def write_comparison(results: list, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    for result in results:
        write_run_outputs(result, os.path.join(out_dir, result.config.mode))
    rows = [(r.config.mode,) + tuple(getattr(r, f) for f in SUMMARY_ROW_FIELDS)
            for r in results]
    path = os.path.join(out_dir, "comparison.csv")
    _atomic_write(path, _csv(("mode",) + SUMMARY_ROW_FIELDS, rows))
    return path


def vc_splits(vcs_per_port: int) -> tuple:
    return tuple(f"{g}:{vcs_per_port - g}" for g in range(1, vcs_per_port))


def sweep_vc(base: ScenarioConfig, splits: tuple = None) -> list:
    """Static-partition sweep over GPU:CPU VC splits, same workload."""
    if splits is None:
        splits = vc_splits(base.vcs_per_port)
    results = []
    for split in splits:
        cfg = replace(base, mode="two_subnet_fair", static_partition=split,
                      pin_signal=None)
        results.append(run(cfg))
    return results


def write_sweep(results: list, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    for result in results:
        label = result.config.static_partition.replace(":", "-")
        write_run_outputs(result, os.path.join(out_dir, f"split-{label}"))
    rows = [(r.config.static_partition,)
            + tuple(getattr(r, f) for f in SUMMARY_ROW_FIELDS)
            for r in results]
    path = os.path.join(out_dir, "sweep.csv")
    _atomic_write(path, _csv(("split",) + SUMMARY_ROW_FIELDS, rows))
    return path
