"""Scenario configuration: defaults, INI parsing, validation.

A scenario fully determines a run: mesh shape and placement, traffic
phases, router geometry, memory controllers, link widths, filter
parameters and the deployment policy.  Two runs with equal configs are
bit-identical; the ``mode`` field alone selects which of the four
network configurations is simulated:

* ``four_subnet``      four subnetworks (per class and direction), no
                       VC partitioning, round-robin switch arbitration
* ``two_subnet_rr``    two subnetworks (request/reply), shared VCs,
                       round-robin arbitration
* ``two_subnet_fair``  two subnetworks, static even VC split per class
* ``two_subnet_kf``    two subnetworks, filter-driven reconfiguration

Packet lengths in flits follow from payload bytes and the per-subnet
channel width: splitting the same wiring into four subnets halves each
channel, so replies stretch over more flits than in the two-subnet
layouts.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

from .controller import PolicyParams
from .router import RouterConfig
from .traffic import Phase, TrafficClass, TrafficProfile

MODES = ("four_subnet", "two_subnet_rr", "two_subnet_fair", "two_subnet_kf")
ENGINES = ("auto", "py", "native")


def _default_cpu_traffic() -> TrafficProfile:
    return TrafficProfile(TrafficClass.CPU, phases=(Phase(0, 0.005),),
                          cores_per_node=1)


def _default_gpu_traffic() -> TrafficProfile:
    # GPU tiles aggregate more cores and push twice the per-core rate;
    # together the defaults load the stock mesh to roughly 80% of the
    # aggregate memory controller service capacity
    return TrafficProfile(TrafficClass.GPU, phases=(Phase(0, 0.005),),
                          cores_per_node=2)


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "two_subnet_kf"
    seed: int = 1
    max_cycles: int = 100_000
    engine: str = "auto"
    drain: bool = True
    drain_limit_factor: int = 10
    debug_invariants: bool = False
    pin_signal: int | None = None
    static_partition: str | None = None
    width: int = 6
    height: int = 6
    placement: str = "default"
    vcs_per_port: int = 4
    buffer_depth: int = 4
    pipeline_depth: int = 4
    cpu_traffic: TrafficProfile = field(default_factory=_default_cpu_traffic)
    gpu_traffic: TrafficProfile = field(default_factory=_default_gpu_traffic)
    queue_capacity: int = 16
    service_latency: int = 30
    channel_bytes: int = 32
    header_bytes: int = 8
    request_flits: int | None = None   # override the derived length
    reply_flits: int | None = None
    kalman_a: float = 1.0
    kalman_q: float = 0.01
    kalman_r: float = 0.05
    kalman_h: tuple = (0.6, 0.5, 0.7)
    kalman_x0: float = 0.0
    kalman_p0: float = 1.0
    policy: PolicyParams = field(default_factory=PolicyParams)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be positive")
        if self.drain_limit_factor < 1:
            raise ValueError("drain_limit_factor must be at least 1")
        if self.pin_signal is not None:
            if self.mode != "two_subnet_kf":
                raise ValueError("pin_signal only applies to two_subnet_kf")
            if self.pin_signal not in (0, 1):
                raise ValueError("pin_signal must be 0 or 1")
        if self.static_partition is not None:
            if self.mode != "two_subnet_fair":
                raise ValueError("static_partition only applies to two_subnet_fair")
            self.parse_static_partition()
        RouterConfig(self.vcs_per_port, self.buffer_depth, self.pipeline_depth)
        if self.cpu_traffic.traffic_class != TrafficClass.CPU:
            raise ValueError("cpu_traffic must carry the CPU class")
        if self.gpu_traffic.traffic_class != TrafficClass.GPU:
            raise ValueError("gpu_traffic must carry the GPU class")
        if self.queue_capacity < 1 or self.service_latency < 1:
            raise ValueError("memory controller parameters must be positive")
        if self.channel_bytes < 1 or self.header_bytes < 0:
            raise ValueError("invalid link geometry")
        if len(self.kalman_h) != 3:
            raise ValueError("kalman_h needs exactly three weights")
        if self.request_flits is not None and self.request_flits < 1:
            raise ValueError("request_flits must be positive")
        if self.reply_flits is not None and self.reply_flits < 1:
            raise ValueError("reply_flits must be positive")

    # ------------------------------------------------------------------
    # derived geometry

    @property
    def subnet_count(self) -> int:
        return 4 if self.mode == "four_subnet" else 2

    @property
    def channel_bytes_per_subnet(self) -> float:
        # the physical wiring is split evenly over the subnets; the
        # two-subnet layouts are the baseline channel width
        return self.channel_bytes * 2 / self.subnet_count

    def _flits_for(self, payload_bytes: int) -> int:
        return max(1, math.ceil((self.header_bytes + payload_bytes)
                                / self.channel_bytes_per_subnet))

    def request_flits_for(self, cls: TrafficClass) -> int:
        if self.request_flits is not None:
            return self.request_flits
        prof = self.cpu_traffic if cls == TrafficClass.CPU else self.gpu_traffic
        return self._flits_for(prof.request_payload_bytes)

    def reply_flits_for(self, cls: TrafficClass) -> int:
        if self.reply_flits is not None:
            return self.reply_flits
        prof = self.cpu_traffic if cls == TrafficClass.CPU else self.gpu_traffic
        return self._flits_for(prof.reply_payload_bytes)

    def parse_static_partition(self) -> tuple:
        """'g:c' -> (gpu_count, cpu_count), validated against the VCs."""
        try:
            gpu_s, cpu_s = self.static_partition.split(":")
            gpu_n, cpu_n = int(gpu_s), int(cpu_s)
        except (ValueError, AttributeError):
            raise ValueError(
                f"static_partition must look like '2:2', got "
                f"{self.static_partition!r}") from None
        if gpu_n < 1 or cpu_n < 1 or gpu_n + cpu_n != self.vcs_per_port:
            raise ValueError(
                f"static_partition {self.static_partition!r} must assign "
                f"every one of the {self.vcs_per_port} VCs, at least one "
                f"per class")
        return gpu_n, cpu_n

    def with_mode(self, mode: str) -> "ScenarioConfig":
        """Same workload under a different network configuration."""
        return replace(self, mode=mode, pin_signal=None, static_partition=None)

    def workload_fingerprint(self) -> tuple:
        """Everything that must match for runs to be comparable."""
        return (self.seed, self.max_cycles, self.width, self.height,
                self.placement, self.vcs_per_port, self.buffer_depth,
                self.cpu_traffic, self.gpu_traffic, self.queue_capacity,
                self.service_latency, self.channel_bytes, self.header_bytes,
                self.request_flits, self.reply_flits, self.policy)


# ----------------------------------------------------------------------
# INI loading

_SECTIONS = {
    "sim": {"mode", "seed", "max_cycles", "engine", "drain",
            "drain_limit_factor", "debug_invariants", "pin_signal",
            "static_partition"},
    "topology": {"width", "height", "placement"},
    "router": {"vcs_per_port", "buffer_depth", "pipeline_depth"},
    "traffic.cpu": {"phases", "cores_per_node", "request_payload_bytes",
                    "reply_payload_bytes"},
    "traffic.gpu": {"phases", "cores_per_node", "request_payload_bytes",
                    "reply_payload_bytes"},
    "mc": {"queue_capacity", "service_latency"},
    "link": {"channel_bytes", "header_bytes", "request_flits", "reply_flits"},
    "kalman": {"a", "q", "r", "h", "x0", "p0"},
    "policy": {"epoch_len", "warmup_cycles", "hold_min_cycles",
               "revert_after_cycles"},
}


def parse_phases(text: str) -> tuple:
    """'0:0.02, 50000:0.1' -> (Phase(0, 0.02), Phase(50000, 0.1))"""
    phases = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            start_s, rate_s = chunk.split(":")
            phases.append(Phase(int(start_s), float(rate_s)))
        except ValueError:
            raise ValueError(f"bad phase entry {chunk!r}, expected "
                             "'start:rate'") from None
    return tuple(phases)


def _traffic_from_section(sec, cls: TrafficClass,
                          base: TrafficProfile) -> TrafficProfile:
    return TrafficProfile(
        traffic_class=cls,
        phases=parse_phases(sec["phases"]) if "phases" in sec else base.phases,
        cores_per_node=sec.getint("cores_per_node",
                                  fallback=base.cores_per_node),
        request_payload_bytes=sec.getint("request_payload_bytes",
                                         fallback=base.request_payload_bytes),
        reply_payload_bytes=sec.getint("reply_payload_bytes",
                                       fallback=base.reply_payload_bytes),
    )


def load_config(path: str) -> ScenarioConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    return config_from_parser(parser)


def config_from_parser(parser: configparser.ConfigParser) -> ScenarioConfig:
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")

    base = ScenarioConfig()
    kwargs = {}
    if parser.has_section("sim"):
        sec = parser["sim"]
        kwargs.update(
            mode=sec.get("mode", base.mode),
            seed=sec.getint("seed", fallback=base.seed),
            max_cycles=sec.getint("max_cycles", fallback=base.max_cycles),
            engine=sec.get("engine", base.engine),
            drain=sec.getboolean("drain", fallback=base.drain),
            drain_limit_factor=sec.getint("drain_limit_factor",
                                          fallback=base.drain_limit_factor),
            debug_invariants=sec.getboolean("debug_invariants",
                                            fallback=base.debug_invariants),
        )
        if "pin_signal" in sec:
            kwargs["pin_signal"] = sec.getint("pin_signal")
        if "static_partition" in sec:
            kwargs["static_partition"] = sec.get("static_partition")
    if parser.has_section("topology"):
        sec = parser["topology"]
        kwargs.update(width=sec.getint("width", fallback=base.width),
                      height=sec.getint("height", fallback=base.height),
                      placement=sec.get("placement", base.placement))
    if parser.has_section("router"):
        sec = parser["router"]
        kwargs.update(
            vcs_per_port=sec.getint("vcs_per_port", fallback=base.vcs_per_port),
            buffer_depth=sec.getint("buffer_depth", fallback=base.buffer_depth),
            pipeline_depth=sec.getint("pipeline_depth",
                                      fallback=base.pipeline_depth))
    if parser.has_section("traffic.cpu"):
        kwargs["cpu_traffic"] = _traffic_from_section(
            parser["traffic.cpu"], TrafficClass.CPU, base.cpu_traffic)
    if parser.has_section("traffic.gpu"):
        kwargs["gpu_traffic"] = _traffic_from_section(
            parser["traffic.gpu"], TrafficClass.GPU, base.gpu_traffic)
    if parser.has_section("mc"):
        sec = parser["mc"]
        kwargs.update(
            queue_capacity=sec.getint("queue_capacity",
                                      fallback=base.queue_capacity),
            service_latency=sec.getint("service_latency",
                                       fallback=base.service_latency))
    if parser.has_section("link"):
        sec = parser["link"]
        kwargs.update(
            channel_bytes=sec.getint("channel_bytes",
                                     fallback=base.channel_bytes),
            header_bytes=sec.getint("header_bytes",
                                    fallback=base.header_bytes))
        if "request_flits" in sec:
            kwargs["request_flits"] = sec.getint("request_flits")
        if "reply_flits" in sec:
            kwargs["reply_flits"] = sec.getint("reply_flits")
    if parser.has_section("kalman"):
        sec = parser["kalman"]
        kwargs.update(
            kalman_a=sec.getfloat("a", fallback=base.kalman_a),
            kalman_q=sec.getfloat("q", fallback=base.kalman_q),
            kalman_r=sec.getfloat("r", fallback=base.kalman_r),
            kalman_x0=sec.getfloat("x0", fallback=base.kalman_x0),
            kalman_p0=sec.getfloat("p0", fallback=base.kalman_p0))
        if "h" in sec:
            kwargs["kalman_h"] = tuple(float(x)
                                       for x in sec.get("h").split(","))
    if parser.has_section("policy"):
        sec = parser["policy"]
        base_p = base.policy
        kwargs["policy"] = PolicyParams(
            epoch_len=sec.getint("epoch_len", fallback=base_p.epoch_len),
            warmup_cycles=sec.getint("warmup_cycles",
                                     fallback=base_p.warmup_cycles),
            hold_min_cycles=sec.getint("hold_min_cycles",
                                       fallback=base_p.hold_min_cycles),
            revert_after_cycles=sec.getint("revert_after_cycles",
                                           fallback=base_p.revert_after_cycles))
    return ScenarioConfig(**kwargs)
