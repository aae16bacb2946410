"""Workload generation, memory-controller model and telemetry counters.

CPU and GPU clusters emit read requests towards memory controllers; each
request is answered with a (larger) reply packet after a fixed service
latency.  Injection is an independent Bernoulli draw per node and cycle,
with the per-core rate scaled by the number of cores a tile aggregates.

Telemetry is accumulated per traffic class over fixed-length epochs:

* ``icnt_push``          packets handed to the network interface,
* ``stall_icnt_shader``  cycles a reply flit ready to eject at a compute
                         node was not granted the ejection port,
* ``stall_dramfull``     cycles a request head waiting at a memory
                         controller was held because its queue was full,
* ``throughput_proxy``   reply flits delivered per cycle in the epoch.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum

from .rng import bernoulli_threshold, rng_u64
from .topology import NodeId, NodeRole


class TrafficClass(IntEnum):
    CPU = 0
    GPU = 1


class MsgType(IntEnum):
    REQUEST = 0
    REPLY = 1


@dataclass(frozen=True)
class Packet:
    traffic_class: TrafficClass
    msg: MsgType
    src: NodeId
    dest: NodeId
    length: int
    inject_cycle: int
    pkt_id: int = -1


@dataclass(frozen=True)
class Phase:
    start_cycle: int
    rate: float  # injection probability per core per cycle


@dataclass(frozen=True)
class TrafficProfile:
    """Injection schedule for one traffic class.

    ``phases`` must start at cycle 0 and be strictly ordered; the last
    phase extends to the end of the run.  A tile injects at most one
    packet per cycle even when ``cores_per_node`` pushes the effective
    rate past 1.
    """

    traffic_class: TrafficClass
    phases: tuple[Phase, ...]
    cores_per_node: int = 1
    request_payload_bytes: int = 0
    reply_payload_bytes: int = 128

    def __post_init__(self) -> None:
        if not self.phases:
            raise ValueError("traffic profile needs at least one phase")
        if self.phases[0].start_cycle != 0:
            raise ValueError("first traffic phase must start at cycle 0")
        starts = [p.start_cycle for p in self.phases]
        if sorted(set(starts)) != starts:
            raise ValueError("traffic phases must have strictly increasing starts")
        if any(p.rate < 0.0 for p in self.phases):
            raise ValueError("traffic phase rates must be non-negative")
        if self.cores_per_node < 1:
            raise ValueError("cores_per_node must be >= 1")

    def rate_at(self, cycle: int) -> float:
        """Effective per-node injection probability at ``cycle``."""
        rate = 0.0
        for p in self.phases:
            if p.start_cycle > cycle:
                break
            rate = p.rate
        return min(rate * self.cores_per_node, 1.0)

    def compiled_phases(self) -> list[tuple[int, int, bool]]:
        """Phase table as (start_cycle, u64 threshold, always) rows."""
        table = []
        for p in self.phases:
            thr, always = bernoulli_threshold(min(p.rate * self.cores_per_node, 1.0))
            table.append((p.start_cycle, thr, always))
        return table


def scaled(profile: TrafficProfile, factor: float) -> TrafficProfile:
    """Copy of ``profile`` with every phase rate multiplied by ``factor``."""
    phases = tuple(replace(p, rate=p.rate * factor) for p in profile.phases)
    return replace(profile, phases=phases)


def generate_traffic(node: NodeId, node_index: int, role: NodeRole,
                     profile: TrafficProfile, cycle: int, seed: int,
                     mc_nodes: list[NodeId],
                     request_flits: int = 1) -> list[Packet]:
    """Packets created at ``node`` on ``cycle`` (zero or one).

    Draw 0 decides whether to inject, draw 1 picks the destination MC
    uniformly.  MC tiles never generate traffic.
    """
    if role == NodeRole.MC:
        return []
    thr, always = bernoulli_threshold(profile.rate_at(cycle))
    if not always and rng_u64(seed, node_index, cycle, 0) >= thr:
        return []
    dest = mc_nodes[rng_u64(seed, node_index, cycle, 1) % len(mc_nodes)]
    return [Packet(traffic_class=TrafficClass(int(role)), msg=MsgType.REQUEST,
                   src=node, dest=dest, length=request_flits,
                   inject_cycle=cycle)]


@dataclass
class McState:
    """Single-server memory controller with a bounded request queue.

    ``occupancy`` counts queued plus in-service requests; the slot of a
    request is released only when its service completes.  Switch
    allocation reserves slots one cycle ahead of the actual enqueue via
    ``pending_admits`` so that two routers cannot admit into the same
    last slot.
    """

    queue_capacity: int
    service_latency: int
    queue: deque = field(default_factory=deque)
    occupancy: int = 0
    pending_admits: int = 0
    in_service: int = -1
    busy_until: int = -1

    def has_capacity(self) -> bool:
        return self.occupancy + self.pending_admits < self.queue_capacity

    def reserve(self) -> None:
        self.pending_admits += 1

    def enqueue(self, pkt_id: int, reserved: bool = True) -> None:
        if reserved:
            self.pending_admits -= 1
        self.occupancy += 1
        self.queue.append(pkt_id)

    def service_tick(self, cycle: int) -> int | None:
        """Advance the server one cycle; returns a completed request id.

        Completion frees the queue slot and the server may start the
        next request in the same cycle.
        """
        done = None
        if self.in_service != -1 and self.busy_until == cycle:
            done = self.in_service
            self.in_service = -1
            self.occupancy -= 1
        if self.in_service == -1 and self.queue:
            self.in_service = self.queue.popleft()
            self.busy_until = cycle + self.service_latency
        return done

    def idle(self) -> bool:
        return self.occupancy == 0 and self.pending_admits == 0


def mc_tick(mc: McState, arrivals: list[int], cycle: int) -> tuple[list[int], int]:
    """Coarse one-cycle MC step used by unit-level checks.

    Admits ``arrivals`` while slots remain (the rest are refused and
    counted), then advances the server.  Returns (completed, refused).
    """
    refused = 0
    for pkt_id in arrivals:
        if mc.occupancy < mc.queue_capacity:
            mc.enqueue(pkt_id, reserved=False)
        else:
            refused += 1
    done = mc.service_tick(cycle)
    return ([done] if done is not None else [], refused)


@dataclass
class EpochCounters:
    """Raw per-epoch accumulators, reset at every epoch boundary."""

    cpu_icnt_push: int = 0
    gpu_icnt_push: int = 0
    cpu_stall_icnt_shader: int = 0
    gpu_stall_icnt_shader: int = 0
    cpu_stall_dramfull: int = 0
    gpu_stall_dramfull: int = 0
    cpu_reply_flits: int = 0
    gpu_reply_flits: int = 0

    def reset(self) -> None:
        self.cpu_icnt_push = 0
        self.gpu_icnt_push = 0
        self.cpu_stall_icnt_shader = 0
        self.gpu_stall_icnt_shader = 0
        self.cpu_stall_dramfull = 0
        self.gpu_stall_dramfull = 0
        self.cpu_reply_flits = 0
        self.gpu_reply_flits = 0


@dataclass(frozen=True)
class EpochTelemetry:
    epoch: int
    end_cycle: int
    cpu_icnt_push: int
    cpu_stall_icnt_shader: int
    cpu_stall_dramfull: int
    cpu_throughput_proxy: float
    gpu_icnt_push: int
    gpu_stall_icnt_shader: int
    gpu_stall_dramfull: int
    gpu_throughput_proxy: float


def collect_epoch(epoch: int, end_cycle: int, counters: EpochCounters,
                  epoch_len: int) -> EpochTelemetry:
    """Freeze one epoch of counters into a telemetry record."""
    if epoch_len <= 0:
        raise ValueError("epoch_len must be positive")
    return EpochTelemetry(
        epoch=epoch,
        end_cycle=end_cycle,
        cpu_icnt_push=counters.cpu_icnt_push,
        cpu_stall_icnt_shader=counters.cpu_stall_icnt_shader,
        cpu_stall_dramfull=counters.cpu_stall_dramfull,
        cpu_throughput_proxy=counters.cpu_reply_flits / epoch_len,
        gpu_icnt_push=counters.gpu_icnt_push,
        gpu_stall_icnt_shader=counters.gpu_stall_icnt_shader,
        gpu_stall_dramfull=counters.gpu_stall_dramfull,
        gpu_throughput_proxy=counters.gpu_reply_flits / epoch_len,
    )
