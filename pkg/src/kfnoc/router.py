"""Virtual-channel wormhole router with credit-based flow control.

Every router runs a four-stage pipeline, one cycle per stage:

    RC  route compute      head flit at an idle VC picks an output port
    VA  VC allocation      the packet claims a downstream virtual channel
    SA  switch allocation  one flit per input port competes per output
    ST  switch traversal   the granted flit crosses the crossbar

Stages are evaluated in reverse order inside a cycle (ST, SA, VA, RC) so
that a flit advances at most one stage per cycle.  All arbitration state
lives in explicit pointers that move one past the last grantee, which
gives round-robin fairness without hidden tie-breaking.

Buffer space is tracked with credits: a flit may only be granted the
switch when the downstream VC has a free slot, and the credit travels
back one cycle after the slot frees.  Ejection (the local output) has no
credit limit; instead the caller gates it, e.g. while a memory
controller queue is full.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum, auto
from typing import Callable

from .topology import N_PORTS, NodeId, Port, xy_route
from .traffic import MsgType, TrafficClass


class FlitKind(Enum):
    HEAD = auto()
    BODY = auto()
    TAIL = auto()
    HEAD_TAIL = auto()


@dataclass
class Flit:
    packet_id: int
    seq: int
    length: int
    traffic_class: TrafficClass
    msg: MsgType
    src: NodeId
    dest: NodeId
    inject_cycle: int

    @property
    def kind(self) -> FlitKind:
        if self.length == 1:
            return FlitKind.HEAD_TAIL
        if self.seq == 0:
            return FlitKind.HEAD
        if self.seq == self.length - 1:
            return FlitKind.TAIL
        return FlitKind.BODY

    @property
    def is_head(self) -> bool:
        return self.seq == 0

    @property
    def is_tail(self) -> bool:
        return self.seq == self.length - 1


class VcState(IntEnum):
    IDLE = 0      # no packet, or next packet's head not yet routed
    ROUTING = 1   # output port chosen, waiting for a downstream VC
    ACTIVE = 2    # downstream VC held until the tail leaves


@dataclass
class VirtualChannel:
    index: int
    state: VcState = VcState.IDLE
    out_port: Port | None = None
    out_vc: int = -1
    buffer: deque = field(default_factory=deque)

    def occupancy(self) -> int:
        return len(self.buffer)

    def front(self) -> Flit | None:
        return self.buffer[0] if self.buffer else None


@dataclass(frozen=True)
class VcPartition:
    """Disjoint VC sets reserved per traffic class on every link."""

    gpu_vcs: frozenset
    cpu_vcs: frozenset

    def __post_init__(self) -> None:
        if not self.gpu_vcs or not self.cpu_vcs:
            raise ValueError("both classes need at least one VC")
        if self.gpu_vcs & self.cpu_vcs:
            raise ValueError("VC partition sets must be disjoint")
        if any(v < 0 for v in self.gpu_vcs | self.cpu_vcs):
            raise ValueError("VC indices must be non-negative")

    def validate_for(self, vcs_per_port: int) -> None:
        if max(self.gpu_vcs | self.cpu_vcs) >= vcs_per_port:
            raise ValueError("VC partition references a VC index out of range")

    def allowed(self, traffic_class: TrafficClass) -> frozenset:
        return self.gpu_vcs if traffic_class == TrafficClass.GPU else self.cpu_vcs


class ArbMode(IntEnum):
    ROUND_ROBIN = 0
    PATTERN = 1


class PatternSlot(IntEnum):
    CPU = 0
    GPU = 1
    ANY = 2


@dataclass(frozen=True)
class SwitchPolicy:
    """Network-wide switch arbitration policy."""

    mode: ArbMode = ArbMode.ROUND_ROBIN
    pattern: tuple = ()

    def __post_init__(self) -> None:
        if self.mode == ArbMode.PATTERN and not self.pattern:
            raise ValueError("pattern arbitration needs a non-empty pattern")


ROUND_ROBIN_POLICY = SwitchPolicy(mode=ArbMode.ROUND_ROBIN)
GPU_PREFERRED_POLICY = SwitchPolicy(
    mode=ArbMode.PATTERN,
    pattern=(PatternSlot.GPU, PatternSlot.GPU, PatternSlot.CPU))


@dataclass(frozen=True)
class RouterConfig:
    vcs_per_port: int = 4
    buffer_depth: int = 4
    pipeline_depth: int = 4

    def __post_init__(self) -> None:
        if self.vcs_per_port < 2:
            raise ValueError("need at least 2 VCs per port")
        if self.buffer_depth < 1:
            raise ValueError("buffer depth must be at least 1 flit")
        if self.pipeline_depth != 4:
            # The stage structure is fixed; the knob exists so configs
            # that assume a different depth fail loudly.
            raise ValueError("pipeline depth is fixed at 4 (RC, VA, SA, ST)")


@dataclass(frozen=True)
class VaGrant:
    input_port: Port
    input_vc: int
    out_port: Port
    out_vc: int


@dataclass
class SwitchResult:
    # out_port -> (input_port, input_vc) latched for next cycle's ST
    grants: dict
    # eject-bound VCs with a flit ready that did not leave this cycle
    blocked_ejects: list


@dataclass
class TraversalResult:
    # (out_port, out_vc, flit) triples leaving the router this cycle
    emissions: list
    # (input_port, vc) slots freed, to be credited upstream
    credits_freed: list


def _always(_flit: Flit) -> bool:
    return True


class Router:
    """One router instance: five ports, ``vcs_per_port`` VCs each.

    The router is traffic-agnostic: memory-queue gating and stall
    accounting are injected through the ``eject_ok`` callback and the
    ``blocked_ejects`` result.
    """

    def __init__(self, node: NodeId, config: RouterConfig) -> None:
        self.node = node
        self.config = config
        v = config.vcs_per_port
        self.vcs = [[VirtualChannel(i) for i in range(v)] for _ in range(N_PORTS)]
        # Free-slot mirror of each downstream input VC (EJECT row unused).
        self.credits = [[config.buffer_depth] * v for _ in range(N_PORTS)]
        # Which local input VC holds each downstream VC; -1 when free.
        self.out_owner = [[-1] * v for _ in range(N_PORTS)]
        self.nom_ptr = [0] * N_PORTS
        self.out_rr_ptr = [0] * N_PORTS
        self.pattern_cursor = [0] * N_PORTS
        self.class_ptr = [[0, 0] for _ in range(N_PORTS)]
        self.va_ptr = [[0, 0] for _ in range(N_PORTS)]
        self.sa_latch: list = [None] * N_PORTS
        self.flit_count = 0

    # ------------------------------------------------------------------
    # buffer interface (used by the network fabric and the NI)

    def accept(self, port: Port, vc_index: int, flit: Flit) -> None:
        vc = self.vcs[port][vc_index]
        assert vc.occupancy() < self.config.buffer_depth, "credit protocol violated"
        vc.buffer.append(flit)
        self.flit_count += 1

    def credit_return(self, out_port: Port, vc_index: int) -> None:
        self.credits[out_port][vc_index] += 1
        assert self.credits[out_port][vc_index] <= self.config.buffer_depth

    def busy(self) -> bool:
        return self.flit_count > 0 or any(g is not None for g in self.sa_latch)

    # ------------------------------------------------------------------
    # pipeline stages

    def route_compute(self) -> None:
        """Head flits at idle VCs pick their output port (XY)."""
        for port_vcs in self.vcs:
            for vc in port_vcs:
                if vc.state != VcState.IDLE or not vc.buffer:
                    continue
                head = vc.buffer[0]
                assert head.is_head, "wormhole ordering violated"
                vc.out_port = xy_route(self.node, head.dest)
                vc.state = VcState.ROUTING

    def vc_allocate(self, partition: VcPartition | None) -> list:
        """Routing VCs claim a free downstream VC.

        Eject-bound packets need no downstream VC and become active
        immediately (still costing the VA cycle).  For link ports,
        requests are matched to free VCs in ascending VC order with a
        per-(port, class-domain) pointer over the 5*V requester slots;
        the pointer moves one past the last slot granted.  Under a
        partition each class may only claim its own VC subset; without
        one, all requesters share domain 0.
        """
        v = self.config.vcs_per_port
        grants: list = []
        for port_vcs in self.vcs:
            for vc in port_vcs:
                if vc.state == VcState.ROUTING and vc.out_port == Port.EJECT:
                    vc.state = VcState.ACTIVE
                    vc.out_vc = -1
        for out_port in (Port.EAST, Port.WEST, Port.NORTH, Port.SOUTH):
            domains = ((0, None),) if partition is None else (
                (0, partition.cpu_vcs), (1, partition.gpu_vcs))
            for dom, allowed in domains:
                free = [ovc for ovc in range(v)
                        if (allowed is None or ovc in allowed)
                        and self.out_owner[out_port][ovc] == -1]
                if not free:
                    continue
                free_iter = iter(free)
                base = self.va_ptr[out_port][dom]
                last_granted = -1
                for k in range(N_PORTS * v):
                    slot = (base + k) % (N_PORTS * v)
                    ip, iv = divmod(slot, v)
                    vc = self.vcs[ip][iv]
                    if vc.state != VcState.ROUTING or vc.out_port != out_port:
                        continue
                    if partition is not None and \
                            vc.buffer[0].traffic_class != dom:
                        continue
                    ovc = next(free_iter, None)
                    if ovc is None:
                        break
                    vc.state = VcState.ACTIVE
                    vc.out_vc = ovc
                    self.out_owner[out_port][ovc] = slot
                    grants.append(VaGrant(Port(ip), iv, out_port, ovc))
                    last_granted = slot
                if last_granted >= 0:
                    self.va_ptr[out_port][dom] = (last_granted + 1) % (N_PORTS * v)
        return grants

    def _nominate(self, eject_ok: Callable[[Flit], bool]) -> list:
        """Pick at most one sendable VC per input port (pointer scan)."""
        v = self.config.vcs_per_port
        noms = [-1] * N_PORTS
        for ip in range(N_PORTS):
            base = self.nom_ptr[ip]
            for k in range(v):
                iv = (base + k) % v
                vc = self.vcs[ip][iv]
                if vc.state != VcState.ACTIVE or not vc.buffer:
                    continue
                if vc.out_port == Port.EJECT:
                    if not eject_ok(vc.buffer[0]):
                        continue
                elif self.credits[vc.out_port][vc.out_vc] <= 0:
                    continue
                noms[ip] = iv
                break
        return noms

    def switch_allocate(self, policy: SwitchPolicy,
                        eject_ok: Callable[[Flit], bool] = _always
                        ) -> SwitchResult:
        """One grant per output port among the nominated input ports.

        Round-robin mode scans input ports from a per-output pointer.
        Pattern mode walks a class sequence (e.g. GPU, GPU, CPU): the
        cursor's class wins via a per-class pointer; when that class has
        no requester the other class is served instead (the switch never
        idles while work is queued) and the cursor still advances, so a
        lone class streams at full rate.

        Granting reserves the downstream credit immediately; the
        matching latch is traversed next cycle.
        """
        noms = self._nominate(eject_ok)
        grants: dict = {}
        for out_port in Port:
            requesters = [ip for ip in range(N_PORTS)
                          if noms[ip] >= 0
                          and self.vcs[ip][noms[ip]].out_port == out_port]
            if not requesters:
                continue
            if policy.mode == ArbMode.ROUND_ROBIN:
                winner = self._scan_ports(requesters, self.out_rr_ptr[out_port])
                self.out_rr_ptr[out_port] = (winner + 1) % N_PORTS
            else:
                winner = self._pattern_pick(out_port, requesters, noms, policy)
            iv = noms[winner]
            vc = self.vcs[winner][iv]
            if out_port != Port.EJECT:
                self.credits[out_port][vc.out_vc] -= 1
                assert self.credits[out_port][vc.out_vc] >= 0
            self.sa_latch[out_port] = (winner, iv)
            self.nom_ptr[winner] = (iv + 1) % self.config.vcs_per_port
            grants[out_port] = (Port(winner), iv)
        blocked = self._blocked_ejects(grants)
        return SwitchResult(grants=grants, blocked_ejects=blocked)

    @staticmethod
    def _scan_ports(requesters: list, base: int) -> int:
        for k in range(N_PORTS):
            ip = (base + k) % N_PORTS
            if ip in requesters:
                return ip
        raise AssertionError("requesters list was empty")

    def _pattern_pick(self, out_port: Port, requesters: list, noms: list,
                      policy: SwitchPolicy) -> int:
        slot = policy.pattern[self.pattern_cursor[out_port] % len(policy.pattern)]
        classes = {int(self.vcs[ip][noms[ip]].buffer[0].traffic_class): True
                   for ip in requesters}
        want = int(slot)
        if slot == PatternSlot.ANY or want not in classes:
            if slot != PatternSlot.ANY and (1 - want) in classes:
                want = 1 - want
            else:
                want = -1  # class-agnostic pick
        if want < 0:
            winner = self._scan_ports(requesters, self.out_rr_ptr[out_port])
            self.out_rr_ptr[out_port] = (winner + 1) % N_PORTS
        else:
            pool = [ip for ip in requesters
                    if int(self.vcs[ip][noms[ip]].buffer[0].traffic_class) == want]
            winner = self._scan_ports(pool, self.class_ptr[out_port][want])
            self.class_ptr[out_port][want] = (winner + 1) % N_PORTS
        self.pattern_cursor[out_port] = \
            (self.pattern_cursor[out_port] + 1) % len(policy.pattern)
        return winner

    def _blocked_ejects(self, grants: dict) -> list:
        granted = grants.get(Port.EJECT)
        blocked = []
        for ip in range(N_PORTS):
            for iv, vc in enumerate(self.vcs[ip]):
                if vc.state != VcState.ACTIVE or vc.out_port != Port.EJECT \
                        or not vc.buffer:
                    continue
                if granted == (ip, iv):
                    continue
                blocked.append((Port(ip), iv, vc.buffer[0]))
        return blocked

    def switch_traverse(self) -> TraversalResult:
        """Execute last cycle's latches: move flits, free slots.

        A tail leaving releases the downstream VC and returns its input
        VC to idle; the freed downstream VC may be re-allocated in the
        same cycle's VA.
        """
        emissions = []
        credits_freed = []
        for out_port in Port:
            latch = self.sa_latch[out_port]
            if latch is None:
                continue
            self.sa_latch[out_port] = None
            ip, iv = latch
            vc = self.vcs[ip][iv]
            flit = vc.buffer.popleft()
            self.flit_count -= 1
            emissions.append((out_port, vc.out_vc, flit))
            if ip != Port.EJECT:
                credits_freed.append((Port(ip), iv))
            if flit.is_tail:
                if out_port != Port.EJECT:
                    self.out_owner[out_port][vc.out_vc] = -1
                vc.state = VcState.IDLE
                vc.out_port = None
                vc.out_vc = -1
        return TraversalResult(emissions, credits_freed)


def router_tick(router: Router, partition: VcPartition | None,
                policy: SwitchPolicy,
                eject_ok: Callable[[Flit], bool] = _always
                ) -> tuple[TraversalResult, SwitchResult]:
    """Advance one router a full cycle in isolation.

    Runs ST, SA, VA, RC in that order, which is exactly what the network
    fabric does globally; useful for driving a single router in tests.
    """
    traversal = router.switch_traverse()
    switch = router.switch_allocate(policy, eject_ok)
    router.vc_allocate(partition)
    router.route_compute()
    return traversal, switch
