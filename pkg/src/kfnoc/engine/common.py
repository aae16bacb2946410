"""Engine-neutral compiled scenario description.

Both the pure-Python engine and the compiled kernel consume this flat,
primitive-typed spec so that they can be driven identically and compared
bit for bit.  Anything float-valued (filter math, statistics) stays
outside the engines; everything in here is integers, so engine state can
never diverge through rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..topology import NodeRole, Topology
from ..traffic import TrafficProfile

# role codes match NodeRole; traffic classes: 0 CPU, 1 GPU
ROLE_CPU = int(NodeRole.CPU)
ROLE_GPU = int(NodeRole.GPU)
ROLE_MC = int(NodeRole.MC)


@dataclass(frozen=True)
class EngineSpec:
    width: int
    height: int
    subnets: int
    vcs: int
    buf: int
    roles: tuple
    seed: int
    qmc: int
    svc_lat: int
    req_flits: tuple        # flits per request packet, per class
    reply_flits: tuple      # flits per reply packet, per class
    phase_starts: tuple     # per class: tuple of phase start cycles
    phase_thr: tuple        # per class: tuple of u64 thresholds
    phase_always: tuple     # per class: tuple of 0/1 flags
    warmup_cutoff: int
    partition_enabled: bool
    gpu_mask: int
    cpu_mask: int
    arb_mode: int           # 0 round-robin, 1 pattern
    pattern: tuple          # class codes; 2 means any
    debug_invariants: bool = False

    @property
    def n_nodes(self) -> int:
        return self.width * self.height

    @property
    def mc_ids(self) -> tuple:
        return tuple(i for i, r in enumerate(self.roles) if r == ROLE_MC)

    @property
    def req_subnet(self) -> tuple:
        # requests on subnet 0 (CPU) and 2 (GPU) when split four ways
        return (0, 2) if self.subnets == 4 else (0, 0)

    @property
    def reply_subnet(self) -> tuple:
        return (1, 3) if self.subnets == 4 else (1, 1)


def build_spec(topo: Topology, seed: int, qmc: int, svc_lat: int,
               vcs: int, buf: int,
               cpu_profile: TrafficProfile, gpu_profile: TrafficProfile,
               req_flits: tuple, reply_flits: tuple,
               warmup_cutoff: int,
               partition_enabled: bool, gpu_mask: int, cpu_mask: int,
               arb_mode: int, pattern: tuple,
               debug_invariants: bool = False) -> EngineSpec:
    roles = tuple(int(topo.roles[n]) for n in topo.nodes())
    tables = []
    for prof in (cpu_profile, gpu_profile):
        rows = prof.compiled_phases()
        tables.append((tuple(r[0] for r in rows),
                       tuple(r[1] for r in rows),
                       tuple(1 if r[2] else 0 for r in rows)))
    return EngineSpec(
        width=topo.width, height=topo.height, subnets=topo.subnet_count,
        vcs=vcs, buf=buf, roles=roles, seed=seed, qmc=qmc, svc_lat=svc_lat,
        req_flits=tuple(req_flits), reply_flits=tuple(reply_flits),
        phase_starts=(tables[0][0], tables[1][0]),
        phase_thr=(tables[0][1], tables[1][1]),
        phase_always=(tables[0][2], tables[1][2]),
        warmup_cutoff=warmup_cutoff,
        partition_enabled=partition_enabled,
        gpu_mask=gpu_mask, cpu_mask=cpu_mask,
        arb_mode=arb_mode, pattern=tuple(int(p) for p in pattern),
        debug_invariants=debug_invariants,
    )


TOTAL_KEYS = (
    "created_cpu_req", "created_gpu_req", "created_cpu_reply",
    "created_gpu_reply", "delivered_cpu_req", "delivered_gpu_req",
    "delivered_cpu_reply", "delivered_gpu_reply",
    "created_flits", "delivered_flits",
    "lat_sum_cpu", "lat_cnt_cpu", "lat_sum_gpu", "lat_cnt_gpu",
    "post_reply_cpu", "post_reply_gpu",
)
