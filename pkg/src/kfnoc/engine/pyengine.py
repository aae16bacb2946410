"""Reference network engine.

Composes the contract-level router model into a full mesh with network
interfaces, memory controllers and link mailboxes.  One call to
``step()`` advances every router one cycle through a fixed global phase
order:

    1. deliver last cycle's link flits and credits (mailbox flush)
    2. switch traversal at every router (executes latches from cycle-1)
    3. memory controller service
    4. switch allocation (+ ejection gating and stall accounting)
    5. VC allocation
    6. route compute
    7. traffic generation
    8. network-interface injection (at most one flit per NI per cycle)

Routers are visited subnet-major in row-major node order in every
phase.  All engine state is integer-valued; the compiled kernel mirrors
this loop exactly and must stay in lockstep (see test_engine_equivalence).
"""
from __future__ import annotations

from collections import deque

from ..rng import MASK64, mix64, rng_u64
from ..router import (ArbMode, Flit, PatternSlot, Router, RouterConfig,
                      SwitchPolicy, VcPartition)
from ..topology import NodeId, Port
from ..traffic import McState, MsgType, Packet, TrafficClass
from .common import ROLE_MC, EngineSpec

_OPP = (1, 0, 3, 2)


class _Ni:
    __slots__ = ("queues", "active", "last_class")

    def __init__(self) -> None:
        self.queues = (deque(), deque())
        self.active = None  # [packet, next_seq, vc]
        self.last_class = 1  # so the first tie prefers CPU


class PyEngine:
    name = "py"

    def __init__(self, spec: EngineSpec) -> None:
        self.spec = spec
        n_nodes = spec.n_nodes
        cfg = RouterConfig(vcs_per_port=spec.vcs, buffer_depth=spec.buf)
        self.node_ids = [NodeId(i % spec.width, i // spec.width)
                         for i in range(n_nodes)]
        self.routers = [[Router(self.node_ids[n], cfg) for n in range(n_nodes)]
                        for _ in range(spec.subnets)]
        # nb[n][p]: neighbour node through mesh port p, or -1 at the edge
        self.nb = []
        for n in range(n_nodes):
            x, y = self.node_ids[n]
            self.nb.append((
                n + 1 if x + 1 < spec.width else -1,
                n - 1 if x > 0 else -1,
                n - spec.width if y > 0 else -1,
                n + spec.width if y + 1 < spec.height else -1,
            ))
        self.mc_ids = list(spec.mc_ids)
        self.mc = {n: McState(spec.qmc, spec.svc_lat) for n in self.mc_ids}
        self.gates = [self._make_gate(n) for n in range(n_nodes)]
        self.ni = [[_Ni() for _ in range(n_nodes)] for _ in range(spec.subnets)]
        self.gen_nodes = [(n, r) for n, r in enumerate(spec.roles)
                          if r != ROLE_MC]
        self.flit_mail = []    # (subnet, node, in_port, vc, flit)
        self.credit_mail = []  # (subnet, node, out_port, vc)
        self.active_routers = set()
        self.ni_active = set()
        self.pkt_table = []
        self.cycle = 0
        self.gen_enabled = True
        self.phase_idx = [0, 0]
        self.set_policy(spec.gpu_mask, spec.cpu_mask, spec.partition_enabled,
                        spec.arb_mode, spec.pattern)
        # statistics (all integers)
        self.created = [[0, 0], [0, 0]]    # [class][msg]
        self.delivered = [[0, 0], [0, 0]]
        self.created_flits = 0
        self.delivered_flits = 0
        self.lat_sum = [0, 0]
        self.lat_cnt = [0, 0]
        self.post_reply = [0, 0]
        self.ep_push = [0, 0]
        self.ep_shader = [0, 0]
        self.ep_dram = [0, 0]
        self.ep_reply = [0, 0]
        self.ni_pending_flits = 0

    def _make_gate(self, n):
        if self.spec.roles[n] != ROLE_MC:
            return None

        def gate(flit, node=n, engine=self):
            if flit.msg == MsgType.REQUEST and flit.seq == 0:
                return engine.mc[node].has_capacity()
            return True
        return gate

    # ------------------------------------------------------------------
    # control surface

    def set_policy(self, gpu_mask: int, cpu_mask: int, enabled: bool,
                   arb_mode: int, pattern: tuple) -> None:
        v = self.spec.vcs
        if enabled:
            self.partition = VcPartition(
                gpu_vcs=frozenset(i for i in range(v) if gpu_mask >> i & 1),
                cpu_vcs=frozenset(i for i in range(v) if cpu_mask >> i & 1))
            self.inj_vcs = (sorted(self.partition.cpu_vcs),
                            sorted(self.partition.gpu_vcs))
        else:
            self.partition = None
            self.inj_vcs = (list(range(v)), list(range(v)))
        if arb_mode == int(ArbMode.PATTERN):
            self.policy = SwitchPolicy(mode=ArbMode.PATTERN,
                                       pattern=tuple(PatternSlot(p)
                                                     for p in pattern))
        else:
            self.policy = SwitchPolicy(mode=ArbMode.ROUND_ROBIN)

    def set_generation(self, enabled: bool) -> None:
        self.gen_enabled = enabled

    def epoch_counters(self) -> tuple:
        out = (self.ep_push[0], self.ep_shader[0], self.ep_dram[0],
               self.ep_reply[0], self.ep_push[1], self.ep_shader[1],
               self.ep_dram[1], self.ep_reply[1])
        self.ep_push = [0, 0]
        self.ep_shader = [0, 0]
        self.ep_dram = [0, 0]
        self.ep_reply = [0, 0]
        return out

    def totals(self) -> dict:
        return {
            "created_cpu_req": self.created[0][0],
            "created_gpu_req": self.created[1][0],
            "created_cpu_reply": self.created[0][1],
            "created_gpu_reply": self.created[1][1],
            "delivered_cpu_req": self.delivered[0][0],
            "delivered_gpu_req": self.delivered[1][0],
            "delivered_cpu_reply": self.delivered[0][1],
            "delivered_gpu_reply": self.delivered[1][1],
            "created_flits": self.created_flits,
            "delivered_flits": self.delivered_flits,
            "lat_sum_cpu": self.lat_sum[0],
            "lat_cnt_cpu": self.lat_cnt[0],
            "lat_sum_gpu": self.lat_sum[1],
            "lat_cnt_gpu": self.lat_cnt[1],
            "post_reply_cpu": self.post_reply[0],
            "post_reply_gpu": self.post_reply[1],
        }

    def is_quiescent(self) -> bool:
        created = sum(self.created[0]) + sum(self.created[1])
        delivered = sum(self.delivered[0]) + sum(self.delivered[1])
        return created == delivered and all(m.idle() for m in self.mc.values())

    # ------------------------------------------------------------------
    # cycle loop

    def run_cycles(self, n: int) -> None:
        for _ in range(n):
            self.step()

    def step(self) -> None:
        spec = self.spec
        c = self.cycle

        for s, n, p, v, flit in self.flit_mail:
            self.routers[s][n].accept(p, v, flit)
            self.active_routers.add((s, n))
        self.flit_mail.clear()
        for s, n, p, v in self.credit_mail:
            self.routers[s][n].credit_return(p, v)
        self.credit_mail.clear()

        order = sorted(self.active_routers)

        for s, n in order:
            tr = self.routers[s][n].switch_traverse()
            for out_port, out_vc, flit in tr.emissions:
                if out_port == Port.EJECT:
                    self._deliver(n, flit, c)
                else:
                    d = self.nb[n][out_port]
                    self.flit_mail.append((s, d, _OPP[out_port], out_vc, flit))
            for ip, iv in tr.credits_freed:
                u = self.nb[n][ip]
                self.credit_mail.append((s, u, _OPP[ip], iv))

        for n in self.mc_ids:
            done = self.mc[n].service_tick(c)
            if done is not None:
                self._create_reply(n, done, c)

        for s, n in order:
            router = self.routers[s][n]
            if router.flit_count == 0:
                continue
            res = router.switch_allocate(self.policy, self.gates[n] or _pass)
            eject = res.grants.get(Port.EJECT)
            if eject is not None:
                flit = router.vcs[eject[0]][eject[1]].buffer[0]
                if flit.msg == MsgType.REQUEST and flit.seq == 0:
                    self.mc[n].reserve()
            for _ip, _iv, flit in res.blocked_ejects:
                cls = int(flit.traffic_class)
                if flit.msg == MsgType.REPLY:
                    self.ep_shader[cls] += 1
                elif flit.seq == 0 and not self.mc[n].has_capacity():
                    self.ep_dram[cls] += 1

        for s, n in order:
            router = self.routers[s][n]
            if router.flit_count:
                router.vc_allocate(self.partition)
        for s, n in order:
            router = self.routers[s][n]
            if router.flit_count:
                router.route_compute()

        for cls in (0, 1):
            starts = spec.phase_starts[cls]
            while self.phase_idx[cls] + 1 < len(starts) \
                    and starts[self.phase_idx[cls] + 1] <= c:
                self.phase_idx[cls] += 1
        if self.gen_enabled:
            self._generate(c)
        self._inject(c)

        for key in order:
            if self.routers[key[0]][key[1]].flit_count == 0:
                self.active_routers.discard(key)

        if spec.debug_invariants:
            self._check_invariants()
        self.cycle = c + 1

    # ------------------------------------------------------------------

    def _generate(self, c: int) -> None:
        spec = self.spec
        thr = [spec.phase_thr[cls][self.phase_idx[cls]] for cls in (0, 1)]
        alw = [spec.phase_always[cls][self.phase_idx[cls]] for cls in (0, 1)]
        if not (thr[0] or alw[0] or thr[1] or alw[1]):
            return
        seed = spec.seed
        n_mc = len(self.mc_ids)
        for n, cls in self.gen_nodes:
            if not alw[cls]:
                t = thr[cls]
                if t == 0 or rng_u64(seed, n, c, 0) >= t:
                    continue
            mc_n = self.mc_ids[rng_u64(seed, n, c, 1) % n_mc]
            pkt = Packet(TrafficClass(cls), MsgType.REQUEST, self.node_ids[n],
                         self.node_ids[mc_n], spec.req_flits[cls], c,
                         len(self.pkt_table))
            self.pkt_table.append(pkt)
            self.created[cls][0] += 1
            self.created_flits += pkt.length
            self.ep_push[cls] += 1
            s = spec.req_subnet[cls]
            self.ni[s][n].queues[cls].append(pkt)
            self.ni_active.add((s, n))
            self.ni_pending_flits += pkt.length

    def _create_reply(self, n: int, req_id: int, c: int) -> None:
        req = self.pkt_table[req_id]
        cls = int(req.traffic_class)
        pkt = Packet(req.traffic_class, MsgType.REPLY, self.node_ids[n],
                     req.src, self.spec.reply_flits[cls], c,
                     len(self.pkt_table))
        self.pkt_table.append(pkt)
        self.created[cls][1] += 1
        self.created_flits += pkt.length
        s = self.spec.reply_subnet[cls]
        self.ni[s][n].queues[cls].append(pkt)
        self.ni_active.add((s, n))
        self.ni_pending_flits += pkt.length

    def _inject(self, c: int) -> None:
        spec = self.spec
        for key in sorted(self.ni_active):
            s, n = key
            ni = self.ni[s][n]
            router = self.routers[s][n]
            if ni.active is None:
                pref = 1 - ni.last_class
                for cls in (pref, 1 - pref):
                    q = ni.queues[cls]
                    if not q:
                        continue
                    vcs = router.vcs[Port.EJECT]
                    v = next((vv for vv in self.inj_vcs[cls]
                              if vcs[vv].occupancy() < spec.buf), None)
                    if v is None:
                        continue
                    ni.active = [q.popleft(), 0, v]
                    ni.last_class = cls
                    break
            if ni.active is not None:
                pkt, seq, v = ni.active
                vc = router.vcs[Port.EJECT][v]
                if vc.occupancy() < spec.buf:
                    router.accept(Port.EJECT, v,
                                  Flit(pkt.pkt_id, seq, pkt.length,
                                       pkt.traffic_class, pkt.msg, pkt.src,
                                       pkt.dest, pkt.inject_cycle))
                    self.active_routers.add(key)
                    self.ni_pending_flits -= 1
                    if seq + 1 == pkt.length:
                        ni.active = None
                    else:
                        ni.active[1] = seq + 1
            if ni.active is None and not ni.queues[0] and not ni.queues[1]:
                self.ni_active.discard(key)

    def _deliver(self, n: int, flit: Flit, c: int) -> None:
        spec = self.spec
        cls = int(flit.traffic_class)
        self.delivered_flits += 1
        if flit.msg == MsgType.REPLY:
            self.ep_reply[cls] += 1
            if c >= spec.warmup_cutoff:
                self.post_reply[cls] += 1
            if spec.debug_invariants:
                assert spec.roles[n] != ROLE_MC
        else:
            if spec.debug_invariants:
                assert spec.roles[n] == ROLE_MC
            if flit.seq == 0:
                self.mc[n].enqueue(flit.packet_id)
        if flit.seq == flit.length - 1:
            self.delivered[cls][int(flit.msg)] += 1
            if flit.inject_cycle >= spec.warmup_cutoff:
                self.lat_sum[cls] += c - flit.inject_cycle
                self.lat_cnt[cls] += 1

    # ------------------------------------------------------------------
    # verification helpers

    def _check_invariants(self) -> None:
        spec = self.spec
        buffered = 0
        for s in range(spec.subnets):
            for n in range(spec.n_nodes):
                buffered += self.routers[s][n].flit_count
        assert self.created_flits == self.delivered_flits + buffered \
            + len(self.flit_mail) + self.ni_pending_flits, \
            "flit conservation violated"

        flit_inflight = {}
        for s, n, p, v, _f in self.flit_mail:
            flit_inflight[(s, n, p, v)] = flit_inflight.get((s, n, p, v), 0) + 1
        credit_inflight = {}
        for key in self.credit_mail:
            credit_inflight[key] = credit_inflight.get(key, 0) + 1
        for s in range(spec.subnets):
            for n in range(spec.n_nodes):
                up = self.routers[s][n]
                for p in range(4):
                    d = self.nb[n][p]
                    if d < 0:
                        continue
                    down = self.routers[s][d]
                    latch = up.sa_latch[p]
                    latched_vc = -1
                    if latch is not None:
                        latched_vc = up.vcs[latch[0]][latch[1]].out_vc
                    for v in range(spec.vcs):
                        total = up.credits[p][v] \
                            + down.vcs[_OPP[p]][v].occupancy() \
                            + flit_inflight.get((s, d, _OPP[p], v), 0) \
                            + credit_inflight.get((s, n, p, v), 0) \
                            + (1 if latched_vc == v else 0)
                        assert total == spec.buf, (
                            f"credit conservation violated at subnet {s} "
                            f"node {n} port {p} vc {v}: {total}")

    def state_digest(self) -> int:
        h = 0

        def fold(x: int) -> None:
            nonlocal h
            h = mix64(h ^ (x & MASK64))

        fold(self.cycle)
        spec = self.spec
        for s in range(spec.subnets):
            for n in range(spec.n_nodes):
                r = self.routers[s][n]
                for p in range(5):
                    for vc in r.vcs[p]:
                        fold(int(vc.state))
                        fold(-1 if vc.out_port is None else int(vc.out_port))
                        fold(vc.out_vc)
                        fold(vc.occupancy())
                        for f in vc.buffer:
                            fold(f.packet_id)
                            fold(f.seq)
                    fold_list = (r.credits[p], r.out_owner[p])
                    for arr in fold_list:
                        for x in arr:
                            fold(x)
                    fold(r.nom_ptr[p])
                    fold(r.out_rr_ptr[p])
                    fold(r.pattern_cursor[p])
                    fold(r.class_ptr[p][0])
                    fold(r.class_ptr[p][1])
                    fold(r.va_ptr[p][0])
                    fold(r.va_ptr[p][1])
                    latch = r.sa_latch[p]
                    fold(-1 if latch is None else latch[0] * spec.vcs + latch[1])
        for s in range(spec.subnets):
            for n in range(spec.n_nodes):
                ni = self.ni[s][n]
                for q in ni.queues:
                    fold(len(q))
                    for pkt in q:
                        fold(pkt.pkt_id)
                if ni.active is None:
                    fold(-1)
                    fold(-1)
                    fold(-1)
                else:
                    fold(ni.active[0].pkt_id)
                    fold(ni.active[1])
                    fold(ni.active[2])
                fold(ni.last_class)
        for n in self.mc_ids:
            mc = self.mc[n]
            fold(mc.occupancy)
            fold(mc.pending_admits)
            fold(mc.in_service)
            fold(mc.busy_until)
            fold(len(mc.queue))
            for pid in mc.queue:
                fold(pid)
        for pair in self.created + self.delivered:
            fold(pair[0])
            fold(pair[1])
        for x in (self.created_flits, self.delivered_flits,
                  self.lat_sum[0], self.lat_cnt[0],
                  self.lat_sum[1], self.lat_cnt[1],
                  self.post_reply[0], self.post_reply[1]):
            fold(x)
        for arr in (self.ep_push, self.ep_shader, self.ep_dram, self.ep_reply):
            fold(arr[0])
            fold(arr[1])
        fold(self.phase_idx[0])
        fold(self.phase_idx[1])
        fold(1 if self.gen_enabled else 0)
        for s, n, p, v, f in self.flit_mail:
            for x in (s, n, p, v, f.packet_id, f.seq):
                fold(x)
        for s, n, p, v in self.credit_mail:
            for x in (s, n, p, v):
                fold(x)
        return h


def _pass(_flit) -> bool:
    return True
