# cython: language_level=3
"""Compiled network engine.

A C-level port of the reference engine: same global phase order, same
arbitration pointers, same RNG and the same state digest walk, so both
engines stay bit-identical cycle for cycle (test_engine_equivalence
holds them side by side).  All simulation state lives in flat C arrays;
Python is only touched at the control surface (policy changes, counter
reads, digest).

Index conventions, with S subnets, N nodes, P=5 ports and V VCs:

    router  r   = s*N + n
    port    rp  = r*5 + p
    vc      vci = rp*V + v
    buffer slot = vci*B + ((head + i) % B)
"""

from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport calloc, free, realloc
from libc.string cimport memset

cdef int64_t _OPP[4]
_OPP[0] = 1
_OPP[1] = 0
_OPP[2] = 3
_OPP[3] = 2

DEF ROLE_MC = 2
DEF P_EJECT = 4
DEF MSG_REQ = 0
DEF MSG_REPLY = 1

DEF ST_IDLE = 0
DEF ST_ROUTING = 1
DEF ST_ACTIVE = 2


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline uint64_t rng_u64(uint64_t seed, uint64_t node, uint64_t cycle,
                             uint64_t draw) nogil:
    cdef uint64_t h = mix64(seed + <uint64_t>0x9E3779B97F4A7C15)
    h = mix64(h ^ (node * <uint64_t>0x9E3779B185EBCA87))
    h = mix64(h ^ (cycle * <uint64_t>0xC2B2AE3D27D4EB4F))
    h = mix64(h ^ (draw * <uint64_t>0x165667B19E3779F9))
    return h


cdef int64_t* _alloc(Py_ssize_t count) except NULL:
    cdef int64_t* buf = <int64_t*>calloc(count if count > 0 else 1,
                                         sizeof(int64_t))
    if buf == NULL:
        raise MemoryError()
    return buf


cdef class NativeEngine:
    name = "native"

    cdef readonly object spec
    cdef readonly int64_t cycle

    # geometry
    cdef Py_ssize_t S, N, V, B, n_mc, n_pk_cols
    cdef int64_t width, height
    cdef uint64_t seed
    cdef int64_t qmc, svc_lat, warmup_cutoff
    cdef int debug_inv
    cdef int64_t* roles          # [N]
    cdef int64_t* nb             # [N*4] neighbour node or -1
    cdef int64_t* mc_node        # [n_mc] node ids ascending
    cdef int64_t* mc_of          # [N] mc slot or -1
    cdef int64_t req_flits[2]
    cdef int64_t reply_flits[2]
    cdef int64_t req_sub[2]
    cdef int64_t rep_sub[2]

    # traffic phase tables
    cdef int64_t* ph_start[2]
    cdef uint64_t* ph_thr[2]
    cdef int64_t* ph_alw[2]
    cdef Py_ssize_t ph_n[2]
    cdef int64_t phase_idx[2]
    cdef int gen_enabled

    # router state
    cdef int64_t* vc_state       # [S*N*5*V]
    cdef int64_t* vc_oport
    cdef int64_t* vc_ovc
    cdef int64_t* vc_head
    cdef int64_t* vc_cnt
    cdef int64_t* buf_pid        # [S*N*5*V*B]
    cdef int64_t* buf_seq
    cdef int64_t* credits        # [S*N*5*V]
    cdef int64_t* out_owner
    cdef int64_t* nom_ptr        # [S*N*5]
    cdef int64_t* out_rr
    cdef int64_t* pat_cur
    cdef int64_t* class_ptr      # [S*N*5*2]
    cdef int64_t* va_ptr
    cdef int64_t* latch          # [S*N*5], ip*V+iv or -1
    cdef int64_t* flit_count     # [S*N]

    # policy
    cdef int part_enabled
    cdef uint64_t cls_mask[2]    # allowed VCs per class (0 cpu, 1 gpu)
    cdef int arb_mode
    cdef int64_t* pattern
    cdef Py_ssize_t pattern_len

    # link mailboxes
    cdef int64_t* fm              # [cap*6]: s, n, p, v, pid, seq
    cdef Py_ssize_t fm_len, fm_cap
    cdef int64_t* cm              # [cap*4]: s, n, p, v
    cdef Py_ssize_t cm_len, cm_cap

    # network interfaces, one per (subnet, node)
    cdef int64_t** niq            # [S*N*2] ring buffers of packet ids
    cdef int64_t* niq_cap
    cdef int64_t* niq_head
    cdef int64_t* niq_len
    cdef int64_t* nia_pid         # active packet (-1 none)
    cdef int64_t* nia_seq
    cdef int64_t* nia_vc
    cdef int64_t* ni_last         # last started class

    # memory controllers
    cdef int64_t* mcq             # [n_mc*qmc] ring of packet ids
    cdef int64_t* mcq_head
    cdef int64_t* mcq_len
    cdef int64_t* mc_occ
    cdef int64_t* mc_pend
    cdef int64_t* mc_insrv
    cdef int64_t* mc_busy

    # packet table columns
    cdef int64_t* pk_cls
    cdef int64_t* pk_msg
    cdef int64_t* pk_src
    cdef int64_t* pk_dest
    cdef int64_t* pk_len
    cdef int64_t* pk_inject
    cdef Py_ssize_t pk_n, pk_cap

    # statistics
    cdef int64_t cr[4]            # created [class*2 + msg]
    cdef int64_t dl[4]
    cdef int64_t created_flits, delivered_flits, ni_pending_flits
    cdef int64_t lat_sum[2]
    cdef int64_t lat_cnt[2]
    cdef int64_t post_reply[2]
    cdef int64_t ep_push[2]
    cdef int64_t ep_shader[2]
    cdef int64_t ep_dram[2]
    cdef int64_t ep_reply[2]

    # invariant-check scratch
    cdef int64_t* infl_f
    cdef int64_t* infl_c
    cdef int64_t* va_free

    def __cinit__(self, object spec):
        cdef Py_ssize_t i, n, k, cls
        self.spec = spec
        self.S = spec.subnets
        self.N = spec.n_nodes
        self.V = spec.vcs
        self.B = spec.buf
        if self.V > 32:
            raise ValueError("compiled engine supports at most 32 VCs")
        self.width = spec.width
        self.height = spec.height
        self.seed = spec.seed
        self.qmc = spec.qmc
        self.svc_lat = spec.svc_lat
        self.warmup_cutoff = spec.warmup_cutoff
        self.debug_inv = 1 if spec.debug_invariants else 0
        self.cycle = 0
        self.gen_enabled = 1

        self.roles = _alloc(self.N)
        for i, r in enumerate(spec.roles):
            self.roles[i] = r
        self.nb = _alloc(self.N * 4)
        for n in range(self.N):
            x = n % self.width
            y = n // self.width
            self.nb[n * 4 + 0] = n + 1 if x + 1 < self.width else -1
            self.nb[n * 4 + 1] = n - 1 if x > 0 else -1
            self.nb[n * 4 + 2] = n - self.width if y > 0 else -1
            self.nb[n * 4 + 3] = n + self.width if y + 1 < self.height else -1

        mc_ids = spec.mc_ids
        self.n_mc = len(mc_ids)
        self.mc_node = _alloc(self.n_mc)
        self.mc_of = _alloc(self.N)
        for n in range(self.N):
            self.mc_of[n] = -1
        for k, n in enumerate(mc_ids):
            self.mc_node[k] = n
            self.mc_of[n] = k

        for cls in range(2):
            self.req_flits[cls] = spec.req_flits[cls]
            self.reply_flits[cls] = spec.reply_flits[cls]
            self.req_sub[cls] = spec.req_subnet[cls]
            self.rep_sub[cls] = spec.reply_subnet[cls]
            starts = spec.phase_starts[cls]
            self.ph_n[cls] = len(starts)
            self.ph_start[cls] = _alloc(self.ph_n[cls])
            self.ph_thr[cls] = <uint64_t*>_alloc(self.ph_n[cls])
            self.ph_alw[cls] = _alloc(self.ph_n[cls])
            for i in range(self.ph_n[cls]):
                self.ph_start[cls][i] = starts[i]
                self.ph_thr[cls][i] = spec.phase_thr[cls][i]
                self.ph_alw[cls][i] = spec.phase_always[cls][i]
            self.phase_idx[cls] = 0

        cdef Py_ssize_t nvc = self.S * self.N * 5 * self.V
        cdef Py_ssize_t nrp = self.S * self.N * 5
        self.vc_state = _alloc(nvc)
        self.vc_oport = _alloc(nvc)
        self.vc_ovc = _alloc(nvc)
        self.vc_head = _alloc(nvc)
        self.vc_cnt = _alloc(nvc)
        self.buf_pid = _alloc(nvc * self.B)
        self.buf_seq = _alloc(nvc * self.B)
        self.credits = _alloc(nvc)
        self.out_owner = _alloc(nvc)
        for i in range(nvc):
            self.vc_oport[i] = -1
            self.vc_ovc[i] = -1
            self.credits[i] = self.B
            self.out_owner[i] = -1
        self.nom_ptr = _alloc(nrp)
        self.out_rr = _alloc(nrp)
        self.pat_cur = _alloc(nrp)
        self.class_ptr = _alloc(nrp * 2)
        self.va_ptr = _alloc(nrp * 2)
        self.latch = _alloc(nrp)
        for i in range(nrp):
            self.latch[i] = -1
        self.flit_count = _alloc(self.S * self.N)

        self.fm_cap = nrp
        self.fm = _alloc(self.fm_cap * 6)
        self.fm_len = 0
        self.cm_cap = nrp
        self.cm = _alloc(self.cm_cap * 4)
        self.cm_len = 0

        cdef Py_ssize_t nni = self.S * self.N
        self.niq = <int64_t**>calloc(nni * 2, sizeof(int64_t*))
        if self.niq == NULL:
            raise MemoryError()
        self.niq_cap = _alloc(nni * 2)
        self.niq_head = _alloc(nni * 2)
        self.niq_len = _alloc(nni * 2)
        for i in range(nni * 2):
            self.niq_cap[i] = 16
            self.niq[i] = _alloc(16)
        self.nia_pid = _alloc(nni)
        self.nia_seq = _alloc(nni)
        self.nia_vc = _alloc(nni)
        self.ni_last = _alloc(nni)
        for i in range(nni):
            self.nia_pid[i] = -1
            self.ni_last[i] = 1

        self.mcq = _alloc(self.n_mc * self.qmc)
        self.mcq_head = _alloc(self.n_mc)
        self.mcq_len = _alloc(self.n_mc)
        self.mc_occ = _alloc(self.n_mc)
        self.mc_pend = _alloc(self.n_mc)
        self.mc_insrv = _alloc(self.n_mc)
        self.mc_busy = _alloc(self.n_mc)
        for k in range(self.n_mc):
            self.mc_insrv[k] = -1
            self.mc_busy[k] = -1

        self.pk_cap = 1024
        self.pk_n = 0
        self.pk_cls = _alloc(self.pk_cap)
        self.pk_msg = _alloc(self.pk_cap)
        self.pk_src = _alloc(self.pk_cap)
        self.pk_dest = _alloc(self.pk_cap)
        self.pk_len = _alloc(self.pk_cap)
        self.pk_inject = _alloc(self.pk_cap)

        self.pattern = NULL
        self.pattern_len = 0
        self.infl_f = _alloc(nvc)
        self.infl_c = _alloc(nvc)
        self.va_free = _alloc(self.V)

        self.set_policy(spec.gpu_mask, spec.cpu_mask, spec.partition_enabled,
                        spec.arb_mode, spec.pattern)

    def __dealloc__(self):
        cdef Py_ssize_t i
        for i in range(2):
            free(self.ph_start[i])
            free(self.ph_thr[i])
            free(self.ph_alw[i])
        if self.niq != NULL:
            for i in range(self.S * self.N * 2):
                free(self.niq[i])
            free(self.niq)
        for ptr in (<size_t>self.roles, <size_t>self.nb, <size_t>self.mc_node,
                    <size_t>self.mc_of, <size_t>self.vc_state,
                    <size_t>self.vc_oport, <size_t>self.vc_ovc,
                    <size_t>self.vc_head, <size_t>self.vc_cnt,
                    <size_t>self.buf_pid, <size_t>self.buf_seq,
                    <size_t>self.credits, <size_t>self.out_owner,
                    <size_t>self.nom_ptr, <size_t>self.out_rr,
                    <size_t>self.pat_cur, <size_t>self.class_ptr,
                    <size_t>self.va_ptr, <size_t>self.latch,
                    <size_t>self.flit_count, <size_t>self.fm, <size_t>self.cm,
                    <size_t>self.niq_cap, <size_t>self.niq_head,
                    <size_t>self.niq_len, <size_t>self.nia_pid,
                    <size_t>self.nia_seq, <size_t>self.nia_vc,
                    <size_t>self.ni_last, <size_t>self.mcq,
                    <size_t>self.mcq_head, <size_t>self.mcq_len,
                    <size_t>self.mc_occ, <size_t>self.mc_pend,
                    <size_t>self.mc_insrv, <size_t>self.mc_busy,
                    <size_t>self.pk_cls, <size_t>self.pk_msg,
                    <size_t>self.pk_src, <size_t>self.pk_dest,
                    <size_t>self.pk_len, <size_t>self.pk_inject,
                    <size_t>self.pattern, <size_t>self.infl_f,
                    <size_t>self.infl_c, <size_t>self.va_free):
            free(<void*><size_t>ptr)

    # ------------------------------------------------------------------
    # control surface (mirrors the reference engine)

    def set_policy(self, gpu_mask, cpu_mask, enabled, arb_mode, pattern):
        cdef Py_ssize_t i
        if arb_mode != 0 and not pattern:
            raise ValueError("pattern arbitration needs a non-empty pattern")
        if enabled and (gpu_mask == 0 or cpu_mask == 0
                        or (gpu_mask & cpu_mask)
                        or (gpu_mask | cpu_mask) >> self.V):
            raise ValueError("invalid VC partition masks")
        self.part_enabled = 1 if enabled else 0
        if enabled:
            self.cls_mask[0] = cpu_mask
            self.cls_mask[1] = gpu_mask
        else:
            self.cls_mask[0] = (<uint64_t>1 << self.V) - 1
            self.cls_mask[1] = (<uint64_t>1 << self.V) - 1
        self.arb_mode = arb_mode
        free(self.pattern)
        self.pattern = NULL
        self.pattern_len = len(pattern)
        if self.pattern_len:
            self.pattern = _alloc(self.pattern_len)
            for i in range(self.pattern_len):
                self.pattern[i] = pattern[i]

    def set_generation(self, enabled):
        self.gen_enabled = 1 if enabled else 0

    def epoch_counters(self):
        out = (self.ep_push[0], self.ep_shader[0], self.ep_dram[0],
               self.ep_reply[0], self.ep_push[1], self.ep_shader[1],
               self.ep_dram[1], self.ep_reply[1])
        self.ep_push[0] = self.ep_push[1] = 0
        self.ep_shader[0] = self.ep_shader[1] = 0
        self.ep_dram[0] = self.ep_dram[1] = 0
        self.ep_reply[0] = self.ep_reply[1] = 0
        return out

    def totals(self):
        return {
            "created_cpu_req": self.cr[0],
            "created_gpu_req": self.cr[2],
            "created_cpu_reply": self.cr[1],
            "created_gpu_reply": self.cr[3],
            "delivered_cpu_req": self.dl[0],
            "delivered_gpu_req": self.dl[2],
            "delivered_cpu_reply": self.dl[1],
            "delivered_gpu_reply": self.dl[3],
            "created_flits": self.created_flits,
            "delivered_flits": self.delivered_flits,
            "lat_sum_cpu": self.lat_sum[0],
            "lat_cnt_cpu": self.lat_cnt[0],
            "lat_sum_gpu": self.lat_sum[1],
            "lat_cnt_gpu": self.lat_cnt[1],
            "post_reply_cpu": self.post_reply[0],
            "post_reply_gpu": self.post_reply[1],
        }

    def is_quiescent(self):
        cdef int64_t created = self.cr[0] + self.cr[1] + self.cr[2] + self.cr[3]
        cdef int64_t delivered = self.dl[0] + self.dl[1] + self.dl[2] + self.dl[3]
        cdef Py_ssize_t k
        if created != delivered:
            return False
        for k in range(self.n_mc):
            if self.mc_occ[k] != 0 or self.mc_pend[k] != 0:
                return False
        return True

    def run_cycles(self, n):
        cdef Py_ssize_t i, count = n
        for i in range(count):
            self._step()

    # ------------------------------------------------------------------
    # growable containers

    cdef int _grow_packets(self) except -1:
        cdef Py_ssize_t cap = self.pk_cap * 2
        self.pk_cls = <int64_t*>realloc(self.pk_cls, cap * sizeof(int64_t))
        self.pk_msg = <int64_t*>realloc(self.pk_msg, cap * sizeof(int64_t))
        self.pk_src = <int64_t*>realloc(self.pk_src, cap * sizeof(int64_t))
        self.pk_dest = <int64_t*>realloc(self.pk_dest, cap * sizeof(int64_t))
        self.pk_len = <int64_t*>realloc(self.pk_len, cap * sizeof(int64_t))
        self.pk_inject = <int64_t*>realloc(self.pk_inject,
                                           cap * sizeof(int64_t))
        if (self.pk_cls == NULL or self.pk_msg == NULL or self.pk_src == NULL
                or self.pk_dest == NULL or self.pk_len == NULL
                or self.pk_inject == NULL):
            raise MemoryError()
        self.pk_cap = cap
        return 0

    cdef int64_t _new_packet(self, int64_t cls, int64_t msg, int64_t src,
                             int64_t dest, int64_t length,
                             int64_t inject) except -1:
        if self.pk_n == self.pk_cap:
            self._grow_packets()
        cdef int64_t pid = self.pk_n
        self.pk_cls[pid] = cls
        self.pk_msg[pid] = msg
        self.pk_src[pid] = src
        self.pk_dest[pid] = dest
        self.pk_len[pid] = length
        self.pk_inject[pid] = inject
        self.pk_n += 1
        return pid

    cdef int _niq_push(self, Py_ssize_t qi, int64_t pid) except -1:
        cdef Py_ssize_t cap = self.niq_cap[qi]
        cdef Py_ssize_t ln = self.niq_len[qi]
        cdef Py_ssize_t head, i
        cdef int64_t* fresh
        if ln == cap:
            fresh = _alloc(cap * 2)
            head = self.niq_head[qi]
            for i in range(ln):
                fresh[i] = self.niq[qi][(head + i) % cap]
            free(self.niq[qi])
            self.niq[qi] = fresh
            self.niq_cap[qi] = cap * 2
            self.niq_head[qi] = 0
            cap = cap * 2
            head = 0
        self.niq[qi][(self.niq_head[qi] + ln) % cap] = pid
        self.niq_len[qi] = ln + 1
        return 0

    cdef int64_t _niq_pop(self, Py_ssize_t qi):
        cdef int64_t pid = self.niq[qi][self.niq_head[qi]]
        self.niq_head[qi] = (self.niq_head[qi] + 1) % self.niq_cap[qi]
        self.niq_len[qi] -= 1
        return pid

    # ------------------------------------------------------------------
    # per-cycle phases

    cdef int _flush(self) except -1:
        cdef Py_ssize_t i, base
        cdef Py_ssize_t r, vci, slot
        for i in range(self.fm_len):
            base = i * 6
            r = self.fm[base] * self.N + self.fm[base + 1]
            vci = (r * 5 + self.fm[base + 2]) * self.V + self.fm[base + 3]
            if self.vc_cnt[vci] >= self.B:
                raise AssertionError("credit protocol violated")
            slot = vci * self.B \
                + ((self.vc_head[vci] + self.vc_cnt[vci]) % self.B)
            self.buf_pid[slot] = self.fm[base + 4]
            self.buf_seq[slot] = self.fm[base + 5]
            self.vc_cnt[vci] += 1
            self.flit_count[r] += 1
        self.fm_len = 0
        for i in range(self.cm_len):
            base = i * 4
            r = self.cm[base] * self.N + self.cm[base + 1]
            vci = (r * 5 + self.cm[base + 2]) * self.V + self.cm[base + 3]
            self.credits[vci] += 1
            if self.credits[vci] > self.B:
                raise AssertionError("credit overflow")
        self.cm_len = 0
        return 0

    cdef int _st_router(self, Py_ssize_t s, Py_ssize_t n,
                        int64_t c) except -1:
        cdef Py_ssize_t r = s * self.N + n
        cdef Py_ssize_t rp, vci, idx
        cdef int64_t lt, ip, iv, pid, seq, ovc, d, u
        cdef Py_ssize_t p
        for p in range(5):
            rp = r * 5 + p
            lt = self.latch[rp]
            if lt < 0:
                continue
            self.latch[rp] = -1
            ip = lt // self.V
            iv = lt % self.V
            vci = (r * 5 + ip) * self.V + iv
            idx = vci * self.B + self.vc_head[vci]
            pid = self.buf_pid[idx]
            seq = self.buf_seq[idx]
            self.vc_head[vci] = (self.vc_head[vci] + 1) % self.B
            self.vc_cnt[vci] -= 1
            self.flit_count[r] -= 1
            ovc = self.vc_ovc[vci]
            if p == P_EJECT:
                self._deliver(n, pid, seq, c)
            else:
                d = self.nb[n * 4 + p]
                idx = self.fm_len * 6
                self.fm[idx] = s
                self.fm[idx + 1] = d
                self.fm[idx + 2] = _OPP[p]
                self.fm[idx + 3] = ovc
                self.fm[idx + 4] = pid
                self.fm[idx + 5] = seq
                self.fm_len += 1
            if ip != P_EJECT:
                u = self.nb[n * 4 + ip]
                idx = self.cm_len * 4
                self.cm[idx] = s
                self.cm[idx + 1] = u
                self.cm[idx + 2] = _OPP[ip]
                self.cm[idx + 3] = iv
                self.cm_len += 1
            if seq == self.pk_len[pid] - 1:
                if p != P_EJECT:
                    self.out_owner[rp * self.V + ovc] = -1
                self.vc_state[vci] = ST_IDLE
                self.vc_oport[vci] = -1
                self.vc_ovc[vci] = -1
        return 0

    cdef int _deliver(self, Py_ssize_t n, int64_t pid, int64_t seq,
                      int64_t c) except -1:
        cdef int64_t cls = self.pk_cls[pid]
        cdef int64_t msg = self.pk_msg[pid]
        cdef Py_ssize_t k
        self.delivered_flits += 1
        if msg == MSG_REPLY:
            self.ep_reply[cls] += 1
            if c >= self.warmup_cutoff:
                self.post_reply[cls] += 1
            if self.debug_inv and self.roles[n] == ROLE_MC:
                raise AssertionError("reply delivered at a memory controller")
        else:
            if self.debug_inv and self.roles[n] != ROLE_MC:
                raise AssertionError("request delivered off the controller")
            if seq == 0:
                k = self.mc_of[n]
                self.mc_pend[k] -= 1
                self.mc_occ[k] += 1
                self.mcq[k * self.qmc
                         + ((self.mcq_head[k] + self.mcq_len[k]) % self.qmc)] \
                    = pid
                self.mcq_len[k] += 1
        if seq == self.pk_len[pid] - 1:
            self.dl[cls * 2 + msg] += 1
            if self.pk_inject[pid] >= self.warmup_cutoff:
                self.lat_sum[cls] += c - self.pk_inject[pid]
                self.lat_cnt[cls] += 1
        return 0

    cdef int _mc_service(self, int64_t c) except -1:
        cdef Py_ssize_t k
        cdef int64_t done
        for k in range(self.n_mc):
            done = -1
            if self.mc_insrv[k] != -1 and self.mc_busy[k] == c:
                done = self.mc_insrv[k]
                self.mc_insrv[k] = -1
                self.mc_occ[k] -= 1
            if self.mc_insrv[k] == -1 and self.mcq_len[k] > 0:
                self.mc_insrv[k] = self.mcq[k * self.qmc + self.mcq_head[k]]
                self.mcq_head[k] = (self.mcq_head[k] + 1) % self.qmc
                self.mcq_len[k] -= 1
                self.mc_busy[k] = c + self.svc_lat
            if done != -1:
                self._create_reply(self.mc_node[k], done, c)
        return 0

    cdef int _create_reply(self, Py_ssize_t n, int64_t req_id,
                           int64_t c) except -1:
        cdef int64_t cls = self.pk_cls[req_id]
        cdef int64_t pid = self._new_packet(cls, MSG_REPLY, n,
                                            self.pk_src[req_id],
                                            self.reply_flits[cls], c)
        self.cr[cls * 2 + 1] += 1
        self.created_flits += self.reply_flits[cls]
        cdef Py_ssize_t r = self.rep_sub[cls] * self.N + n
        self._niq_push(r * 2 + cls, pid)
        self.ni_pending_flits += self.reply_flits[cls]
        return 0

    cdef inline int _eject_ok(self, Py_ssize_t n, int64_t pid,
                              int64_t seq) nogil:
        cdef Py_ssize_t k
        if self.pk_msg[pid] == MSG_REQ and seq == 0:
            k = self.mc_of[n]
            if k >= 0:
                return self.mc_occ[k] + self.mc_pend[k] < self.qmc
        return 1

    cdef int _sa_router(self, Py_ssize_t s, Py_ssize_t n) except -1:
        cdef Py_ssize_t r = s * self.N + n
        cdef int64_t noms[5]
        cdef int64_t reqs[5]
        cdef Py_ssize_t ip, k, op, nreq, i
        cdef Py_ssize_t rp, vci, idx
        cdef int64_t iv, base, front_pid, front_seq, want, slot, winner
        cdef int64_t gr_ej = -1
        cdef int have0, have1, found

        for ip in range(5):
            noms[ip] = -1
            rp = r * 5 + ip
            base = self.nom_ptr[rp]
            for k in range(self.V):
                iv = (base + k) % self.V
                vci = rp * self.V + iv
                if self.vc_state[vci] != ST_ACTIVE or self.vc_cnt[vci] == 0:
                    continue
                if self.vc_oport[vci] == P_EJECT:
                    idx = vci * self.B + self.vc_head[vci]
                    if not self._eject_ok(n, self.buf_pid[idx],
                                          self.buf_seq[idx]):
                        continue
                elif self.credits[(r * 5 + self.vc_oport[vci]) * self.V
                                  + self.vc_ovc[vci]] <= 0:
                    continue
                noms[ip] = iv
                break

        for op in range(5):
            nreq = 0
            for ip in range(5):
                if noms[ip] >= 0 and \
                        self.vc_oport[(r * 5 + ip) * self.V + noms[ip]] == op:
                    reqs[nreq] = ip
                    nreq += 1
            if nreq == 0:
                continue
            rp = r * 5 + op
            if self.arb_mode == 0:
                winner = self._scan_ports(reqs, nreq, self.out_rr[rp])
                self.out_rr[rp] = (winner + 1) % 5
            else:
                slot = self.pattern[self.pat_cur[rp] % self.pattern_len]
                have0 = 0
                have1 = 0
                for i in range(nreq):
                    vci = (r * 5 + reqs[i]) * self.V + noms[reqs[i]]
                    front_pid = self.buf_pid[vci * self.B + self.vc_head[vci]]
                    if self.pk_cls[front_pid] == 0:
                        have0 = 1
                    else:
                        have1 = 1
                want = slot
                if slot == 2 or (want == 0 and not have0) \
                        or (want == 1 and not have1):
                    if slot != 2 and ((1 - want == 0 and have0)
                                      or (1 - want == 1 and have1)):
                        want = 1 - want
                    else:
                        want = -1
                if want < 0:
                    winner = self._scan_ports(reqs, nreq, self.out_rr[rp])
                    self.out_rr[rp] = (winner + 1) % 5
                else:
                    nreq = self._filter_class(r, reqs, nreq, noms, want)
                    winner = self._scan_ports(reqs, nreq,
                                              self.class_ptr[rp * 2 + want])
                    self.class_ptr[rp * 2 + want] = (winner + 1) % 5
                self.pat_cur[rp] = (self.pat_cur[rp] + 1) % self.pattern_len
            iv = noms[winner]
            vci = (r * 5 + winner) * self.V + iv
            if op != P_EJECT:
                idx = rp * self.V + self.vc_ovc[vci]
                self.credits[idx] -= 1
                if self.credits[idx] < 0:
                    raise AssertionError("credit underflow")
            self.latch[rp] = winner * self.V + iv
            self.nom_ptr[r * 5 + winner] = (iv + 1) % self.V
            if op == P_EJECT:
                gr_ej = winner * self.V + iv
                idx = vci * self.B + self.vc_head[vci]
                if self.pk_msg[self.buf_pid[idx]] == MSG_REQ \
                        and self.buf_seq[idx] == 0:
                    self.mc_pend[self.mc_of[n]] += 1

        # stall accounting: eject-ready VCs that did not leave this cycle
        cdef int64_t cls
        for ip in range(5):
            for iv in range(self.V):
                vci = (r * 5 + ip) * self.V + iv
                if self.vc_state[vci] != ST_ACTIVE \
                        or self.vc_oport[vci] != P_EJECT \
                        or self.vc_cnt[vci] == 0:
                    continue
                if gr_ej == ip * self.V + iv:
                    continue
                idx = vci * self.B + self.vc_head[vci]
                front_pid = self.buf_pid[idx]
                cls = self.pk_cls[front_pid]
                if self.pk_msg[front_pid] == MSG_REPLY:
                    self.ep_shader[cls] += 1
                elif self.buf_seq[idx] == 0 and self.mc_of[n] >= 0 \
                        and self.mc_occ[self.mc_of[n]] \
                        + self.mc_pend[self.mc_of[n]] >= self.qmc:
                    self.ep_dram[cls] += 1
        return 0

    cdef int64_t _scan_ports(self, int64_t* reqs, Py_ssize_t nreq,
                             int64_t base) except -1:
        cdef Py_ssize_t k, i
        cdef int64_t ip
        for k in range(5):
            ip = (base + k) % 5
            for i in range(nreq):
                if reqs[i] == ip:
                    return ip
        raise AssertionError("requesters list was empty")

    cdef Py_ssize_t _filter_class(self, Py_ssize_t r, int64_t* reqs,
                                  Py_ssize_t nreq, int64_t* noms,
                                  int64_t want) nogil:
        cdef Py_ssize_t i, out = 0
        cdef Py_ssize_t vci
        for i in range(nreq):
            vci = (r * 5 + reqs[i]) * self.V + noms[reqs[i]]
            if self.pk_cls[self.buf_pid[vci * self.B + self.vc_head[vci]]] \
                    == want:
                reqs[out] = reqs[i]
                out += 1
        return out

    cdef int _va_router(self, Py_ssize_t s, Py_ssize_t n) except -1:
        cdef Py_ssize_t r = s * self.N + n
        cdef Py_ssize_t p, op, dom, ndom, k, nfree, fi
        cdef Py_ssize_t rp, vci
        cdef int64_t v, ovc, slot, ip, iv, last, base
        cdef uint64_t allowed
        for p in range(5):
            for v in range(self.V):
                vci = (r * 5 + p) * self.V + v
                if self.vc_state[vci] == ST_ROUTING \
                        and self.vc_oport[vci] == P_EJECT:
                    self.vc_state[vci] = ST_ACTIVE
                    self.vc_ovc[vci] = -1
        ndom = 2 if self.part_enabled else 1
        for op in range(4):
            rp = r * 5 + op
            for dom in range(ndom):
                allowed = self.cls_mask[dom] if self.part_enabled \
                    else self.cls_mask[0]
                nfree = 0
                for ovc in range(self.V):
                    if (allowed >> ovc) & 1 \
                            and self.out_owner[rp * self.V + ovc] == -1:
                        self.va_free[nfree] = ovc
                        nfree += 1
                if nfree == 0:
                    continue
                fi = 0
                base = self.va_ptr[rp * 2 + dom]
                last = -1
                for k in range(5 * self.V):
                    slot = (base + k) % (5 * self.V)
                    ip = slot // self.V
                    iv = slot % self.V
                    vci = (r * 5 + ip) * self.V + iv
                    if self.vc_state[vci] != ST_ROUTING \
                            or self.vc_oport[vci] != op:
                        continue
                    if self.part_enabled and \
                            self.pk_cls[self.buf_pid[vci * self.B
                                                     + self.vc_head[vci]]] \
                            != dom:
                        continue
                    if fi >= nfree:
                        break
                    ovc = self.va_free[fi]
                    fi += 1
                    self.vc_state[vci] = ST_ACTIVE
                    self.vc_ovc[vci] = ovc
                    self.out_owner[rp * self.V + ovc] = slot
                    last = slot
                if last >= 0:
                    self.va_ptr[rp * 2 + dom] = (last + 1) % (5 * self.V)
        return 0

    cdef int _rc_router(self, Py_ssize_t s, Py_ssize_t n) except -1:
        cdef Py_ssize_t r = s * self.N + n
        cdef Py_ssize_t p, vci, idx
        cdef int64_t v, dest, x, y, dx, dy, port
        x = n % self.width
        y = n // self.width
        for p in range(5):
            for v in range(self.V):
                vci = (r * 5 + p) * self.V + v
                if self.vc_state[vci] != ST_IDLE or self.vc_cnt[vci] == 0:
                    continue
                idx = vci * self.B + self.vc_head[vci]
                if self.buf_seq[idx] != 0:
                    raise AssertionError("wormhole ordering violated")
                dest = self.pk_dest[self.buf_pid[idx]]
                dx = dest % self.width
                dy = dest // self.width
                if dx > x:
                    port = 0
                elif dx < x:
                    port = 1
                elif dy == y:
                    port = P_EJECT
                elif dy > y:
                    port = 3
                else:
                    port = 2
                self.vc_oport[vci] = port
                self.vc_state[vci] = ST_ROUTING
        return 0

    cdef int _generate(self, int64_t c) except -1:
        cdef uint64_t thr0 = self.ph_thr[0][self.phase_idx[0]]
        cdef uint64_t thr1 = self.ph_thr[1][self.phase_idx[1]]
        cdef int64_t alw0 = self.ph_alw[0][self.phase_idx[0]]
        cdef int64_t alw1 = self.ph_alw[1][self.phase_idx[1]]
        if not (thr0 or alw0 or thr1 or alw1):
            return 0
        cdef Py_ssize_t n, r
        cdef int64_t cls, mc_n, pid, alw
        cdef uint64_t t
        for n in range(self.N):
            cls = self.roles[n]
            if cls == ROLE_MC:
                continue
            alw = alw0 if cls == 0 else alw1
            if not alw:
                t = thr0 if cls == 0 else thr1
                if t == 0 or rng_u64(self.seed, n, c, 0) >= t:
                    continue
            mc_n = self.mc_node[rng_u64(self.seed, n, c, 1) % self.n_mc]
            pid = self._new_packet(cls, MSG_REQ, n, mc_n,
                                   self.req_flits[cls], c)
            self.cr[cls * 2] += 1
            self.created_flits += self.req_flits[cls]
            self.ep_push[cls] += 1
            r = self.req_sub[cls] * self.N + n
            self._niq_push(r * 2 + cls, pid)
            self.ni_pending_flits += self.req_flits[cls]
        return 0

    cdef int _inject(self, int64_t c) except -1:
        cdef Py_ssize_t s, n, r, qi
        cdef int64_t pref, cls, t, v, found, pid, seq
        cdef Py_ssize_t vci, slot
        cdef uint64_t inj_mask
        for s in range(self.S):
            for n in range(self.N):
                r = s * self.N + n
                if self.nia_pid[r] < 0:
                    if self.niq_len[r * 2] == 0 and self.niq_len[r * 2 + 1] == 0:
                        continue
                    pref = 1 - self.ni_last[r]
                    for t in range(2):
                        cls = pref if t == 0 else 1 - pref
                        qi = r * 2 + cls
                        if self.niq_len[qi] == 0:
                            continue
                        inj_mask = self.cls_mask[cls]
                        found = -1
                        for v in range(self.V):
                            if (inj_mask >> v) & 1 and \
                                    self.vc_cnt[(r * 5 + P_EJECT) * self.V
                                                + v] < self.B:
                                found = v
                                break
                        if found < 0:
                            continue
                        self.nia_pid[r] = self._niq_pop(qi)
                        self.nia_seq[r] = 0
                        self.nia_vc[r] = found
                        self.ni_last[r] = cls
                        break
                if self.nia_pid[r] >= 0:
                    pid = self.nia_pid[r]
                    seq = self.nia_seq[r]
                    vci = (r * 5 + P_EJECT) * self.V + self.nia_vc[r]
                    if self.vc_cnt[vci] < self.B:
                        slot = vci * self.B + ((self.vc_head[vci]
                                                + self.vc_cnt[vci]) % self.B)
                        self.buf_pid[slot] = pid
                        self.buf_seq[slot] = seq
                        self.vc_cnt[vci] += 1
                        self.flit_count[r] += 1
                        self.ni_pending_flits -= 1
                        if seq + 1 == self.pk_len[pid]:
                            self.nia_pid[r] = -1
                        else:
                            self.nia_seq[r] = seq + 1
        return 0

    cdef int _step(self) except -1:
        cdef int64_t c = self.cycle
        cdef Py_ssize_t s, n, cls
        self._flush()
        for s in range(self.S):
            for n in range(self.N):
                self._st_router(s, n, c)
        self._mc_service(c)
        for s in range(self.S):
            for n in range(self.N):
                if self.flit_count[s * self.N + n]:
                    self._sa_router(s, n)
        for s in range(self.S):
            for n in range(self.N):
                if self.flit_count[s * self.N + n]:
                    self._va_router(s, n)
        for s in range(self.S):
            for n in range(self.N):
                if self.flit_count[s * self.N + n]:
                    self._rc_router(s, n)
        for cls in range(2):
            while self.phase_idx[cls] + 1 < self.ph_n[cls] \
                    and self.ph_start[cls][self.phase_idx[cls] + 1] <= c:
                self.phase_idx[cls] += 1
        if self.gen_enabled:
            self._generate(c)
        self._inject(c)
        if self.debug_inv:
            self._check_invariants()
        self.cycle = c + 1
        return 0

    # ------------------------------------------------------------------
    # verification helpers

    cdef int _check_invariants(self) except -1:
        cdef Py_ssize_t nvc = self.S * self.N * 5 * self.V
        cdef Py_ssize_t i, base, s, n, p, r, rp, d
        cdef int64_t v, buffered = 0, lt, latched_vc, total
        for r in range(self.S * self.N):
            buffered += self.flit_count[r]
        if self.created_flits != self.delivered_flits + buffered \
                + self.fm_len + self.ni_pending_flits:
            raise AssertionError("flit conservation violated")

        memset(self.infl_f, 0, nvc * sizeof(int64_t))
        memset(self.infl_c, 0, nvc * sizeof(int64_t))
        for i in range(self.fm_len):
            base = i * 6
            self.infl_f[((self.fm[base] * self.N + self.fm[base + 1]) * 5
                         + self.fm[base + 2]) * self.V + self.fm[base + 3]] += 1
        for i in range(self.cm_len):
            base = i * 4
            self.infl_c[((self.cm[base] * self.N + self.cm[base + 1]) * 5
                         + self.cm[base + 2]) * self.V + self.cm[base + 3]] += 1

        for s in range(self.S):
            for n in range(self.N):
                r = s * self.N + n
                for p in range(4):
                    d = self.nb[n * 4 + p]
                    if d < 0:
                        continue
                    rp = r * 5 + p
                    lt = self.latch[rp]
                    latched_vc = -1
                    if lt >= 0:
                        latched_vc = self.vc_ovc[(r * 5 + lt // self.V)
                                                 * self.V + lt % self.V]
                    for v in range(self.V):
                        total = self.credits[rp * self.V + v] \
                            + self.vc_cnt[((s * self.N + d) * 5 + _OPP[p])
                                          * self.V + v] \
                            + self.infl_f[((s * self.N + d) * 5 + _OPP[p])
                                          * self.V + v] \
                            + self.infl_c[rp * self.V + v] \
                            + (1 if latched_vc == v else 0)
                        if total != self.B:
                            raise AssertionError(
                                f"credit conservation violated at subnet {s} "
                                f"node {n} port {p} vc {v}: {total}")
        return 0

    def state_digest(self):
        cdef uint64_t h = 0
        cdef Py_ssize_t s, n, p, i, k, qi, r
        cdef Py_ssize_t rp, vci
        cdef int64_t v, lt

        h = mix64(h ^ <uint64_t>self.cycle)
        for s in range(self.S):
            for n in range(self.N):
                r = s * self.N + n
                for p in range(5):
                    rp = r * 5 + p
                    for v in range(self.V):
                        vci = rp * self.V + v
                        h = mix64(h ^ <uint64_t>self.vc_state[vci])
                        h = mix64(h ^ <uint64_t>self.vc_oport[vci])
                        h = mix64(h ^ <uint64_t>self.vc_ovc[vci])
                        h = mix64(h ^ <uint64_t>self.vc_cnt[vci])
                        for i in range(self.vc_cnt[vci]):
                            k = vci * self.B \
                                + ((self.vc_head[vci] + i) % self.B)
                            h = mix64(h ^ <uint64_t>self.buf_pid[k])
                            h = mix64(h ^ <uint64_t>self.buf_seq[k])
                    for v in range(self.V):
                        h = mix64(h ^ <uint64_t>self.credits[rp * self.V + v])
                    for v in range(self.V):
                        h = mix64(h ^ <uint64_t>self.out_owner[rp * self.V + v])
                    h = mix64(h ^ <uint64_t>self.nom_ptr[rp])
                    h = mix64(h ^ <uint64_t>self.out_rr[rp])
                    h = mix64(h ^ <uint64_t>self.pat_cur[rp])
                    h = mix64(h ^ <uint64_t>self.class_ptr[rp * 2])
                    h = mix64(h ^ <uint64_t>self.class_ptr[rp * 2 + 1])
                    h = mix64(h ^ <uint64_t>self.va_ptr[rp * 2])
                    h = mix64(h ^ <uint64_t>self.va_ptr[rp * 2 + 1])
                    h = mix64(h ^ <uint64_t>self.latch[rp])
        for s in range(self.S):
            for n in range(self.N):
                r = s * self.N + n
                for i in range(2):
                    qi = r * 2 + i
                    h = mix64(h ^ <uint64_t>self.niq_len[qi])
                    for k in range(self.niq_len[qi]):
                        h = mix64(h ^ <uint64_t>self.niq[qi][
                            (self.niq_head[qi] + k) % self.niq_cap[qi]])
                if self.nia_pid[r] < 0:
                    h = mix64(h ^ <uint64_t>(-1))
                    h = mix64(h ^ <uint64_t>(-1))
                    h = mix64(h ^ <uint64_t>(-1))
                else:
                    h = mix64(h ^ <uint64_t>self.nia_pid[r])
                    h = mix64(h ^ <uint64_t>self.nia_seq[r])
                    h = mix64(h ^ <uint64_t>self.nia_vc[r])
                h = mix64(h ^ <uint64_t>self.ni_last[r])
        for k in range(self.n_mc):
            h = mix64(h ^ <uint64_t>self.mc_occ[k])
            h = mix64(h ^ <uint64_t>self.mc_pend[k])
            h = mix64(h ^ <uint64_t>self.mc_insrv[k])
            h = mix64(h ^ <uint64_t>self.mc_busy[k])
            h = mix64(h ^ <uint64_t>self.mcq_len[k])
            for i in range(self.mcq_len[k]):
                h = mix64(h ^ <uint64_t>self.mcq[k * self.qmc
                                                 + ((self.mcq_head[k] + i)
                                                    % self.qmc)])
        for i in range(4):
            h = mix64(h ^ <uint64_t>self.cr[i])
        for i in range(4):
            h = mix64(h ^ <uint64_t>self.dl[i])
        h = mix64(h ^ <uint64_t>self.created_flits)
        h = mix64(h ^ <uint64_t>self.delivered_flits)
        h = mix64(h ^ <uint64_t>self.lat_sum[0])
        h = mix64(h ^ <uint64_t>self.lat_cnt[0])
        h = mix64(h ^ <uint64_t>self.lat_sum[1])
        h = mix64(h ^ <uint64_t>self.lat_cnt[1])
        h = mix64(h ^ <uint64_t>self.post_reply[0])
        h = mix64(h ^ <uint64_t>self.post_reply[1])
        h = mix64(h ^ <uint64_t>self.ep_push[0])
        h = mix64(h ^ <uint64_t>self.ep_push[1])
        h = mix64(h ^ <uint64_t>self.ep_shader[0])
        h = mix64(h ^ <uint64_t>self.ep_shader[1])
        h = mix64(h ^ <uint64_t>self.ep_dram[0])
        h = mix64(h ^ <uint64_t>self.ep_dram[1])
        h = mix64(h ^ <uint64_t>self.ep_reply[0])
        h = mix64(h ^ <uint64_t>self.ep_reply[1])
        h = mix64(h ^ <uint64_t>self.phase_idx[0])
        h = mix64(h ^ <uint64_t>self.phase_idx[1])
        h = mix64(h ^ <uint64_t>(1 if self.gen_enabled else 0))
        for i in range(self.fm_len):
            for k in range(6):
                h = mix64(h ^ <uint64_t>self.fm[i * 6 + k])
        for i in range(self.cm_len):
            for k in range(4):
                h = mix64(h ^ <uint64_t>self.cm[i * 4 + k])
        return h
