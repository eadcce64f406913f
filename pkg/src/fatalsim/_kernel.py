"""Simulation kernel: the discrete-event loop over flattened node state.

Written in Cython pure-Python mode: this file runs unchanged under the
plain interpreter and compiles to a C extension that shadows it.  All
state lives in flat int64 arrays; all arithmetic is integer picoseconds,
so both backends produce bit-identical traces for identical lowered
configs.

The lowered config dict is produced by :mod:`fatalsim.scenario`; nothing
here parses files or knows about dataclasses.  Machine guards are
hand-flattened from the transition tables in :mod:`fatalsim.protocol`
(tested against them on random snapshots).

Semantics pinned here:

* A machine arms the transitions of its *observed* self state; the
  commit target only needs to differ from the actual state.  One commit
  per machine per instant; ties break in table order and are recorded as
  hazards when more than one guard held.
* Memory flags latch from port levels: a reset clears the latch and any
  port still showing the flagged state re-latches it immediately.
* Timers reset at the commit instant of a switch to their trigger state;
  expiry is the first grid instant where the local elapsed time reaches
  the duration.
* All machines of a node share one outbound channel per receiver (the
  product word).  Events at one instant are drained before the node's
  word goes out, so same-instant commits coalesce into a single channel
  event, and exactly one delay is sampled per channel per instant.  The
  quick machine rides its own channels with its own delay bounds.
"""

from array import array

try:
    import cython
except ImportError:  # pragma: no cover - plain-Python fallback shim
    class _FakeType:
        def __getitem__(self, item):
            return self

        def __call__(self, *a, **k):
            return a[0] if a else 0

    class _FakeCython:
        compiled = False
        longlong = _FakeType()
        ulonglong = _FakeType()
        int = _FakeType()
        bint = _FakeType()
        Py_ssize_t = _FakeType()

        @staticmethod
        def cclass(cls):
            return cls

        @staticmethod
        def cfunc(f):
            return f

        @staticmethod
        def exceptval(*a, **k):
            def deco(f):
                return f
            return deco

    cython = _FakeCython()

COMPILED = cython.compiled

MASK64 = (1 << 64) - 1
TIME_INF = 1 << 62

# machine ids (trace order)
M_MAIN = 0
M_EXT = 1
M_RTRIG = 2
M_RSUPP = 3
M_QUICK = 4
# extra trace record kinds
REC_CYCLE = 5
REC_FAST = 6
REC_HAZARD = 7

AUX_PENDING = -2  # switch-record aux before the self-loop arrival is known

# main states
ACCEPT = 0
SLEEP = 1
SLEEP_WAKING = 2
WAKING = 3
READY = 4
PROPOSE = 5
RECOVER = 6
JOIN = 7
# ext states
DORMANT = 0
PASSIVE = 1
ACTIVE = 2
# trigger states
INIT = 0
WAIT = 1
# support states (local): NONE, SUPP(j) = 1+j, then the two fixed ones
RS_NONE = 0
RS_SUPP_BASE = 1
RS_MAXN = 32
RS_SUPP_RESYNC = RS_SUPP_BASE + RS_MAXN
RS_RESYNC = RS_SUPP_RESYNC + 1
# quick states
ACCEPT_P = 0
READY_P = 1
PROPOSE_P = 2

# timer slots; per-peer slots live at R2_BASE+j and R2_BASE+n+j
S_T1 = 0
S_T2 = 1
S_T2P = 2
S_SLEEP = 3
S_T3 = 4
S_T4 = 5
S_T5 = 6
S_REC = 7
S_T6 = 8
S_T7 = 9
S_SR = 10
S_R1 = 11
S_R3 = 12
S_T1P = 13
S_T3P = 14
S_R2_BASE = 15

# event kinds; the priority component of the heap key fixes same-instant order
EV_ACTION = 0
EV_ARR_F = 1
EV_ARR_Q = 2
EV_TIMER = 3
EV_TICK = 4
EV_ADV = 5
_PRIO = (0, 1, 1, 2, 3, 1)

# delay policies
POL_FIXED = 0
POL_UNIFORM = 1
POL_SCRIPTED = 2

# adversary policies
ADV_SILENT = 0
ADV_CONSTANT = 1
ADV_RANDOM_WALK = 2
ADV_REPLAY = 3
ADV_MIMIC = 4
ADV_CALLBACK = 5

# 4-bit delay-insensitive encoding of the main state, indexed by state id
_ENC = (9, 11, 3, 5, 6, 0, 12, 10)
_DEC = tuple(_ENC.index(c) if c in _ENC else -1 for c in range(16))

_POP16 = array("q", [bin(x).count("1") for x in range(1 << 16)])


def _zeros(n):
    return array("q", bytes(8 * n))


def _filled(n, v):
    return array("q", [v]) * n


@cython.cclass
class SimCore:
    """One run: owns every mutable array, the heap, the RNGs, the trace."""

    n: cython.longlong
    f: cython.longlong
    thr_nf: cython.longlong
    thr_f1: cython.longlong
    d: cython.longlong
    horizon: cython.longlong
    quick_on: cython.longlong
    fast_on: cython.longlong
    big_m: cython.longlong
    fast_m: cython.longlong
    fast_period: cython.longlong
    rec_fast: cython.longlong
    nslots: cython.longlong
    rs: cython.ulonglong
    ra: cython.ulonglong
    seq: cython.longlong
    now: cython.longlong

    hk1: cython.longlong[::1]
    hk2: cython.longlong[::1]
    hkind: cython.longlong[::1]
    ha: cython.longlong[::1]
    hb: cython.longlong[::1]
    hc: cython.longlong[::1]
    hn: cython.longlong
    hcap: cython.longlong
    pk_t: cython.longlong
    pk_kind: cython.longlong
    pk_a: cython.longlong
    pk_b: cython.longlong
    pk_c: cython.longlong

    act: cython.longlong[::1]
    last_commit: cython.longlong[::1]
    dirty_f: cython.longlong[::1]
    dirty_q: cython.longlong[::1]
    obs_code: cython.longlong[::1]
    obs_main: cython.longlong[::1]
    obs_trig: cython.longlong[::1]
    obs_supp: cython.longlong[::1]
    obs_quick: cython.longlong[::1]
    obs_ext: cython.longlong[::1]
    obs_rsupp: cython.longlong[::1]
    obs_quickst: cython.longlong[::1]
    fl_acc: cython.longlong[::1]
    fl_prop: cython.longlong[::1]
    fl_rec: cython.longlong[::1]
    fl_join: cython.longlong[::1]
    fl_sw: cython.longlong[::1]
    fl_supp: cython.longlong[::1]
    fl_pp: cython.longlong[::1]
    mem_next: cython.longlong[::1]
    cyc: cython.longlong[::1]
    fastv: cython.longlong[::1]
    fast_halt: cython.longlong[::1]
    fast_gen: cython.longlong[::1]

    tdurs: cython.longlong[::1]
    r3_low: cython.longlong
    r3_high: cython.longlong
    texp: cython.longlong[::1]
    tport: cython.longlong[::1]
    tgen: cython.longlong[::1]
    treset: cython.longlong[::1]
    tdur_cur: cython.longlong[::1]

    mclk_off: cython.longlong[::1]
    mclk_cnt: cython.longlong[::1]
    mclk_q: cython.longlong[::1]
    mseg_start: cython.longlong[::1]
    mseg_units: cython.longlong[::1]
    fclk_off: cython.longlong[::1]
    fclk_cnt: cython.longlong[::1]
    fclk_q: cython.longlong[::1]
    fseg_start: cython.longlong[::1]
    fseg_units: cython.longlong[::1]

    fpol: cython.longlong[::1]
    fpar1: cython.longlong[::1]
    fpar2: cython.longlong[::1]
    f_last_arr: cython.longlong[::1]
    qpol: cython.longlong[::1]
    qpar1: cython.longlong[::1]
    qpar2: cython.longlong[::1]
    q_last_arr: cython.longlong[::1]

    adv_mask: cython.longlong[::1]
    adv_kind: cython.longlong[::1]
    adv_p1: cython.longlong[::1]
    adv_p2: cython.longlong[::1]

    pc: cython.longlong[::1]

    tr_t: cython.longlong[::1]
    tr_node: cython.longlong[::1]
    tr_mach: cython.longlong[::1]
    tr_state: cython.longlong[::1]
    tr_aux: cython.longlong[::1]
    tr_n: cython.longlong
    tr_cap: cython.longlong

    _adv_scripts: object
    _adv_callback: object
    _scripted_f: object
    _scripted_q: object
    _actions: object

    def __init__(self, cfg):
        n = cfg["n"]
        if n < 1 or n > 16:
            raise ValueError("kernel supports 1..16 nodes")
        self.n = n
        self.f = cfg["f"]
        self.thr_nf = n - cfg["f"]
        self.thr_f1 = cfg["f"] + 1
        self.d = cfg["d"]
        self.horizon = cfg["horizon"]
        self.quick_on = 1 if cfg.get("quick_on") else 0
        self.fast_on = 1 if cfg.get("fast_on") else 0
        self.big_m = cfg.get("big_m", 2)
        self.fast_m = cfg.get("fast_m", 1)
        self.fast_period = cfg.get("fast_period", 1)
        self.rec_fast = 1 if cfg.get("record_fast", self.fast_on) else 0
        self.nslots = S_R2_BASE + 2 * n
        self.rs = (cfg["seed"] ^ 0x5DEECE66D) & MASK64
        self.ra = (cfg["seed"] ^ 0xA5A5A5A55A5A5A5A) & MASK64
        self.seq = 0
        self.now = 0

        self.hcap = 1 << 12
        self.hk1 = _zeros(self.hcap)
        self.hk2 = _zeros(self.hcap)
        self.hkind = _zeros(self.hcap)
        self.ha = _zeros(self.hcap)
        self.hb = _zeros(self.hcap)
        self.hc = _zeros(self.hcap)
        self.hn = 0

        self.act = _zeros(n * 5)
        self.last_commit = _filled(n * 5, -1)
        self.dirty_f = _zeros(n)
        self.dirty_q = _zeros(n)
        self.obs_code = _zeros(n * n)
        self.obs_main = _zeros(n * n)
        self.obs_trig = _zeros(n * n)
        self.obs_supp = _zeros(n * n)
        self.obs_quick = _zeros(n * n)
        self.obs_ext = _zeros(n)
        self.obs_rsupp = _zeros(n)
        self.obs_quickst = _zeros(n)
        self.fl_acc = _zeros(n)
        self.fl_prop = _zeros(n)
        self.fl_rec = _zeros(n)
        self.fl_join = _zeros(n)
        self.fl_sw = _zeros(n)
        self.fl_supp = _zeros(n)
        self.fl_pp = _zeros(n)
        self.mem_next = _zeros(n)
        self.cyc = _zeros(n)
        self.fastv = _zeros(n)
        self.fast_halt = _zeros(n)
        self.fast_gen = _zeros(n)

        self.tdurs = array("q", cfg["durations"])
        self.r3_low = cfg["r3_low"]
        self.r3_high = cfg["r3_high"]
        ns = n * self.nslots
        self.texp = _filled(ns, TIME_INF)
        self.tport = _zeros(ns)
        self.tgen = _zeros(ns)
        self.treset = _zeros(ns)
        self.tdur_cur = _zeros(ns)

        self.mclk_off = array("q", cfg["mclk_off"])
        self.mclk_cnt = array("q", cfg["mclk_cnt"])
        self.mclk_q = array("q", cfg["mclk_q"])
        self.mseg_start = array("q", list(cfg["mseg_start"]) + [0] * (4 * n))
        self.mseg_units = array("q", list(cfg["mseg_units"]) + [0] * (4 * n))
        self.fclk_off = array("q", cfg["fclk_off"])
        self.fclk_cnt = array("q", cfg["fclk_cnt"])
        self.fclk_q = array("q", cfg["fclk_q"])
        self.fseg_start = array("q", list(cfg["fseg_start"]) + [0] * (4 * n))
        self.fseg_units = array("q", list(cfg["fseg_units"]) + [0] * (4 * n))

        self.fpol = array("q", cfg["fpol"])
        self.fpar1 = array("q", cfg["fpar1"])
        self.fpar2 = array("q", cfg["fpar2"])
        self.f_last_arr = _filled(n * n, -1)
        self.qpol = array("q", cfg["qpol"])
        self.qpar1 = array("q", cfg["qpar1"])
        self.qpar2 = array("q", cfg["qpar2"])
        self.q_last_arr = _filled(n * n, -1)

        self.adv_mask = array("q", cfg.get("adv_mask", [0] * n))
        self.adv_kind = array("q", cfg.get("adv_kind", [0] * n))
        self.adv_p1 = array("q", cfg.get("adv_p1", [0] * n))
        self.adv_p2 = array("q", cfg.get("adv_p2", [0] * n))
        self._adv_scripts = cfg.get("adv_scripts", {})
        self._adv_callback = cfg.get("adv_callback")
        self._scripted_f = cfg.get("scripted_f", {})
        self._scripted_q = cfg.get("scripted_q", {})
        self._actions = cfg.get("actions", [])

        self.pc = _POP16

        self.tr_cap = 1 << 14
        self.tr_t = _zeros(self.tr_cap)
        self.tr_node = _zeros(self.tr_cap)
        self.tr_mach = _zeros(self.tr_cap)
        self.tr_state = _zeros(self.tr_cap)
        self.tr_aux = _zeros(self.tr_cap)
        self.tr_n = 0

        self._init_state(cfg)
        for idx, act in enumerate(self._actions):
            self._push(act[0], EV_ACTION, idx, 0, 0)
        for i in range(n):
            if self.adv_mask[i]:
                self._start_policy(i, 0)

    # ---------------- rng ----------------

    @cython.cfunc
    def _rnd(self) -> cython.ulonglong:
        self.rs = (self.rs + 0x9E3779B97F4A7C15) & MASK64
        z: cython.ulonglong = self.rs
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    @cython.cfunc
    def _below(self, bound: cython.longlong) -> cython.longlong:
        return self._rnd() % bound

    @cython.cfunc
    def _rnd_adv(self) -> cython.ulonglong:
        self.ra = (self.ra + 0x9E3779B97F4A7C15) & MASK64
        z: cython.ulonglong = self.ra
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    @cython.cfunc
    def _below_adv(self, bound: cython.longlong) -> cython.longlong:
        return self._rnd_adv() % bound

    # ---------------- event heap ----------------

    @cython.cfunc
    def _hgrow(self):
        cap: cython.longlong = self.hcap * 2
        nk1 = _zeros(cap); nk2 = _zeros(cap); nkind = _zeros(cap)
        na = _zeros(cap); nb = _zeros(cap); nc = _zeros(cap)
        i: cython.longlong = 0
        while i < self.hn:
            nk1[i] = self.hk1[i]; nk2[i] = self.hk2[i]; nkind[i] = self.hkind[i]
            na[i] = self.ha[i]; nb[i] = self.hb[i]; nc[i] = self.hc[i]
            i += 1
        self.hk1 = nk1; self.hk2 = nk2; self.hkind = nkind
        self.ha = na; self.hb = nb; self.hc = nc
        self.hcap = cap

    @cython.cfunc
    def _push(self, t: cython.longlong, kind: cython.longlong, a: cython.longlong,
              b: cython.longlong, c: cython.longlong):
        if self.hn >= self.hcap:
            self._hgrow()
        i: cython.longlong = self.hn
        self.hn += 1
        self.seq += 1
        k1: cython.longlong = t * 8 + _PRIO[kind]
        k2: cython.longlong = self.seq
        hk1 = self.hk1; hk2 = self.hk2; hkind = self.hkind
        ha = self.ha; hb = self.hb; hc = self.hc
        while i > 0:
            p: cython.longlong = (i - 1) >> 1
            if hk1[p] > k1 or (hk1[p] == k1 and hk2[p] > k2):
                hk1[i] = hk1[p]; hk2[i] = hk2[p]; hkind[i] = hkind[p]
                ha[i] = ha[p]; hb[i] = hb[p]; hc[i] = hc[p]
                i = p
            else:
                break
        hk1[i] = k1; hk2[i] = k2; hkind[i] = kind
        ha[i] = a; hb[i] = b; hc[i] = c

    @cython.cfunc
    def _pop(self) -> cython.longlong:
        if self.hn == 0:
            return 0
        hk1 = self.hk1; hk2 = self.hk2; hkind = self.hkind
        ha = self.ha; hb = self.hb; hc = self.hc
        self.pk_t = hk1[0] >> 3
        self.pk_kind = hkind[0]
        self.pk_a = ha[0]
        self.pk_b = hb[0]
        self.pk_c = hc[0]
        self.hn -= 1
        last: cython.longlong = self.hn
        if last == 0:
            return 1
        k1: cython.longlong = hk1[last]
        k2: cython.longlong = hk2[last]
        kk: cython.longlong = hkind[last]
        aa: cython.longlong = ha[last]
        bb: cython.longlong = hb[last]
        cc: cython.longlong = hc[last]
        i: cython.longlong = 0
        while True:
            l: cython.longlong = 2 * i + 1
            if l >= last:
                break
            r: cython.longlong = l + 1
            if r < last and (hk1[r] < hk1[l] or (hk1[r] == hk1[l] and hk2[r] < hk2[l])):
                l = r
            if hk1[l] < k1 or (hk1[l] == k1 and hk2[l] < k2):
                hk1[i] = hk1[l]; hk2[i] = hk2[l]; hkind[i] = hkind[l]
                ha[i] = ha[l]; hb[i] = hb[l]; hc[i] = hc[l]
                i = l
            else:
                break
        hk1[i] = k1; hk2[i] = k2; hkind[i] = kk
        ha[i] = aa; hb[i] = bb; hc[i] = cc
        return 1

    # ---------------- trace ----------------

    @cython.cfunc
    def _trgrow(self):
        cap: cython.longlong = self.tr_cap * 2
        nt = _zeros(cap); nn = _zeros(cap); nm = _zeros(cap)
        ns = _zeros(cap); na = _zeros(cap)
        i: cython.longlong = 0
        while i < self.tr_n:
            nt[i] = self.tr_t[i]; nn[i] = self.tr_node[i]; nm[i] = self.tr_mach[i]
            ns[i] = self.tr_state[i]; na[i] = self.tr_aux[i]
            i += 1
        self.tr_t = nt; self.tr_node = nn; self.tr_mach = nm
        self.tr_state = ns; self.tr_aux = na
        self.tr_cap = cap

    @cython.cfunc
    def _record(self, t: cython.longlong, node: cython.longlong, mach: cython.longlong,
                state: cython.longlong, aux: cython.longlong):
        if self.tr_n >= self.tr_cap:
            self._trgrow()
        i: cython.longlong = self.tr_n
        self.tr_t[i] = t
        self.tr_node[i] = node
        self.tr_mach[i] = mach
        self.tr_state[i] = state
        self.tr_aux[i] = aux
        self.tr_n = i + 1

    def trace_arrays(self):
        """The recorded trace as five equal-length lists of ints."""
        k = self.tr_n
        return (
            list(self.tr_t[:k]), list(self.tr_node[:k]), list(self.tr_mach[:k]),
            list(self.tr_state[:k]), list(self.tr_aux[:k]),
        )

    # ---------------- clocks ----------------

    @cython.cfunc
    def _clk_inv(self, fast: cython.longlong, i: cython.longlong, t0: cython.longlong,
                 dur: cython.longlong) -> cython.longlong:
        """First t1 >= t0 whose local elapsed time since t0 reaches dur."""
        off: cython.longlong
        cnt: cython.longlong
        q: cython.longlong
        if fast:
            off = self.fclk_off[i]; cnt = self.fclk_cnt[i]; q = self.fclk_q[i]
            seg_start = self.fseg_start; seg_units = self.fseg_units
        else:
            off = self.mclk_off[i]; cnt = self.mclk_cnt[i]; q = self.mclk_q[i]
            seg_start = self.mseg_start; seg_units = self.mseg_units
        need: cython.longlong = dur * q
        k: cython.longlong = 0
        j: cython.longlong = 1
        while j < cnt and seg_start[off + j] <= t0:
            k = j
            j += 1
        pos: cython.longlong = t0
        while True:
            units: cython.longlong = seg_units[off + k]
            fits: cython.longlong = (need + units - 1) // units
            if k + 1 >= cnt:
                return pos + fits
            end: cython.longlong = seg_start[off + k + 1]
            if pos + fits <= end:
                return pos + fits
            need -= (end - pos) * units
            pos = end
            k += 1

    @cython.cfunc
    def _clk_set_rate(self, fast: cython.longlong, i: cython.longlong,
                      t: cython.longlong, units: cython.longlong):
        """Append a rate segment (units = local 1/q-units per ps from t on)."""
        off: cython.longlong
        cnt: cython.longlong
        if fast:
            off = self.fclk_off[i]; cnt = self.fclk_cnt[i]
            seg_start = self.fseg_start; seg_units = self.fseg_units
        else:
            off = self.mclk_off[i]; cnt = self.mclk_cnt[i]
            seg_start = self.mseg_start; seg_units = self.mseg_units
        while cnt > 1 and seg_start[off + cnt - 1] >= t:
            cnt -= 1
        seg_start[off + cnt] = t
        seg_units[off + cnt] = units
        cnt += 1
        if fast:
            self.fclk_cnt[i] = cnt
        else:
            self.mclk_cnt[i] = cnt

    # ---------------- timers ----------------

    @cython.cfunc
    def _treset_slot(self, i: cython.longlong, slot: cython.longlong, t: cython.longlong):
        idx: cython.longlong = i * self.nslots + slot
        dur: cython.longlong
        if slot == S_R3:
            dur = self.r3_low + self._below(self.r3_high - self.r3_low + 1)
        else:
            dur = self.tdurs[slot]
        self.tgen[idx] += 1
        self.tport[idx] = 0
        self.treset[idx] = t
        self.tdur_cur[idx] = dur
        exp: cython.longlong = self._clk_inv(0, i, t, dur)
        self.texp[idx] = exp
        self._push(exp, EV_TIMER, i, slot, self.tgen[idx])

    # ---------------- word packing ----------------

    @cython.cfunc
    def _fatal_word(self, i: cython.longlong) -> cython.longlong:
        main: cython.longlong = self.act[i * 5 + M_MAIN]
        trig: cython.longlong = self.act[i * 5 + M_RTRIG]
        rsupp: cython.longlong = self.act[i * 5 + M_RSUPP]
        supp_bit: cython.longlong = 1 if RS_SUPP_BASE <= rsupp <= RS_SUPP_RESYNC else 0
        ext: cython.longlong = self.act[i * 5 + M_EXT]
        return _ENC[main] | trig << 4 | supp_bit << 5 | ext << 6 | rsupp << 8

    @cython.cfunc
    def _quick_word(self, i: cython.longlong) -> cython.longlong:
        st: cython.longlong = self.act[i * 5 + M_QUICK]
        bit: cython.longlong = 1 if st == PROPOSE_P else 0
        return bit | st << 1

    # ---------------- channel sends (one per node+layer per instant) ----

    @cython.cfunc
    def _send_f(self, i: cython.longlong, t: cython.longlong) -> cython.longlong:
        """Fan the product word out on every FATAL channel; returns the
        self-loop arrival instant."""
        word: cython.longlong = self._fatal_word(i)
        self_arr: cython.longlong = 0
        n: cython.longlong = self.n
        r: cython.longlong = 0
        while r < n:
            ch: cython.longlong = i * n + r
            delay: cython.longlong
            pol: cython.longlong = self.fpol[ch]
            if pol == POL_FIXED:
                delay = self.fpar1[ch]
            elif pol == POL_UNIFORM:
                delay = self.fpar1[ch] + self._below(self.fpar2[ch] - self.fpar1[ch] + 1)
            else:
                script = self._scripted_f.get((i, r))
                if not script:
                    raise ValueError(f"scripted channel {i}->{r} ran out of delays")
                delay = script.pop(0)
            arr: cython.longlong = t + delay
            if arr <= self.f_last_arr[ch]:
                arr = self.f_last_arr[ch] + 1
            self.f_last_arr[ch] = arr
            self._push(arr, EV_ARR_F, i, r, word)
            if r == i:
                self_arr = arr
            r += 1
        return self_arr

    @cython.cfunc
    def _send_q(self, i: cython.longlong, t: cython.longlong) -> cython.longlong:
        word: cython.longlong = self._quick_word(i)
        self_arr: cython.longlong = 0
        n: cython.longlong = self.n
        r: cython.longlong = 0
        while r < n:
            ch: cython.longlong = i * n + r
            delay: cython.longlong
            pol: cython.longlong = self.qpol[ch]
            if pol == POL_FIXED:
                delay = self.qpar1[ch]
            elif pol == POL_UNIFORM:
                delay = self.qpar1[ch] + self._below(self.qpar2[ch] - self.qpar1[ch] + 1)
            else:
                script = self._scripted_q.get((i, r))
                if not script:
                    raise ValueError(f"scripted quick channel {i}->{r} ran out of delays")
                delay = script.pop(0)
            arr: cython.longlong = t + delay
            if arr <= self.q_last_arr[ch]:
                arr = self.q_last_arr[ch] + 1
            self.q_last_arr[ch] = arr
            self._push(arr, EV_ARR_Q, i, r, word)
            if r == i:
                self_arr = arr
            r += 1
        return self_arr

    @cython.cfunc
    def _flush(self, t: cython.longlong):
        """End of instant: emit dirty product words, patch record aux fields."""
        n: cython.longlong = self.n
        i: cython.longlong = 0
        while i < n:
            if self.dirty_f[i] or self.dirty_q[i]:
                farr: cython.longlong = self._send_f(i, t) if self.dirty_f[i] else 0
                qarr: cython.longlong = self._send_q(i, t) if self.dirty_q[i] else 0
                self.dirty_f[i] = 0
                self.dirty_q[i] = 0
                k: cython.longlong = self.tr_n - 1
                while k >= 0 and self.tr_t[k] == t:
                    if self.tr_node[k] == i and self.tr_aux[k] == AUX_PENDING:
                        if self.tr_mach[k] == M_QUICK:
                            self.tr_aux[k] = qarr
                        elif self.tr_mach[k] <= M_RSUPP:
                            self.tr_aux[k] = farr
                    k -= 1
                self._mimic_hook(i, t)
            i += 1

    # ---------------- flag relatch helpers ----------------

    @cython.cfunc
    def _level_mask(self, i: cython.longlong, main_state: cython.longlong) -> cython.longlong:
        mask: cython.longlong = 0
        base: cython.longlong = i * self.n
        j: cython.longlong = 0
        while j < self.n:
            if self.obs_main[base + j] == main_state:
                mask |= 1 << j
            j += 1
        return mask

    @cython.cfunc
    def _supp_mask(self, i: cython.longlong) -> cython.longlong:
        mask: cython.longlong = 0
        base: cython.longlong = i * self.n
        j: cython.longlong = 0
        while j < self.n:
            if self.obs_supp[base + j] == 1:
                mask |= 1 << j
            j += 1
        return mask

    @cython.cfunc
    def _pp_mask(self, i: cython.longlong) -> cython.longlong:
        mask: cython.longlong = 0
        base: cython.longlong = i * self.n
        j: cython.longlong = 0
        while j < self.n:
            if self.obs_quick[base + j] == 1:
                mask |= 1 << j
            j += 1
        return mask

    # ---------------- machine evaluation ----------------
    # Each _eval_* returns count*4096 + dst*64; count is the number of
    # enabled transitions (hazard when > 1) and dst the highest-priority
    # target.  Zero means nothing enabled.

    @cython.cfunc
    def _eval_main(self, i: cython.longlong) -> cython.longlong:
        s: cython.longlong = self.obs_main[i * self.n + i]
        if s < 0:
            return 0
        a: cython.longlong = self.act[i * 5 + M_MAIN]
        base: cython.longlong = i * self.nslots
        pc = self.pc
        count: cython.longlong = 0
        dst: cython.longlong = -1

        if s == ACCEPT:
            if self.tport[base + S_T1] == 1:
                if pc[self.fl_acc[i]] >= self.thr_nf:
                    if a != SLEEP:
                        count += 1
                        dst = SLEEP
                else:
                    if a != RECOVER:
                        count += 1
                        dst = RECOVER
        elif s == SLEEP:
            if self.tport[base + S_SLEEP] == 1 and a != SLEEP_WAKING:
                count += 1
                dst = SLEEP_WAKING
        elif s == SLEEP_WAKING:
            if a != WAKING:
                count += 1
                dst = WAKING
        elif s == WAKING:
            if self.tport[base + S_T2] == 1 and a != READY:
                count += 1
                dst = READY
            if pc[self.fl_rec[i] | self.fl_acc[i]] >= self.thr_f1 and a != RECOVER:
                count += 1
                if dst < 0:
                    dst = RECOVER
        elif s == READY:
            ok: cython.longlong = 0
            if self.tport[base + S_T3] == 1 and self.mem_next[i] == 1:
                ok = 1
            elif self.tport[base + S_T4] == 1:
                ok = 1
            elif pc[self.fl_prop[i] | self.fl_acc[i]] >= self.thr_f1:
                ok = 1
            if ok and a != PROPOSE:
                count += 1
                dst = PROPOSE
        elif s == PROPOSE:
            if (pc[self.fl_prop[i] | self.fl_acc[i]] >= self.thr_nf
                    or pc[self.fl_acc[i]] >= self.thr_f1) and a != ACCEPT:
                count += 1
                dst = ACCEPT
            if self.tport[base + S_T5] == 1 and a != RECOVER:
                count += 1
                if dst < 0:
                    dst = RECOVER
        elif s == RECOVER:
            if self.tport[base + S_REC] == 1 and a != ACCEPT:
                obs_acc: cython.longlong = 0
                j: cython.longlong = 0
                while j < self.n:
                    if self.obs_main[i * self.n + j] == ACCEPT:
                        obs_acc += 1
                    j += 1
                if obs_acc >= self.thr_nf:
                    count += 1
                    dst = ACCEPT
            if a != JOIN and (self.fl_join[i] >> i) & 1 == 0:
                ext: cython.longlong = self.obs_ext[i]
                jok: cython.longlong = 0
                if self.tport[base + S_T6] == 1 and ext == ACTIVE:
                    jok = 1
                elif ext != DORMANT and ext <= ACTIVE \
                        and (self.tport[base + S_T7] == 1
                             or pc[self.fl_join[i]] >= self.thr_f1):
                    jok = 1
                if jok:
                    count += 1
                    if dst < 0:
                        dst = JOIN
        else:  # JOIN
            if pc[self.fl_join[i] | self.fl_prop[i] | self.fl_acc[i]] >= self.thr_nf \
                    and a != PROPOSE:
                count += 1
                dst = PROPOSE
            if self.obs_ext[i] == DORMANT and a != RECOVER:
                count += 1
                if dst < 0:
                    dst = RECOVER
        if count == 0:
            return 0
        return count * 4096 + dst * 64

    @cython.cfunc
    def _eval_ext(self, i: cython.longlong) -> cython.longlong:
        s: cython.longlong = self.obs_ext[i]
        a: cython.longlong = self.act[i * 5 + M_EXT]
        in_resync: cython.longlong = 1 if self.obs_rsupp[i] == RS_RESYNC else 0
        count: cython.longlong = 0
        dst: cython.longlong = -1
        if s == DORMANT:
            if in_resync and a != PASSIVE:
                count += 1
                dst = PASSIVE
        elif s == PASSIVE:
            if not in_resync and a != DORMANT:
                count += 1
                dst = DORMANT
            if self.pc[self.fl_sw[i]] >= self.thr_f1 and a != ACTIVE:
                count += 1
                if dst < 0:
                    dst = ACTIVE
        elif s == ACTIVE:
            if not in_resync and a != DORMANT:
                count += 1
                dst = DORMANT
        if count == 0:
            return 0
        return count * 4096 + dst * 64

    @cython.cfunc
    def _eval_rtrig(self, i: cython.longlong) -> cython.longlong:
        s: cython.longlong = self.obs_trig[i * self.n + i]
        a: cython.longlong = self.act[i * 5 + M_RTRIG]
        if s == INIT:
            if a != WAIT:
                return 4096 + WAIT * 64
        elif s == WAIT:
            if self.tport[i * self.nslots + S_R3] == 1 and a != INIT:
                return 4096 + INIT * 64
        return 0

    @cython.cfunc
    def _eval_rsupp(self, i: cython.longlong) -> cython.longlong:
        s: cython.longlong = self.obs_rsupp[i]
        a: cython.longlong = self.act[i * 5 + M_RSUPP]
        base: cython.longlong = i * self.nslots
        count: cython.longlong = 0
        dst: cython.longlong = -1
        n: cython.longlong = self.n
        is_supp: cython.longlong = 1 if RS_SUPP_BASE <= s < RS_SUPP_BASE + n else 0
        if s == RS_NONE or is_supp:
            cur: cython.longlong = s - RS_SUPP_BASE if is_supp else -1
            j: cython.longlong = 0
            while j < n:
                if j != cur and self.obs_trig[i * n + j] == INIT \
                        and self.tport[base + S_R2_BASE + j] == 1 \
                        and a != RS_SUPP_BASE + j:
                    count += 1
                    if dst < 0:
                        dst = RS_SUPP_BASE + j
                j += 1
            if is_supp:
                if self.pc[self.fl_supp[i]] >= self.thr_nf and a != RS_SUPP_RESYNC:
                    count += 1
                    if dst < 0:
                        dst = RS_SUPP_RESYNC
                if self.tport[base + S_R2_BASE + n + cur] == 1 and a != RS_NONE:
                    count += 1
                    if dst < 0:
                        dst = RS_NONE
        elif s == RS_SUPP_RESYNC:
            if self.tport[base + S_SR] == 1 and a != RS_RESYNC:
                count += 1
                dst = RS_RESYNC
        elif s == RS_RESYNC:
            if self.tport[base + S_R1] == 1 and a != RS_NONE:
                count += 1
                dst = RS_NONE
        if count == 0:
            return 0
        return count * 4096 + dst * 64

    @cython.cfunc
    def _eval_quick(self, i: cython.longlong) -> cython.longlong:
        if not self.quick_on:
            return 0
        s: cython.longlong = self.obs_quickst[i]
        a: cython.longlong = self.act[i * 5 + M_QUICK]
        base: cython.longlong = i * self.nslots
        t2p: cython.longlong = self.tport[base + S_T2P]
        if s == ACCEPT_P:
            if self.tport[base + S_T1P] == 1 and t2p == 1 and a != READY_P:
                return 4096 + READY_P * 64
        elif s == READY_P:
            if a != PROPOSE_P and (self.tport[base + S_T3P] == 1
                                   or self.pc[self.fl_pp[i]] >= self.thr_f1
                                   or t2p == 0):
                return 4096 + PROPOSE_P * 64
        elif s == PROPOSE_P:
            if a != ACCEPT_P and (self.pc[self.fl_pp[i]] >= self.thr_nf or t2p == 0):
                return 4096 + ACCEPT_P * 64
        return 0

    # ---------------- commits ----------------

    @cython.cfunc
    def _commit(self, i: cython.longlong, m: cython.longlong, src: cython.longlong,
                dst: cython.longlong, t: cython.longlong):
        self.act[i * 5 + m] = dst
        self.last_commit[i * 5 + m] = t

        # flag resets: the reset wins the instant, then levels re-latch
        if m == M_MAIN:
            if src == SLEEP_WAKING and dst == WAKING:
                self.fl_acc[i] = self._level_mask(i, ACCEPT)
                self.fl_rec[i] = self._level_mask(i, RECOVER)
            elif src == WAKING and dst == READY:
                self.fl_prop[i] = self._level_mask(i, PROPOSE)
                self.mem_next[i] = 0
            elif dst == ACCEPT:  # from propose or recover
                self.fl_acc[i] = self._level_mask(i, ACCEPT)
            elif src == RECOVER and dst == JOIN:
                self.fl_prop[i] = self._level_mask(i, PROPOSE)
                self.fl_acc[i] = self._level_mask(i, ACCEPT)
        elif m == M_EXT:
            if src == DORMANT and dst == PASSIVE:
                self.fl_join[i] = self._level_mask(i, JOIN)
                self.fl_sw[i] = self._level_mask(i, SLEEP_WAKING)
        elif m == M_RSUPP:
            if RS_SUPP_BASE <= dst < RS_SUPP_RESYNC:
                self.fl_supp[i] = self._supp_mask(i)
        elif m == M_QUICK:
            if src == ACCEPT_P and dst == READY_P:
                self.fl_pp[i] = self._pp_mask(i)

        # timer resets for the entered state
        if m == M_MAIN:
            if dst == ACCEPT:
                self._treset_slot(i, S_T1, t)
                self._treset_slot(i, S_T2, t)
                if self.quick_on:
                    self._treset_slot(i, S_T2P, t)
            elif dst == SLEEP:
                self._treset_slot(i, S_SLEEP, t)
            elif dst == READY:
                self._treset_slot(i, S_T3, t)
                self._treset_slot(i, S_T4, t)
            elif dst == PROPOSE:
                self._treset_slot(i, S_T5, t)
            elif dst == RECOVER:
                self._treset_slot(i, S_REC, t)
        elif m == M_EXT:
            if dst == ACTIVE:
                self._treset_slot(i, S_T6, t)
            elif dst == PASSIVE:
                self._treset_slot(i, S_T7, t)
        elif m == M_RTRIG:
            if dst == WAIT:
                self._treset_slot(i, S_R3, t)
        elif m == M_RSUPP:
            if dst == RS_SUPP_RESYNC:
                self._treset_slot(i, S_SR, t)
                self._treset_slot(i, S_R1, t)
            elif RS_SUPP_BASE <= dst < RS_SUPP_RESYNC:
                j: cython.longlong = dst - RS_SUPP_BASE
                self._treset_slot(i, S_R2_BASE + j, t)
                self._treset_slot(i, S_R2_BASE + self.n + j, t)
        elif m == M_QUICK:
            if dst == ACCEPT_P:
                self._treset_slot(i, S_T1P, t)
                self._on_quick_accept(i, t)
            elif dst == READY_P:
                self._treset_slot(i, S_T3P, t)

        if m == M_QUICK:
            self.dirty_q[i] = 1
        else:
            self.dirty_f[i] = 1
        self._record(t, i, m, dst, AUX_PENDING)

    @cython.cfunc
    def _on_quick_accept(self, i: cython.longlong, t: cython.longlong):
        old: cython.longlong = self.cyc[i]
        self.cyc[i] = (old + 1) % self.big_m
        self._record(t, i, REC_CYCLE, self.cyc[i], 0)
        if self.cyc[i] == 0 and old != 0:
            self.mem_next[i] = 1
        if self.fast_on:
            self.fastv[i] = 0
            self.fast_gen[i] += 1
            if self.fast_m == 1:
                self.fast_halt[i] = 1
            else:
                self.fast_halt[i] = 0
                self._push(self._clk_inv(1, i, t, self.fast_period), EV_TICK,
                           i, self.fast_gen[i], 0)
            if self.rec_fast:
                self._record(t, i, REC_FAST, 0, 0)

    @cython.cfunc
    def _forced_counter_reset(self, i: cython.longlong, t: cython.longlong):
        old: cython.longlong = self.cyc[i]
        if old != 0:
            self.cyc[i] = 0
            self._record(t, i, REC_CYCLE, 0, 1)  # aux 1 marks a forced reset
            self.mem_next[i] = 1

    # ---------------- node evaluation loop ----------------

    @cython.cfunc
    def _evaluate_node(self, i: cython.longlong, t: cython.longlong):
        if self.adv_mask[i]:
            return
        while True:
            progressed: cython.longlong = 0
            m: cython.longlong = 0
            while m < 5:
                if self.last_commit[i * 5 + m] != t:
                    packed: cython.longlong = 0
                    if m == M_MAIN:
                        packed = self._eval_main(i)
                    elif m == M_EXT:
                        packed = self._eval_ext(i)
                    elif m == M_RTRIG:
                        packed = self._eval_rtrig(i)
                    elif m == M_RSUPP:
                        packed = self._eval_rsupp(i)
                    else:
                        packed = self._eval_quick(i)
                    if packed != 0:
                        count: cython.longlong = packed // 4096
                        dst: cython.longlong = (packed // 64) % 64
                        if count > 1:
                            self._record(t, i, REC_HAZARD, m, count)
                        src: cython.longlong
                        if m == M_MAIN:
                            src = self.obs_main[i * self.n + i]
                        elif m == M_EXT:
                            src = self.obs_ext[i]
                        elif m == M_RTRIG:
                            src = self.obs_trig[i * self.n + i]
                        elif m == M_RSUPP:
                            src = self.obs_rsupp[i]
                        else:
                            src = self.obs_quickst[i]
                        self._commit(i, m, src, dst, t)
                        progressed = 1
                m += 1
            if not progressed:
                break

    # ---------------- event handlers ----------------

    @cython.cfunc
    def _apply_arrival_f(self, snd: cython.longlong, rcv: cython.longlong,
                         word: cython.longlong, t: cython.longlong):
        base: cython.longlong = rcv * self.n + snd
        code: cython.longlong = word & 15
        self.obs_code[base] = code
        main: cython.longlong = _DEC[code]
        self.obs_main[base] = main
        self.obs_trig[base] = (word >> 4) & 1
        self.obs_supp[base] = (word >> 5) & 1
        if snd == rcv:
            self.obs_ext[rcv] = (word >> 6) & 3
            self.obs_rsupp[rcv] = (word >> 8) & 63
        bit: cython.longlong = 1 << snd
        if main == ACCEPT:
            self.fl_acc[rcv] |= bit
        elif main == PROPOSE:
            self.fl_prop[rcv] |= bit
        elif main == RECOVER:
            self.fl_rec[rcv] |= bit
        elif main == JOIN:
            self.fl_join[rcv] |= bit
        elif main == SLEEP_WAKING:
            self.fl_sw[rcv] |= bit
        if (word >> 5) & 1:
            self.fl_supp[rcv] |= bit
        self._evaluate_node(rcv, t)

    @cython.cfunc
    def _apply_arrival_q(self, snd: cython.longlong, rcv: cython.longlong,
                         word: cython.longlong, t: cython.longlong):
        base: cython.longlong = rcv * self.n + snd
        bit: cython.longlong = word & 1
        self.obs_quick[base] = bit
        if snd == rcv:
            self.obs_quickst[rcv] = (word >> 1) & 3
        if bit:
            self.fl_pp[rcv] |= 1 << snd
        self._evaluate_node(rcv, t)

    @cython.cfunc
    def _apply_timer(self, i: cython.longlong, slot: cython.longlong,
                     gen: cython.longlong, t: cython.longlong):
        idx: cython.longlong = i * self.nslots + slot
        if self.tgen[idx] != gen:
            return
        self.tport[idx] = 1
        self.texp[idx] = TIME_INF
        if slot == S_T2P and self.quick_on and not self.adv_mask[i]:
            self._forced_counter_reset(i, t)
        self._evaluate_node(i, t)

    @cython.cfunc
    def _apply_tick(self, i: cython.longlong, gen: cython.longlong, t: cython.longlong):
        if self.fast_gen[i] != gen or self.fast_halt[i] or self.adv_mask[i]:
            return
        self.fastv[i] += 1
        if self.rec_fast:
            self._record(t, i, REC_FAST, self.fastv[i], 0)
        if self.fastv[i] >= self.fast_m - 1:
            self.fastv[i] = self.fast_m - 1
            self.fast_halt[i] = 1
        else:
            self._push(self._clk_inv(1, i, t, self.fast_period), EV_TICK, i, gen, 0)

    # ---------------- adversary ----------------

    def _start_policy(self, i, t):
        kind = self.adv_kind[i]
        if kind == ADV_CONSTANT:
            self._push(t + 1, EV_ADV, i, 0, 0)
        elif kind == ADV_RANDOM_WALK:
            self._push(t + 1 + self._below_adv(self.adv_p1[i]), EV_ADV, i, 0, 0)
        elif kind == ADV_REPLAY:
            for (et, r, layer, word) in self._adv_scripts.get(i, []):
                self._emit(i, r, layer, word, et if et > t else t + 1)
        elif kind == ADV_CALLBACK:
            self._push(t + 1, EV_ADV, i, 0, 0)
        # silent and mimic schedule nothing here

    def _emit(self, i, r, layer, word, t):
        """Adversary word on channel i->r at instant t (clamped monotone)."""
        targets = range(self.n) if r < 0 else (r,)
        for rr in targets:
            ch = i * self.n + rr
            if layer == 0:
                arr = t if t > self.f_last_arr[ch] else self.f_last_arr[ch] + 1
                self.f_last_arr[ch] = arr
                self._push(arr, EV_ARR_F, i, rr, word)
            else:
                arr = t if t > self.q_last_arr[ch] else self.q_last_arr[ch] + 1
                self.q_last_arr[ch] = arr
                self._push(arr, EV_ARR_Q, i, rr, word)

    def _apply_adv(self, i, t):
        if not self.adv_mask[i]:
            return
        kind = self.adv_kind[i]
        if kind == ADV_CONSTANT:
            self._emit(i, -1, 0, self.adv_p1[i] & 0x3FFF, t)
            if self.quick_on:
                self._emit(i, -1, 1, (self.adv_p1[i] >> 14) & 7, t)
        elif kind == ADV_RANDOM_WALK:
            for rr in range(self.n):
                if rr == i:
                    continue
                self._emit(i, rr, 0, self._rnd_adv() & 0x3FFF, t)
                if self.quick_on:
                    self._emit(i, rr, 1, self._rnd_adv() & 7, t)
            self._push(t + 1 + self._below_adv(self.adv_p1[i]), EV_ADV, i, 0, 0)
        elif kind == ADV_CALLBACK and self._adv_callback is not None:
            view = {
                "time": t,
                "n": self.n,
                "node": i,
                "trace_len": self.tr_n,
                "observed_main": [self.obs_main[i * self.n + j] for j in range(self.n)],
            }
            nxt, emissions = self._adv_callback(view)
            for (et, r, layer, word) in emissions:
                self._emit(i, r, layer, word, et if et > t else t)
            if nxt is not None and nxt > t:
                self._push(nxt, EV_ADV, i, 0, 0)

    @cython.cfunc
    def _mimic_hook(self, src: cython.longlong, t: cython.longlong):
        i: cython.longlong = 0
        while i < self.n:
            if self.adv_mask[i] and self.adv_kind[i] == ADV_MIMIC \
                    and self.adv_p1[i] == src:
                self._emit(i, -1, 0, self._fatal_word(src), t + self.adv_p2[i])
                if self.quick_on:
                    self._emit(i, -1, 1, self._quick_word(src), t + self.adv_p2[i])
            i += 1

    # ---------------- mid-run actions ----------------

    def _apply_action(self, idx, t):
        act = self._actions[idx]
        kind = act[1]
        if kind == "reset_node":
            self._reset_node(act[2], t, act[3] if len(act) > 3 else None)
        elif kind == "set_clock_rate":
            _, _, i, units, fast = act
            self._clk_set_rate(1 if fast else 0, i, t, units)
            if fast:
                if self.fast_on and not self.fast_halt[i] and not self.adv_mask[i]:
                    self.fast_gen[i] += 1
                    self._push(self._clk_inv(1, i, t, self.fast_period), EV_TICK,
                               i, self.fast_gen[i], 0)
            else:
                self._reschedule_timers(i, t)
        elif kind == "set_delay":
            _, _, i, j, layer, pol, p1, p2 = act
            ch = i * self.n + j
            if layer == 0:
                self.fpol[ch] = pol
                self.fpar1[ch] = p1
                self.fpar2[ch] = p2
            else:
                self.qpol[ch] = pol
                self.qpar1[ch] = p1
                self.qpar2[ch] = p2
        elif kind == "set_fault":
            _, _, i, on = act
            if on and not self.adv_mask[i]:
                self.adv_mask[i] = 1
                self._start_policy(i, t)
            elif not on and self.adv_mask[i]:
                self.adv_mask[i] = 0
                for m in (M_MAIN, M_EXT, M_RTRIG, M_RSUPP):
                    self._record(t, i, m, self.act[i * 5 + m], AUX_PENDING)
                self.dirty_f[i] = 1
                if self.quick_on:
                    self._record(t, i, M_QUICK, self.act[i * 5 + M_QUICK], AUX_PENDING)
                    self.dirty_q[i] = 1
                self._evaluate_node(i, t)

    def _reschedule_timers(self, i, t):
        """Recompute pending expiries of node i after a rate change at t."""
        for slot in range(self.nslots):
            idx = i * self.nslots + slot
            if self.texp[idx] != TIME_INF and self.tport[idx] == 0:
                exp = self._clk_inv(0, i, self.treset[idx], self.tdur_cur[idx])
                self.tgen[idx] += 1
                self.texp[idx] = exp
                self._push(exp, EV_TIMER, i, slot, self.tgen[idx])

    def _reset_node(self, i, t, explicit):
        """Re-initialize a node mid-run: fresh state, cleared flags, timers reset."""
        if self.adv_mask[i]:
            return
        if explicit is not None:
            states = explicit
        else:
            states = (
                self._below(8), self._below(3), self._below(2),
                self._rand_rsupp(), self._below(3),
            )
        for m in range(5):
            self.act[i * 5 + m] = states[m]
        for fl in (self.fl_acc, self.fl_prop, self.fl_rec, self.fl_join,
                   self.fl_sw, self.fl_supp, self.fl_pp):
            fl[i] = 0
        self.mem_next[i] = 0
        self.cyc[i] = 0
        self.fastv[i] = 0
        self.fast_halt[i] = 0 if self.fast_m > 1 else 1
        self.fast_gen[i] += 1
        for slot in range(self.nslots):
            if slot in (S_T2P, S_T1P, S_T3P) and not self.quick_on:
                continue
            self._treset_slot(i, slot, t)
        for m in (M_MAIN, M_EXT, M_RTRIG, M_RSUPP):
            self._record(t, i, m, self.act[i * 5 + m], AUX_PENDING)
        self.dirty_f[i] = 1
        if self.quick_on:
            self._record(t, i, M_QUICK, self.act[i * 5 + M_QUICK], AUX_PENDING)
            self._record(t, i, REC_CYCLE, 0, 0)
            self.dirty_q[i] = 1
            if self.fast_on and self.fast_m > 1:
                self._push(self._clk_inv(1, i, t, self.fast_period), EV_TICK,
                           i, self.fast_gen[i], 0)
        self._evaluate_node(i, t)

    def _rand_rsupp(self):
        v = self._below(self.n + 3)
        if v == 0:
            return RS_NONE
        if v <= self.n:
            return RS_SUPP_BASE + (v - 1)
        return RS_SUPP_RESYNC if v == self.n + 1 else RS_RESYNC

    # ---------------- initialization ----------------

    def _init_state(self, cfg):
        n = self.n
        mode = cfg.get("init_mode", "random")
        if mode == "explicit":
            for i in range(n):
                self.act[i * 5 + M_MAIN] = cfg["init_main"][i]
                self.act[i * 5 + M_EXT] = cfg["init_ext"][i]
                self.act[i * 5 + M_RTRIG] = cfg["init_trig"][i]
                self.act[i * 5 + M_RSUPP] = cfg["init_rsupp"][i]
                self.act[i * 5 + M_QUICK] = cfg["init_quick"][i]
            for i in range(n):
                for j in range(n):
                    base = i * n + j
                    self.obs_code[base] = _ENC[self.act[j * 5 + M_MAIN]]
                    self.obs_main[base] = self.act[j * 5 + M_MAIN]
                    self.obs_trig[base] = self.act[j * 5 + M_RTRIG]
                    rs = self.act[j * 5 + M_RSUPP]
                    self.obs_supp[base] = 1 if RS_SUPP_BASE <= rs <= RS_SUPP_RESYNC else 0
                    self.obs_quick[base] = 1 if self.act[j * 5 + M_QUICK] == PROPOSE_P else 0
                self.obs_ext[i] = self.act[i * 5 + M_EXT]
                self.obs_rsupp[i] = self.act[i * 5 + M_RSUPP]
                self.obs_quickst[i] = self.act[i * 5 + M_QUICK]
            flags_mode = cfg.get("init_flags", "from_obs")
            for i in range(n):
                if flags_mode == "ones":
                    full = (1 << n) - 1
                    for fl in (self.fl_acc, self.fl_prop, self.fl_rec, self.fl_join,
                               self.fl_sw, self.fl_supp, self.fl_pp):
                        fl[i] = full
                elif flags_mode == "from_obs":
                    self.fl_acc[i] = self._level_mask(i, ACCEPT)
                    self.fl_prop[i] = self._level_mask(i, PROPOSE)
                    self.fl_rec[i] = self._level_mask(i, RECOVER)
                    self.fl_join[i] = self._level_mask(i, JOIN)
                    self.fl_sw[i] = self._level_mask(i, SLEEP_WAKING)
                    self.fl_supp[i] = self._supp_mask(i)
                    self.fl_pp[i] = self._pp_mask(i)
            # timers triggered by the initial state reset at 0; all others
            # start expired, like long-unreset watchdogs
            for i in range(n):
                for slot in range(self.nslots):
                    if slot in (S_T2P, S_T1P, S_T3P) and not self.quick_on:
                        continue
                    if self._slot_matches_state(i, slot):
                        self._treset_slot(i, slot, 0)
                    else:
                        self.tport[i * self.nslots + slot] = 1
        else:
            for i in range(n):
                self.act[i * 5 + M_MAIN] = self._below(8)
                self.act[i * 5 + M_EXT] = self._below(3)
                self.act[i * 5 + M_RTRIG] = self._below(2)
                self.act[i * 5 + M_RSUPP] = self._rand_rsupp()
                self.act[i * 5 + M_QUICK] = self._below(3)
                for fl in (self.fl_acc, self.fl_prop, self.fl_rec, self.fl_join,
                           self.fl_sw, self.fl_supp, self.fl_pp):
                    fl[i] = self._below(1 << n)
                self.mem_next[i] = self._below(2)
                self.cyc[i] = self._below(self.big_m)
                self.fastv[i] = self._below(self.fast_m)
                self.fast_halt[i] = 1 if self.fastv[i] == self.fast_m - 1 else 0
                for slot in range(self.nslots):
                    if slot in (S_T2P, S_T1P, S_T3P) and not self.quick_on:
                        continue
                    idx = i * self.nslots + slot
                    if slot == S_R3:
                        dur = self.r3_low + self._below(self.r3_high - self.r3_low + 1)
                    else:
                        dur = self.tdurs[slot]
                    phase = self._below(dur + 1)
                    if phase == dur:
                        self.tport[idx] = 1
                    else:
                        self.tgen[idx] += 1
                        self.treset[idx] = 0
                        self.tdur_cur[idx] = dur
                        exp = self._clk_inv(0, i, 0, dur - phase)
                        self.texp[idx] = exp
                        self._push(exp, EV_TIMER, i, slot, self.tgen[idx])
            for i in range(n):
                for j in range(n):
                    base = i * n + j
                    self.obs_code[base] = _ENC[self._below(8)]
                    self.obs_main[base] = _DEC[self.obs_code[base]]
                    self.obs_trig[base] = self._below(2)
                    self.obs_supp[base] = self._below(2)
                    self.obs_quick[base] = self._below(2)
                self.obs_ext[i] = self._below(3)
                self.obs_rsupp[i] = self._rand_rsupp()
                self.obs_quickst[i] = self._below(3)
            # every channel syncs to the sender's true word within one delay
            for i in range(n):
                word = self._fatal_word(i)
                qword = self._quick_word(i)
                for r in range(n):
                    ch = i * n + r
                    delay = 1 + self._below(self.d - 1 if self.d > 1 else 1)
                    self.f_last_arr[ch] = delay
                    self._push(delay, EV_ARR_F, i, r, word)
                    if self.quick_on:
                        span = self.qpar2[ch] - self.qpar1[ch] + 1
                        qd = self.qpar1[ch] + self._below(span if span > 0 else 1)
                        self.q_last_arr[ch] = qd
                        self._push(qd, EV_ARR_Q, i, r, qword)
            if self.fast_on and self.fast_m > 1:
                for i in range(n):
                    if not self.fast_halt[i]:
                        self.fast_gen[i] += 1
                        self._push(self._clk_inv(1, i, 0, 1 + self._below(self.fast_period)),
                                   EV_TICK, i, self.fast_gen[i], 0)

        for i in range(n):
            if self.adv_mask[i]:
                continue
            for m in (M_MAIN, M_EXT, M_RTRIG, M_RSUPP):
                self._record(0, i, m, self.act[i * 5 + m], 0)
            if self.quick_on:
                self._record(0, i, M_QUICK, self.act[i * 5 + M_QUICK], 0)
                self._record(0, i, REC_CYCLE, self.cyc[i], 0)

    def _slot_matches_state(self, i, slot):
        if slot in (S_T1, S_T2, S_T2P):
            return self.act[i * 5 + M_MAIN] == ACCEPT
        if slot == S_SLEEP:
            return self.act[i * 5 + M_MAIN] == SLEEP
        if slot in (S_T3, S_T4):
            return self.act[i * 5 + M_MAIN] == READY
        if slot == S_T5:
            return self.act[i * 5 + M_MAIN] == PROPOSE
        if slot == S_REC:
            return self.act[i * 5 + M_MAIN] == RECOVER
        if slot == S_T6:
            return self.act[i * 5 + M_EXT] == ACTIVE
        if slot == S_T7:
            return self.act[i * 5 + M_EXT] == PASSIVE
        if slot in (S_SR, S_R1):
            return self.act[i * 5 + M_RSUPP] == RS_SUPP_RESYNC
        if slot == S_R3:
            return self.act[i * 5 + M_RTRIG] == WAIT
        if slot == S_T1P:
            return self.act[i * 5 + M_QUICK] == ACCEPT_P
        if slot == S_T3P:
            return self.act[i * 5 + M_QUICK] == READY_P
        if S_R2_BASE <= slot < S_R2_BASE + self.n:
            return self.act[i * 5 + M_RSUPP] == RS_SUPP_BASE + (slot - S_R2_BASE)
        j = slot - S_R2_BASE - self.n
        return self.act[i * 5 + M_RSUPP] == RS_SUPP_BASE + j

    # ---------------- main loop ----------------

    def run(self):
        """Drain the event queue up to the horizon; returns trace length."""
        i: cython.longlong = 0
        while i < self.n:
            self._evaluate_node(i, 0)
            i += 1
        self._flush(0)
        while self._pop():
            t: cython.longlong = self.pk_t
            if t > self.horizon:
                break
            self.now = t
            self._dispatch(t)
            while self.hn > 0 and (self.hk1[0] >> 3) == t:
                self._pop()
                self._dispatch(t)
            self._flush(t)
        return self.tr_n

    @cython.cfunc
    def _dispatch(self, t: cython.longlong):
        kind: cython.longlong = self.pk_kind
        if kind == EV_ARR_F:
            self._apply_arrival_f(self.pk_a, self.pk_b, self.pk_c, t)
        elif kind == EV_ARR_Q:
            self._apply_arrival_q(self.pk_a, self.pk_b, self.pk_c, t)
        elif kind == EV_TIMER:
            self._apply_timer(self.pk_a, self.pk_b, self.pk_c, t)
        elif kind == EV_TICK:
            self._apply_tick(self.pk_a, self.pk_b, t)
        elif kind == EV_ACTION:
            self._apply_action(self.pk_a, t)
        else:
            self._apply_adv(self.pk_a, t)

    # ---------------- introspection for tests ----------------

    def snapshot(self, i):
        """Plain-dict view of node i's guard inputs (slow; tests only)."""
        n = self.n
        timers = {}
        names = {
            S_T1: "t1", S_T2: "t2", S_T2P: "t2p", S_SLEEP: "t_sleep", S_T3: "t3",
            S_T4: "t4", S_T5: "t5", S_REC: "t_recover", S_T6: "t6", S_T7: "t7",
            S_SR: "t_suppresync", S_R1: "r1", S_R3: "r3", S_T1P: "t1p", S_T3P: "t3p",
        }
        for slot in range(self.nslots):
            if slot in names:
                key = names[slot]
            elif slot < S_R2_BASE + n:
                key = f"r2@{slot - S_R2_BASE}"
            else:
                key = f"t_supp@{slot - S_R2_BASE - n}"
            timers[key] = self.tport[i * self.nslots + slot]
        return {
            "actual": [self.act[i * 5 + m] for m in range(5)],
            "obs_main": [self.obs_main[i * n + j] for j in range(n)],
            "obs_trig": [self.obs_trig[i * n + j] for j in range(n)],
            "obs_supp": [self.obs_supp[i * n + j] for j in range(n)],
            "obs_quick": [self.obs_quick[i * n + j] for j in range(n)],
            "self_ext": self.obs_ext[i],
            "self_rsupp": self.obs_rsupp[i],
            "self_quick": self.obs_quickst[i],
            "flags": {
                "accept": self.fl_acc[i], "propose": self.fl_prop[i],
                "recover": self.fl_rec[i], "join": self.fl_join[i],
                "sleep_waking": self.fl_sw[i], "supp": self.fl_supp[i],
                "propose_plus": self.fl_pp[i],
            },
            "mem_next": self.mem_next[i],
            "timers": timers,
            "cycle": self.cyc[i],
            "fast": self.fastv[i],
        }

    def eval_packed(self, i, machine):
        """Expose the flattened guard evaluation (tests only)."""
        if machine == M_MAIN:
            return self._eval_main(i)
        if machine == M_EXT:
            return self._eval_ext(i)
        if machine == M_RTRIG:
            return self._eval_rtrig(i)
        if machine == M_RSUPP:
            return self._eval_rsupp(i)
        return self._eval_quick(i)

    def load_snapshot(self, i, snap):
        """Overwrite node i's guard inputs from a dict (tests only)."""
        n = self.n
        for m in range(5):
            self.act[i * 5 + m] = snap["actual"][m]
        for j in range(n):
            self.obs_main[i * n + j] = snap["obs_main"][j]
            self.obs_trig[i * n + j] = snap["obs_trig"][j]
            self.obs_supp[i * n + j] = snap["obs_supp"][j]
            self.obs_quick[i * n + j] = snap["obs_quick"][j]
        self.obs_ext[i] = snap["self_ext"]
        self.obs_rsupp[i] = snap["self_rsupp"]
        self.obs_quickst[i] = snap["self_quick"]
        fl = snap["flags"]
        self.fl_acc[i] = fl["accept"]
        self.fl_prop[i] = fl["propose"]
        self.fl_rec[i] = fl["recover"]
        self.fl_join[i] = fl["join"]
        self.fl_sw[i] = fl["sleep_waking"]
        self.fl_supp[i] = fl["supp"]
        self.fl_pp[i] = fl["propose_plus"]
        self.mem_next[i] = snap["mem_next"]
        names = {
            "t1": S_T1, "t2": S_T2, "t2p": S_T2P, "t_sleep": S_SLEEP, "t3": S_T3,
            "t4": S_T4, "t5": S_T5, "t_recover": S_REC, "t6": S_T6, "t7": S_T7,
            "t_suppresync": S_SR, "r1": S_R1, "r3": S_R3, "t1p": S_T1P, "t3p": S_T3P,
        }
        for key, port in snap["timers"].items():
            if key in names:
                slot = names[key]
            elif key.startswith("r2@"):
                slot = S_R2_BASE + int(key[3:])
            else:
                slot = S_R2_BASE + n + int(key[7:])
            self.tport[i * self.nslots + slot] = port

    def final_state(self, i):
        return [self.act[i * 5 + m] for m in range(5)]

    def rng_state(self):
        return self.rs
