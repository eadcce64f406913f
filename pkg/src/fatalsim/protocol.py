"""The FATAL node: state machines, guards, memory flags, and wire encoding.

Four machines run concurrently per node: the main pulse machine, the
extension machine gating recovery, and the two resynchronization
machines (trigger and support).  Their transition tables are plain data
(:data:`MAIN_TABLE` etc.), ordered by tie-break priority, with guards as
small expression trees; :func:`enabled_transitions` interprets them over
a :class:`NodeView` snapshot.  The simulation kernel implements the same
tables in flattened form for speed; tests check the two against each
other on random snapshots.

A machine arms the transitions of the state it *observes itself* in (the
delayed self-loop state), not of the state it actually holds.  This is
what makes a freshly switched machine wait one self-loop delay before it
can progress, and what makes stale-state double switches (the hazard
class the analysis hunts for) possible at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum


class Machine(IntEnum):
    MAIN = 0
    EXT = 1
    RTRIG = 2
    RSUPP = 3
    QUICK = 4


class MainState(IntEnum):
    ACCEPT = 0
    SLEEP = 1
    SLEEP_WAKING = 2
    WAKING = 3
    READY = 4
    PROPOSE = 5
    RECOVER = 6
    JOIN = 7


class ExtState(IntEnum):
    DORMANT = 0
    PASSIVE = 1
    ACTIVE = 2


class TrigState(IntEnum):
    INIT = 0
    WAIT = 1


# Resync support machine: states are NONE, SUPP(j) for each peer j,
# SUPP_RESYNC, and RESYNC.  SUPP(j) is encoded as SUPP_BASE + j; the two
# fixed states follow after the largest possible peer id.
RSUPP_NONE = 0
RSUPP_SUPP_BASE = 1
MAX_NODES = 32
RSUPP_SUPP_RESYNC = RSUPP_SUPP_BASE + MAX_NODES
RSUPP_RESYNC = RSUPP_SUPP_RESYNC + 1


def rsupp_supp(j: int) -> int:
    return RSUPP_SUPP_BASE + j


def rsupp_is_supp(state: int) -> bool:
    return RSUPP_SUPP_BASE <= state < RSUPP_SUPP_BASE + MAX_NODES


def rsupp_signal(state: int) -> int:
    """1-bit supp/none signal remote nodes see (supp states and supp->resync)."""
    return 1 if (rsupp_is_supp(state) or state == RSUPP_SUPP_RESYNC) else 0


class QuickState(IntEnum):
    ACCEPT_P = 0
    READY_P = 1
    PROPOSE_P = 2


def quick_signal(state: int) -> int:
    """1-bit propose+/none+ signal."""
    return 1 if state == QuickState.PROPOSE_P else 0


# Delay-insensitive 4-bit code for the main state, bit-exact as shipped.
MAIN_ENCODING = {
    MainState.PROPOSE: 0b0000,
    MainState.ACCEPT: 0b1001,
    MainState.SLEEP: 0b1011,
    MainState.SLEEP_WAKING: 0b0011,
    MainState.WAKING: 0b0101,
    MainState.READY: 0b0110,
    MainState.RECOVER: 0b1100,
    MainState.JOIN: 0b1010,
}
MAIN_DECODING = {code: state for state, code in MAIN_ENCODING.items()}


def encode_main(state: MainState) -> int:
    return MAIN_ENCODING[MainState(state)]


def decode_main(code: int) -> MainState | None:
    """Decode a 4-bit word; None for the eight unused words."""
    if not 0 <= code < 16:
        raise ValueError(f"main-state code out of range: {code}")
    return MAIN_DECODING.get(code)


# Memory-flag families.  Each is a per-(observer, observed) latch; NEXT
# is the single local latch raised by the cycle counter.
FLAG_ACCEPT = "accept"
FLAG_PROPOSE = "propose"
FLAG_RECOVER = "recover"
FLAG_JOIN = "join"
FLAG_SLEEP_WAKING = "sleep_waking"
FLAG_SUPP = "supp"
FLAG_PROPOSE_P = "propose_plus"
FLAG_FAMILIES = (
    FLAG_ACCEPT, FLAG_PROPOSE, FLAG_RECOVER, FLAG_JOIN,
    FLAG_SLEEP_WAKING, FLAG_SUPP, FLAG_PROPOSE_P,
)
FLAG_NEXT = "next"

MAIN_STATE_FLAG = {
    MainState.ACCEPT: FLAG_ACCEPT,
    MainState.PROPOSE: FLAG_PROPOSE,
    MainState.RECOVER: FLAG_RECOVER,
    MainState.JOIN: FLAG_JOIN,
    MainState.SLEEP_WAKING: FLAG_SLEEP_WAKING,
}

# Watchdog-timer slots.  Trigger = (machine, state) whose switch resets
# the timer.  Per-peer slots (r2/t_supp) are parameterized by j.
TIMER_T1 = "t1"
TIMER_T2 = "t2"
TIMER_T2P = "t2p"
TIMER_SLEEP = "t_sleep"  # duration (2*theta+1)*t1
TIMER_T3 = "t3"
TIMER_T4 = "t4"
TIMER_T5 = "t5"
TIMER_RECOVER = "t_recover"  # duration theta*(2*t1+3d)
TIMER_T6 = "t6"
TIMER_T7 = "t7"
TIMER_SUPP_RESYNC = "t_suppresync"  # duration 4*theta*d
TIMER_R1 = "r1"
TIMER_R3 = "r3"  # randomized
TIMER_T1P = "t1p"
TIMER_T3P = "t3p"
TIMER_R2_J = "r2@"  # per-peer, "r2@3"
TIMER_SUPP_J = "t_supp@"  # per-peer, duration 2*theta*d

TIMER_TRIGGERS = {
    TIMER_T1: (Machine.MAIN, MainState.ACCEPT),
    TIMER_T2: (Machine.MAIN, MainState.ACCEPT),
    TIMER_T2P: (Machine.MAIN, MainState.ACCEPT),
    TIMER_SLEEP: (Machine.MAIN, MainState.SLEEP),
    TIMER_T3: (Machine.MAIN, MainState.READY),
    TIMER_T4: (Machine.MAIN, MainState.READY),
    TIMER_T5: (Machine.MAIN, MainState.PROPOSE),
    TIMER_RECOVER: (Machine.MAIN, MainState.RECOVER),
    TIMER_T6: (Machine.EXT, ExtState.ACTIVE),
    TIMER_T7: (Machine.EXT, ExtState.PASSIVE),
    TIMER_SUPP_RESYNC: (Machine.RSUPP, RSUPP_SUPP_RESYNC),
    TIMER_R1: (Machine.RSUPP, RSUPP_SUPP_RESYNC),
    TIMER_R3: (Machine.RTRIG, TrigState.WAIT),
    TIMER_T1P: (Machine.QUICK, QuickState.ACCEPT_P),
    TIMER_T3P: (Machine.QUICK, QuickState.READY_P),
}


# --- guard expression constructors (tuples; trivially serializable) ---

def t_expired(slot):  # timeout port reads 1
    return ("timeout", slot)

def t_zero(slot):  # timeout port reads 0
    return ("timeout_zero", slot)

def mem_ge(kind, *states):  # threshold over memory flags, union by per-node max
    return ("mem_ge", kind, tuple(states))

def obs_main_ge(kind, state):  # threshold over currently observed main states
    return ("obs_main_ge", kind, state)

def obs_init(j):  # currently observing peer j's trigger signal in init
    return ("obs_init", j)

def self_in(machine, state):  # delayed self-observation of own machine
    return ("self_in", machine, state)

def self_not_in(machine, state):
    return ("self_not_in", machine, state)

def self_mem_zero(flag):  # own memory flag about oneself reads 0
    return ("self_mem_zero", flag)

def next_flag():
    return ("next_flag",)

def true():
    return ("true",)

def g_and(*es):
    return ("and",) + tuple(es)

def g_or(*es):
    return ("or",) + tuple(es)

def g_not(e):
    return ("not", e)


@dataclass(frozen=True)
class TableEntry:
    """One transition: src -> dst when guard holds; resets applied on commit.

    Entries appear in tie-break priority order.  ``param_j`` marks
    per-peer template entries of the support machine that expand to one
    entry per peer id (lowest id first).
    """

    machine: Machine
    src: object
    dst: object
    guard: tuple
    resets: tuple = ()
    param_j: bool = False


MAIN_TABLE = (
    TableEntry(Machine.MAIN, MainState.ACCEPT, MainState.SLEEP,
               g_and(t_expired(TIMER_T1), mem_ge("n-f", FLAG_ACCEPT))),
    TableEntry(Machine.MAIN, MainState.ACCEPT, MainState.RECOVER,
               g_and(t_expired(TIMER_T1), g_not(mem_ge("n-f", FLAG_ACCEPT)))),
    TableEntry(Machine.MAIN, MainState.SLEEP, MainState.SLEEP_WAKING,
               t_expired(TIMER_SLEEP)),
    TableEntry(Machine.MAIN, MainState.SLEEP_WAKING, MainState.WAKING,
               true(), resets=(FLAG_ACCEPT, FLAG_RECOVER)),
    TableEntry(Machine.MAIN, MainState.WAKING, MainState.READY,
               t_expired(TIMER_T2), resets=(FLAG_PROPOSE, FLAG_NEXT)),
    TableEntry(Machine.MAIN, MainState.WAKING, MainState.RECOVER,
               mem_ge("f+1", FLAG_RECOVER, FLAG_ACCEPT)),
    TableEntry(Machine.MAIN, MainState.READY, MainState.PROPOSE,
               g_or(g_and(t_expired(TIMER_T3), next_flag()),
                    t_expired(TIMER_T4),
                    mem_ge("f+1", FLAG_PROPOSE, FLAG_ACCEPT))),
    TableEntry(Machine.MAIN, MainState.PROPOSE, MainState.ACCEPT,
               g_or(mem_ge("n-f", FLAG_PROPOSE, FLAG_ACCEPT),
                    mem_ge("f+1", FLAG_ACCEPT)),
               resets=(FLAG_ACCEPT,)),
    TableEntry(Machine.MAIN, MainState.PROPOSE, MainState.RECOVER,
               t_expired(TIMER_T5)),
    TableEntry(Machine.MAIN, MainState.RECOVER, MainState.ACCEPT,
               g_and(t_expired(TIMER_RECOVER), obs_main_ge("n-f", MainState.ACCEPT)),
               resets=(FLAG_ACCEPT,)),
    TableEntry(Machine.MAIN, MainState.RECOVER, MainState.JOIN,
               g_and(g_or(g_and(t_expired(TIMER_T6), self_in(Machine.EXT, ExtState.ACTIVE)),
                          g_and(self_not_in(Machine.EXT, ExtState.DORMANT),
                                g_or(t_expired(TIMER_T7), mem_ge("f+1", FLAG_JOIN)))),
                     self_mem_zero(FLAG_JOIN)),
               resets=(FLAG_PROPOSE, FLAG_ACCEPT)),
    TableEntry(Machine.MAIN, MainState.JOIN, MainState.PROPOSE,
               mem_ge("n-f", FLAG_JOIN, FLAG_PROPOSE, FLAG_ACCEPT)),
    TableEntry(Machine.MAIN, MainState.JOIN, MainState.RECOVER,
               self_in(Machine.EXT, ExtState.DORMANT)),
)

EXT_TABLE = (
    TableEntry(Machine.EXT, ExtState.DORMANT, ExtState.PASSIVE,
               self_in(Machine.RSUPP, RSUPP_RESYNC),
               resets=(FLAG_JOIN, FLAG_SLEEP_WAKING)),
    TableEntry(Machine.EXT, ExtState.PASSIVE, ExtState.DORMANT,
               self_not_in(Machine.RSUPP, RSUPP_RESYNC)),
    TableEntry(Machine.EXT, ExtState.PASSIVE, ExtState.ACTIVE,
               mem_ge("f+1", FLAG_SLEEP_WAKING)),
    TableEntry(Machine.EXT, ExtState.ACTIVE, ExtState.DORMANT,
               self_not_in(Machine.RSUPP, RSUPP_RESYNC)),
)

RTRIG_TABLE = (
    TableEntry(Machine.RTRIG, TrigState.INIT, TrigState.WAIT, true()),
    TableEntry(Machine.RTRIG, TrigState.WAIT, TrigState.INIT, t_expired(TIMER_R3)),
)

# Support machine.  "supp@" stands for the per-peer SUPP(j) state; the
# interpreter expands param_j entries over j = 0..n-1 in id order, which
# realizes both the per-peer timers and the lowest-id tie break.
RSUPP_TABLE = (
    TableEntry(Machine.RSUPP, RSUPP_NONE, "supp@",
               g_and(("obs_init", "j"), t_expired(TIMER_R2_J)),
               resets=(FLAG_SUPP,), param_j=True),
    TableEntry(Machine.RSUPP, "supp@", "supp@",
               g_and(("obs_init", "j"), t_expired(TIMER_R2_J)),
               resets=(FLAG_SUPP,), param_j=True),
    TableEntry(Machine.RSUPP, "supp@", RSUPP_SUPP_RESYNC,
               mem_ge("n-f", FLAG_SUPP)),
    TableEntry(Machine.RSUPP, "supp@", RSUPP_NONE,
               t_expired(TIMER_SUPP_J)),
    TableEntry(Machine.RSUPP, RSUPP_SUPP_RESYNC, RSUPP_RESYNC,
               t_expired(TIMER_SUPP_RESYNC)),
    TableEntry(Machine.RSUPP, RSUPP_RESYNC, RSUPP_NONE,
               t_expired(TIMER_R1)),
)

FATAL_TABLES = MAIN_TABLE + EXT_TABLE + RTRIG_TABLE + RSUPP_TABLE


@dataclass
class NodeView:
    """Snapshot of everything one node's guards can read at an instant.

    ``obs_main[j]`` is the decoded main state observed on the channel
    from j (None for an undecodable word), ``obs_trig[j]``/``obs_supp[j]``
    the 1-bit resync signals.  ``self_*`` are the delayed observations of
    the node's own machines via the loopback channel; they lag the
    ``actual`` states by the self-loop delay.  ``timers`` maps slot names
    (per-peer slots as e.g. "r2@3") to the timeout port state.
    """

    n: int
    f: int
    obs_main: list = field(default_factory=list)
    obs_trig: list = field(default_factory=list)
    obs_supp: list = field(default_factory=list)
    self_main: int = MainState.ACCEPT
    self_ext: int = ExtState.DORMANT
    self_trig: int = TrigState.WAIT
    self_rsupp: int = RSUPP_NONE
    self_quick: int = QuickState.ACCEPT_P
    actual: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)  # family -> bitmask over peers
    mem_next: int = 0
    timers: dict = field(default_factory=dict)  # slot -> 0/1
    node_id: int = 0

    def observed(self, machine: Machine) -> int:
        return {
            Machine.MAIN: self.self_main,
            Machine.EXT: self.self_ext,
            Machine.RTRIG: self.self_trig,
            Machine.RSUPP: self.self_rsupp,
            Machine.QUICK: self.self_quick,
        }[machine]


def threshold(masks: dict, kind: str, states, n: int, f: int) -> bool:
    """Threshold over flag families: per-node max across the state set.

    Union across families is the bitwise OR of their masks, so each node
    contributes at most one to the count regardless of how many of the
    listed families it appears in.
    """
    if not states:
        raise ValueError("threshold needs a non-empty state set")
    union = 0
    for s in states:
        union |= masks.get(s, 0)
    count = bin(union & ((1 << n) - 1)).count("1")
    return count >= _bound(kind, n, f)


def _bound(kind: str, n: int, f: int) -> int:
    if kind == "n-f":
        return n - f
    if kind == "f+1":
        return f + 1
    raise ValueError(f"unknown threshold kind {kind!r}")


def eval_guard(expr: tuple, view: NodeView, j: int | None = None) -> bool:
    """Interpret a guard expression over a snapshot (j binds per-peer entries)."""
    op = expr[0]
    if op == "true":
        return True
    if op == "and":
        return all(eval_guard(e, view, j) for e in expr[1:])
    if op == "or":
        return any(eval_guard(e, view, j) for e in expr[1:])
    if op == "not":
        return not eval_guard(expr[1], view, j)
    if op == "timeout" or op == "timeout_zero":
        slot = expr[1]
        if slot in (TIMER_R2_J, TIMER_SUPP_J):
            slot = f"{slot}{j}"
        port = view.timers.get(slot, 0)
        return port == 1 if op == "timeout" else port == 0
    if op == "mem_ge":
        return threshold(view.flags, expr[1], expr[2], view.n, view.f)
    if op == "obs_main_ge":
        count = sum(1 for s in view.obs_main if s == expr[2])
        return count >= _bound(expr[1], view.n, view.f)
    if op == "obs_init":
        peer = j if expr[1] == "j" else expr[1]
        return view.obs_trig[peer] == TrigState.INIT
    if op == "self_in":
        return view.observed(expr[1]) == expr[2]
    if op == "self_not_in":
        return view.observed(expr[1]) != expr[2]
    if op == "self_mem_zero":
        return (view.flags.get(expr[1], 0) >> view.node_id) & 1 == 0
    if op == "next_flag":
        return view.mem_next == 1
    raise ValueError(f"unknown guard op {op!r}")


def expand_entries(table, machine: Machine, observed_state, n: int):
    """Entries armed for the observed state, per-peer templates expanded.

    Yields (entry, j) pairs in tie-break priority order.  For template
    entries j ranges over peers (lowest id first); for plain entries
    leaving a SUPP(j) state, j is bound to that state's peer so per-peer
    timer slots resolve; otherwise j is None.
    """
    for entry in table:
        if entry.machine != machine:
            continue
        src_is_supp = entry.src == "supp@"
        if not (src_is_supp and rsupp_is_supp(observed_state)) and entry.src != observed_state:
            continue
        if entry.param_j:
            cur_j = observed_state - RSUPP_SUPP_BASE if src_is_supp else None
            for j in range(n):
                if j == cur_j:
                    continue  # no supp(j) -> supp(j) entry
                yield entry, j
        elif src_is_supp:
            yield entry, observed_state - RSUPP_SUPP_BASE
        else:
            yield entry, None


def resolve_dst(entry: TableEntry, j: int | None):
    if entry.dst == "supp@":
        return rsupp_supp(j)
    return entry.dst


def enabled_transitions(view: NodeView, machine: Machine, table=None):
    """All armed entries whose guards hold, in tie-break priority order.

    Arms the transitions of the *observed* self state and skips entries
    whose destination equals the machine's actual current state.  More
    than one enabled entry is the multi-guard hazard the engine records.
    """
    if table is None:
        table = FATAL_TABLES
    observed = view.observed(machine)
    actual = view.actual.get(machine, observed)
    out = []
    for entry, j in expand_entries(table, machine, observed, view.n):
        if resolve_dst(entry, j) == actual:
            continue
        if eval_guard(entry.guard, view, j):
            out.append((entry, j))
    return out


@dataclass
class Effect:
    """One observable consequence of a commit, for tests and replay."""

    kind: str  # "switch" | "reset_flags" | "reset_timer"
    machine: Machine | None = None
    state: object = None
    flag: str | None = None
    slot: str | None = None


def commit_transition(view: NodeView, entry: TableEntry, j: int | None = None):
    """Apply a transition to a snapshot; returns the effect list.

    Mirrors what the engine does at a commit: the output-port switch, the
    flag resets of the entry (reset dominates a concurrent set; a port
    still showing the flagged state re-latches immediately), and the
    reset of every timer triggered by the new state.
    """
    enabled = enabled_transitions(view, entry.machine)
    if (entry, j) not in enabled:
        raise AssertionError("committing a transition that is not enabled")
    dst = resolve_dst(entry, j)
    effects = [Effect("switch", machine=entry.machine, state=dst)]
    view.actual[entry.machine] = dst

    for flag in entry.resets:
        effects.append(Effect("reset_flags", flag=flag))
        if flag == FLAG_NEXT:
            view.mem_next = 0
            continue
        view.flags[flag] = 0
        # re-latch from levels: ports still showing the state keep the flag
        relatch = 0
        for peer in range(view.n):
            if _port_shows(view, peer, flag):
                relatch |= 1 << peer
        view.flags[flag] = relatch

    for slot, (mach, state) in TIMER_TRIGGERS.items():
        if mach == entry.machine and state == dst:
            effects.append(Effect("reset_timer", slot=slot))
            view.timers[slot] = 0
    if entry.machine == Machine.RSUPP and rsupp_is_supp(dst):
        peer = dst - RSUPP_SUPP_BASE
        for prefix in (TIMER_R2_J, TIMER_SUPP_J):
            effects.append(Effect("reset_timer", slot=f"{prefix}{peer}"))
            view.timers[f"{prefix}{peer}"] = 0
    return effects


def _port_shows(view: NodeView, peer: int, flag: str) -> bool:
    if flag == FLAG_SUPP:
        return view.obs_supp[peer] == 1
    for state, fam in MAIN_STATE_FLAG.items():
        if fam == flag:
            return view.obs_main[peer] == state
    return False


def update_flags(view: NodeView, code: int, trig_bit: int, supp_bit: int,
                 sender: int, channel_faulty: bool = False):
    """Apply an arriving word from ``sender`` to the observed ports and flags.

    Returns the list of flag families newly latched.  An undecodable
    4-bit word on a correct channel is a protocol error; on a faulty
    channel it is recorded as an anomaly and sets nothing.
    """
    main = decode_main(code)
    anomalies = []
    if main is None:
        if not channel_faulty:
            raise ValueError(f"undecodable state word {code:04b} on a correct channel")
        anomalies.append(("invalid_code", sender, code))
    view.obs_main[sender] = main
    view.obs_trig[sender] = trig_bit
    view.obs_supp[sender] = supp_bit

    latched = []
    bit = 1 << sender
    if main is not None and main in MAIN_STATE_FLAG:
        fam = MAIN_STATE_FLAG[main]
        if not view.flags.get(fam, 0) & bit:
            view.flags[fam] = view.flags.get(fam, 0) | bit
            latched.append(fam)
    if supp_bit and not view.flags.get(FLAG_SUPP, 0) & bit:
        view.flags[FLAG_SUPP] = view.flags.get(FLAG_SUPP, 0) | bit
        latched.append(FLAG_SUPP)
    return latched, anomalies
