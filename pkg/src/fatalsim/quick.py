"""FATAL+ quick cycle: the fast pulse machine, cycle counter, fast counter.

The quick machine is a stripped three-state copy of the pulse cycle that
runs against its own (much shorter) timeouts and its own channels.  Its
coupling to the core layer is two signals: it reads the (t2p, accept)
timeout that the main machine resets on every pulse, and it raises the
node's Next latch whenever the mod-M cycle counter wraps to zero.  A
mod-m fast counter ticking off the local clock completes the logical
clock L = cycle * m + fast.
"""

from __future__ import annotations

from dataclasses import dataclass

from .protocol import (
    FLAG_PROPOSE_P,
    Machine,
    NodeView,
    QuickState,
    TIMER_T1P,
    TIMER_T2P,
    TIMER_T3P,
    TableEntry,
    enabled_transitions,
    g_and,
    g_or,
    mem_ge,
    t_expired,
    t_zero,
)

QUICK_TABLE = (
    TableEntry(Machine.QUICK, QuickState.ACCEPT_P, QuickState.READY_P,
               g_and(t_expired(TIMER_T1P), t_expired(TIMER_T2P)),
               resets=(FLAG_PROPOSE_P,)),
    TableEntry(Machine.QUICK, QuickState.READY_P, QuickState.PROPOSE_P,
               g_or(t_expired(TIMER_T3P),
                    mem_ge("f+1", FLAG_PROPOSE_P),
                    t_zero(TIMER_T2P))),
    TableEntry(Machine.QUICK, QuickState.PROPOSE_P, QuickState.ACCEPT_P,
               g_or(mem_ge("n-f", FLAG_PROPOSE_P),
                    t_zero(TIMER_T2P))),
)


def quick_enabled(view: NodeView):
    """Armed quick-machine entries whose guards hold, in priority order."""
    return enabled_transitions(view, Machine.QUICK, table=QUICK_TABLE)


@dataclass
class CycleCounter:
    """Mod-M counter stepped on every switch to accept+.

    Forced to zero when (t2p, accept) expires.  The Next pulse fires only
    on nonzero-to-zero transitions, which covers both the wrap at M and a
    (pre-stabilization) forced reset from a nonzero value, and stays
    silent when a forced reset finds the counter already at zero.
    """

    modulus: int
    value: int = 0

    def on_accept_pulse(self) -> bool:
        """Increment mod M; True iff Next fires."""
        old = self.value
        self.value = (self.value + 1) % self.modulus
        return self.value == 0 and old != 0

    def on_forced_reset(self) -> bool:
        """Reset to zero at a (t2p, accept) expiry; True iff Next fires."""
        old = self.value
        self.value = 0
        return old != 0


@dataclass
class FastCounter:
    """Mod-m counter ticking at phi times the local clock rate.

    Restarts at zero on each quick pulse; on reaching m-1 it halts until
    the next pulse, which is what keeps it from ever wrapping on its own.
    """

    modulus: int
    value: int = 0
    halted: bool = False

    def restart(self):
        self.value = 0
        self.halted = self.modulus == 1

    def tick(self) -> bool:
        """Advance one tick; returns False once halted."""
        if self.halted:
            return False
        self.value += 1
        if self.value >= self.modulus - 1:
            self.value = self.modulus - 1
            self.halted = True
        return True


def logical_clock(cycle_value: int, fast_value: int, m: int, big_m: int) -> int:
    """Concatenated clock L = cycle * m + fast, in [0, m*M - 1]."""
    if not 0 <= cycle_value < big_m:
        raise ValueError(f"cycle counter {cycle_value} outside [0, {big_m})")
    if not 0 <= fast_value < m:
        raise ValueError(f"fast counter {fast_value} outside [0, {m})")
    return cycle_value * m + fast_value


def clock_offset(li: int, lj: int, span: int) -> int:
    """Circular distance |Li - Lj mod span| on the clock ring."""
    diff = (li - lj) % span
    return min(diff, span - diff)
