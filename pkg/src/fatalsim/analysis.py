"""Pure trace analytics: pulses, stabilization, skew, hazards, bounds.

Everything here is a pure function of the trace (plus the run metadata
embedded in it), so analyzing at run time and re-analyzing a written
trace file give identical reports.  Comparisons against analytic bounds
are exact: integer picoseconds against rational bounds, no epsilons.

Windows follow the definitions: a stabilization point is a pulse time t
with every watched node pulsing inside the half-open [t, t+w); a
resynchronization point is witnessed by an instant strictly before the
first supp_resync switch of a group whose spread stays below 2d (the
open-interval reading); witnesses are reported one picosecond before the
first switch.  Self-loop hazards use a strict comparison: a switch at
exactly the instant the previous switch became self-observable is the
normal arming case, not an upset.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

M_MAIN = 0
M_EXT = 1
M_RTRIG = 2
M_RSUPP = 3
M_QUICK = 4
REC_CYCLE = 5
REC_FAST = 6
REC_HAZARD = 7

ACCEPT = 0
SLEEP = 1
RECOVER = 6
JOIN = 7
ACCEPT_P = 0
RS_SUPP_RESYNC = 33


@dataclass(frozen=True)
class Violation:
    bound: str
    node: int
    time: int
    observed: float
    limit: float

    def as_dict(self) -> dict:
        return {
            "bound": self.bound, "node": int(self.node), "time": int(self.time),
            "observed": float(self.observed), "limit": float(self.limit),
        }


class Bounds:
    """Exact analytic bounds reconstructed from a trace's metadata."""

    def __init__(self, meta: dict):
        self.n = meta["n"]
        self.f = meta["f"]
        self.d = meta["d"]
        self.theta = Fraction(meta["theta"])
        self.horizon = meta["horizon"]
        self.faulty = set(meta.get("faulty", []))
        ts = meta["timeouts"]
        self.t1 = ts["t1"]
        self.t2 = ts["t2"]
        self.t3 = ts["t3"]
        self.t4 = ts["t4"]
        self.r1 = ts["r1"]
        self.skew = 2 * self.d
        self.acc_min = Fraction(self.t2 + self.t3, 1) / self.theta - 2 * self.d
        self.acc_max = self.t2 + self.t4 + 7 * self.d
        self.delta_g = (2 * self.theta + 3) * self.t1
        self.rejoin = (1 + Fraction(5, 2) / self.theta) * self.r1
        self.quick = meta.get("quick")
        if self.quick:
            q = self.quick
            self.sigma_plus = 2 * q["d_plus_max"] - q["d_plus_min"]
            self.big_m = q["big_m"]
            self.qacc_min = Fraction(q["t1p"] + q["t3p"], 1) / self.theta - self.sigma_plus
            self.qacc_max = q["t1p"] + q["t3p"] + self.sigma_plus + 3 * q["d_plus_max"]
        self.fast = meta.get("fast")
        if self.fast:
            self.fast_m = self.fast["m"]
            self.tick_ps = self.fast["tick_ps"]
            self.rho = Fraction(self.fast["rho"])
            phi = Fraction(1, self.tick_ps)
            raw = phi * self.sigma_plus + (1 - 1 / self.rho) * self.fast_m
            self.lclock_bound = -(-raw.numerator // raw.denominator)  # ceil
            self.lclock_span = self.fast_m * self.big_m

    @property
    def watched(self) -> list:
        return [i for i in range(self.n) if i not in self.faulty]


# ---------------------------------------------------------------- series

def switch_times(trace, machine: int, state: int, nodes) -> dict:
    """Per node, the sorted times of switches of one machine to one state."""
    sel = (trace.mach == machine) & (trace.state == state)
    out = {}
    for i in nodes:
        out[i] = trace.t[sel & (trace.node == i)]
    return out


def pulse_series(trace, nodes, quick: bool = False) -> dict:
    machine = M_QUICK if quick else M_MAIN
    state = ACCEPT_P if quick else ACCEPT
    return switch_times(trace, machine, state, nodes)


def find_stabilization_points(pulses: dict, window: int) -> list:
    """Pulse-anchored detection: t such that every node pulses in [t, t+w).

    Overlapping detections merge to the earliest anchor of each chain.
    """
    if not pulses:
        raise ValueError("empty node set")
    series = list(pulses.values())
    if any(len(p) == 0 for p in series):
        return []
    anchors = np.unique(np.concatenate(series))
    ok = np.ones(len(anchors), dtype=bool)
    for p in series:
        idx = np.searchsorted(p, anchors, side="left")
        inside = idx < len(p)
        hit = np.zeros(len(anchors), dtype=bool)
        hit[inside] = p[idx[inside]] < anchors[inside] + window
        ok &= hit
    detected = anchors[ok]
    merged = []
    for t in detected:
        if merged and t < merged[-1] + window:
            continue
        merged.append(int(t))
    return merged


def aligned_pulses(pulses: dict, t_start: int) -> dict:
    """Per node, pulses at or after the alignment instant."""
    return {i: p[np.searchsorted(p, t_start, side="left"):] for i, p in pulses.items()}


def skew_accuracy(pulses: dict, t_start: int):
    """Skew per aligned pulse index and per-node inter-pulse times.

    Returns (skew_list, accuracy_dict, misaligned) where skew_list[k] is
    the max pairwise distance of the (k+1)-th pulses after t_start and
    accuracy_dict[i] the list of consecutive gaps of node i.
    """
    ap = aligned_pulses(pulses, t_start)
    counts = {i: len(p) for i, p in ap.items()}
    kmax = min(counts.values())
    misaligned = max(counts.values()) - min(counts.values()) > 1
    skew = []
    for k in range(kmax):
        ts = [int(p[k]) for p in ap.values()]
        skew.append(max(ts) - min(ts))
    accuracy = {i: np.diff(p).astype(np.int64).tolist() for i, p in ap.items()}
    return skew, accuracy, misaligned


def _envelope_clean(trace, bounds: Bounds, pulses: dict, t_s: int) -> bool:
    skew, accuracy, misaligned = skew_accuracy(pulses, t_s)
    if misaligned:
        return False
    if any(s > bounds.skew for s in skew):
        return False
    for gaps in accuracy.values():
        for g in gaps:
            if not bounds.acc_min <= g <= bounds.acc_max:
                return False
    for state in (RECOVER, JOIN):
        for times in switch_times(trace, M_MAIN, state, bounds.watched).values():
            if len(times) and times[-1] > t_s:
                return False
    return True


def settled_stabilization(trace, bounds: Bounds, pulses: dict | None = None):
    """Earliest detection from which the run keeps the stabilized envelope.

    Raw window detection also fires on pulse groups that random initial
    flags produce before the system is coherent; those fall apart within
    a cycle.  The stabilization *time* of a run is therefore the first
    detected point whose entire suffix satisfies the post-stabilization
    guarantees (skew, accuracy, no recover/join occupancy).  For a truly
    stabilized run such a point exists by the stability theorem, so this
    never under-reports.
    """
    if pulses is None:
        pulses = pulse_series(trace, bounds.watched)
    for t in find_stabilization_points(pulses, 2 * bounds.d):
        if _envelope_clean(trace, bounds, pulses, t):
            return t
    return None


# ------------------------------------------------------------ occupancy

def occupancy_intervals(trace, node: int, machine: int, states) -> list:
    """Half-open [enter, leave) intervals the node spends in the state set."""
    sel = (trace.mach == machine) & (trace.node == node)
    times = trace.t[sel]
    vals = trace.state[sel]
    out = []
    current = None
    for t, s in zip(times, vals):
        if s in states:
            if current is None:
                current = int(t)
        else:
            if current is not None:
                out.append((current, int(t)))
                current = None
    if current is not None:
        out.append((current, None))  # still inside at the horizon
    return out


def _overlaps(intervals, lo, hi) -> bool:
    """Any [enter, leave) interval intersecting [lo, hi)? (exact compare)"""
    for enter, leave in intervals:
        if leave is None:
            if hi > enter:
                return True
        elif enter < hi and leave > lo:
            return True
    return False


# ---------------------------------------------------------- resync points

def find_resync_points(trace, bounds: Bounds) -> list:
    """(witness, good) pairs per the open-window group definition.

    A group of supp_resync switches, one per watched node, with spread
    strictly below 2d is witnessed one ps before its first switch.  Good
    additionally requires no watched sleep switch in (t - delta_g, t) and
    no watched node in join during [t - t1 - d, t + 4d).
    """
    W = bounds.watched
    sr = switch_times(trace, M_RSUPP, RS_SUPP_RESYNC, W)
    if any(len(p) == 0 for p in sr.values()):
        return []
    window = 2 * bounds.d
    anchors = np.unique(np.concatenate(list(sr.values())))
    points = []
    last_group_end = -1
    for t0 in anchors:
        if t0 <= last_group_end:
            continue
        hi = -1
        ok = True
        for p in sr.values():
            idx = np.searchsorted(p, t0, side="left")
            if idx >= len(p) or p[idx] >= t0 + window:
                ok = False
                break
            hi = max(hi, int(p[idx]))
        if not ok:
            continue
        witness = int(t0) - 1
        points.append(witness)
        last_group_end = hi
    sleeps = switch_times(trace, M_MAIN, SLEEP, W)
    join_iv = {i: occupancy_intervals(trace, i, M_MAIN, (JOIN,)) for i in W}
    out = []
    for witness in points:
        good = True
        lo = witness - bounds.delta_g  # Fraction; open interval (lo, witness)
        for p in sleeps.values():
            rough = p[(p > float(lo) - 1) & (p < witness)]
            if any(Fraction(int(u)) > lo for u in rough):
                good = False
                break
        if good:
            jlo = witness - bounds.t1 - bounds.d
            jhi = witness + 4 * bounds.d
            for iv in join_iv.values():
                if _overlaps(iv, jlo, jhi):
                    good = False
                    break
        out.append((witness, good))
    return out


# ---------------------------------------------------------------- hazards

def hazard_scan(trace, after: int = -1) -> dict:
    """Multi-guard commits plus stale double switches on the self-loop.

    A switch pair (t, t') of one machine violates self-observation when
    t' lands strictly before the instant the switch at t arrived back
    over the loopback channel (carried in the record's aux field).
    """
    sel = trace.mach == REC_HAZARD
    multi = [(int(t), int(nd), int(st), int(ax)) for t, nd, st, ax in
             zip(trace.t[sel], trace.node[sel], trace.state[sel], trace.aux[sel])
             if t > after]
    selfloop = []
    switch = trace.mach <= M_QUICK
    for node in np.unique(trace.node[switch]):
        for mach in range(5):
            sel = switch & (trace.node == node) & (trace.mach == mach)
            times = trace.t[sel]
            auxes = trace.aux[sel]
            for k in range(len(times) - 1):
                if auxes[k] > 0 and times[k + 1] < auxes[k] and times[k + 1] > after:
                    selfloop.append((int(times[k + 1]), int(node), int(mach)))
    return {"multi_guard": multi, "self_loop": selfloop}


# ------------------------------------------------------------- verification

def verify_bounds(trace, bounds: Bounds, t_s: int | None = None) -> list:
    """Every post-stabilization guarantee, checked exactly; returns violations."""
    W = bounds.watched
    violations = []
    pulses = pulse_series(trace, W)
    if t_s is None:
        t_s = settled_stabilization(trace, bounds, pulses)
        if t_s is None:
            return [Violation("stabilization", -1, bounds.horizon, 0, 1)]

    skew, accuracy, misaligned = skew_accuracy(pulses, t_s)
    if misaligned:
        violations.append(Violation("pulse-alignment", -1, t_s, 0, 0))
    for k, s in enumerate(skew):
        if s > bounds.skew:
            violations.append(Violation("skew", -1, t_s, s, bounds.skew))
    for i, gaps in accuracy.items():
        for g in gaps:
            if not bounds.acc_min <= g <= bounds.acc_max:
                violations.append(Violation(
                    "accuracy", i, t_s, g, float(bounds.acc_min if g < bounds.acc_min
                                                 else bounds.acc_max)))
    # the basic cycle never visits recover/join after stabilization
    for state, name in ((RECOVER, "recover-after-stabilization"),
                        (JOIN, "join-after-stabilization")):
        for i, times in switch_times(trace, M_MAIN, state, W).items():
            late = times[times > t_s]
            if len(late):
                violations.append(Violation(name, i, int(late[0]), 1, 0))

    quick_info = {}
    if bounds.quick:
        violations += _verify_quick(trace, bounds, t_s, pulses, quick_info)
    if bounds.fast:
        violations += _verify_logical_clock(trace, bounds, quick_info)
    for (t_r, node) in trace.meta.get("resets", []):
        deadline = t_r + bounds.rejoin
        rejoined = [p for p in find_stabilization_points(pulses, 2 * bounds.d)
                    if t_r <= p and Fraction(p) <= deadline]
        if not rejoined:
            violations.append(Violation("rejoin-deadline", node, t_r,
                                        float(deadline) + 1, float(deadline)))
    return violations


def _verify_quick(trace, bounds: Bounds, t_s: int, fatal_pulses: dict,
                  info: dict) -> list:
    violations = []
    W = bounds.watched
    qp = pulse_series(trace, W, quick=True)
    settle = t_s + 3 * bounds.d + 3 * bounds.quick["d_plus_max"] + 1
    settled = {i: p[np.searchsorted(p, settle):] for i, p in qp.items()}
    points = find_stabilization_points(settled, bounds.sigma_plus)
    if not points:
        return [Violation("quick-stabilization", -1, bounds.horizon, 0, 1)]
    t_q = points[0]
    info["t_q"] = t_q

    qskew, qacc, qmis = skew_accuracy(settled, t_q)
    if qmis:
        violations.append(Violation("quick-pulse-alignment", -1, t_q, 0, 0))
    for s in qskew:
        if s > bounds.sigma_plus:
            violations.append(Violation("quick-skew", -1, t_q, s, bounds.sigma_plus))
    for i, gaps in qacc.items():
        for g in gaps:
            if not bounds.qacc_min <= g <= bounds.qacc_max:
                violations.append(Violation(
                    "quick-accuracy", i, t_q, g,
                    float(bounds.qacc_min if g < bounds.qacc_min else bounds.qacc_max)))
    # exactly M quick pulses between consecutive pulses of the core layer
    intervals = 0
    for i in W:
        fp = fatal_pulses[i]
        fp = fp[fp >= t_q]
        for k in range(len(fp) - 1):
            lo, hi = int(fp[k]), int(fp[k + 1])
            cnt = int(np.searchsorted(qp[i], hi, side="right")
                      - np.searchsorted(qp[i], lo, side="right"))
            intervals += 1
            if cnt != bounds.big_m:
                violations.append(Violation("quick-count-per-pulse", i, lo,
                                            cnt, bounds.big_m))
    info["m_intervals"] = intervals
    # counter stepping: +1 mod M, and no forced reset from a nonzero value
    for i in W:
        sel = (trace.mach == REC_CYCLE) & (trace.node == i) & (trace.t > t_q)
        vals = trace.state[sel]
        times = trace.t[sel]
        auxes = trace.aux[sel]
        for k in range(len(vals)):
            if auxes[k] == 1:
                violations.append(Violation("counter-forced-reset", i,
                                            int(times[k]), 1, 0))
            if k and vals[k] != (vals[k - 1] + 1) % bounds.big_m:
                violations.append(Violation("counter-step", i, int(times[k]),
                                            int(vals[k]),
                                            int((vals[k - 1] + 1) % bounds.big_m)))
    return violations


def _verify_logical_clock(trace, bounds: Bounds, info: dict) -> list:
    violations = []
    W = bounds.watched
    t_q = info.get("t_q")
    if t_q is None:
        return violations
    m = bounds.fast_m
    span = bounds.lclock_span
    series = {}
    for i in W:
        sel = ((trace.node == i)
               & ((trace.mach == REC_CYCLE) | (trace.mach == REC_FAST)))
        times = trace.t[sel]
        machs = trace.mach[sel]
        vals = trace.state[sel]
        cyc = 0
        fast = 0
        pts = []  # grouped by instant: (t, L)
        for k in range(len(times)):
            if machs[k] == REC_CYCLE:
                cyc = int(vals[k])
            else:
                fast = int(vals[k])
            L = cyc * m + fast
            if pts and pts[-1][0] == times[k]:
                pts[-1] = (int(times[k]), L)
            else:
                pts.append((int(times[k]), L))
        series[i] = pts
    # pairwise offset at sampled instants
    start = t_q + bounds.qacc_max  # all nodes past their first settled pulse
    if start >= bounds.horizon:
        return violations
    samples = np.linspace(start, bounds.horizon, 1000).astype(np.int64)
    arr = {i: (np.asarray([p[0] for p in pts]), np.asarray([p[1] for p in pts]))
           for i, pts in series.items()}
    worst = 0
    for u in samples:
        lvals = []
        for i in W:
            times, ls = arr[i]
            idx = np.searchsorted(times, u, side="right") - 1
            if idx < 0:
                break
            lvals.append(int(ls[idx]))
        if len(lvals) < len(W):
            continue
        for a in range(len(lvals)):
            for b in range(a + 1, len(lvals)):
                diff = (lvals[a] - lvals[b]) % span
                diff = min(diff, span - diff)
                worst = max(worst, diff)
                if diff > bounds.lclock_bound:
                    violations.append(Violation("logical-clock-skew", W[a], int(u),
                                                diff, bounds.lclock_bound))
    info["lclock_worst"] = worst
    # single-step increments, at least tick_ps/rho apart
    min_gap = Fraction(bounds.tick_ps) / bounds.rho
    for i in W:
        pts = [p for p in series[i] if p[0] > t_q]
        for k in range(1, len(pts)):
            step = (pts[k][1] - pts[k - 1][1]) % span
            if step != 1:
                violations.append(Violation("logical-clock-step", i, pts[k][0],
                                            step, 1))
            if Fraction(pts[k][0] - pts[k - 1][0]) < min_gap:
                violations.append(Violation("logical-clock-spacing", i, pts[k][0],
                                            pts[k][0] - pts[k - 1][0],
                                            float(min_gap)))
    return violations


# ---------------------------------------------------------------- report

def analyze(trace) -> dict:
    """Full MetricsReport for one trace, as a JSON-ready dict."""
    bounds = Bounds(trace.meta)
    W = bounds.watched
    pulses = pulse_series(trace, W)
    points = find_stabilization_points(pulses, 2 * bounds.d)
    quasi = find_stabilization_points(pulses, 3 * bounds.d)
    report = {
        "stabilization_points": [[p, 2 * bounds.d] for p in points],
        "quasi_stabilization_points": [[p, 3 * bounds.d] for p in quasi],
        "skew": {},
        "accuracy": {},
        "resync_points": [[t, good] for t, good in find_resync_points(trace, bounds)],
        "hazards": {},
        "violations": [],
        "quick": {},
    }
    t_s = settled_stabilization(trace, bounds, pulses)
    if t_s is not None:
        skew, accuracy, _ = skew_accuracy(pulses, t_s)
        report["skew"] = {
            "from": t_s,
            "series": skew,
            "max": max(skew) if skew else None,
        }
        gaps = [g for gs in accuracy.values() for g in gs]
        report["accuracy"] = {
            "min": min(gaps) if gaps else None,
            "max": max(gaps) if gaps else None,
            "count": len(gaps),
        }
        violations = verify_bounds(trace, bounds, t_s)
        report["violations"] = [v.as_dict() for v in violations]
        if bounds.quick:
            qp = pulse_series(trace, W, quick=True)
            report["quick"] = {
                "pulses": {str(i): len(p) for i, p in qp.items()},
            }
    hz = hazard_scan(trace)
    post = hazard_scan(trace, after=t_s) if t_s is not None else hz
    report["hazards"] = {
        "multi_guard": len(hz["multi_guard"]),
        "self_loop": len(hz["self_loop"]),
        "post_stabilization": (len(post["multi_guard"]) + len(post["self_loop"]))
        if t_s is not None else None,
        "events": (hz["multi_guard"] + hz["self_loop"])[:100],
    }
    report["stabilized"] = t_s is not None
    report["t_stab"] = t_s
    return report


# ------------------------------------------------- brute-force cross-checks
# Deliberately naive quadratic reimplementations used to pin the streaming
# versions; they share nothing with the code above but the record layout.

def bf_stabilization_points(pulses: dict, window: int) -> list:
    series = {i: sorted(int(x) for x in p) for i, p in pulses.items()}
    if any(not p for p in series.values()):
        return []
    anchors = sorted({t for p in series.values() for t in p})
    detected = []
    for t in anchors:
        if all(any(t <= u < t + window for u in p) for p in series.values()):
            detected.append(t)
    merged = []
    for t in detected:
        if merged and t < merged[-1] + window:
            continue
        merged.append(t)
    return merged


def bf_skew_max(pulses: dict, t_start: int) -> int | None:
    aligned = {i: [t for t in sorted(p) if t >= t_start] for i, p in pulses.items()}
    kmax = min(len(p) for p in aligned.values())
    worst = None
    for k in range(kmax):
        group = [p[k] for p in aligned.values()]
        for a in group:
            for b in group:
                d = abs(a - b)
                if worst is None or d > worst:
                    worst = d
    return worst


def bf_resync_points(trace, bounds: Bounds) -> list:
    W = bounds.watched
    per_node = {}
    for i in W:
        per_node[i] = sorted(
            int(t) for t, nd, mc, st in
            zip(trace.t, trace.node, trace.mach, trace.state)
            if nd == i and mc == M_RSUPP and st == RS_SUPP_RESYNC)
    if any(not p for p in per_node.values()):
        return []
    window = 2 * bounds.d
    witnesses = []
    used_until = -1
    for t0 in sorted({t for p in per_node.values() for t in p}):
        if t0 <= used_until:
            continue
        group = []
        for p in per_node.values():
            cand = [u for u in p if t0 <= u < t0 + window]
            if not cand:
                group = None
                break
            group.append(cand[0])
        if group is None:
            continue
        witnesses.append(t0 - 1)
        used_until = max(group)
    return witnesses


def bf_hazard_counts(trace) -> tuple:
    multi = sum(1 for mc in trace.mach if mc == REC_HAZARD)
    selfloop = 0
    recs = sorted(
        (int(nd), int(mc), int(t), int(ax))
        for t, nd, mc, ax in zip(trace.t, trace.node, trace.mach, trace.aux)
        if mc <= M_QUICK)
    for k in range(len(recs) - 1):
        n0, m0, t0, a0 = recs[k]
        n1, m1, t1, _ = recs[k + 1]
        if n0 == n1 and m0 == m1 and a0 > 0 and t1 < a0:
            selfloop += 1
    return multi, selfloop
