"""Scenario files: one adversarial space, loaded strictly and lowered.

A scenario is TOML (key/value with nested sections).  Every field has
exactly one spelling; unknown keys are hard errors, because a silently
ignored knob would invalidate whole experiment batches.  ``lower()``
turns a validated :class:`Scenario` into the flat integer config the
simulation kernel consumes; everything random about the *configuration*
(random clock schedules, random fixed delays) is drawn here from a
dedicated config stream so the kernel's run stream stays stable.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import constraints
from .constraints import Params, QuickTimeoutSet, TimeoutSet
from .rng import SplitMix64

MAX_KERNEL_NODES = 16
RATE_DEN = 1000  # clock rates live on a 1/1000 grid

MAIN_NAMES = ("accept", "sleep", "sleep_waking", "waking", "ready",
              "propose", "recover", "join")
EXT_NAMES = ("dormant", "passive", "active")
TRIG_NAMES = ("init", "wait")
QUICK_NAMES = ("accept_p", "ready_p", "propose_p")
ADV_POLICIES = ("silent", "constant", "random_walk", "replay", "mimic", "callback")

RS_SUPP_BASE = 1
RS_SUPP_RESYNC = RS_SUPP_BASE + 32
RS_RESYNC = RS_SUPP_RESYNC + 1


class ScenarioError(ValueError):
    """Raised for malformed or out-of-model scenario files."""


def parse_rational(value, *, name: str) -> Fraction:
    """Exact rational from int, decimal float, or 'p/q' / decimal string."""
    if isinstance(value, bool):
        raise ScenarioError(f"{name}: expected a number, got a boolean")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ScenarioError(f"{name}: cannot parse rational {value!r}") from exc
    raise ScenarioError(f"{name}: expected a number or 'p/q' string")


def _check_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) in [{where}]: {sorted(unknown)}")


def _state_index(names, value, where):
    if value not in names:
        raise ScenarioError(f"{where}: unknown state {value!r} (one of {names})")
    return names.index(value)


def _rsupp_index(value, n, where):
    if value == "none":
        return 0
    if value == "supp_resync":
        return RS_SUPP_RESYNC
    if value == "resync":
        return RS_RESYNC
    if value.startswith("supp_"):
        j = int(value[5:])
        if 0 <= j < n:
            return RS_SUPP_BASE + j
    raise ScenarioError(f"{where}: unknown support state {value!r}")


@dataclass
class DelayPolicy:
    mode: str = "uniform"  # fixed | uniform | scripted
    delta: int = 0
    lo: int = 0
    hi: int = 0
    script: list = field(default_factory=list)


@dataclass
class ClockSpec:
    mode: str = "fixed"  # fixed | random | given
    rate: Fraction = Fraction(1)
    max_segments: int = 3
    per_node: dict = field(default_factory=dict)  # id -> [(start, Fraction)]


@dataclass
class AdversarySpec:
    nodes: tuple = ()
    policy: str = "silent"
    constant_state: str = "accept"
    walk_interval: int = 0
    mimic_target: int = 0
    mimic_lag: int = 1
    script: list = field(default_factory=list)  # (time, to, layer, word)
    callback: object = None


@dataclass
class Action:
    time: int
    kind: str
    node: int = -1
    to: int = -1
    rate: Fraction = Fraction(1)
    layer: str = "fatal"
    on: bool = True
    delay: DelayPolicy | None = None
    states: tuple | None = None


@dataclass
class Scenario:
    """Validated description of one run family (seed still free)."""

    params: Params
    theta_frac: Fraction
    timeouts: TimeoutSet  # integer-ps (quantized)
    quick: QuickTimeoutSet | None = None
    fast_m: int = 0
    fast_tick_ps: int = 0
    rho_frac: Fraction = Fraction(1)
    seed: int = 0
    horizon: int = 0
    horizon_tk: int = 0
    init_mode: str = "random"
    init_main: tuple = ()
    init_ext: tuple = ()
    init_trig: tuple = ()
    init_rsupp: tuple = ()
    init_quick: tuple = ()
    init_flags: str = "from_obs"
    clocks: ClockSpec = field(default_factory=ClockSpec)
    fast_clocks: ClockSpec = field(default_factory=ClockSpec)
    delays: DelayPolicy = field(default_factory=DelayPolicy)
    delay_overrides: dict = field(default_factory=dict)  # (i, j) -> DelayPolicy
    delays_quick: DelayPolicy | None = None
    quick_delay_overrides: dict = field(default_factory=dict)
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    actions: list = field(default_factory=list)
    record_fast: bool = True

    @property
    def quick_on(self) -> bool:
        return self.quick is not None

    @property
    def fast_on(self) -> bool:
        return self.fast_m > 0

    def digest(self) -> str:
        """Stable hash of the lowered configuration (seed included)."""
        cfg = lower(self)
        cfg.pop("adv_callback", None)
        blob = json.dumps(_jsonable(cfg), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def header_meta(self) -> dict:
        """Everything the analysis layer needs to check a trace of this run."""
        meta = {
            "n": self.params.n,
            "f": self.params.f,
            "d": self.params.d,
            "theta": str(self.theta_frac),
            "timeouts": {k: int(v) for k, v in self.timeouts.as_dict().items()},
            "seed": self.seed,
            "horizon": self.horizon,
            "faulty": sorted(self.adversary.nodes),
        }
        if self.quick is not None:
            meta["quick"] = {
                "t1p": int(self.quick.t1p), "t2p": int(self.quick.t2p),
                "t3p": int(self.quick.t3p), "big_m": self.quick.big_m,
                "d_plus_min": self.params.d_plus_min,
                "d_plus_max": self.params.d_plus_max,
            }
        if self.fast_on:
            meta["fast"] = {
                "m": self.fast_m, "tick_ps": self.fast_tick_ps,
                "rho": str(self.rho_frac),
            }
        resets = [(a.time, a.node) for a in self.actions if a.kind == "reset_node"]
        if resets:
            meta["resets"] = resets
        return meta


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# ---------------------------------------------------------------- loading

def load_file(path) -> Scenario:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
    return from_dict(data)


def from_dict(data: dict) -> Scenario:
    _check_keys(data, {"params", "timeouts", "quick", "fast", "run", "clocks",
                       "delays", "delays_quick", "init", "adversary", "actions"},
                "scenario")
    if "params" not in data:
        raise ScenarioError("missing [params] section")
    p = data["params"]
    _check_keys(p, {"theta", "d", "n", "f", "alpha", "d_plus_min", "d_plus_max"},
                "params")
    theta_frac = parse_rational(p.get("theta", "13/10"), name="params.theta")
    if theta_frac.denominator > RATE_DEN or RATE_DEN % theta_frac.denominator != 0:
        raise ScenarioError(
            f"params.theta denominator must divide {RATE_DEN}, got {theta_frac}")
    try:
        params = Params(
            theta=float(theta_frac),
            d=int(p["d"]),
            n=int(p["n"]),
            f=int(p["f"]),
            alpha=float(parse_rational(p.get("alpha", 1), name="params.alpha")),
            d_plus_min=int(p.get("d_plus_min", 0)),
            d_plus_max=int(p.get("d_plus_max", 0)),
        )
    except KeyError as exc:
        raise ScenarioError(f"params missing field {exc}") from exc
    except constraints.ParameterError as exc:
        raise ScenarioError(str(exc)) from exc
    if params.n > MAX_KERNEL_NODES:
        raise ScenarioError(f"at most {MAX_KERNEL_NODES} nodes supported")

    allow_invalid = False
    if "timeouts" in data:
        t = dict(data["timeouts"])
        allow_invalid = bool(t.pop("allow_invalid", False))
        _check_keys(t, set(TimeoutSet(0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0).as_dict()),
                    "timeouts")
        try:
            ts = TimeoutSet(**{k: float(v) for k, v in t.items()})
        except TypeError as exc:
            raise ScenarioError(f"timeouts: {exc}") from exc
        ts = constraints.quantize(ts)
        report = constraints.check_fatal(ts, params)
        if not report.ok and not allow_invalid:
            raise ScenarioError(
                f"timeouts violate {report.violated}; set "
                f"timeouts.allow_invalid = true to run anyway")
    else:
        ts = constraints.quantize(constraints.solve_fatal(params), params)

    quick = None
    q = data.get("quick", {})
    _check_keys(q, {"enabled", "t1p", "t2p", "t3p", "big_m"}, "quick")
    if q.get("enabled"):
        if {"t1p", "t2p", "t3p", "big_m"} <= set(q):
            quick = QuickTimeoutSet(t1p=float(q["t1p"]), t2p=float(q["t2p"]),
                                    t3p=float(q["t3p"]), big_m=int(q["big_m"]))
        else:
            quick = constraints.solve_quick(params, ts)
        quick = constraints.quantize_quick(quick)

    fast_m = 0
    fast_tick = 0
    rho = Fraction(1)
    fa = data.get("fast", {})
    _check_keys(fa, {"enabled", "m", "tick_ps", "rho", "record"}, "fast")
    if fa.get("enabled"):
        if quick is None:
            raise ScenarioError("[fast] requires [quick] enabled")
        fast_m = int(fa["m"])
        fast_tick = int(fa["tick_ps"])
        rho = parse_rational(fa.get("rho", 1), name="fast.rho")
        if fast_m <= 0 or fast_tick <= 0:
            raise ScenarioError("fast.m and fast.tick_ps must be positive")
        if not 1 <= rho <= theta_frac:
            raise ScenarioError(f"fast.rho must lie in [1, theta], got {rho}")

    run = data.get("run", {})
    _check_keys(run, {"seed", "horizon_ps", "horizon_tk"}, "run")
    seed = int(run.get("seed", 0))
    if "horizon_ps" in run and "horizon_tk" in run:
        raise ScenarioError("run: give horizon_ps or horizon_tk, not both")
    horizon_tk = int(run.get("horizon_tk", 0))
    if "horizon_ps" in run:
        horizon = int(run["horizon_ps"])
    elif horizon_tk:
        dq = constraints.derive(params, ts, horizon_tk)
        horizon = math.ceil(dq.stab_time)
    else:
        raise ScenarioError("run: horizon_ps or horizon_tk required")
    if horizon <= 0:
        raise ScenarioError(f"horizon must be positive, got {horizon}")

    sc = Scenario(params=params, theta_frac=theta_frac, timeouts=ts, quick=quick,
                  fast_m=fast_m, fast_tick_ps=fast_tick, rho_frac=rho,
                  seed=seed, horizon=horizon, horizon_tk=horizon_tk,
                  record_fast=bool(fa.get("record", True)))

    _load_init(sc, data.get("init", {}))
    sc.clocks, sc.fast_clocks = _load_clocks(sc, data.get("clocks", {}))
    _load_delays(sc, data.get("delays", {}), data.get("delays_quick", {}))
    _load_adversary(sc, data.get("adversary", {}))
    _load_actions(sc, data.get("actions", []))
    return sc


def _broadcast(value, n, names, where, mapper):
    if isinstance(value, list):
        if len(value) != n:
            raise ScenarioError(f"{where}: expected {n} entries")
        return tuple(mapper(v) for v in value)
    return tuple(mapper(value) for _ in range(n))


def _load_init(sc: Scenario, table: dict):
    _check_keys(table, {"mode", "main", "ext", "trig", "rsupp", "quick", "flags"},
                "init")
    mode = table.get("mode", "random")
    if mode not in ("random", "explicit"):
        raise ScenarioError(f"init.mode must be random or explicit, got {mode!r}")
    sc.init_mode = mode
    n = sc.params.n
    if mode == "explicit":
        sc.init_main = _broadcast(table.get("main", "accept"), n, MAIN_NAMES,
                                  "init.main", lambda v: _state_index(MAIN_NAMES, v, "init.main"))
        sc.init_ext = _broadcast(table.get("ext", "dormant"), n, EXT_NAMES,
                                 "init.ext", lambda v: _state_index(EXT_NAMES, v, "init.ext"))
        sc.init_trig = _broadcast(table.get("trig", "wait"), n, TRIG_NAMES,
                                  "init.trig", lambda v: _state_index(TRIG_NAMES, v, "init.trig"))
        sc.init_rsupp = _broadcast(table.get("rsupp", "none"), n, None,
                                   "init.rsupp", lambda v: _rsupp_index(v, n, "init.rsupp"))
        sc.init_quick = _broadcast(table.get("quick", "accept_p"), n, QUICK_NAMES,
                                   "init.quick", lambda v: _state_index(QUICK_NAMES, v, "init.quick"))
    flags = table.get("flags", "from_obs")
    if flags not in ("zeros", "ones", "from_obs"):
        raise ScenarioError(f"init.flags must be zeros/ones/from_obs, got {flags!r}")
    sc.init_flags = flags


def _parse_clock_table(table: dict, where: str, bound: Fraction) -> ClockSpec:
    _check_keys(table, {"mode", "rate", "max_segments", "node"}, where)
    spec = ClockSpec()
    spec.mode = table.get("mode", "fixed")
    if spec.mode not in ("fixed", "random", "given"):
        raise ScenarioError(f"{where}.mode must be fixed/random/given")
    spec.rate = parse_rational(table.get("rate", 1), name=f"{where}.rate")
    spec.max_segments = int(table.get("max_segments", 3))
    for entry in table.get("node", []):
        _check_keys(entry, {"id", "segments"}, f"{where}.node")
        nid = int(entry["id"])
        segs = []
        for seg in entry["segments"]:
            start, rate = seg
            segs.append((int(start), parse_rational(rate, name=f"{where}.node.segments")))
        if not segs or segs[0][0] != 0:
            raise ScenarioError(f"{where}.node {nid}: segments must start at 0")
        spec.per_node[nid] = segs
    for segs in spec.per_node.values():
        for _, r in segs:
            _check_rate(r, bound, where)
    _check_rate(spec.rate, bound, where)
    return spec


def _check_rate(rate: Fraction, bound: Fraction, where: str):
    if not 1 <= rate <= bound:
        raise ScenarioError(f"{where}: rate {rate} outside [1, {bound}]")
    if RATE_DEN % rate.denominator != 0:
        raise ScenarioError(f"{where}: rate {rate} not on the 1/{RATE_DEN} grid")


def _load_clocks(sc: Scenario, table: dict):
    _check_keys(table, {"mode", "rate", "max_segments", "node", "fast"}, "clocks")
    main_table = {k: v for k, v in table.items() if k != "fast"}
    main_spec = _parse_clock_table(main_table, "clocks", sc.theta_frac)
    fast_spec = _parse_clock_table(table.get("fast", {}), "clocks.fast", sc.rho_frac)
    return main_spec, fast_spec


def _parse_delay_policy(table: dict, where: str, d_lo: int, d_hi: int) -> DelayPolicy:
    _check_keys(table, {"mode", "delta", "lo", "hi", "script", "channel"}, where)
    pol = DelayPolicy()
    pol.mode = table.get("mode", "uniform")
    if pol.mode == "fixed":
        pol.delta = int(table["delta"])
        if not d_lo <= pol.delta <= d_hi:
            raise ScenarioError(f"{where}: delta {pol.delta} outside [{d_lo}, {d_hi}]")
    elif pol.mode == "uniform":
        pol.lo = int(table.get("lo", d_lo))
        pol.hi = int(table.get("hi", d_hi))
        if not d_lo <= pol.lo <= pol.hi <= d_hi:
            raise ScenarioError(f"{where}: bounds [{pol.lo}, {pol.hi}] outside [{d_lo}, {d_hi}]")
    elif pol.mode == "random_fixed":
        pass  # per-channel constant drawn at lowering
    elif pol.mode == "scripted":
        pol.script = [int(v) for v in table.get("script", [])]
        for v in pol.script:
            if not d_lo <= v <= d_hi:
                raise ScenarioError(f"{where}: scripted delay {v} outside [{d_lo}, {d_hi}]")
    else:
        raise ScenarioError(f"{where}: unknown mode {pol.mode!r}")
    return pol


def _load_delays(sc: Scenario, table: dict, qtable: dict):
    d = sc.params.d
    top = {k: v for k, v in table.items() if k != "channel"}
    top.setdefault("mode", "uniform")
    sc.delays = _parse_delay_policy(top, "delays", 1, d - 1)
    for entry in table.get("channel", []):
        _check_keys(entry, {"from", "to", "mode", "delta", "lo", "hi", "script"},
                    "delays.channel")
        i, j = int(entry["from"]), int(entry["to"])
        if not (0 <= i < sc.params.n and 0 <= j < sc.params.n):
            raise ScenarioError(f"delays.channel: node ids {i}->{j} out of range")
        sub = {k: v for k, v in entry.items() if k not in ("from", "to")}
        sc.delay_overrides[(i, j)] = _parse_delay_policy(sub, "delays.channel", 1, d - 1)
    if sc.quick_on:
        qtop = {k: v for k, v in qtable.items() if k != "channel"}
        qtop.setdefault("mode", "uniform")
        sc.delays_quick = _parse_delay_policy(
            qtop, "delays_quick", sc.params.d_plus_min, sc.params.d_plus_max)
        for entry in qtable.get("channel", []):
            _check_keys(entry, {"from", "to", "mode", "delta", "lo", "hi", "script"},
                        "delays_quick.channel")
            i, j = int(entry["from"]), int(entry["to"])
            sub = {k: v for k, v in entry.items() if k not in ("from", "to")}
            sc.quick_delay_overrides[(i, j)] = _parse_delay_policy(
                sub, "delays_quick.channel", sc.params.d_plus_min, sc.params.d_plus_max)
    elif qtable:
        raise ScenarioError("[delays_quick] given but the quick layer is disabled")


def _load_adversary(sc: Scenario, table: dict):
    _check_keys(table, {"nodes", "policy", "constant_state", "walk_interval",
                        "mimic_target", "mimic_lag", "script"}, "adversary")
    adv = AdversarySpec()
    adv.nodes = tuple(int(v) for v in table.get("nodes", []))
    n = sc.params.n
    for node in adv.nodes:
        if not 0 <= node < n:
            raise ScenarioError(f"adversary.nodes: id {node} out of range")
    if len(adv.nodes) > sc.params.f:
        raise ScenarioError(
            f"adversary controls {len(adv.nodes)} nodes but f={sc.params.f}")
    adv.policy = table.get("policy", "silent")
    if adv.policy not in ADV_POLICIES:
        raise ScenarioError(f"adversary.policy must be one of {ADV_POLICIES}")
    adv.constant_state = table.get("constant_state", "accept")
    _state_index(MAIN_NAMES, adv.constant_state, "adversary.constant_state")
    adv.walk_interval = int(table.get("walk_interval", 200 * sc.params.d))
    if adv.walk_interval <= 0:
        raise ScenarioError("adversary.walk_interval must be positive")
    adv.mimic_target = int(table.get("mimic_target", 0))
    adv.mimic_lag = int(table.get("mimic_lag", sc.params.d))
    if adv.mimic_lag < 1:
        raise ScenarioError("adversary.mimic_lag must be >= 1 ps")
    for entry in table.get("script", []):
        _check_keys(entry, {"time", "to", "layer", "word"}, "adversary.script")
        layer = entry.get("layer", "fatal")
        if layer not in ("fatal", "quick"):
            raise ScenarioError(f"adversary.script: layer must be fatal/quick")
        adv.script.append((int(entry["time"]), int(entry.get("to", -1)),
                           0 if layer == "fatal" else 1, int(entry["word"])))
    sc.adversary = adv


def _load_actions(sc: Scenario, entries: list):
    last_t = 0
    for entry in entries:
        kind = entry.get("kind")
        if kind == "reset_node":
            _check_keys(entry, {"kind", "time", "node", "states"}, "actions")
            act = Action(time=int(entry["time"]), kind=kind, node=int(entry["node"]))
            if "states" in entry:
                names = entry["states"]
                act.states = (
                    _state_index(MAIN_NAMES, names[0], "actions.states"),
                    _state_index(EXT_NAMES, names[1], "actions.states"),
                    _state_index(TRIG_NAMES, names[2], "actions.states"),
                    _rsupp_index(names[3], sc.params.n, "actions.states"),
                    _state_index(QUICK_NAMES, names[4], "actions.states"),
                )
        elif kind == "set_clock_rate":
            _check_keys(entry, {"kind", "time", "node", "rate", "layer"}, "actions")
            act = Action(time=int(entry["time"]), kind=kind, node=int(entry["node"]),
                         rate=parse_rational(entry["rate"], name="actions.rate"),
                         layer=entry.get("layer", "main"))
            bound = sc.rho_frac if act.layer == "fast" else sc.theta_frac
            _check_rate(act.rate, bound, "actions.set_clock_rate")
        elif kind == "set_delay":
            _check_keys(entry, {"kind", "time", "from", "to", "layer", "mode",
                                "delta", "lo", "hi"}, "actions")
            layer = entry.get("layer", "fatal")
            if layer == "fatal":
                d_lo, d_hi = 1, sc.params.d - 1
            else:
                d_lo, d_hi = sc.params.d_plus_min, sc.params.d_plus_max
            sub = {k: v for k, v in entry.items()
                   if k in ("mode", "delta", "lo", "hi")}
            act = Action(time=int(entry["time"]), kind=kind,
                         node=int(entry["from"]), to=int(entry["to"]), layer=layer,
                         delay=_parse_delay_policy(sub, "actions.set_delay", d_lo, d_hi))
        elif kind == "set_fault":
            _check_keys(entry, {"kind", "time", "node", "on"}, "actions")
            act = Action(time=int(entry["time"]), kind=kind, node=int(entry["node"]),
                         on=bool(entry.get("on", True)))
        else:
            raise ScenarioError(f"actions: unknown kind {kind!r}")
        if act.time < last_t:
            raise ScenarioError("actions must be sorted by time")
        if not 0 <= act.node < sc.params.n:
            raise ScenarioError(f"actions: node {act.node} out of range")
        last_t = act.time
        sc.actions.append(act)


# ---------------------------------------------------------------- lowering

def _segments_for(spec: ClockSpec, node: int, horizon: int, bound: Fraction,
                  rng: SplitMix64):
    if spec.mode == "given" and node in spec.per_node:
        return spec.per_node[node]
    if spec.mode == "random":
        grid = int((bound - 1) * RATE_DEN)  # admissible rate steps above 1
        count = 1 + rng.below(spec.max_segments)
        starts = sorted({0} | {1 + rng.below(max(horizon - 1, 1))
                               for _ in range(count - 1)})
        return [(s, 1 + Fraction(rng.below(grid + 1), RATE_DEN)) for s in starts]
    return [(0, spec.rate)]


def _lower_clock(spec: ClockSpec, n: int, horizon: int, bound: Fraction,
                 rng: SplitMix64):
    offs, cnts, qs, starts, units = [], [], [], [], []
    for i in range(n):
        segs = _segments_for(spec, i, horizon, bound, rng)
        offs.append(len(starts))
        cnts.append(len(segs))
        qs.append(RATE_DEN)
        for s, r in segs:
            starts.append(s)
            units.append(int(r * RATE_DEN))
    return offs, cnts, qs, starts, units


def _lower_delay(pol: DelayPolicy, ch: tuple, rng: SplitMix64, d_lo: int, d_hi: int,
                 scripted: dict):
    if pol.mode == "fixed":
        return 0, pol.delta, pol.delta
    if pol.mode == "uniform":
        return 1, pol.lo, pol.hi
    if pol.mode == "random_fixed":
        return 0, d_lo + rng.below(d_hi - d_lo + 1), 0
    scripted[ch] = list(pol.script)
    return 2, d_lo, d_hi  # fallback bounds, unused while the script lasts


def lower(sc: Scenario) -> dict:
    """Flatten a scenario into the kernel's integer config dict."""
    n = sc.params.n
    th = sc.theta_frac
    d = sc.params.d
    ts = sc.timeouts
    cfg_rng = SplitMix64((sc.seed ^ 0xC0F1C0F1C0F1C0F1) & ((1 << 64) - 1))

    def up(x: Fraction) -> int:
        return int(math.ceil(x))

    durations = [
        int(ts.t1), int(ts.t2),
        int(sc.quick.t2p) if sc.quick_on else 1,
        up((2 * th + 1) * int(ts.t1)),  # sleep dwell
        int(ts.t3), int(ts.t4), int(ts.t5),
        up(th * (2 * int(ts.t1) + 3 * d)),  # recover gate
        int(ts.t6), int(ts.t7),
        up(4 * th * d),  # supp->resync dwell
        int(ts.r1), 0,  # r3 sampled per reset
        int(sc.quick.t1p) if sc.quick_on else 1,
        int(sc.quick.t3p) if sc.quick_on else 1,
    ]
    durations += [int(ts.r2)] * n  # r2 per peer
    durations += [up(2 * th * d)] * n  # supp dwell per peer

    mo, mc, mq, mss, msu = _lower_clock(sc.clocks, n, sc.horizon, th, cfg_rng)
    fo, fc, fq, fss, fsu = _lower_clock(sc.fast_clocks, n, sc.horizon, sc.rho_frac,
                                        cfg_rng)

    fpol = [0] * (n * n)
    fpar1 = [0] * (n * n)
    fpar2 = [0] * (n * n)
    qpol = [0] * (n * n)
    qpar1 = [0] * (n * n)
    qpar2 = [0] * (n * n)
    scripted_f: dict = {}
    scripted_q: dict = {}
    for i in range(n):
        for j in range(n):
            pol = sc.delay_overrides.get((i, j), sc.delays)
            fpol[i * n + j], fpar1[i * n + j], fpar2[i * n + j] = _lower_delay(
                pol, (i, j), cfg_rng, 1, d - 1, scripted_f)
            if sc.quick_on:
                qp = sc.quick_delay_overrides.get((i, j), sc.delays_quick)
                qpol[i * n + j], qpar1[i * n + j], qpar2[i * n + j] = _lower_delay(
                    qp, (i, j), cfg_rng, sc.params.d_plus_min, sc.params.d_plus_max,
                    scripted_q)

    adv = sc.adversary
    adv_mask = [0] * n
    adv_kind = [0] * n
    adv_p1 = [0] * n
    adv_p2 = [0] * n
    adv_scripts: dict = {}
    kind_code = {"silent": 0, "constant": 1, "random_walk": 2, "replay": 3,
                 "mimic": 4, "callback": 5}[adv.policy]
    enc = (9, 11, 3, 5, 6, 0, 12, 10)
    for node in adv.nodes:
        adv_mask[node] = 1
        adv_kind[node] = kind_code
        if adv.policy == "constant":
            code = enc[MAIN_NAMES.index(adv.constant_state)]
            adv_p1[node] = code | 1 << 4  # plus a held wait signal
        elif adv.policy == "random_walk":
            adv_p1[node] = adv.walk_interval
        elif adv.policy == "mimic":
            adv_p1[node] = adv.mimic_target
            adv_p2[node] = adv.mimic_lag
        elif adv.policy == "replay":
            adv_scripts[node] = list(adv.script)

    actions = []
    for act in sorted(sc.actions, key=lambda a: a.time):
        if act.kind == "reset_node":
            if act.states is not None:
                actions.append((act.time, "reset_node", act.node, act.states))
            else:
                actions.append((act.time, "reset_node", act.node))
        elif act.kind == "set_clock_rate":
            fastc = 1 if act.layer == "fast" else 0
            actions.append((act.time, "set_clock_rate", act.node,
                            int(act.rate * RATE_DEN), fastc))
        elif act.kind == "set_delay":
            layer = 0 if act.layer == "fatal" else 1
            if layer == 0:
                pol, p1, p2 = _lower_delay(act.delay, (act.node, act.to), cfg_rng,
                                           1, d - 1, scripted_f)
            else:
                pol, p1, p2 = _lower_delay(act.delay, (act.node, act.to), cfg_rng,
                                           sc.params.d_plus_min, sc.params.d_plus_max,
                                           scripted_q)
            actions.append((act.time, "set_delay", act.node, act.to, layer, pol, p1, p2))
        else:
            actions.append((act.time, "set_fault", act.node, 1 if act.on else 0))

    cfg = {
        "n": n,
        "f": sc.params.f,
        "d": d,
        "seed": sc.seed,
        "horizon": sc.horizon,
        "durations": durations,
        "r3_low": int(ts.r3_low),
        "r3_high": int(ts.r3_high),
        "quick_on": sc.quick_on,
        "big_m": sc.quick.big_m if sc.quick_on else 2,
        "fast_on": sc.fast_on,
        "fast_m": sc.fast_m if sc.fast_on else 1,
        "fast_period": sc.fast_tick_ps if sc.fast_on else 1,
        "record_fast": sc.record_fast and sc.fast_on,
        "mclk_off": mo, "mclk_cnt": mc, "mclk_q": mq,
        "mseg_start": mss, "mseg_units": msu,
        "fclk_off": fo, "fclk_cnt": fc, "fclk_q": fq,
        "fseg_start": fss, "fseg_units": fsu,
        "fpol": fpol, "fpar1": fpar1, "fpar2": fpar2,
        "qpol": qpol, "qpar1": qpar1, "qpar2": qpar2,
        "adv_mask": adv_mask, "adv_kind": adv_kind,
        "adv_p1": adv_p1, "adv_p2": adv_p2,
        "adv_scripts": adv_scripts,
        "adv_callback": adv.callback,
        "scripted_f": scripted_f,
        "scripted_q": scripted_q,
        "actions": actions,
        "init_mode": sc.init_mode,
        "init_flags": sc.init_flags,
    }
    if sc.init_mode == "explicit":
        cfg["init_main"] = list(sc.init_main)
        cfg["init_ext"] = list(sc.init_ext)
        cfg["init_trig"] = list(sc.init_trig)
        cfg["init_rsupp"] = list(sc.init_rsupp)
        cfg["init_quick"] = list(sc.init_quick)
    return cfg
