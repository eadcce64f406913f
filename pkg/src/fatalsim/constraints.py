"""Timeout-constraint arithmetic for the FATAL and FATAL+ protocols.

This module owns the closed-form timeout solver, the inequality checker
that validates arbitrary timeout sets, and every derived analytic
quantity (skew/accuracy bounds, stabilization-time budget, rejoin
deadline) that the trace analysis compares runs against.

All durations are expressed in the same unit as the maximum delay ``d``
(picoseconds everywhere in this package).  The solver works in floats;
:func:`quantize` rounds a solution up to the integer picosecond grid,
which preserves every one-sided constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

REL_SLACK = 1e-9  # boundary classification slack for inequality checks
GRID_SLACK = 8.0  # absolute ps slack for equality checks on quantized sets


class ParameterError(ValueError):
    """Raised for parameter values outside the model's domain."""


class InfeasibleError(ValueError):
    """Raised when the quick-cycle counter interval is empty."""

    def __init__(self, lo: float, hi: float):
        self.lo = lo
        self.hi = hi
        super().__init__(
            f"no integer M in [{lo:.6f}, {hi:.6f}]; raise alpha (or t4) to widen it"
        )


class ConstraintViolation(ValueError):
    """Raised when an operation requires a timeout set that fails its checks."""


def lambda_bound(theta: float) -> float:
    """Drift-dependent constant lambda = sqrt((25*theta-9)/(25*theta)).

    Lies in (4/5, 1) for every theta > 1 and increases with theta.
    """
    if theta <= 1.0:
        raise ParameterError(f"drift bound theta must exceed 1, got {theta}")
    return math.sqrt((25.0 * theta - 9.0) / (25.0 * theta))


@dataclass(frozen=True)
class Params:
    """System parameters a timeout set is solved/checked against."""

    theta: float  # clock drift bound, > 1
    d: int  # maximum channel delay, ps
    n: int  # number of nodes
    f: int  # tolerated Byzantine faults, n >= 3f+1
    alpha: float = 1.0  # accuracy-ratio target, >= 1
    d_plus_min: int = 0  # quick-layer delay lower bound, ps (0 = use d)
    d_plus_max: int = 0  # quick-layer delay upper bound, ps (0 = use d)

    def __post_init__(self):
        if self.theta <= 1.0:
            raise ParameterError(f"theta must exceed 1, got {self.theta}")
        if self.d <= 0:
            raise ParameterError(f"d must be positive, got {self.d}")
        if self.f < 0 or self.n < 3 * self.f + 1:
            raise ParameterError(f"need n >= 3f+1, got n={self.n}, f={self.f}")
        if self.alpha < 1.0:
            raise ParameterError(f"alpha must be >= 1, got {self.alpha}")
        if self.d_plus_min == 0 and self.d_plus_max == 0:
            object.__setattr__(self, "d_plus_min", self.d)
            object.__setattr__(self, "d_plus_max", self.d)
        if not 0 < self.d_plus_min <= self.d_plus_max:
            raise ParameterError(
                f"need 0 < d_plus_min <= d_plus_max, got "
                f"{self.d_plus_min}, {self.d_plus_max}"
            )

    @property
    def lam(self) -> float:
        return lambda_bound(self.theta)

    @property
    def sigma_plus(self) -> int:
        """Quick-layer skew bound 2*d_plus_max - d_plus_min."""
        return 2 * self.d_plus_max - self.d_plus_min


@dataclass(frozen=True)
class TimeoutSet:
    """The nine core timeouts plus the randomized-timeout interval."""

    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    t7: float
    r1: float
    r2: float
    r3_low: float
    r3_high: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class QuickTimeoutSet:
    """Quick-cycle timeouts and the cycle-counter modulus."""

    t1p: float
    t2p: float
    t3p: float
    big_m: int

    def as_dict(self) -> dict[str, float]:
        return {"t1p": self.t1p, "t2p": self.t2p, "t3p": self.t3p, "big_m": self.big_m}


@dataclass(frozen=True)
class Check:
    """One inequality: satisfied iff lhs >= rhs (slack = lhs - rhs)."""

    name: str
    lhs: float
    rhs: float
    satisfied: bool

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


@dataclass(frozen=True)
class CheckReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.satisfied for c in self.checks)

    @property
    def violated(self) -> list[str]:
        return [c.name for c in self.checks if not c.satisfied]


def _ge(name: str, lhs: float, rhs: float) -> Check:
    tol = REL_SLACK * max(1.0, abs(lhs), abs(rhs))
    return Check(name, lhs, rhs, lhs >= rhs - tol)


def _eq(name: str, lhs: float, rhs: float) -> Check:
    tol = max(REL_SLACK * max(1.0, abs(lhs), abs(rhs)), GRID_SLACK)
    return Check(name, lhs, rhs, abs(lhs - rhs) <= tol)


def solve_fatal(params: Params) -> TimeoutSet:
    """Closed-form timeout assignment satisfying every core constraint.

    Every duration is a coefficient in (theta, alpha, n-f) times d, so
    scaling d scales the whole set exactly.  The printed closed form for
    r2 falls slightly short of the r2 inequality it is meant to satisfy
    (the condensed expressions drop terms); the checker is authoritative,
    so r2 is raised to the tight bound whenever the closed form is below
    it.
    """
    th = params.theta
    lam = params.lam
    nf = params.n - params.f
    a = params.alpha
    d = float(params.d)

    c1 = 4.0 * th
    c2 = 46.0 * th**3 / (1.0 - lam)
    c6 = 46.0 * th**4 / (1.0 - lam)
    c3 = (th**2 - 1.0) * 46.0 * th**3 / (1.0 - lam) + 31.0 * th**3
    c4 = 46.0 * th**3 * (a * th**3 - 1.0) / (1.0 - lam) + 35.0 * a * th**4
    c5 = 46.0 * th**4 * (a * th**3 - 1.0) / (1.0 - lam) + 39.0 * a * th**5
    c7 = 92.0 * a * th**8 / (1.0 - lam) + 78.0 * a * th**5
    cr1 = 46.0 * th**6 * (3.0 * a * th**3 - 1.0) / (1.0 - lam) + 109.0 * a * th**6
    cr2_closed = (
        92.0 * th**7 * (3.0 * a * th**3 - 1.0) * nf / (1.0 - lam) ** 2
        + (218.0 * a * th**7 + 108.0 * th**2) * nf / (1.0 - lam)
    )
    delta_g_c = (2.0 * th + 3.0) * c1
    cr2_bound = 2.0 * th * (cr1 + 4.0 * delta_g_c + c1 + 8.0 * th + 16.0) * nf / (1.0 - lam)
    cr2 = max(cr2_closed, cr2_bound)

    r2 = cr2 * d
    r3_low = th * (r2 + 3.0 * d)
    r3_high = r3_low + 8.0 * (1.0 - lam) * r2
    return TimeoutSet(
        t1=c1 * d, t2=c2 * d, t3=c3 * d, t4=c4 * d, t5=c5 * d,
        t6=c6 * d, t7=c7 * d, r1=cr1 * d, r2=r2,
        r3_low=r3_low, r3_high=r3_high,
    )


def check_fatal(ts: TimeoutSet, params: Params) -> CheckReport:
    """Evaluate every core timeout inequality against the given set.

    Violations are reported, not raised; each check carries both sides
    so callers can print the slack.
    """
    th = params.theta
    d = float(params.d)
    lam = params.lam
    nf = params.n - params.f
    dg = (2.0 * th + 3.0) * ts.t1

    checks = [
        _ge("t1", ts.t1, 4.0 * th * d),
        _ge("t2", ts.t2, 3.0 * th * dg + 7.0 * th * d),
        _ge("t3", ts.t3, (2.0 * th**2 + 4.0 * th) * ts.t1 - ts.t2 + th * ts.t6 + 7.0 * th * d),
        _ge("t4", ts.t4, ts.t3),
        _ge("t5", ts.t5, max(
            (th - 1.0) * ts.t2 - ts.t3 + th * ts.t4 + 7.0 * th * d,
            (th - 1.0) * ts.t1 + th * (ts.t2 + ts.t4) - ts.t6,
        )),
        _ge("t6", ts.t6, th * ts.t2 - 2.0 * th * ts.t1 - 2.0 * th * d),
        _ge("t7", ts.t7, (2.0 * th - 1.0) * ts.t1 + th * (ts.t2 + ts.t4 + ts.t5) + ts.t6),
        _ge("r1", ts.r1, max(
            th * ts.t7 + (4.0 * th**2 + 8.0 * th) * d,
            th * (2.0 * ts.t2 + 2.0 * ts.t4 + ts.t5 + 7.0 * d) - 2.0 * ts.t1,
        )),
        _ge("r2", ts.r2, 2.0 * th * (ts.r1 + 4.0 * dg + ts.t1 + (8.0 * th + 16.0) * d) * nf / (1.0 - lam)),
        _eq("r3_low", ts.r3_low, th * (ts.r2 + 3.0 * d)),
        _eq("r3_high", ts.r3_high, th * (ts.r2 + 3.0 * d) + 8.0 * (1.0 - lam) * ts.r2),
    ]
    # lambda constraint, rearranged as lhs >= rhs with lhs the quotient
    num = ts.t2 - 2.0 * th * dg - (th - 1.0) * ts.t1 - 4.0 * th * d
    den = ts.t2 - (th - 1.0) * ts.t1 - th * d
    quotient = num / den if den > 0 else float("-inf")
    checks.append(_ge("lambda", quotient, lam))
    return CheckReport(checks)


def solve_quick(params: Params, ts: TimeoutSet) -> QuickTimeoutSet:
    """Minimal quick-cycle timeouts plus the smallest admissible modulus M.

    The three timeout constraints are taken with equality; M is the
    smallest integer in its admissible interval.  Raises
    :class:`InfeasibleError` (carrying both endpoints) when the interval
    contains no integer; raising alpha widens it.
    """
    th = params.theta
    d = float(params.d)
    dpmax = float(params.d_plus_max)
    sp = float(params.sigma_plus)

    t2p = th * (3.0 * d + 3.0 * dpmax)
    t1p = th * (t2p + sp + 3.0 * d + dpmax)
    t3p = th * (t1p + dpmax)

    m_lo = (th * (ts.t2 + ts.t3 + 3.0 * d) + t1p - t2p) / (t1p + t3p)
    m_hi = (ts.t2 + ts.t4 - 3.0 * th * d) / (t1p + t3p + sp + 3.0 * dpmax)
    big_m = math.ceil(m_lo - REL_SLACK)
    if big_m < 2:
        big_m = 2  # the quick layer needs more than one tick per pulse
    if big_m > math.floor(m_hi + REL_SLACK):
        raise InfeasibleError(m_lo, m_hi)
    return QuickTimeoutSet(t1p=t1p, t2p=t2p, t3p=t3p, big_m=big_m)


def check_quick(qts: QuickTimeoutSet, ts: TimeoutSet, params: Params) -> CheckReport:
    """Evaluate the quick-cycle constraints for an arbitrary quick set."""
    th = params.theta
    d = float(params.d)
    dpmax = float(params.d_plus_max)
    sp = float(params.sigma_plus)
    m_lo = (th * (ts.t2 + ts.t3 + 3.0 * d) + qts.t1p - qts.t2p) / (qts.t1p + qts.t3p)
    m_hi = (ts.t2 + ts.t4 - 3.0 * th * d) / (qts.t1p + qts.t3p + sp + 3.0 * dpmax)
    return CheckReport([
        _ge("t1p", qts.t1p, th * (qts.t2p + sp + 3.0 * d + dpmax)),
        _ge("t2p", qts.t2p, th * (3.0 * d + 3.0 * dpmax)),
        _ge("t3p", qts.t3p, th * (qts.t1p + dpmax)),
        _ge("m_lower", float(qts.big_m), m_lo),
        _ge("m_upper", m_hi, float(qts.big_m)),
    ])


def check_counter(m: int, phi: float, t_minus: float) -> bool:
    """Fast-counter feasibility: the modulus must satisfy m <= phi * T-.

    ``t_minus`` is the accuracy lower bound of the pulse layer the
    counter rides on; the boundary is inclusive.
    """
    if m <= 0:
        raise ParameterError(f"fast-counter modulus must be positive, got {m}")
    if phi <= 0:
        raise ParameterError(f"tick rate phi must be positive, got {phi}")
    return m <= phi * t_minus * (1.0 + REL_SLACK)


@dataclass(frozen=True)
class DerivedQuantities:
    """Analytic quantities the trace analysis checks runs against."""

    lam: float
    delta_g: float  # good-resync sleep-exclusion window (2*theta+3)*t1
    e3_hat: float  # max randomized-timeout span + reset slack
    skew: float  # pulse skew bound, = 2d
    accuracy_min: float  # (t2+t3)/theta - 2d
    accuracy_max: float  # t2+t4+7d
    stab_time: float  # T(k)
    stab_probability: float  # 1 - 2^(-k(n-f))
    k: int
    rejoin_bound: float  # (1 + 5/(2*theta)) * r1
    sigma_plus: float = 0.0
    quick_accuracy_min: float = 0.0  # (t1p+t3p)/theta - sigma_plus
    quick_accuracy_max: float = 0.0  # t1p+t3p+sigma_plus+3*d_plus_max


def derive(params: Params, ts: TimeoutSet, k: int,
           qts: QuickTimeoutSet | None = None) -> DerivedQuantities:
    """Compute all derived quantities for a checked timeout set."""
    report = check_fatal(ts, params)
    if not report.ok:
        raise ConstraintViolation(f"timeout set violates: {report.violated}")
    th = params.theta
    d = float(params.d)
    lam = params.lam
    e3 = th * (ts.r2 + 3.0 * d) + 8.0 * (1.0 - lam) * ts.r2 + d
    dq = DerivedQuantities(
        lam=lam,
        delta_g=(2.0 * th + 3.0) * ts.t1,
        e3_hat=e3,
        skew=2.0 * d,
        accuracy_min=(ts.t2 + ts.t3) / th - 2.0 * d,
        accuracy_max=ts.t2 + ts.t4 + 7.0 * d,
        stab_time=(k + 2) * e3 + ts.r1 / th,
        stab_probability=1.0 - 2.0 ** (-k * (params.n - params.f)),
        k=k,
        rejoin_bound=(1.0 + 5.0 / (2.0 * th)) * ts.r1,
    )
    if qts is not None:
        sp = float(params.sigma_plus)
        dq = replace(
            dq,
            sigma_plus=sp,
            quick_accuracy_min=(qts.t1p + qts.t3p) / th - sp,
            quick_accuracy_max=qts.t1p + qts.t3p + sp + 3.0 * params.d_plus_max,
        )
    return dq


def quantize(ts: TimeoutSet, params: Params | None = None) -> TimeoutSet:
    """Round every duration up to the integer picosecond grid.

    Rounding a duration up can still break a constraint whose right-hand
    side involves other (also rounded-up) durations when the float
    solution sat exactly on the bound, so with ``params`` given a repair
    pass walks the dependency order and lifts any short value onto its
    recomputed integer bound (plus one ps of headroom).  The r3 interval
    is re-derived from the repaired r2.
    """
    c = {k: float(math.ceil(v - REL_SLACK)) for k, v in ts.as_dict().items()}
    if params is None:
        return TimeoutSet(**c)
    th = params.theta
    d = float(params.d)
    lam = params.lam
    nf = params.n - params.f

    def lift(key, rhs):
        if c[key] < rhs:
            c[key] = float(math.ceil(rhs)) + 1.0

    lift("t1", 4.0 * th * d)
    dg = (2.0 * th + 3.0) * c["t1"]
    lift("t2", 3.0 * th * dg + 7.0 * th * d)
    lift("t2", (2.0 * th * dg + (1.0 - lam) * (th - 1.0) * c["t1"]
                + (4.0 - lam) * th * d) / (1.0 - lam))
    lift("t6", th * c["t2"] - 2.0 * th * c["t1"] - 2.0 * th * d)
    lift("t3", (2.0 * th**2 + 4.0 * th) * c["t1"] - c["t2"] + th * c["t6"] + 7.0 * th * d)
    lift("t4", c["t3"])
    lift("t5", max((th - 1.0) * c["t2"] - c["t3"] + th * c["t4"] + 7.0 * th * d,
                   (th - 1.0) * c["t1"] + th * (c["t2"] + c["t4"]) - c["t6"]))
    lift("t7", (2.0 * th - 1.0) * c["t1"] + th * (c["t2"] + c["t4"] + c["t5"]) + c["t6"])
    lift("r1", max(th * c["t7"] + (4.0 * th**2 + 8.0 * th) * d,
                   th * (2.0 * c["t2"] + 2.0 * c["t4"] + c["t5"] + 7.0 * d) - 2.0 * c["t1"]))
    lift("r2", 2.0 * th * (c["r1"] + 4.0 * dg + c["t1"] + (8.0 * th + 16.0) * d) * nf / (1.0 - lam))
    c["r3_low"] = float(math.ceil(th * (c["r2"] + 3.0 * d)))
    c["r3_high"] = float(math.ceil(th * (c["r2"] + 3.0 * d) + 8.0 * (1.0 - lam) * c["r2"]))
    return TimeoutSet(**c)


def quantize_quick(qts: QuickTimeoutSet) -> QuickTimeoutSet:
    return QuickTimeoutSet(
        t1p=float(math.ceil(qts.t1p - REL_SLACK)),
        t2p=float(math.ceil(qts.t2p - REL_SLACK)),
        t3p=float(math.ceil(qts.t3p - REL_SLACK)),
        big_m=qts.big_m,
    )
