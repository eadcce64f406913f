"""Continuous-time primitives: drifting clocks, bounded channels, watchdogs.

Reference time is 64-bit integer picoseconds.  Clock rate schedules are
piecewise-constant rationals normalized to a per-clock common
denominator, so local elapsed time is exact integer arithmetic and
timeout expiries land on a well-defined grid instant (the first instant
at which the local elapsed time reaches the duration).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .rng import SplitMix64

TIME_INF = 1 << 62  # sentinel: far beyond any representable horizon


class HorizonError(ValueError):
    """Raised when a time falls outside a clock's covered range."""


class ConfigError(ValueError):
    """Raised for channel/clock configurations outside the model."""


@dataclass
class ClockModel:
    """Piecewise-constant rate clock; rates are rationals in [1, theta].

    ``segments`` is a list of (start_ps, rate) with rate a Fraction;
    segment k covers [start_k, start_{k+1}) and the last segment extends
    to the horizon.  The local value C(t) is the running integral of the
    rate, kept exact by normalizing all rates to a common denominator.
    """

    segments: list = field(default_factory=lambda: [(0, Fraction(1))])
    horizon: int = TIME_INF

    def __post_init__(self):
        if not self.segments or self.segments[0][0] != 0:
            raise ConfigError("clock segments must start at 0")
        starts = [s for s, _ in self.segments]
        if starts != sorted(starts) or len(set(starts)) != len(starts):
            raise ConfigError("clock segments must have strictly increasing starts")
        self.segments = [(int(s), Fraction(r)) for s, r in self.segments]
        den = 1
        for _, r in self.segments:
            den = den * r.denominator // _gcd(den, r.denominator)
        self._den = den
        self._units = [int(r * den) for _, r in self.segments]  # local units per ps

    def rate_at(self, t: int) -> Fraction:
        idx = self._segment_index(t)
        return self.segments[idx][1]

    def _segment_index(self, t: int) -> int:
        if t < 0 or t > self.horizon:
            raise HorizonError(f"time {t} outside [0, {self.horizon}]")
        idx = 0
        for k, (start, _) in enumerate(self.segments):
            if start <= t:
                idx = k
            else:
                break
        return idx

    def set_rate(self, t: int, rate: Fraction):
        """Switch to a new rate from instant t on (mid-run schedule edit)."""
        rate = Fraction(rate)
        self.segments = [(s, r) for s, r in self.segments if s < t] + [(t, rate)]
        self.__post_init__()


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def clock_value(clock: ClockModel, t: int) -> Fraction:
    """Local time C(t): exact integral of the rate schedule over [0, t]."""
    idx = clock._segment_index(t)
    total = Fraction(0)
    for k in range(idx + 1):
        start = clock.segments[k][0]
        end = clock.segments[k + 1][0] if k + 1 < len(clock.segments) else t
        span = min(end, t) - start
        if span > 0:
            total += span * clock.segments[k][1]
    return total


def clock_inverse(clock: ClockModel, t0: int, local_delta) -> int:
    """First instant t1 >= t0 with C(t1) - C(t0) >= local_delta.

    Exact piecewise inversion; the result is the grid instant at which a
    timeout of duration ``local_delta`` reset at t0 expires.  With the
    identity clock this is exactly t0 + local_delta.
    """
    if local_delta <= 0:
        raise ConfigError(f"local_delta must be positive, got {local_delta}")
    den = clock._den
    need = Fraction(local_delta) * den
    if need != int(need):
        raise ConfigError("local_delta must be representable on the clock grid")
    need = int(need)  # remaining local time in 1/den units
    idx = clock._segment_index(t0)
    pos = t0
    while True:
        units = clock._units[idx]  # local 1/den-units per ps in this segment
        end = clock.segments[idx + 1][0] if idx + 1 < len(clock.segments) else clock.horizon
        capacity = (end - pos) * units
        if capacity >= need:
            t1 = pos + (need + units - 1) // units
            if t1 > clock.horizon:
                raise HorizonError(f"expiry {t1} beyond clock horizon {clock.horizon}")
            return t1
        if idx + 1 >= len(clock.segments):
            raise HorizonError("duration extends past the clock's last segment")
        need -= capacity
        pos = end
        idx += 1


@dataclass
class RandomizedTimeoutSpec:
    """Uniform density on [low, high] local picoseconds; fresh draw per reset."""

    low: int
    high: int

    def __post_init__(self):
        if not 0 < self.low < self.high:
            raise ConfigError(f"need 0 < low < high, got [{self.low}, {self.high}]")

    def sample(self, rng: SplitMix64) -> int:
        return rng.randint(self.low, self.high)


@dataclass
class TimeoutInstance:
    """One watchdog: duration in local time, bound to a clock and a state.

    ``expiry`` is the scheduled reference-time expiry (TIME_INF when the
    port is already expired or the timer was never reset).  The port is
    boolean: 1 from expiry until the next reset.
    """

    duration: object  # int local ps, or RandomizedTimeoutSpec
    trigger_state: object
    clock: ClockModel
    last_reset: int = -1
    expiry: int = TIME_INF
    expired: bool = False

    def randomized(self) -> bool:
        return isinstance(self.duration, RandomizedTimeoutSpec)


def reset_timeout(timer: TimeoutInstance, t: int, rng: SplitMix64 | None = None) -> TimeoutInstance:
    """Reset at instant t: port drops to 0 and a fresh expiry is scheduled.

    Randomized timers draw a new duration from their spec; the sample is
    consulted by nothing until the expiry fires (the scheduler holds it,
    no guard can read it).
    """
    if timer.randomized():
        if rng is None:
            raise ConfigError("randomized timeout reset needs an rng")
        duration = timer.duration.sample(rng)
    else:
        duration = int(timer.duration)
    timer.last_reset = t
    timer.expired = False
    timer.expiry = clock_inverse(timer.clock, t, duration)
    return timer


DELAY_FIXED = "fixed"
DELAY_UNIFORM = "uniform"
DELAY_SCRIPTED = "scripted"


@dataclass
class ChannelModel:
    """FIFO channel with strictly increasing arrivals and delays in (0, d).

    ``policy`` is one of fixed / uniform / scripted; scripted pops from a
    list of per-event delays.  When a sampled delay would break strict
    arrival monotonicity the arrival is clamped to one resolution unit
    past the previous arrival, which stays inside the model as long as
    the clamped delay is still below d (asserted; uniform policies
    resample instead).
    """

    sender: int
    receiver: int
    d: int
    policy: str = DELAY_UNIFORM
    delta: int = 0  # fixed policy
    lo: int = 1  # uniform policy, inclusive
    hi: int = 0  # uniform policy, inclusive; 0 means d-1
    script: list = field(default_factory=list)
    faulty: bool = False
    last_arrival: int = -1
    last_send: int = -1

    def __post_init__(self):
        if self.hi == 0:
            self.hi = self.d - 1
        if self.policy == DELAY_FIXED and not 0 < self.delta < self.d:
            raise ConfigError(f"fixed delay {self.delta} outside (0, {self.d})")
        if self.policy == DELAY_UNIFORM and not 0 < self.lo <= self.hi < self.d:
            raise ConfigError(
                f"uniform delay bounds [{self.lo}, {self.hi}] outside (0, {self.d})"
            )


def deliver(channel: ChannelModel, send_time: int, rng: SplitMix64 | None = None) -> int:
    """Arrival instant for a word sent at ``send_time`` on this channel.

    Applies the delay policy, then the FIFO clamp.  Scripted delays
    outside (0, d) on a correct channel are configuration errors; a
    faulty channel may do as it pleases.
    """
    if send_time < channel.last_send:
        raise ConfigError(
            f"send at {send_time} precedes previous send {channel.last_send}"
        )
    channel.last_send = send_time

    if channel.policy == DELAY_FIXED:
        delay = channel.delta
    elif channel.policy == DELAY_UNIFORM:
        delay = rng.randint(channel.lo, channel.hi)
    elif channel.policy == DELAY_SCRIPTED:
        if not channel.script:
            raise ConfigError("scripted channel ran out of delays")
        delay = channel.script.pop(0)
        if not channel.faulty and not 0 < delay < channel.d:
            raise ConfigError(
                f"scripted delay {delay} outside (0, {channel.d}) on a correct channel"
            )
    else:
        raise ConfigError(f"unknown delay policy {channel.policy!r}")

    arrival = send_time + delay
    if arrival <= channel.last_arrival:
        arrival = channel.last_arrival + 1
        if not channel.faulty:
            # distinct sends are >= 1 ps apart and prior delays are < d, so
            # the clamped delay stays strictly below d; same-instant sends
            # are coalesced into one product-word event by the engine
            assert arrival - send_time < channel.d, "FIFO clamp pushed delay to d"
    channel.last_arrival = arrival
    return arrival
