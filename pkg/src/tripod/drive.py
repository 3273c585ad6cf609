"""Laser drive for the double-STIRAP tripod sequence.

Times are in units of the pulse width ``tau`` and amplitudes in rad/tau
(hbar = 1).  A schedule holds six sin^2 pulses: channels 0, 1, 2 of the
first STIRAP process followed by the same channels of the second one.

The separation ``gap`` is the delay between the first pulse of process 1
and the first pulse of process 2.  With mirrored processes this makes the
dark-state phase exactly ``-phi2_rate * gap`` once the processes no longer
overlap, which is why the default ``gap = pi`` produces a phase of ``-pi``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

__all__ = [
    "Pulse",
    "PulseSchedule",
    "DriveSample",
    "envelope",
    "sample",
    "sin2_theta_h",
    "calibrate_gap",
    "quadrature_nodes",
    "integrate",
]

# Support boundaries closer than this are treated as coincident.
_TIME_EPS = 1e-12


@dataclass(frozen=True)
class Pulse:
    """A single sin^2 pulse with FWHM ``width`` and support [t_start, t_start + 2 width]."""

    a_max: float
    t_start: float
    width: float = 1.0

    def __post_init__(self):
        if self.a_max < 0:
            raise ValueError(f"pulse amplitude must be non-negative, got {self.a_max}")
        if self.width <= 0:
            raise ValueError(f"pulse width must be positive, got {self.width}")

    @property
    def t_end(self) -> float:
        return self.t_start + 2.0 * self.width


def envelope(pulse: Pulse, t):
    """Amplitude of ``pulse`` at time(s) ``t``; zero outside the open support."""
    t = np.asarray(t, dtype=float)
    inside = (t > pulse.t_start) & (t < pulse.t_end)
    phase = np.pi * (t - pulse.t_start) / (2.0 * pulse.width)
    out = np.where(inside, pulse.a_max * np.sin(phase) ** 2, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DriveSample:
    """Drive amplitudes and mixing angles at one time or an array of times."""

    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    theta01: np.ndarray
    theta_h: np.ndarray
    phi01: float
    phi2: np.ndarray

    @property
    def rms(self):
        """sqrt(a0^2 + a1^2 + a2^2), twice the bright-state energy."""
        return np.sqrt(self.a0**2 + self.a1**2 + self.a2**2)


@dataclass(frozen=True)
class PulseSchedule:
    """Immutable double-STIRAP pulse sequence.

    ``pulses`` is ordered (p1 ch0, p1 ch1, p1 ch2, p2 ch0, p2 ch1, p2 ch2).
    Use :meth:`double_stirap` or :meth:`reference` rather than building the
    tuple by hand.
    """

    pulses: tuple
    phi01: float
    phi2_rate: float
    intra_delay: float
    gap: float
    t_i: float
    t_f: float
    theta01_configured: float = field(default=0.0)

    def __post_init__(self):
        if len(self.pulses) != 6:
            raise ValueError("a schedule needs exactly six pulses")
        p = self.pulses
        for a, b in ((p[0], p[1]), (p[3], p[4])):
            if abs(a.t_start - b.t_start) > _TIME_EPS or abs(a.width - b.width) > _TIME_EPS:
                raise ValueError("channels 0 and 1 must share timing within a process")
        lo = min(q.t_start for q in p)
        hi = max(q.t_end for q in p)
        if self.t_i > lo + _TIME_EPS or self.t_f < hi - _TIME_EPS:
            raise ValueError("[t_i, t_f] must cover every pulse support")

    @classmethod
    def double_stirap(
        cls,
        a_max_0: float,
        a_max_1: float,
        a_max_2: float | None = None,
        *,
        intra_delay: float = 1.0,
        gap: float = math.pi,
        phi01: float = math.pi,
        phi2_rate: float = 1.0,
        width: float = 1.0,
    ) -> "PulseSchedule":
        """Build the mirrored two-process sequence.

        Process 1: channel 2 starts at 0, channels 0/1 at ``intra_delay``.
        Process 2: channels 0/1 start at ``gap``, channel 2 at
        ``gap + intra_delay``.  ``a_max_2`` defaults to
        sqrt(a_max_0^2 + a_max_1^2).
        """
        if a_max_2 is None:
            a_max_2 = math.hypot(a_max_0, a_max_1)
        if a_max_0 == 0 and a_max_1 == 0:
            theta01 = 0.0
        else:
            theta01 = math.atan2(a_max_0, a_max_1)
        pulses = (
            Pulse(a_max_0, intra_delay, width),
            Pulse(a_max_1, intra_delay, width),
            Pulse(a_max_2, 0.0, width),
            Pulse(a_max_0, gap, width),
            Pulse(a_max_1, gap, width),
            Pulse(a_max_2, gap + intra_delay, width),
        )
        t_f = max(q.t_end for q in pulses)
        return cls(
            pulses=pulses,
            phi01=phi01,
            phi2_rate=phi2_rate,
            intra_delay=intra_delay,
            gap=gap,
            t_i=0.0,
            t_f=t_f,
            theta01_configured=theta01,
        )

    @classmethod
    def reference(cls, gap: float = math.pi) -> "PulseSchedule":
        """The Hadamard parameter set: A_max,0 tau / 2pi = 300, theta01 = pi/8, phi01 = pi."""
        a0 = 2.0 * math.pi * 300.0
        a1 = a0 / (math.sqrt(2.0) - 1.0)
        return cls.double_stirap(a0, a1, intra_delay=1.0, gap=gap, phi01=math.pi, phi2_rate=1.0)

    @property
    def width(self) -> float:
        return self.pulses[0].width

    @property
    def process_length(self) -> float:
        """Duration of one STIRAP process (support of its three pulses)."""
        p = self.pulses[:3]
        return max(q.t_end for q in p) - min(q.t_start for q in p)

    def with_gap(self, gap: float) -> "PulseSchedule":
        return self.replace(gap=gap)

    def replace(self, **changes) -> "PulseSchedule":
        """Rebuild with different sequence parameters (a_max_0/1/2, intra_delay, gap, ...)."""
        p = self.pulses
        kw = dict(
            a_max_0=p[0].a_max,
            a_max_1=p[1].a_max,
            a_max_2=p[2].a_max,
            intra_delay=self.intra_delay,
            gap=self.gap,
            phi01=self.phi01,
            phi2_rate=self.phi2_rate,
            width=self.width,
        )
        kw.update(changes)
        a0, a1, a2 = kw.pop("a_max_0"), kw.pop("a_max_1"), kw.pop("a_max_2")
        return PulseSchedule.double_stirap(a0, a1, a2, **kw)

    def breakpoints(self) -> np.ndarray:
        """Sorted times where some envelope is not smooth, clipped to [t_i, t_f]."""
        pts = {self.t_i, self.t_f}
        for q in self.pulses:
            pts.update((q.t_start, q.t_end))
        pts = np.array(sorted(pts))
        pts = pts[(pts >= self.t_i) & (pts <= self.t_f)]
        keep = np.concatenate(([True], np.diff(pts) > _TIME_EPS))
        return pts[keep]

    def amplitudes(self, t):
        """Summed channel amplitudes (a0, a1, a2) at ``t``."""
        p = self.pulses
        a0 = envelope(p[0], t) + envelope(p[3], t)
        a1 = envelope(p[1], t) + envelope(p[4], t)
        a2 = envelope(p[2], t) + envelope(p[5], t)
        return a0, a1, a2

    def held_theta_h(self, t: float) -> float:
        """theta_H frozen at its last defined value, for times with zero drive.

        Near the end of a support each envelope vanishes like
        a_max (pi/2)^2 (t_end - t)^2, so the ratio limit only involves the
        pulses that end last.
        """
        ended = [q for q in self.pulses if q.t_end <= t + _TIME_EPS and q.a_max > 0]
        if not ended:
            return 0.0
        last = max(q.t_end for q in ended)
        group = [i for i, q in enumerate(self.pulses) if q.a_max > 0 and abs(q.t_end - last) <= _TIME_EPS]
        a01 = math.sqrt(sum(self.pulses[i].a_max ** 2 for i in group if i % 3 != 2))
        a2 = sum(self.pulses[i].a_max for i in group if i % 3 == 2)
        return math.atan2(a01, a2)


def sample(schedule: PulseSchedule, t) -> DriveSample:
    """Drive amplitudes, mixing angles and laser phase at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    a0, a1, a2 = schedule.amplitudes(t)
    a0, a1, a2 = np.asarray(a0), np.asarray(a1), np.asarray(a2)
    a01 = np.hypot(a0, a1)
    on01 = a01 > 0
    theta01 = np.where(on01, np.arctan2(a0, a1), schedule.theta01_configured)
    on = (a01 > 0) | (a2 > 0)
    theta_h = np.arctan2(a01, a2)
    if not np.all(on):
        held = np.vectorize(schedule.held_theta_h, otypes=[float])(t[~on])
        theta_h = np.array(theta_h, dtype=float)
        theta_h[~on] = held
    phi2 = schedule.phi2_rate * (t - schedule.t_i)
    return DriveSample(a0, a1, a2, theta01, theta_h, schedule.phi01, phi2)


def sin2_theta_h(schedule: PulseSchedule, t):
    """sin^2(theta_H) with the hold-last-value rule applied at zero drive."""
    return np.sin(sample(schedule, t).theta_h) ** 2


def calibrate_gap(schedule: PulseSchedule, target_gamma: float, *, xtol: float = 1e-13) -> float:
    """Gap such that the dark-state geometric phase equals ``target_gamma``.

    The search is restricted to non-overlapping processes, where the phase
    is strictly decreasing in the gap.
    """
    from .closed import geometric_phase

    if target_gamma >= 0:
        raise ValueError("target_gamma must be negative")
    if schedule.phi2_rate <= 0:
        raise ValueError("phi2_rate must be positive to accumulate a negative phase")

    def residual(gap):
        return geometric_phase(schedule.with_gap(gap)) - target_gamma

    lo = schedule.process_length
    f_lo = residual(lo)
    if f_lo < 0:
        raise ValueError(
            f"target phase {target_gamma} needs processes closer than their length "
            f"({lo} tau); unreachable with separated processes"
        )
    if f_lo == 0:
        return lo
    hi = lo + max(1.0, abs(target_gamma) / schedule.phi2_rate)
    while residual(hi) > 0:
        hi = lo + 2.0 * (hi - lo)
    return optimize.brentq(residual, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


_GL_NODES = 48
_GL_MAX_LEN = 0.25


@functools.lru_cache(maxsize=None)
def _gauss_rule():
    return np.polynomial.legendre.leggauss(_GL_NODES)


def quadrature_nodes(schedule: PulseSchedule, t0: float, t1: float):
    """Composite Gauss-Legendre nodes and weights on [t0, t1].

    Pieces never straddle a pulse edge, so smooth-integrand accuracy is
    close to rounding and results are additive over splits.
    """
    pts = [t0, t1] + [b for b in schedule.breakpoints() if t0 < b < t1]
    pts = np.unique(pts)
    x, w = _gauss_rule()
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, int(np.ceil((b - a) / _GL_MAX_LEN)))
        edges = np.linspace(a, b, m + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            nodes.append(lo + half * (x + 1.0))
            weights.append(half * w)
    if not nodes:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(nodes), np.concatenate(weights)


def integrate(schedule: PulseSchedule, integrand, t0: float, t1: float) -> float:
    """int_{t0}^{t1} integrand(sample(schedule, t)) dt; ``integrand`` is vectorized."""
    if t1 < t0:
        return -integrate(schedule, integrand, t1, t0)
    if t1 == t0:
        return 0.0
    nodes, weights = quadrature_nodes(schedule, t0, t1)
    return float(np.dot(weights, integrand(sample(schedule, nodes))))


def cumulative_integral(schedule: PulseSchedule, integrand, times) -> np.ndarray:
    """Running integral from times[0] to each entry of the sorted ``times``."""
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return np.zeros(len(times))
    parts = [quadrature_nodes(schedule, a, b) for a, b in zip(times[:-1], times[1:])]
    counts = np.array([len(n) for n, _ in parts])
    nodes = np.concatenate([n for n, _ in parts])
    weights = np.concatenate([w for _, w in parts])
    vals = weights * integrand(sample(schedule, nodes))
    owner = np.repeat(np.arange(len(parts)), counts)
    inc = np.bincount(owner, weights=vals, minlength=len(parts))
    return np.concatenate(([0.0], np.cumsum(inc)))
