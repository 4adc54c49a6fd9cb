"""Discrete link transmission model for a ring road with one pretimed signal.

The state is the cumulative boundary flow G(t) at x = 0, sampled on a uniform
grid ``t_k = k * dt``. Each step computes a demand and a supply bound from
delayed samples of G (free-flow lag L/V, backward-wave lag L/W), takes the
minimum, and gates it with the signal. Delayed samples that fall between grid
points are linearly interpolated.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from numba import njit

from .errors import ConfigurationError, SequencingError
from .fundamentals import FundamentalDiagram, RingConfig, SignalPlan

# Relative slack used when deciding whether a time falls on the grid.
GRID_EPS = 1e-9

DEFAULT_MAX_CYCLES = 200
DEFAULT_M_MAX = 8
DEFAULT_DT = 0.1


def default_tol(ring: RingConfig) -> float:
    return 1e-6 * ring.vehicles + 1e-9


def _as_steps(duration: float, dt: float) -> Optional[int]:
    """``duration / dt`` as an int when it is one (up to GRID_EPS), else None."""
    q = duration / dt
    r = round(q)
    if abs(q - r) <= GRID_EPS * max(1.0, abs(q)):
        return int(r)
    return None


def _gcd_fraction(values):
    out = Fraction(0)
    for v in values:
        f = Fraction(v).limit_denominator(10**6)
        num = math.gcd(out.numerator * f.denominator, f.numerator * out.denominator)
        out = Fraction(num, out.denominator * f.denominator)
    return out


def aligned_step(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig,
                 target: float = DEFAULT_DT) -> float:
    """Largest step <= ``target`` that puts the signal windows on the grid.

    Preference goes to a step dividing T, pi*T, L/V and L/W. If those have no
    usable common divisor the step is rounded down so that only pi*T (the
    green window) is an integer number of steps.
    """
    if not target > 0:
        raise ConfigurationError(f"target step must be positive, got {target!r}")
    common = _gcd_fraction([plan.T, plan.green_time, ring.L / fd.V, ring.L / fd.W])
    if common > 0:
        dt = float(common / math.ceil(common / Fraction(target)))
        if dt >= target * 1e-3 and all(
            _as_steps(x, dt) is not None
            for x in (plan.T, plan.green_time, ring.L / fd.V, ring.L / fd.W)
        ):
            return dt
    return plan.green_time / math.ceil(plan.green_time / target)


def check_step(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig, dt: float) -> None:
    if not dt > 0 or not math.isfinite(dt):
        raise ConfigurationError(f"step must be positive, got {dt!r}")
    green, red = plan.green_time, plan.T - plan.green_time
    if dt > min(green, red) * (1 + GRID_EPS):
        raise ConfigurationError(
            f"step {dt!r} skips a signal window (green {green!r}, red {red!r})")
    if dt > min(ring.L / fd.V, ring.L / fd.W) * (1 + GRID_EPS):
        raise ConfigurationError(f"step {dt!r} exceeds the shortest wave lag")


def green_fractions(plan: SignalPlan, dt: float, n: int) -> np.ndarray:
    """Fraction of each step ``[k dt, (k+1) dt]`` that lies inside a green window.

    On an aligned grid this is exactly 0 or 1; the green window closes at
    ``iT + pi T`` so the step starting there is red.
    """
    n_cycle = _as_steps(plan.T, dt)
    n_green = _as_steps(plan.green_time, dt)
    if n_cycle is not None and n_green is not None:
        k = np.arange(n)
        return ((k % n_cycle) < n_green).astype(float)
    t0 = np.arange(n) * dt
    t1 = t0 + dt
    i = np.floor(t0 / plan.T)
    out = np.zeros(n)
    for start in (i * plan.T, (i + 1) * plan.T):
        lo = np.maximum(t0, start)
        hi = np.minimum(t1, start + plan.green_time)
        out += np.clip(hi - lo, 0.0, None)
    return np.clip(out / dt, 0.0, 1.0)


@njit(cache=True)
def _lookup(G, p):
    """Linear interpolation of G at fractional index p >= 0."""
    i = int(math.floor(p))
    f = p - i
    if f <= 1e-9:
        return G[i]
    if f >= 1.0 - 1e-9:
        return G[i + 1]
    return G[i] + (G[i + 1] - G[i]) * f


@njit(cache=True)
def _bound(G, k, dt, lag_steps, rate, volume, cap):
    """Demand (or supply) volume for the step starting at grid index k.

    ``rate`` and ``volume`` are k0*V and k0*L for demand, (K-k0)*W and
    (K-k0)*L for supply.
    """
    if k + 1 <= lag_steps * (1.0 + 1e-12):
        return min((k + 1) * dt * rate - G[k], cap)
    return min(_lookup(G, k + 1 - lag_steps) + volume - G[k], cap)


@njit(cache=True)
def _advance_range(G, start, stop, green, dt, lv, lw, dem_rate, dem_vol,
                   sup_rate, sup_vol, C):
    for k in range(start, stop):
        h = green[k] * dt
        if h <= 0.0:
            G[k + 1] = G[k]
            continue
        cap = C * h
        d = _bound(G, k, dt, lv, dem_rate, dem_vol, cap)
        s = _bound(G, k, dt, lw, sup_rate, sup_vol, cap)
        # clamp rounding-level negatives so G stays monotone
        G[k + 1] = G[k] + max(0.0, min(d, s))


@dataclass(frozen=True, eq=False)
class CumulativeFlowSeries:
    """Samples G(0), G(dt), ... together with the parameters that produced them."""

    dt: float
    values: np.ndarray
    fd: FundamentalDiagram
    plan: SignalPlan
    ring: RingConfig

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    @property
    def t_end(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt

    @property
    def max_lag(self) -> float:
        return max(self.ring.L / self.fd.V, self.ring.L / self.fd.W)

    def index_of(self, t: float) -> int:
        k = _as_steps(t, self.dt)
        if k is None or k < 0:
            raise SequencingError(f"time {t!r} is not on the grid of step {self.dt!r}")
        if k > self.n_steps:
            raise SequencingError(f"time {t!r} is beyond the populated history ({self.t_end!r})")
        return k

    def at(self, t):
        """G at arbitrary times in [0, t_end] by linear interpolation."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -GRID_EPS * self.dt) or np.any(t > self.t_end + GRID_EPS * self.dt):
            raise SequencingError("interpolation outside the populated history")
        return np.interp(t / self.dt, np.arange(len(self.values)), self.values)

    def flow_rate(self) -> np.ndarray:
        """g on each step [t, t + dt]; the last grid point has no step and gets NaN."""
        g = np.full(len(self.values), np.nan)
        g[:-1] = np.diff(self.values) / self.dt
        return g

    def signal(self) -> np.ndarray:
        """Closed-window indicator beta at every grid point."""
        t = self.times
        T = self.plan.T
        phase = t - np.floor(t / T) * T
        phase[phase >= T * (1 - GRID_EPS)] = 0.0  # cycle boundaries open a green window
        return (phase <= self.plan.green_time * (1 + GRID_EPS)).astype(int)

    def _queue_like(self, lag, rate, volume):
        t = self.times
        out = rate * t - self.values
        late = t > lag * (1 + GRID_EPS)
        if np.any(late):
            out[late] = self.at(t[late] - lag) - self.values[late] + volume
        return out

    def queue(self) -> np.ndarray:
        """Vehicles waiting upstream of the signal, lambda(t)."""
        k0, L = self.ring.k0, self.ring.L
        return self._queue_like(L / self.fd.V, k0 * self.fd.V, k0 * L)

    def vacancy(self) -> np.ndarray:
        """Free space downstream of the signal, gamma(t)."""
        free = self.fd.K - self.ring.k0
        return self._queue_like(self.ring.L / self.fd.W, free * self.fd.W, free * self.ring.L)

    def to_csv(self, path) -> None:
        """Write ``t,G,g,lambda,gamma,beta`` rows with round-trip float formatting."""
        columns = [self.times, self.values, self.flow_rate(), self.queue(), self.vacancy()]
        beta = self.signal()
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "G", "g", "lambda", "gamma", "beta"])
            for k in range(len(self.values)):
                w.writerow([repr(float(c[k])) for c in columns] + [int(beta[k])])


def read_series_csv(path, fd, plan, ring) -> CumulativeFlowSeries:
    """Load the G column of a series dump back into a series object."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    G = np.array([float(r["G"]) for r in rows])
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return CumulativeFlowSeries(dt=dt, values=G, fd=fd, plan=plan, ring=ring)


def _kernel_args(fd, ring, dt):
    k0, L = ring.k0, ring.L
    return (dt, L / fd.V / dt, L / fd.W / dt, k0 * fd.V, k0 * L,
            (fd.K - k0) * fd.W, (fd.K - k0) * L, fd.C)


def _check_populated(series: CumulativeFlowSeries, t) -> int:
    k = series.index_of(t)
    if k >= series.n_steps + 1:
        raise SequencingError(f"time {t!r} beyond populated history")
    return k


def demand_step(series: CumulativeFlowSeries, t) -> float:
    """Volume the upstream end of the ring can send during [t, t + dt]."""
    k = _check_populated(series, t)
    dt, lv, _, rate, vol, *_ = _kernel_args(series.fd, series.ring, series.dt)
    return float(_bound(series.values, k, dt, lv, rate, vol, series.fd.C * dt))


def supply_step(series: CumulativeFlowSeries, t) -> float:
    """Volume the downstream end of the ring can accept during [t, t + dt]."""
    k = _check_populated(series, t)
    dt, _, lw, _, _, rate, vol, _ = _kernel_args(series.fd, series.ring, series.dt)
    return float(_bound(series.values, k, dt, lw, rate, vol, series.fd.C * dt))


def advance(series: CumulativeFlowSeries, t=None) -> CumulativeFlowSeries:
    """Return a new series extended by one step from ``t`` (default: the last sample)."""
    k = series.n_steps if t is None else _check_populated(series, t)
    if k != series.n_steps:
        raise SequencingError(f"can only advance from the last sample (t={series.t_end!r})")
    G = np.empty(k + 2)
    G[: k + 1] = series.values
    green = green_fractions(series.plan, series.dt, k + 1)
    _advance_range(G, k, k + 1, green, *_kernel_args(series.fd, series.ring, series.dt))
    return CumulativeFlowSeries(series.dt, G, series.fd, series.plan, series.ring)


def initial_series(fd, plan, ring, dt) -> CumulativeFlowSeries:
    ring.validate(fd)
    check_step(fd, plan, ring, dt)
    return CumulativeFlowSeries(dt, np.zeros(1), fd, plan, ring)


@dataclass(frozen=True)
class StationaryResult:
    gbar: float
    period_multiple: int
    cycles_run: float
    converged: bool
    residual: float
    per_m: dict = field(default_factory=dict, compare=False, repr=False)


def _period_residual(G, dt, T, m, span, n):
    """Spread of G(t + mT) - G(t) over the window ending mT before the last sample."""
    shift = _as_steps(m * T, dt)
    w = _as_steps(span, dt)
    if shift is not None:
        w = w if w is not None else int(math.ceil(span / dt))
        lo = n - shift - w
        if lo < 0:
            return None
        diff = G[lo + shift: n + 1] - G[lo: n - shift + 1]
    else:
        t_hi = n * dt - m * T
        t_lo = t_hi - span
        if t_lo < 0:
            return None
        t = np.arange(math.ceil(t_lo / dt), math.floor(t_hi / dt) + 1) * dt
        grid = np.arange(n + 1)
        diff = np.interp((t + m * T) / dt, grid, G) - G[np.rint(t / dt).astype(int)]
    hi, lo_ = float(diff.max()), float(diff.min())
    return (hi + lo_) / 2, (hi - lo_) / 2


def detect_stationary(series: CumulativeFlowSeries, m_max: int = DEFAULT_M_MAX,
                      tol: Optional[float] = None) -> StationaryResult:
    """Find the smallest period mT (m <= m_max) over which G grows by a constant.

    For each m the increments G(t + mT) - G(t) are compared over a window of
    length max(mT, longest wave lag) ending mT before the last sample; a window
    that long pins the whole delayed state, so a match there persists.
    """
    T, dt = series.plan.T, series.dt
    if series.t_end < 2 * m_max * T * (1 - GRID_EPS):
        raise SequencingError(
            f"series covers {series.t_end / T:.3g} cycles, need {2 * m_max} for m_max={m_max}")
    tol = default_tol(series.ring) if tol is None else tol
    G, n = series.values, series.n_steps
    per_m = {}
    for m in range(1, m_max + 1):
        span = max(m * T, series.max_lag)
        res = _period_residual(G, dt, T, m, span, n)
        if res is None:
            continue
        per_m[m] = res
        if res[1] <= tol:
            return StationaryResult(res[0] / (m * T), m, series.t_end / T, True, res[1], per_m)
    if not per_m:
        raise SequencingError("series too short to compare any period against the wave lags")
    m = min(per_m, key=lambda q: per_m[q][1])
    total, resid = per_m[m]
    return StationaryResult(total / (m * T), m, series.t_end / T, False, resid, per_m)


def simulate(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig,
             dt: Optional[float] = None, max_cycles: int = DEFAULT_MAX_CYCLES,
             stop_early: bool = True, m_max: int = DEFAULT_M_MAX,
             tol: Optional[float] = None) -> CumulativeFlowSeries:
    """Run the discrete model over ``max_cycles`` cycles.

    With ``stop_early`` the run ends at the first cycle boundary (after
    ``2 m_max`` cycles) at which :func:`detect_stationary` reports convergence.
    """
    dt = aligned_step(fd, plan, ring) if dt is None else dt
    initial_series(fd, plan, ring, dt)
    if max_cycles < 1:
        raise ConfigurationError(f"max_cycles must be >= 1, got {max_cycles!r}")
    n_total = int(math.floor(max_cycles * plan.T / dt * (1 + GRID_EPS)))
    G = np.zeros(n_total + 1)
    green = green_fractions(plan, dt, n_total)
    args = _kernel_args(fd, ring, dt)
    tol = default_tol(ring) if tol is None else tol
    if not stop_early:
        _advance_range(G, 0, n_total, green, *args)
        return CumulativeFlowSeries(dt, G, fd, plan, ring)
    done = 0
    for cycle in range(1, max_cycles + 1):
        stop = min(n_total, int(math.floor(cycle * plan.T / dt * (1 + GRID_EPS))))
        _advance_range(G, done, stop, green, *args)
        done = stop
        if cycle >= 2 * m_max and cycle < max_cycles:
            part = CumulativeFlowSeries(dt, G[: done + 1], fd, plan, ring)
            try:
                if detect_stationary(part, m_max, tol).converged:
                    return CumulativeFlowSeries(dt, G[: done + 1].copy(), fd, plan, ring)
            except SequencingError:
                pass
    _advance_range(G, done, n_total, green, *args)
    return CumulativeFlowSeries(dt, G, fd, plan, ring)


def simulate_stationary(fd, plan, ring, dt=None, max_cycles=DEFAULT_MAX_CYCLES,
                        m_max=DEFAULT_M_MAX, tol=None):
    """Simulate and return ``(series, StationaryResult)``."""
    series = simulate(fd, plan, ring, dt, max_cycles, True, m_max, tol)
    return series, detect_stationary(series, m_max, tol)


def check_invariants(series: CumulativeFlowSeries, atol: Optional[float] = None) -> list:
    """Return a list of human-readable invariant violations (empty when clean).

    Checks: G(0) = 0, monotone G, per-step increment <= C dt, zero increment on
    red steps, and nonnegative queue and vacancy at every grid point.
    """
    fd, ring, dt = series.fd, series.ring, series.dt
    atol = 1e-9 * (ring.vehicles + fd.K * ring.L * 1e-3 + 1) if atol is None else atol
    G = series.values
    inc = np.diff(G)
    green = green_fractions(series.plan, dt, len(inc))
    problems = []
    if G[0] != 0:
        problems.append(f"G(0) = {G[0]!r}")
    if np.any(inc < 0):
        problems.append(f"G decreases at {int(np.argmin(inc))}: {inc.min()!r}")
    over = inc - fd.C * dt * green
    if np.any(over > atol):
        problems.append(f"increment above capacity by {over.max()!r}")
    red = green == 0
    if np.any(red) and np.any(inc[red] != 0):
        problems.append(f"flow during red: {np.abs(inc[red]).max()!r}")
    lam, gam = series.queue(), series.vacancy()
    if lam.min() < -atol:
        problems.append(f"negative queue {lam.min()!r}")
    if gam.min() < -atol:
        problems.append(f"negative vacancy {gam.min()!r}")
    return problems
