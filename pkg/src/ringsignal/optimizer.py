"""Cycle-length design under start-up lost time.

Closed-form optimal cycles per congestion level, and a brute-force sweep over
a cycle grid that serves as the independent check of those formulas.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .fundamentals import FundamentalDiagram, RingConfig, SignalPlan, effective_green_ratio
from .mfd import Regime, mfd_gbar

DEFAULT_T_CAP = 600.0
DEFAULT_GAP = 0.035
MAX_MULTIPLE = 64
CHI_EPS = 1e-12


def congestion_level(fd: FundamentalDiagram, ring: RingConfig) -> float:
    """Stationary demand over supply; infinite for a fully jammed ring."""
    ring.validate(fd)
    supply = min(fd.C, (fd.K - ring.k0) * fd.W)
    if supply <= 0:
        return math.inf
    chi = min(fd.V * ring.k0, fd.C) / supply
    return 1.0 if abs(chi - 1.0) <= CHI_EPS else chi


def congestion_regime(chi: float, pi0: float) -> Regime:
    if chi < pi0:
        return Regime.VERY_SPARSE
    if chi < 1:
        return Regime.SPARSE
    if chi == 1:
        return Regime.CRITICAL
    if chi <= 1 / pi0:
        return Regime.DENSE
    return Regime.VERY_DENSE


def objective(fd: FundamentalDiagram, ring: RingConfig, delta, pi0, T,
              approx_pi0: bool = True) -> float:
    """Average flow-rate min(phi1, (1 - 2 delta / T) pi0 C, phi2) at cycle T."""
    plan = SignalPlan(T=T, pi0=pi0, delta=delta)
    return mfd_gbar(fd, plan, ring, approx_pi0=approx_pi0).gbar


@dataclass(frozen=True)
class OptimalCycleResult:
    """Optimal cycles for one density.

    ``optimal_T`` is empty when ``unbounded``; ``gbar_star`` is then the value
    reached at ``T_cap``. ``near_optimal`` holds ``(T, gbar, relative gap)``.
    """

    k0: float
    chi: float
    regime: Regime
    optimal_T: tuple
    unbounded: bool
    gbar_star: float
    near_optimal: tuple = ()
    T_cap: Optional[float] = None


def _multiples(lag, peak, delta, pi0, C):
    out = []
    for j in range(1, MAX_MULTIPLE + 1):
        T = lag / j
        if T <= 2 * delta or peak > (1 - 2 * delta / T) * pi0 * C * (1 + CHI_EPS):
            break
        out.append(T)
    return out


def default_grid(delta, T_cap=DEFAULT_T_CAP, step=1.0) -> np.ndarray:
    start = math.floor(2 * delta / step) * step + step
    return np.arange(start, T_cap + step / 2, step)


def optimal_cycle(fd: FundamentalDiagram, ring: RingConfig, delta, pi0,
                  T_grid: Optional[Sequence[float]] = None, gap: float = DEFAULT_GAP,
                  T_cap: float = DEFAULT_T_CAP) -> OptimalCycleResult:
    """Closed-form optimal cycle lengths at density ``ring.k0``.

    Very sparse and very dense traffic have a family of optima at integer
    fractions of the wave traversal time; sparse and dense traffic have one
    optimum where the last decreasing branch meets the lost-time capacity cap;
    critical traffic prefers ever longer cycles.
    """
    if delta < 0 or not 0 < pi0 < 1:
        raise DomainError(f"need delta >= 0 and 0 < pi0 < 1, got {delta!r}, {pi0!r}")
    chi = congestion_level(fd, ring)
    regime = congestion_regime(chi, pi0)
    L, C, k0 = ring.L, fd.C, ring.k0
    unbounded = False
    Ts: list = []

    if regime is Regime.VERY_SPARSE:
        Ts = _multiples(L / fd.V, fd.V * k0, delta, pi0, C)
        gbar_star = fd.V * k0
    elif regime is Regime.VERY_DENSE:
        Ts = _multiples(L / fd.W, (fd.K - k0) * fd.W, delta, pi0, C)
        gbar_star = (fd.K - k0) * fd.W

    if regime in (Regime.SPARSE, Regime.VERY_SPARSE) and not Ts:
        # no multiple of the traversal time clears the lost-time cap
        Ts = [chi * L / (pi0 * fd.V) + 2 * delta]
        gbar_star = (1 - 2 * delta / Ts[0]) * pi0 * C
    elif regime in (Regime.DENSE, Regime.VERY_DENSE) and not Ts:
        Ts = [L / (chi * pi0 * fd.W) + 2 * delta]
        gbar_star = (1 - 2 * delta / Ts[0]) * pi0 * C
    elif regime is Regime.CRITICAL:
        unbounded = True
        gbar_star = effective_green_ratio(T_cap, delta, pi0) * C

    grid = default_grid(delta, T_cap) if T_grid is None else np.asarray(T_grid, dtype=float)
    near = []
    for T in grid:
        g = objective(fd, ring, delta, pi0, float(T))
        rel = 0.0 if gbar_star <= 0 else 1.0 - g / gbar_star
        if rel <= gap:
            near.append((float(T), g, rel))
    return OptimalCycleResult(k0, chi, regime, tuple(sorted(Ts)), unbounded, gbar_star,
                              tuple(near), T_cap if unbounded else None)


@dataclass(frozen=True)
class SweepResult:
    T_best: float
    gbar_best: float
    T: np.ndarray
    gbar: np.ndarray


def _simulated_gbar(args):
    from .ltm import simulate_stationary

    fd, ring, delta, pi0, T, dt = args
    plan = SignalPlan(T=T, pi0=pi0, delta=delta)
    return simulate_stationary(fd, plan, ring, dt=dt)[1].gbar


def sweep_optimum(fd: FundamentalDiagram, ring: RingConfig, delta, pi0,
                  T_grid: Sequence[float], approx_pi0: bool = True,
                  simulate: bool = False, dt: Optional[float] = None,
                  jobs: int = 1) -> SweepResult:
    """Brute-force argmax of the average flow-rate over a cycle grid.

    Values within 1e-12 C of the maximum count as ties and the smallest such T
    wins. With ``simulate`` each grid point is evaluated by running the
    discrete model to stationarity instead of the closed form.
    """
    T = np.asarray(T_grid, dtype=float)
    if T.size == 0:
        raise ConfigurationError("cycle grid is empty")
    if np.any(np.diff(T) <= 0):
        raise ConfigurationError("cycle grid must be strictly increasing")
    if np.any(T <= 2 * delta):
        raise ConfigurationError("every cycle must exceed twice the lost time")
    if simulate:
        work = [(fd, ring, delta, pi0, float(t), dt) for t in T]
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as pool:
                g = np.array(list(pool.map(_simulated_gbar, work)))
        else:
            g = np.array([_simulated_gbar(w) for w in work])
    else:
        g = np.array([objective(fd, ring, delta, pi0, float(t), approx_pi0) for t in T])
    best = int(np.flatnonzero(g >= g.max() - 1e-12 * fd.C)[0])
    return SweepResult(float(T[best]), float(g[best]), T, g)


def stationary_delay(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig, gbar) -> float:
    """Total travel time of all vehicles over one stationary period, (k0 L)^2 / gbar."""
    n = ring.vehicles
    if n == 0:
        return 0.0
    if gbar <= 0:
        return math.inf
    return n * n / gbar
