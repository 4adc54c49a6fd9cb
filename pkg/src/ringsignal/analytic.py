"""Large-time boundary-flow recursion.

Once the initial transient has cleared both wave lags, G during green is the
minimum of three characteristic constructions (forward wave from L/V earlier,
backward wave from L/W earlier, capacity discharge since the cycle began), and
G is frozen during red. Because none of the three terms depends on the
immediately preceding sample, a whole block of up to one wave lag can be
evaluated at once.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import SequencingError
from .fundamentals import FundamentalDiagram, RingConfig, SignalPlan
from .ltm import (
    DEFAULT_MAX_CYCLES,
    GRID_EPS,
    CumulativeFlowSeries,
    _advance_range,
    _kernel_args,
    aligned_step,
    green_fractions,
    initial_series,
)


def _history(series_or_values, dt):
    if isinstance(series_or_values, CumulativeFlowSeries):
        return series_or_values.values, series_or_values.dt
    return np.asarray(series_or_values, dtype=float), dt


def _interp(G, n_known, t, dt):
    """G at times t from samples 0..n_known-1; on-grid times are read exactly."""
    p = np.atleast_1d(np.asarray(t, dtype=float)) / dt
    r = np.rint(p)
    p = np.where(np.abs(p - r) <= GRID_EPS * np.maximum(1.0, np.abs(p)), r, p)
    if np.any(p < 0) or np.any(np.ceil(p) > n_known - 1):
        raise SequencingError("recursion needs history that has not been computed")
    i = np.floor(p).astype(int)
    f = p - i
    j = np.minimum(i + 1, n_known - 1)
    return np.where(f == 0, G[i], G[i] + (G[j] - G[i]) * f)


def recurse_green(history, t, fd: FundamentalDiagram, plan: SignalPlan,
                  ring: RingConfig, dt: Optional[float] = None, n_known: Optional[int] = None):
    """G(t) for t inside a green window (0 < t - iT <= pi T)."""
    G, dt = _history(history, dt)
    n_known = len(G) if n_known is None else n_known
    T = plan.T
    i = math.floor(t / T + GRID_EPS)
    s = t - i * T
    if not (s > GRID_EPS * T and s <= plan.green_time * (1 + GRID_EPS)):
        raise SequencingError(f"t={t!r} is not inside an effective green window")
    k0, L = ring.k0, ring.L
    fwd, bwd, start = _interp(G, n_known, [t - L / fd.V, t - L / fd.W, i * T], dt)
    return float(min(fwd + k0 * L, bwd + (fd.K - k0) * L, start + s * fd.C))


def recurse_red(history, t, plan: SignalPlan, dt: Optional[float] = None,
                n_known: Optional[int] = None):
    """G(t) for t inside a red window: the value reached when green ended."""
    G, dt = _history(history, dt)
    n_known = len(G) if n_known is None else n_known
    T = plan.T
    i = math.floor(t / T - GRID_EPS)
    s = t - i * T
    if not (s > plan.green_time * (1 - GRID_EPS) and s <= T * (1 + GRID_EPS)):
        raise SequencingError(f"t={t!r} is not inside an effective red window")
    return float(_interp(G, n_known, [i * T + plan.green_time], dt)[0])


def activation_time(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig) -> float:
    """First cycle boundary strictly after both wave lags have elapsed."""
    lag = max(ring.L / fd.V, ring.L / fd.W)
    return (math.floor(lag / plan.T + GRID_EPS) + 1) * plan.T


def solve_analytic(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig,
                   dt: Optional[float] = None,
                   max_cycles: int = DEFAULT_MAX_CYCLES) -> CumulativeFlowSeries:
    """Boundary flow over ``max_cycles`` cycles via the large-time recursion.

    The transient before :func:`activation_time` is stepped with the discrete
    demand/supply scheme; the recursion takes over afterwards.
    """
    dt = aligned_step(fd, plan, ring) if dt is None else dt
    initial_series(fd, plan, ring, dt)
    T, green_time = plan.T, plan.green_time
    n_total = int(math.floor(max_cycles * T / dt * (1 + GRID_EPS)))
    G = np.zeros(n_total + 1)

    t_act = activation_time(fd, plan, ring)
    k_act = min(n_total, int(math.ceil(t_act / dt * (1 - GRID_EPS))))
    _advance_range(G, 0, k_act, green_fractions(plan, dt, k_act), *_kernel_args(fd, ring, dt))

    k0, L = ring.k0, ring.L
    lag_v, lag_w = L / fd.V, L / fd.W
    block = max(1, int(math.floor(min(lag_v, lag_w) / dt + GRID_EPS)))
    # G at each cycle start, filled lazily; G(iT) equals the red plateau of cycle i-1
    starts = {}

    def cycle_start(i, n_known):
        if i not in starts:
            starts[i] = float(_interp(G, n_known, [i * T], dt)[0]) if i * T <= t_act \
                else green_end(i - 1, n_known)
        return starts[i]

    def green_end(i, n_known):
        t = i * T + green_time
        fwd, bwd = _interp(G, n_known, [t - lag_v, t - lag_w], dt)
        return float(min(fwd + k0 * L, bwd + (fd.K - k0) * L,
                         cycle_start(i, n_known) + green_time * fd.C))

    k = k_act + 1
    while k <= n_total:
        stop = min(n_total, k + block - 1)
        idx = np.arange(k, stop + 1)
        t = idx * dt
        cyc = np.floor(t / T - GRID_EPS).astype(int)  # t = iT belongs to cycle i-1's red
        phase = t - cyc * T
        is_green = phase <= green_time * (1 + GRID_EPS)
        cycles, pos = np.unique(cyc, return_inverse=True)
        base = np.array([cycle_start(i, k) for i in cycles])[pos]
        fwd = _interp(G, k, t - lag_v, dt)
        bwd = _interp(G, k, t - lag_w, dt)
        green_val = np.minimum(np.minimum(fwd + k0 * L, bwd + (fd.K - k0) * L),
                               base + phase * fd.C)
        red_cycles = np.unique(cyc[~is_green])
        plateau = {i: green_end(i, k) for i in red_cycles}
        red_val = np.array([plateau.get(i, 0.0) for i in cycles])[pos]
        G[k: stop + 1] = np.where(is_green, green_val, red_val)
        k = stop + 1
    return CumulativeFlowSeries(dt, G, fd, plan, ring)
