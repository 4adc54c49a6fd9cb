"""Closed-form macroscopic fundamental diagram of the signalized ring road.

All functions work on plain numbers, so ``fractions.Fraction`` inputs give
exact rational results (used by the property tests).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .errors import DomainError
from .fundamentals import FundamentalDiagram, RingConfig, SignalPlan

# Relative tolerance for snapping a float ratio onto an integer.
SNAP_EPS = 1e-12


class Regime(str, Enum):
    VERY_SPARSE = "very-sparse"
    SPARSE = "sparse"
    CRITICAL = "critical"
    DENSE = "dense"
    VERY_DENSE = "very-dense"


@dataclass(frozen=True)
class WaveDecomposition:
    """lag / T split into integer part j and remainder alpha in [0, 1)."""

    theta: float
    j: int
    alpha: float


def decompose(lag, T) -> WaveDecomposition:
    if not lag > 0 or not T > 0:
        raise DomainError(f"lag and cycle must be positive, got {lag!r}, {T!r}")
    theta = lag / T
    if not isinstance(theta, Fraction):
        r = round(theta)
        if r > 0 and abs(theta - r) <= SNAP_EPS * theta:
            theta = float(r)
    j = math.floor(theta)
    return WaveDecomposition(theta, j, theta - j)


def _ratio(dec: WaveDecomposition, pi):
    return (dec.j + min(dec.alpha / pi, 1)) / (dec.j + dec.alpha)


def _pi(plan: SignalPlan, approx_pi0: bool):
    return plan.pi0 if approx_pi0 else plan.pi


def critical_densities(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig,
                       approx_pi0: bool = False):
    """The two densities bounding the capacity plateau of the MFD, ``(k1, k2)``."""
    pi = _pi(plan, approx_pi0)
    d1 = decompose(ring.L / fd.V, plan.T)
    d2 = decompose(ring.L / fd.W, plan.T)
    k1 = _ratio(d1, pi) * pi * fd.Kbar
    k2 = fd.K - _ratio(d2, pi) * pi * fd.C / fd.W
    return k1, k2


def classify(fd: FundamentalDiagram, k0, pi) -> Regime:
    """Five density regions with boundaries pi*Kbar, Kbar and K - pi*C/W."""
    Kbar = fd.Kbar
    if abs(k0 - Kbar) <= 1e-12 * fd.K:
        return Regime.CRITICAL
    if k0 < pi * Kbar:
        return Regime.VERY_SPARSE
    if k0 < Kbar:
        return Regime.SPARSE
    if k0 <= fd.K - pi * fd.C / fd.W:
        return Regime.DENSE
    return Regime.VERY_DENSE


@dataclass(frozen=True)
class MfdPoint:
    k0: float
    T: float
    k1: float
    k2: float
    phi1: float
    phi2: float
    gbar: float
    regime: Regime


def mfd_gbar(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig,
             approx_pi0: bool = False) -> MfdPoint:
    """Stationary average flow-rate at density k0 under ``plan``.

    With ``approx_pi0`` the branch values phi1/phi2 (and k1/k2) use the
    allocation pi0 instead of the lost-time-corrected ratio; the capacity cap
    always uses the exact ratio.
    """
    ring.validate(fd)
    k0, K = ring.k0, fd.K
    pi_exact = plan.pi
    cap = pi_exact * fd.C
    k1, k2 = critical_densities(fd, plan, ring, approx_pi0)
    pi = _pi(plan, approx_pi0)
    phi1 = k0 / k1 * pi * fd.C
    phi2 = (K - k0) / (K - k2) * pi * fd.C
    if approx_pi0:
        gbar = min(phi1, cap, phi2)
    elif k0 < k1:
        gbar = phi1
    elif k0 <= k2:
        gbar = cap
    else:
        gbar = phi2
    return MfdPoint(k0, plan.T, k1, k2, phi1, phi2, gbar, classify(fd, k0, pi_exact))


def _branch_value(dec: WaveDecomposition, pi, peak):
    """Piecewise branch form of phi as a function of j and alpha.

    ``peak`` is V*k0 for the forward branch and (K-k0)*W for the backward one.
    """
    j, a = dec.j, dec.alpha
    if j == 0:
        return pi * peak if a <= pi else a * peak
    if a <= pi:
        return (j + a) / (pi * j + a) * pi * peak
    return (j + a) / (j + 1) * peak


def phi1_of_T(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig, T=None,
              approx_pi0: bool = False):
    """Forward-wave bound on the average flow-rate as a function of cycle length."""
    T = plan.T if T is None else T
    if not T > 0:
        raise DomainError(f"cycle length must be positive, got {T!r}")
    plan_T = plan.with_cycle(T) if T != plan.T else plan
    pi = _pi(plan_T, approx_pi0)
    return _branch_value(decompose(ring.L / fd.V, T), pi, fd.V * ring.k0)


def phi2_of_T(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig, T=None,
              approx_pi0: bool = False):
    """Backward-wave bound on the average flow-rate as a function of cycle length."""
    T = plan.T if T is None else T
    if not T > 0:
        raise DomainError(f"cycle length must be positive, got {T!r}")
    plan_T = plan.with_cycle(T) if T != plan.T else plan
    pi = _pi(plan_T, approx_pi0)
    return _branch_value(decompose(ring.L / fd.W, T), pi, (fd.K - ring.k0) * fd.W)


def main_equation_residual(series, gbar: float) -> float:
    """Largest mismatch of the stationary main equation over the last complete cycles.

    For each cycle i whose delayed references are available,
    min{G(iT + pi T - L/V) + k0 L, G(iT + pi T - L/W) + (K - k0) L, G(iT) + pi T C}
    is compared with G(iT) + gbar T.
    """
    fd, plan, ring = series.fd, series.plan, series.ring
    T, gt = plan.T, plan.green_time
    lag = max(ring.L / fd.V, ring.L / fd.W)
    n_cycles = int(math.floor(series.t_end / T + 1e-9))
    first = max(1, int(math.ceil((lag - gt) / T)))
    worst = 0.0
    for i in range(max(first, n_cycles - 4), n_cycles):
        start = float(series.at(i * T))
        t = i * T + gt
        lhs = min(float(series.at(t - ring.L / fd.V)) + ring.k0 * ring.L,
                  float(series.at(t - ring.L / fd.W)) + (fd.K - ring.k0) * ring.L,
                  start + gt * fd.C)
        worst = max(worst, abs(lhs - (start + gbar * T)))
    return worst
