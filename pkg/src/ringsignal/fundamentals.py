"""Physical and control parameters of a signalized ring road.

Units are fixed throughout the package: meters, seconds and vehicles, so
densities are veh/m and flow-rates veh/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class FundamentalDiagram:
    """Triangular flow-density relation.

    Attributes:
        V: free-flow speed (m/s).
        W: magnitude of the congested shock-wave speed (m/s).
        K: jam density (veh/m).
    """

    V: float
    W: float
    K: float

    def __post_init__(self):
        for name in ("V", "W", "K"):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")

    @property
    def Kbar(self):
        """Critical density W*K/(V+W)."""
        return self.W * self.K / (self.V + self.W)

    @property
    def C(self):
        """Capacity V*Kbar."""
        return self.V * self.Kbar


def flow(fd: FundamentalDiagram, k) -> float:
    """Flow-rate min(V k, (K - k) W) at density ``k``."""
    if k < 0 or k > fd.K:
        raise DomainError(f"density {k!r} outside [0, {fd.K!r}]")
    return min(fd.V * k, (fd.K - k) * fd.W)


def effective_green_ratio(T, delta, pi0):
    """Effective green ratio (1 - 2 delta / T) * pi0 after start-up lost time."""
    if delta < 0:
        raise DomainError(f"lost time must be nonnegative, got {delta!r}")
    if not 0 < pi0 < 1:
        raise DomainError(f"green allocation must lie in (0, 1), got {pi0!r}")
    if T <= 2 * delta:
        raise DomainError(f"cycle {T!r} leaves no effective green with lost time {delta!r}")
    return (1 - 2 * delta / T) * pi0


@dataclass(frozen=True)
class SignalPlan:
    """Two-phase pretimed signal.

    ``pi`` is derived from the cycle length, the per-phase lost time and the
    green allocation. A plan without lost time (``delta=0``) has ``pi == pi0``.
    """

    T: float
    pi0: float
    delta: float = 0

    def __post_init__(self):
        if not self.T > 0 or not math.isfinite(self.T):
            raise DomainError(f"cycle length must be positive and finite, got {self.T!r}")
        # validates delta, pi0 and T > 2 delta
        effective_green_ratio(self.T, self.delta, self.pi0)

    @classmethod
    def from_ratio(cls, T, pi) -> "SignalPlan":
        """Plan with a fixed effective green ratio and no lost time."""
        return cls(T=T, pi0=pi, delta=0)

    @property
    def pi(self):
        return effective_green_ratio(self.T, self.delta, self.pi0)

    @property
    def green_time(self):
        return self.pi * self.T

    def with_cycle(self, T) -> "SignalPlan":
        return SignalPlan(T=T, pi0=self.pi0, delta=self.delta)


def beta(plan: SignalPlan, t) -> int:
    """Signal indicator: 1 on the closed green window [iT, iT + pi T], else 0."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t!r}")
    i = math.floor(t / plan.T)
    return 1 if t - i * plan.T <= plan.pi * plan.T else 0


@dataclass(frozen=True)
class RingConfig:
    """Ring length L (m) and uniform initial density k0 (veh/m)."""

    L: float
    k0: float

    def __post_init__(self):
        if not self.L > 0 or not math.isfinite(self.L):
            raise DomainError(f"ring length must be positive and finite, got {self.L!r}")
        if self.k0 < 0:
            raise DomainError(f"initial density must be nonnegative, got {self.k0!r}")

    def validate(self, fd: FundamentalDiagram) -> "RingConfig":
        if self.k0 > fd.K:
            raise DomainError(f"initial density {self.k0!r} exceeds jam density {fd.K!r}")
        return self

    @property
    def vehicles(self):
        return self.k0 * self.L

    def free_flow_time(self, fd: FundamentalDiagram):
        return self.L / fd.V

    def backward_wave_time(self, fd: FundamentalDiagram):
        return self.L / fd.W
