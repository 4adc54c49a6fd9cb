import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from ringsignal import (ConfigurationError, CumulativeFlowSeries, RingConfig, SequencingError,
                        SignalPlan, advance, aligned_step, beta, check_invariants, demand_step,
                        detect_stationary, read_series_csv, simulate, simulate_stationary,
                        supply_step)
from ringsignal.ltm import check_step, green_fractions, initial_series

from conftest import L, plan, ring

KBAR, C = 1 / 35, 4 / 7


def reference_scheme(fd, sp, rg, dt, n):
    """Plain-Python transcription of the two-branch demand/supply scheme on an aligned grid."""
    lv, lw = round(rg.L / fd.V / dt), round(rg.L / fd.W / dt)
    n_cycle, n_green = round(sp.T / dt), round(sp.green_time / dt)
    G = [0.0]
    for k in range(n):
        if k + 1 <= lv:
            d = (k + 1) * dt * rg.k0 * fd.V - G[k]
        else:
            d = G[k + 1 - lv] + rg.k0 * rg.L - G[k]
        if k + 1 <= lw:
            s = (k + 1) * dt * (fd.K - rg.k0) * fd.W - G[k]
        else:
            s = G[k + 1 - lw] + (fd.K - rg.k0) * rg.L - G[k]
        green = (k % n_cycle) < n_green
        G.append(G[k] + (max(0.0, min(d, s, fd.C * dt)) if green else 0.0))
    return np.array(G)


def series(fd, G, T=60.0, k0=KBAR, dt=0.1):
    return CumulativeFlowSeries(dt, np.asarray(G, float), fd, plan(T), ring(k0))


def test_demand_examples(fd):
    empty = series(fd, np.zeros(5), k0=0.0)
    assert demand_step(empty, 0.2) == 0
    crit = series(fd, [0.0])
    assert demand_step(crit, 0.0) == pytest.approx(C * 0.1, rel=1e-12)
    sparse = series(fd, [0.0], k0=KBAR / 1.5)
    # k0 V = 20 / 52.5 veh/s is below capacity, so the first branch binds
    assert demand_step(sparse, 0.0) == pytest.approx(0.1 * 20 / 52.5, rel=1e-12)
    assert demand_step(sparse, 0.0) == pytest.approx(0.0381, abs=5e-5)


def test_supply_examples(fd):
    jam = series(fd, np.zeros(5), k0=fd.K)
    assert supply_step(jam, 0.3) == 0
    assert supply_step(series(fd, [0.0]), 0.0) == pytest.approx(C * 0.1, rel=1e-12)
    dense = series(fd, [0.0], k0=2 * KBAR)
    assert supply_step(dense, 0.0) == pytest.approx(3 / 7 * 0.1, rel=1e-12)


def test_lookups_beyond_history_raise(fd):
    s = series(fd, np.zeros(3))
    with pytest.raises(SequencingError):
        demand_step(s, 0.5)
    with pytest.raises(SequencingError):
        supply_step(s, 0.05)
    with pytest.raises(SequencingError):
        advance(s, 0.1)


def test_advance_red_and_empty(fd):
    sp = plan(60.0)  # green 27 s
    n = round(sp.green_time / 0.1)
    G = reference_scheme(fd, sp, ring(KBAR), 0.1, n)
    s = CumulativeFlowSeries(0.1, G, fd, sp, ring(KBAR))
    nxt = advance(s)
    assert nxt.values[-1] == nxt.values[-2]  # step starting at the end of green is red
    assert nxt.n_steps == s.n_steps + 1
    empty = initial_series(fd, sp, ring(0.0), 0.1)
    for _ in range(50):
        empty = advance(empty)
    assert not empty.values.any()


def test_advance_at_capacity_when_warm(fd):
    sp = SignalPlan.from_ratio(60.0, 0.5)
    s = series(fd, [0.0], k0=KBAR)
    s = CumulativeFlowSeries(0.1, s.values, fd, sp, ring(KBAR))
    for _ in range(100):
        s = advance(s)
    assert np.allclose(np.diff(s.values), C * 0.1, rtol=1e-12)


def test_advance_loop_matches_simulate(fd):
    sp, rg = plan(40.0), ring(0.05)
    dt = aligned_step(fd, sp, rg)
    s = initial_series(fd, sp, rg, dt)
    for _ in range(2 * round(40.0 / dt)):
        s = advance(s)
    full = simulate(fd, sp, rg, dt, max_cycles=2, stop_early=False)
    np.testing.assert_array_equal(s.values, full.values)


@pytest.mark.parametrize("k0,T", [(KBAR / 1.5, 60.0), (2 * KBAR, 120.0), (4 * KBAR, 50.0),
                                  (0.3 * KBAR, 200.0)])
def test_simulate_matches_reference_transcription(fd, k0, T):
    sp, rg = plan(T), ring(k0)
    dt = aligned_step(fd, sp, rg)
    n = round(8 * T / dt)
    got = simulate(fd, sp, rg, dt, max_cycles=8, stop_early=False).values
    np.testing.assert_allclose(got, reference_scheme(fd, sp, rg, dt, n), rtol=0, atol=1e-10)


def test_simulate_examples(fd):
    flat = simulate(fd, plan(60.0), ring(0.0), 0.1, max_cycles=20)
    assert not flat.values.any()
    _, st = simulate_stationary(fd, plan(60.0), ring(KBAR), 0.1)
    assert st.converged and st.gbar == pytest.approx(0.45 * C, abs=1e-9)
    _, st = simulate_stationary(fd, plan(60.0), ring(KBAR / 1.5), 0.1)
    assert st.gbar == pytest.approx(0.9 * 0.5 * C, rel=1e-9)


def test_simulate_rejects_bad_steps(fd):
    with pytest.raises(ConfigurationError):
        simulate(fd, plan(60.0), ring(KBAR), dt=40.0)
    with pytest.raises(ConfigurationError):
        simulate(fd, plan(60.0), ring(KBAR), dt=0.0)
    with pytest.raises(ConfigurationError):
        simulate(fd, plan(60.0), ring(KBAR), dt=0.1, max_cycles=0)
    with pytest.raises(ConfigurationError):
        check_step(fd, SignalPlan.from_ratio(600.0, 0.5), RingConfig(50.0, KBAR), 5.0)


def test_aligned_step_divides_windows(fd):
    for T in (60.0, 86.0, 123.0, 366.0):
        sp = plan(T)
        dt = aligned_step(fd, sp, ring(KBAR))
        assert dt <= 0.1
        for x in (T, sp.green_time, L / 20, L / 5):
            assert abs(x / dt - round(x / dt)) < 1e-9
    odd = plan(61.7)
    dt = aligned_step(fd, odd, ring(KBAR))
    assert dt <= 0.1 and abs(odd.green_time / dt - round(odd.green_time / dt)) < 1e-9


def test_green_fractions_off_grid():
    sp = SignalPlan.from_ratio(10.0, 0.45)  # green 4.5 s
    g = green_fractions(sp, 1.0, 12)
    np.testing.assert_allclose(g, [1, 1, 1, 1, 0.5, 0, 0, 0, 0, 0, 1, 1])


def test_detect_stationary_examples(fd):
    flat = series(fd, np.zeros(round(16 * 60 / 0.1) + 1))
    st = detect_stationary(flat)
    assert st.converged and st.gbar == 0 and st.period_multiple == 1

    # constructed period-T state: 3 vehicles per cycle, all in the first 10 s
    t = np.arange(round(20 * 60 / 0.1) + 1) * 0.1
    cyc, ph = np.floor(t / 60 + 1e-12), t - np.floor(t / 60 + 1e-12) * 60
    G = 3 * cyc + 3 * np.minimum(ph, 10) / 10
    st = detect_stationary(series(fd, G))
    assert st.converged and st.period_multiple == 1
    assert st.gbar == pytest.approx(3 / 60, rel=1e-12) and st.residual < 1e-12

    _, st = simulate_stationary(fd, plan(120.0), ring(2 * KBAR))
    assert st.period_multiple == 1 and st.gbar == pytest.approx(0.95 * 0.5 * C, rel=1e-9)

    with pytest.raises(SequencingError):
        detect_stationary(series(fd, np.zeros(100)))


def test_detect_period_two(fd):
    t = np.arange(round(20 * 60 / 0.1) + 1) * 0.1
    cyc = np.floor(t / 60 + 1e-12)
    # alternating 1 and 3 vehicles per cycle, released at cycle start
    G = 2 * cyc + np.where(cyc % 2 == 1, -1.0, 0.0)
    st = detect_stationary(series(fd, G, k0=0.1), m_max=4)
    assert st.converged and st.period_multiple == 2
    assert st.gbar == pytest.approx(2 / 60, rel=1e-12)


def test_series_observables(fd):
    sp, rg = plan(60.0), ring(2 * KBAR)
    s = simulate(fd, sp, rg, 0.1, max_cycles=10, stop_early=False)
    t = s.times
    k = np.flatnonzero(t > 60.5)[:50]
    G = s.values
    lam = s.queue()
    np.testing.assert_allclose(lam[k], G[k - 600] - G[k] + rg.k0 * rg.L, atol=1e-12)
    early = t <= 240
    np.testing.assert_allclose(s.vacancy()[early],
                               (fd.K - rg.k0) * fd.W * t[early] - G[early], atol=1e-12)
    beta_ref = [beta(sp, float(x)) for x in t[:2000]]
    assert list(s.signal()[:2000]) == beta_ref
    g = s.flow_rate()
    assert math.isnan(g[-1]) and np.allclose(g[:-1], np.diff(G) / 0.1)
    assert s.at(0.05) == pytest.approx((G[0] + G[1]) / 2)
    with pytest.raises(SequencingError):
        s.index_of(0.05)
    with pytest.raises(SequencingError):
        s.at(s.t_end + 1)


def test_csv_round_trip(fd, tmp_path):
    sp, rg = plan(60.0), ring(KBAR / 1.5)
    s = simulate(fd, sp, rg, 0.1, max_cycles=3, stop_early=False)
    path = tmp_path / "series.csv"
    s.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,G,g,lambda,gamma,beta"
    back = read_series_csv(path, fd, sp, rg)
    np.testing.assert_array_equal(back.values, s.values)
    assert back.dt == pytest.approx(0.1)


def test_values_are_read_only(fd):
    s = simulate(fd, plan(60.0), ring(KBAR), 0.1, max_cycles=2, stop_early=False)
    with pytest.raises(ValueError):
        s.values[3] = 1.0


def test_refinement_changes_gbar_by_order_dt(fd):
    sp, rg = plan(77.0), ring(0.7 * KBAR)
    coarse = simulate_stationary(fd, sp, rg, 0.2)[1]
    fine = simulate_stationary(fd, sp, rg, 0.1)[1]
    assert abs(coarse.gbar - fine.gbar) <= C * 0.2


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.floats(0.0, 1.0), st.integers(20, 200), st.sampled_from([0.1, 0.2, 0.25, 0.5]))
def test_invariants_hold_on_random_runs(k_frac, T, dt):
    from ringsignal import FundamentalDiagram
    fd = FundamentalDiagram(20.0, 5.0, 1 / 7)
    sp, rg = plan(float(T)), ring(k_frac * fd.K)
    s = simulate(fd, sp, rg, dt, max_cycles=12, stop_early=False)
    assert check_invariants(s) == []
    inc = np.diff(s.values)
    assert inc.min() >= 0 and inc.max() <= fd.C * dt * (1 + 1e-12)
    assert s.queue().min() >= -1e-9 and s.vacancy().min() >= -1e-9


def test_check_invariants_reports_problems(fd):
    s = series(fd, [0.0, 1.0, 0.5])
    problems = check_invariants(s)
    assert any("decreases" in p for p in problems)
    assert any("capacity" in p for p in problems)
