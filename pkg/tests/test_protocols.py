import math

import numpy as np
import pytest

from cortexflow import _backend
from cortexflow.cortex import (
    SimParams, delta_weights, leading_trailing, make_circle, make_perturbed_circle, pressure_force,
)
from cortexflow.geometry import ChannelGeometry, inside
from cortexflow.solvers import ExplicitIntegrator
from cortexflow.protocols import (
    EntryFailed, EntryProtocolConfig, Trajectory, channel_for, entirely_inside, fundamental_period,
    mean_speed, post_entry_speed, relax_free, run_channel, sweep,
)

X0 = 47.6
FAST = EntryProtocolConfig(relaxation_time=0.08)


def translated(u, n=11, dt=0.1):
    base = make_circle(16, radius=0.3)
    traj = Trajectory(SimParams(), ChannelGeometry.free())
    for k in range(n):
        st = base.copy()
        st.positions += np.asarray(u) * k * dt
        st.t = k * dt
        traj.append(st)
    return traj


# -- trajectories and metrics ------------------------------------------------------

def test_frame_times_strictly_increase():
    traj = translated((0, 0), n=2)
    with pytest.raises(ValueError):
        traj.append(traj.state(0))


def test_static_speed_is_zero():
    m, series = mean_speed(translated((0.0, 0.0)))
    assert m == 0.0 and np.all(series == 0)


def test_uniform_translation_speed():
    m, series = mean_speed(translated((0.37, -0.2)))
    assert m == pytest.approx(0.37, abs=1e-12)
    assert np.allclose(series, 0.37)


def test_mean_speed_telescopes():
    rng = np.random.default_rng(0)
    traj = translated((0, 0), n=30)
    for X in traj.positions:
        X += rng.normal(size=2)
    m, series = mean_speed(traj, (0.5, 2.5))
    dt = np.diff(traj.t[(traj.t >= 0.5 - 1e-12) & (traj.t <= 2.5 + 1e-12)])
    assert m == pytest.approx(np.sum(series * dt) / 2.0, abs=1e-12)


def test_mean_speed_empty_window():
    with pytest.raises(ValueError):
        mean_speed(translated((1, 0)), (5.0, 6.0))


def test_fundamental_period_ignores_harmonic():
    t = np.arange(0, 20, 0.01)
    sig = 0.3 * np.sin(2 * np.pi * t / 1.25) + 0.6 * np.sin(4 * np.pi * t / 1.25 + 0.3)
    assert fundamental_period(sig, 0.01) == pytest.approx(1.25, rel=0.01)


def test_entry_config_validation():
    for bad in (0.0, 0.5, 0.7):
        with pytest.raises(ValueError):
            EntryProtocolConfig(push_fraction=bad)


# -- relaxation ---------------------------------------------------------------------

def test_relax_free_records_frames():
    traj = relax_free(SimParams(v=0.0), N=100, T=0.2)
    assert len(traj) == 6
    assert np.all(np.diff(traj.t) > 0)
    E = [e.E_total for e in traj.energies]
    assert np.all(np.diff(E) <= 1e-12)


# -- pushing --------------------------------------------------------------------------

def test_push_only_removes_pressure_near_rear():
    N, push_half = 200, 25
    prm = SimParams(omega=(1.0, 0.0))
    st = make_perturbed_circle(N, 0.33, 0.05, 3)
    i0, i1 = leading_trailing(st, prm.omega)
    h = 1e-6
    z = np.zeros(2)
    runs = []
    for ph in (-1, push_half):
        X = st.positions.copy()
        _backend.advance(X, 1, h, 1 / N, 1.0, 1.0, prm.p, prm.v, 1.0, 0.0, delta_weights(prm.a, N), 1, 1,
                         ph, z, z, 0, 0, 0, 0.0, prm.eps, 1.0, 1 / N)
        runs.append(X)
    diff = (runs[1] - runs[0]) / h
    d = np.abs((np.arange(N) - i1 + N // 2) % N - N // 2)
    assert np.all(diff[d > push_half] == 0)
    assert np.allclose(diff[d <= push_half], -pressure_force(st, prm.p)[d <= push_half], rtol=1e-8, atol=1e-6)


def test_entirely_inside_uses_node_spacing():
    st = make_circle(100, center=(0.5, 0.0), radius=0.3)
    spacing = 2 * 0.3 * math.sin(math.pi / 100)
    assert entirely_inside(st, 0.2 - 1.01 * spacing)
    assert not entirely_inside(st, 0.2 - 0.99 * spacing)


def test_channel_requires_polarity_into_channel():
    with pytest.raises(ValueError):
        run_channel(SimParams(), ChannelGeometry.flat(0.045), FAST, T=1.0)
    with pytest.raises(ValueError):
        run_channel(SimParams(omega=(1.0, 0.0)), ChannelGeometry.free(), FAST, T=1.0)


def test_entry_failure_carries_trajectory():
    prm = SimParams(omega=(1.0, 0.0))
    with pytest.raises(EntryFailed) as err:
        run_channel(prm, ChannelGeometry.flat(2.16 / X0), EntryProtocolConfig(relaxation_time=0.04,
                                                                             max_push_time=0.08), T=2.0)
    assert len(err.value.trajectory) >= 3
    assert "push" in err.value.trajectory.phases


def test_phases_and_non_penetration():
    prm = SimParams(omega=(1.0, 0.0))
    geom = ChannelGeometry.flat(3.7 / X0)
    traj = run_channel(prm, geom, FAST, post_entry_time=0.2)
    phases = traj.phases
    assert phases[0] == "relax" and phases[-1] == "run"
    # markers appear in order and pushing is never re-enabled
    first_run = phases.index("run")
    assert "push" not in phases[first_run:]
    assert entirely_inside(traj.state(first_run - 1), 0.0)
    assert traj.times[-1] == pytest.approx(traj.times[first_run - 1] + 0.2)
    assert traj.geom.entry_x == 0.0
    assert all(np.all(inside(traj.geom, X)) for X in traj.positions)


def test_cell_without_flow_stops_in_channel():
    prm = SimParams(omega=(1.0, 0.0))
    geom = ChannelGeometry.flat(3.7 / X0)
    state = run_channel(prm, geom, FAST, post_entry_time=0.04).state()
    still = prm.with_(v=0.0)
    integ = ExplicitIntegrator(still, geom, state.N)
    traj = Trajectory(still, geom)
    for _ in range(12):
        state, rep = integ.step(state)
        traj.append(state, rep.energy_after)
    t = traj.t
    assert abs(mean_speed(traj, (t[len(t) // 3], t[-1]))[0]) < 1e-3 * 2.0
    assert all(np.all(inside(geom, X)) for X in traj.positions)


def test_pushing_alone_cannot_bring_a_still_cell_in():
    # without flow the rear collapses under the push and the front stalls at the mouth
    prm = SimParams(omega=(1.0, 0.0), v=0.0)
    with pytest.raises(EntryFailed) as err:
        run_channel(prm, ChannelGeometry.flat(3.7 / X0), EntryProtocolConfig(relaxation_time=0.08,
                                                                            max_push_time=2.0), T=3.0)
    assert err.value.trajectory.X[-1, :, 0].max() < 0.1


# -- sweep ---------------------------------------------------------------------------

GRID = {"h": [0.1], "d0": [2.7 / X0], "L0": [7.6 / X0], "w0": [1.4 / X0]}


def test_single_cell_sweep_matches_run_channel():
    prm = SimParams(omega=(1.0, 0.0))
    res = sweep(prm, GRID, FAST, T=0.3, channel_length=1.0)
    traj = run_channel(prm, channel_for(7.6 / X0, 1.4 / X0, 2.7 / X0, 1.0), FAST, post_entry_time=0.3)
    assert res.mean_speed.shape == (1, 1, 1, 1)
    assert res.entered.all()
    assert res.mean_speed[0, 0, 0, 0] == post_entry_speed(traj)


def test_sweep_parallel_and_repeatable(monkeypatch):
    monkeypatch.delenv("CORTEXFLOW_JOBS", raising=False)
    prm = SimParams(omega=(1.0, 0.0))
    grid = dict(GRID, w0=[1.4 / X0, 3.7 / X0])
    serial = sweep(prm, grid, FAST, T=0.2, channel_length=1.0, jobs=1)
    parallel = sweep(prm, grid, FAST, T=0.2, channel_length=1.0, jobs=2)
    assert np.array_equal(serial.mean_speed, parallel.mean_speed)
    assert len(list(serial.rows())) == 2


def test_failed_entries_are_absent():
    prm = SimParams(omega=(1.0, 0.0))
    res = sweep(prm, GRID, EntryProtocolConfig(relaxation_time=0.04, max_push_time=0.04), T=0.2,
                channel_length=1.0)
    assert np.isnan(res.mean_speed).all() and not res.entered.any()


def test_sweep_rejects_empty_axis():
    with pytest.raises(ValueError):
        sweep(SimParams(omega=(1.0, 0.0)), dict(GRID, h=[]))
