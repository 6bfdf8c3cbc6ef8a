"""Experiment protocols: free relaxation, channel entry, speed metrics, sweeps."""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cortex import CortexState, EnergyReport, SimParams, equilibrium_radius, make_circle, total_energy
from .geometry import ChannelGeometry, RatchetSpec, inside
from .solvers import ExplicitIntegrator

logger = logging.getLogger(__name__)


class EntryFailed(RuntimeError):
    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class PenetrationError(AssertionError):
    pass


@dataclass
class Trajectory:
    params: SimParams
    geom: ChannelGeometry
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    phases: list = field(default_factory=list)

    def append(self, state: CortexState, energy: EnergyReport | None = None, phase: str = "run"):
        if self.times and not state.t > self.times[-1]:
            raise ValueError("frame times must be strictly increasing")
        self.times.append(state.t)
        self.positions.append(state.positions.copy())
        self.energies.append(energy if energy is not None else total_energy(state, self.params))
        self.phases.append(phase)

    def __len__(self):
        return len(self.times)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    @property
    def X(self) -> np.ndarray:
        return np.asarray(self.positions)

    @property
    def com(self) -> np.ndarray:
        return self.X.mean(axis=1)

    def state(self, k: int = -1) -> CortexState:
        return CortexState(self.positions[k].copy(), self.times[k])

    def phase_start(self, phase: str) -> float | None:
        for t, ph in zip(self.times, self.phases):
            if ph == phase:
                return t
        return None


def _check_inside(geom: ChannelGeometry, state: CortexState):
    if geom.has_walls and not np.all(inside(geom, state.positions)):
        bad = np.flatnonzero(~inside(geom, state.positions))
        raise PenetrationError(f"nodes {bad.tolist()[:10]} left the channel at t={state.t:.6g}")


# ---------------------------------------------------------------------------
# free space


def relax_free(params: SimParams, N: int = 200, T: float = 5.0, frame_every: int = 1,
               tol: float = 1e-6, initial: CortexState | None = None) -> Trajectory:
    """Evolve a circle of radius ``1.05 r*`` in free space.

    Stops early once the largest node speed drops below ``tol`` (only
    reachable without cortical flow).
    """
    geom = ChannelGeometry.free()
    state = initial if initial is not None else make_circle(N, radius=1.05 * equilibrium_radius(params.p, kappa=params.kappa))
    integ = ExplicitIntegrator(params, geom, state.N)
    traj = Trajectory(params, geom)
    traj.append(state, phase="relax")
    n_steps = int(round(T / params.dt))
    for k in range(1, n_steps + 1):
        state, rep = integ.step(state)
        if k % frame_every == 0 or k == n_steps:
            traj.append(state, rep.energy_after, "relax")
        if rep.max_displacement / params.dt < tol:
            if traj.times[-1] != state.t:
                traj.append(state, rep.energy_after, "relax")
            break
    return traj


# ---------------------------------------------------------------------------
# channels


@dataclass(frozen=True)
class EntryProtocolConfig:
    """Channel-entry protocol.

    The cell starts as the equilibrium circle a distance ``gap`` in front
    of the channel mouth, relaxes, is pushed in by switching pressure off
    on ``push_fraction`` of the nodes centred on the trailing end, and then
    evolves freely.
    """

    push_fraction: float = 0.25
    entry_x: float = 0.0
    relaxation_time: float = 0.5
    max_push_time: float = 8.0
    gap: float = 0.01
    frame_every: int = 1
    speed_window: float = 0.6

    def __post_init__(self):
        if not 0 < self.push_fraction < 0.5:
            raise ValueError("push_fraction must lie in (0, 0.5)")
        if not 0 < self.speed_window <= 1:
            raise ValueError("speed_window must lie in (0, 1]")


def entirely_inside(state: CortexState, entry_x: float) -> bool:
    spacing = float(np.mean(np.linalg.norm(np.diff(state.positions, axis=0, append=state.positions[:1]), axis=1)))
    return bool(state.positions[:, 0].min() > entry_x + spacing)


def run_channel(params: SimParams, geom: ChannelGeometry, entry: EntryProtocolConfig | None = None,
                T: float = 5.0, N: int = 200, post_entry_time: float | None = None) -> Trajectory:
    """Relax in front of the channel, push in, then run until total time ``T``.

    With ``post_entry_time`` the run instead continues for that long after
    entry, whatever the push took.
    """
    entry = entry or EntryProtocolConfig()
    if not geom.has_walls:
        raise ValueError("run_channel needs a flat or ratchet channel")
    if not params.omega[0] > 0:
        raise ValueError(f"polarization {params.omega} does not point into the channel (+x)")
    if geom.entry_x is None or geom.entry_x != entry.entry_x:
        geom = ChannelGeometry(geom.kind, geom.half_width, geom.ratchet, entry.entry_x)
    r = equilibrium_radius(params.p, N, params.kappa)
    state = make_circle(N, center=(entry.entry_x - r - entry.gap, 0.0), radius=r)
    integ = ExplicitIntegrator(params, geom, N)
    traj = Trajectory(params, geom)
    traj.append(state, phase="relax")
    push_half = int(round(entry.push_fraction * N / 2))

    def advance(state, phase, k, push=-1):
        state, rep = integ.step(state, push_half=push)
        _check_inside(geom, state)
        if k % entry.frame_every == 0:
            traj.append(state, rep.energy_after, phase)
        return state

    k = 0
    for _ in range(int(round(entry.relaxation_time / params.dt))):
        k += 1
        state = advance(state, "relax", k)
    t_push = state.t
    while not entirely_inside(state, entry.entry_x):
        if state.t - t_push >= entry.max_push_time:
            raise EntryFailed(f"cell did not enter within {entry.max_push_time} time units", traj)
        k += 1
        state = advance(state, "push", k, push_half)
    if traj.times[-1] != state.t:
        traj.append(state, phase="push")
    if post_entry_time is not None:
        T = state.t + post_entry_time
    k = 0
    while state.t < T - 1e-9:
        k += 1
        state = advance(state, "run", k)
    if traj.times[-1] != state.t:
        traj.append(state, phase="run")
    return traj


# ---------------------------------------------------------------------------
# metrics


def mean_speed(traj: Trajectory, window: tuple[float, float] | None = None):
    """Mean COM velocity along ``e1`` over ``window`` and the instantaneous speed series."""
    t = traj.t
    lo, hi = window if window is not None else (t[0], t[-1])
    sel = np.flatnonzero((t >= lo - 1e-12) & (t <= hi + 1e-12))
    if sel.size < 2:
        raise ValueError(f"window {window} contains fewer than 2 frames")
    com = traj.com[sel, 0]
    tt = t[sel]
    mean = (com[-1] - com[0]) / (tt[-1] - tt[0])
    return float(mean), np.diff(com) / np.diff(tt)


def post_entry_speed(traj: Trajectory, fraction: float = 0.6) -> float:
    """Mean speed over the last ``fraction`` of the post-entry phase."""
    t0 = traj.phase_start("run")
    if t0 is None:
        raise ValueError("trajectory has no post-entry phase")
    t = traj.t
    t1 = t[-1]
    # start at the last frame at or before the window start
    lo = t[np.searchsorted(t, t1 - fraction * (t1 - t0) + 1e-12, side="right") - 1]
    return mean_speed(traj, (min(lo, t[-2]), t1))[0]


def fundamental_period(signal: np.ndarray, dt: float, prominence: float = 0.8) -> float:
    """Fundamental period from the autocorrelation.

    Takes the first local maximum of the autocorrelation (beyond its first
    zero crossing) that reaches ``prominence`` times the largest such
    maximum; unlike the spectral peak this is not fooled by a strong second
    harmonic.
    """
    x = np.asarray(signal, float) - np.mean(signal)
    n = x.size
    ac = np.correlate(x, x, mode="full")[n - 1:]
    ac = ac / (ac[0] * (n - np.arange(n)) / n)
    half = n // 2
    neg = np.flatnonzero(ac[:half] < 0)
    if neg.size == 0:
        return math.nan
    lags = np.arange(neg[0], half - 1)
    peaks = [j for j in lags if j > 0 and ac[j] >= ac[j - 1] and ac[j] > ac[j + 1]]
    if not peaks:
        return math.nan
    top = max(ac[j] for j in peaks)
    j = next(j for j in peaks if ac[j] >= prominence * top)
    # parabolic refinement of the peak position
    a, b, c = ac[j - 1], ac[j], ac[j + 1]
    shift = 0.5 * (a - c) / (a - 2 * b + c) if a - 2 * b + c != 0 else 0.0
    return float((j + shift) * dt)


def ratchet_oscillations(traj: Trajectory, min_frames: int = 20) -> list[dict]:
    """Speed statistics while the whole cell lies within each ratchet section.

    For every section: mean speed, oscillation period of the COM speed,
    the period expected from the wall (``L0 / mean``), and the RMS
    oscillation amplitude over a whole number of periods.
    """
    geom = traj.geom
    spec = geom.ratchet
    if spec is None:
        raise ValueError("trajectory geometry is not a ratchet")
    t, X = traj.t, traj.X
    com = X.mean(axis=1)[:, 0]
    dtf = float(np.median(np.diff(t)))
    speed = np.gradient(com, t)
    xmin, xmax = X[:, :, 0].min(axis=1), X[:, :, 0].max(axis=1)
    offs = spec.offsets + geom.start
    run = np.asarray([ph == "run" for ph in traj.phases])
    out = []
    for k, (L0, _) in enumerate(spec.sections):
        sel = np.flatnonzero(run & (xmin >= offs[k]) & (xmax <= offs[k + 1]))
        if sel.size < min_frames:
            out.append({"section": k, "wavelength": L0, "frames": int(sel.size)})
            continue
        sel = np.arange(sel[0], sel[-1] + 1)
        mean = float((com[sel[-1]] - com[sel[0]]) / (t[sel[-1]] - t[sel[0]]))
        period = fundamental_period(speed[sel], dtf)
        amp = math.nan
        if np.isfinite(period):
            n_per = int((t[sel[-1]] - t[sel[0]]) // period)
            if n_per >= 1:
                m = int(round(n_per * period / dtf))
                amp = float(np.std(speed[sel[: m + 1]]))
        out.append({
            "section": k, "wavelength": L0, "frames": int(sel.size), "mean_speed": mean,
            "period": period, "expected_period": L0 / mean if mean > 0 else math.nan,
            "amplitude": amp,
        })
    return out


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepResult:
    h: list
    d0: list
    L0: list
    w0: list
    mean_speed: np.ndarray
    entered: np.ndarray

    def rows(self):
        for (a, b, c, d) in itertools.product(*(range(len(ax)) for ax in (self.h, self.d0, self.L0, self.w0))):
            yield (self.h[a], self.d0[b], self.L0[c], self.w0[d],
                   float(self.mean_speed[a, b, c, d]), bool(self.entered[a, b, c, d]))


def channel_for(L0: float, w0: float, d0: float, length: float = 3.0, alpha: float = 0.4,
                entry_x: float = 0.0) -> ChannelGeometry:
    return ChannelGeometry.ratcheted(RatchetSpec(((L0, length),), w0=w0, d0=d0, alpha=alpha), entry_x=entry_x)


def _sweep_cell(args):
    (idx, params, L0, w0, d0, entry, T, N, length) = args
    geom = channel_for(L0, w0, d0, length, entry_x=entry.entry_x)
    try:
        traj = run_channel(params, geom, entry, N=N, post_entry_time=T)
    except EntryFailed:
        return idx, math.nan, False
    return idx, post_entry_speed(traj, entry.speed_window), True


def sweep(base_params: SimParams, grid: dict, entry: EntryProtocolConfig | None = None,
          T: float = 3.0, N: int = 200, jobs: int | None = None, channel_length: float = 3.0) -> SweepResult:
    """Mean post-entry speed over the grid ``{h, d0, L0, w0}`` (model units).

    Every cell runs :func:`run_channel` for ``T`` time units after entry in
    a single-wavelength ratchet of about ``channel_length``.
    Cells are independent; with ``jobs > 1`` they run in a process pool.
    ``CORTEXFLOW_JOBS`` in the environment overrides ``jobs``.
    Failed entries are stored as NaN with ``entered = False``.
    """
    entry = entry or EntryProtocolConfig()
    axes = [list(map(float, grid[k])) for k in ("h", "d0", "L0", "w0")]
    if any(len(ax) == 0 for ax in axes):
        raise ValueError("every grid axis needs at least one value")
    shape = tuple(len(ax) for ax in axes)
    tasks = []
    for idx in itertools.product(*(range(n) for n in shape)):
        h, d0, L0, w0 = (axes[j][idx[j]] for j in range(4))
        tasks.append((idx, base_params.with_(a=h), L0, w0, d0, entry, T, N, channel_length))
    env = os.environ.get("CORTEXFLOW_JOBS")
    jobs = int(env) if env else (jobs or 1)
    speed = np.full(shape, np.nan)
    entered = np.zeros(shape, dtype=bool)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    for idx, sp, ok in results:
        speed[idx] = sp
        entered[idx] = ok
    return SweepResult(*axes, speed, entered)
