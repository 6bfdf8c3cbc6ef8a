"""Fast invariant checks run by ``cortexflow validate``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .cortex import (
    SimParams, coercivity_bound, delta_weights, elastic_energy, elastic_force,
    equilibrium_radius, leading_trailing, make_perturbed_circle, pressure_energy, pressure_force,
    total_energy,
)
from .geometry import ChannelGeometry, RatchetSpec, inside, solve_ratchet_phase
from .protocols import EntryProtocolConfig, run_channel
from .solvers import discrete_s_flow, flow_velocity, project_tangent_cone


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


def fd_gradient(energy, X: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference Euclidean gradient of ``energy`` at ``X``."""
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        g[idx] = (energy(Xp) - energy(Xm)) / (2 * h)
    return g


def check_force_gradients(params: SimParams, N: int = 64) -> CheckResult:
    # every segment stretched, so the elastic energy is smooth here
    st = make_perturbed_circle(N, 0.3, 0.05, 3)
    worst = 0.0
    for F, E in ((elastic_force(st, params.kappa), lambda Y: elastic_energy(Y, params.kappa)),
                 (pressure_force(st, params.p), lambda Y: pressure_energy(Y, params.p))):
        G = -fd_gradient(E, st.positions) / st.ds
        worst = max(worst, float(np.max(np.abs(F - G)) / np.max(np.abs(G))))
    return CheckResult("forces are energy gradients", worst < 1e-5, f"max rel err {worst:.2e}")


def check_delta_normalization(N: int = 200) -> CheckResult:
    worst = 0.0
    for a in (0.001, 0.01, 0.04, 0.1, 0.8):
        worst = max(worst, abs(float(np.sum(delta_weights(a, N))) / N - 1.0))
    return CheckResult("mollified delta sums to 1", worst < 1e-14, f"max err {worst:.1e}")


def _projection_samples(geom: ChannelGeometry, n: int, rng, x_range, eps):
    bad = 0
    for _ in range(n):
        x = rng.uniform(*x_range)
        hw = geom.wall_half_width(x)
        # half of the points in the tube, all inside the domain
        y = hw - rng.uniform(0, eps) if rng.random() < 0.5 else rng.uniform(-hw, hw)
        y *= rng.choice([-1.0, 1.0])
        pt = np.array([x, y])
        F = rng.normal(size=2)
        P = project_tangent_cone(F, pt, geom, eps)
        PP = project_tangent_cone(P, pt, geom, eps)
        if np.linalg.norm(P) > np.linalg.norm(F) * (1 + 1e-12) or np.max(np.abs(PP - P)) > 1e-12:
            bad += 1
    return bad


def check_projection(n: int = 10_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    eps = 0.1 / 47.6
    flat = ChannelGeometry.flat(2.16 / 47.6)
    rat = ChannelGeometry.ratcheted(RatchetSpec(((3.9 / 47.6, 1.0),), w0=1.4 / 47.6, d0=2.7 / 47.6))
    bad = _projection_samples(flat, n // 2, rng, (-1.0, 1.0), eps)
    bad += _projection_samples(rat, n - n // 2, rng, (0.0, 1.0), eps)
    return CheckResult("projection idempotent and non-expansive", bad == 0, f"{bad} of {n} pairs violate")


def check_coercivity(params: SimParams, n: int = 200, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    bound = coercivity_bound(params.p, params.kappa)
    worst = math.inf
    for _ in range(n):
        r = rng.uniform(0.05, 1.0)
        st = make_perturbed_circle(64, r, rng.uniform(0, 0.5), int(rng.integers(2, 7)))
        worst = min(worst, total_energy(st, params).E_total - bound)
    return CheckResult("energy above coercivity bound", worst >= -1e-6, f"min margin {worst:.3e}")


def check_ratchet_profile() -> CheckResult:
    ph = np.linspace(-20, 20, 4001)
    worst = 0.0
    for alpha in (0.0, 0.4, 0.9):
        g = solve_ratchet_phase(ph, alpha)
        worst = max(worst, float(np.max(np.abs(g - np.sin(ph + alpha * g)))))
    return CheckResult("ratchet fixed point residual", worst < 1e-10, f"max residual {worst:.1e}")


def check_s_flow(params: SimParams) -> CheckResult:
    st = make_perturbed_circle(200, equilibrium_radius(params.p), 0.05, 3)
    i0, i1 = leading_trailing(st, params.omega)
    S = discrete_s_flow(st, params.v, params.a, i0, i1, params.arc_sign)
    # closing the cycle: S_N = S_0 + sum of increments
    dS = -flow_velocity(st, params)
    gap = float(np.max(np.abs(S[-1] + dS[0] * st.ds - S[0])))
    return CheckResult("flow potential is periodic", gap < 1e-10, f"|S_N - S_0| = {gap:.1e}")


def check_non_penetration(params: SimParams) -> CheckResult:
    prm = params.with_(omega=(1.0, 0.0))
    rat = ChannelGeometry.ratcheted(RatchetSpec(((7.6 / 47.6, 1.0),), w0=1.4 / 47.6, d0=2.7 / 47.6), 0.0)
    traj = run_channel(prm, rat, EntryProtocolConfig(relaxation_time=0.2), N=200, post_entry_time=0.4)
    ok = all(np.all(inside(rat, X)) for X in traj.positions)
    return CheckResult("non-penetration in a ratchet", ok, f"{len(traj)} frames checked")


def run_checks(params: SimParams | None = None) -> list[CheckResult]:
    params = params or SimParams()
    out = []
    for fn in (lambda: check_force_gradients(params), check_delta_normalization, check_projection,
               lambda: check_coercivity(params), check_ratchet_profile, lambda: check_s_flow(params),
               lambda: check_non_penetration(params)):
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as e:  # a crashing check is a failed check
            res = CheckResult(getattr(fn, "__name__", "check"), False, f"{type(e).__name__}: {e}")
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out

