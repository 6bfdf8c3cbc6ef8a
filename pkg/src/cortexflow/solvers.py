"""Time integrators: projected explicit Euler and minimizing movements.

The explicit scheme enforces the walls by removing the outward normal
force component of nodes inside an ``eps`` tube around the boundary.  The
minimizing-movement scheme only sees the walls through the softened
potential.  The two are never mixed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .cortex import (
    CortexState,
    EnergyReport,
    SimParams,
    compensating_force,
    delta_weights,
    elastic_energy,
    elastic_force,
    flow_term,
    leading_trailing,
    pressure_force,
    shoelace_area,
    total_energy,
)
from .geometry import ChannelGeometry, SoftObstacle, closest_wall_point

logger = logging.getLogger(__name__)

# explicit substeps are at most this fraction of mu ds^2 / kappa
SUBSTEP_SAFETY = 0.4
MAX_REFINEMENTS = 6


class InstabilityError(RuntimeError):
    """The stability monitor tripped and refining the substep did not help."""

    def __init__(self, msg, state=None, report=None):
        super().__init__(msg)
        self.state = state
        self.report = report


class InnerSolverError(RuntimeError):
    def __init__(self, msg, iterate=None, grad_norm=None):
        super().__init__(msg)
        self.iterate = iterate
        self.grad_norm = grad_norm


class CompensationError(ValueError):
    pass


@dataclass
class StepReport:
    max_displacement: float
    projected_node_count: int
    energy_after: EnergyReport | None
    n_substeps: int = 1
    max_substep_displacement: float = 0.0
    inner_iterations: int | None = None
    final_gradient_norm: float | None = None
    phi_history: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        out = {
            "max_displacement": self.max_displacement,
            "projected_node_count": self.projected_node_count,
            "n_substeps": self.n_substeps,
            "max_substep_displacement": self.max_substep_displacement,
        }
        if self.energy_after is not None:
            out["energy_after"] = self.energy_after.as_dict()
        if self.inner_iterations is not None:
            out["inner_iterations"] = self.inner_iterations
            out["final_gradient_norm"] = self.final_gradient_norm
        return out


# ---------------------------------------------------------------------------
# tangent cone projection


def project_tangent_cone(F, x, geom: ChannelGeometry, eps: float) -> np.ndarray:
    """Drop the outward normal part of ``F`` at ``x`` if ``x`` is within ``eps`` of a wall."""
    F = np.asarray(F, dtype=float)
    if not geom.has_walls:
        return F.copy()
    wp = closest_wall_point(geom, x)
    if wp.dist < eps and F @ wp.normal > 0:
        return (F @ wp.tangent) * wp.tangent
    return F.copy()


# ---------------------------------------------------------------------------
# explicit scheme


def stable_substep(params: SimParams, N: int) -> float:
    return SUBSTEP_SAFETY * params.mu / (params.kappa * N * N)


class ExplicitIntegrator:
    """Projected explicit Euler with an adaptive substep count.

    One call to :meth:`step` advances by ``params.dt`` using ``n`` equal
    substeps.  ``n`` starts from the elastic stiffness estimate; whenever a
    node would move more than ``ds`` in one substep, or a value becomes
    non-finite, the step is rolled back and ``n`` is doubled.
    """

    def __init__(self, params: SimParams, geom: ChannelGeometry | None = None, N: int = 200,
                 advance=None):
        self.params = params
        self.geom = geom if geom is not None else ChannelGeometry.free()
        self.N = N
        self.advance = advance if advance is not None else _backend.advance
        self.weights = delta_weights(params.a, N)
        self.n_sub = max(1, math.ceil(params.dt / stable_substep(params, N) - 1e-9))
        self._poly = None
        self._poly_range = None

    def _polyline(self, X):
        lo, hi = float(X[:, 0].min()), float(X[:, 0].max())
        if self._poly is None or lo < self._poly_range[0] + 1 or hi > self._poly_range[1] - 1:
            rng = (5 * math.floor(lo / 5) - 5, 5 * math.ceil(hi / 5) + 10)
            self._poly = self.geom.wall_polyline(*rng)
            self._poly_range = rng
        return self._poly

    def _kernel_walls(self, X):
        if not self.geom.has_walls:
            z = np.zeros(2)
            return z, z, 0, 0, 0, 0.0, 1.0
        p = self._polyline(X)
        return p.x, p.y, p.graph_start, 1, int(p.has_entry), p.entry_x, p.lipschitz

    def step(self, state: CortexState, push_half: int = -1, dt: float | None = None,
             with_energy: bool = True) -> tuple[CortexState, StepReport]:
        prm = self.params
        dt = prm.dt if dt is None else dt
        if state.N != self.N:
            raise ValueError(f"integrator built for N={self.N}, state has N={state.N}")
        walls = self._kernel_walls(state.positions)
        n_sub = max(1, math.ceil(dt / stable_substep(prm, self.N) - 1e-9)) if dt != prm.dt else self.n_sub
        for _ in range(MAX_REFINEMENTS + 1):
            X = state.positions.copy()
            status, done, sub_max, nproj, _ = self.advance(
                X, n_sub, dt / n_sub, state.ds, prm.kappa, prm.mu, prm.p, prm.v,
                prm.omega[0], prm.omega[1], self.weights, int(prm.compensating), prm.arc_sign,
                int(push_half), *walls[:6], prm.eps, walls[6], state.ds,
            )
            if status == 0:
                break
            logger.info("stability monitor tripped (status %d after %d/%d substeps); refining",
                        status, done, n_sub)
            n_sub *= 2
        else:
            raise InstabilityError(
                f"step at t={state.t:.6g} unstable even with {n_sub // 2} substeps", state
            )
        if dt == prm.dt:
            self.n_sub = n_sub
        new = CortexState(X, state.t + dt)
        disp = float(np.max(np.linalg.norm(X - state.positions, axis=1)))
        energy = total_energy(new, prm) if with_energy else None
        return new, StepReport(disp, int(nproj), energy, n_sub, float(sub_max))


def explicit_step(state: CortexState, params: SimParams, geom: ChannelGeometry | None = None,
                  push_half: int = -1) -> tuple[CortexState, StepReport]:
    """One explicit step of size ``params.dt``."""
    return ExplicitIntegrator(params, geom, state.N).step(state, push_half)


# ---------------------------------------------------------------------------
# cortical flow potential


def flow_velocity(state: CortexState, params: SimParams, weights=None) -> np.ndarray:
    """``flow + F_comp``, i.e. ``-d_s S_flow`` at the nodes."""
    i0, i1 = leading_trailing(state, params.omega)
    D = flow_term(state, params.v, i0, i1, params.arc_sign)
    if params.compensating:
        D = D + compensating_force(state, params.v, params.a, i0, i1, params.arc_sign, weights)
    return D


def discrete_s_flow(state: CortexState, v: float, a: float, i0: int, i1: int,
                    arc_sign: int = 1) -> np.ndarray:
    """Node samples of ``S_flow`` with zero mean.

    ``S[i] - S[i-1] == ds * (d_s S)_i`` exactly, where ``d_s S = -(flow +
    F_comp)``; the summand must have zero mean (compensation intact).
    """
    dS = -(flow_term(state, v, i0, i1, arc_sign) + compensating_force(state, v, a, i0, i1, arc_sign))
    total = dS.sum(axis=0) * state.ds
    if np.max(np.abs(total)) > 1e-10:
        raise CompensationError(f"flow and compensation do not balance: sum = {total}")
    S = np.cumsum(dS, axis=0) * state.ds
    return S - S.mean(axis=0)


# ---------------------------------------------------------------------------
# minimizing movements


@dataclass(frozen=True)
class MMConfig:
    tau: float = 1e-3
    delta: float = 1e-3
    tol: float = 1e-8
    max_iter: int = 10_000

    def __post_init__(self):
        if not (self.tau > 0 and self.delta > 0):
            raise ValueError("tau and delta must be positive")


class MMObjective:
    """``Phi(Y) = mu |Y - X|^2 / (2 tau) + E(Y) - mu <Y, D>`` in the discrete L2 product.

    ``D`` is the cortical-flow velocity frozen at the old state ``X``.
    """

    def __init__(self, X_old: np.ndarray, params: SimParams, tau: float, D: np.ndarray,
                 obstacle: SoftObstacle | None = None):
        self.X = X_old
        self.N = X_old.shape[0]
        self.ds = 1.0 / self.N
        self.params = params
        self.tau = tau
        self.D = D
        self.obstacle = obstacle

    def energy(self, Y) -> float:
        e = elastic_energy(Y, self.params.kappa) - self.params.p * shoelace_area(Y)
        if self.obstacle is not None:
            e += self.ds * float(np.sum(self.obstacle.potential(Y)))
        return e

    def value(self, Y) -> float:
        prm = self.params
        prox = prm.mu * self.ds * float(np.sum((Y - self.X) ** 2)) / (2 * self.tau)
        return prox + self.energy(Y) - prm.mu * self.ds * float(np.sum(Y * self.D))

    def gradient(self, Y) -> np.ndarray:
        """L2 gradient (Euclidean gradient divided by ``ds``)."""
        prm = self.params
        st = CortexState.__new__(CortexState)
        st.positions, st.t = Y, 0.0
        g = prm.mu * (Y - self.X) / self.tau - elastic_force(st, prm.kappa) - pressure_force(st, prm.p)
        g -= prm.mu * self.D
        if self.obstacle is not None:
            g += self.obstacle.gradient(Y)
        return g


def minimize_accelerated(obj: MMObjective, Y0: np.ndarray, tol: float, max_iter: int):
    """Accelerated gradient descent with restart and backtracking.

    Steps use ``Y - g / L`` with ``L`` grown until the gradient is
    ``L``-Lipschitz along the step (a test that stays reliable when
    objective differences reach round-off).  Momentum is reset whenever the
    objective fails to decrease, so accepted iterates are monotone.
    """
    ds = obj.ds
    x = Y0.copy()
    fx = obj.value(x)
    gx = obj.gradient(x)
    L = obj.params.mu / obj.tau + 4 * obj.params.kappa / ds**2
    L *= 0.25
    y, gy, t = x, gx, 1.0
    history = [fx]
    roundoff = 64 * np.finfo(float).eps
    tol = max(tol, 16 * np.finfo(float).eps * obj.params.mu * (1 + float(np.abs(Y0).max())) / obj.tau)
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(gx)))
        if gnorm < tol:
            return x, it - 1, gnorm, history
        while True:
            x_new = y - gy / L
            g_new = obj.gradient(x_new)
            dx = np.linalg.norm(x_new - y)
            if np.linalg.norm(g_new - gy) <= L * dx * (1 + 1e-12) or dx == 0:
                break
            L *= 2.0
        f_new = obj.value(x_new)
        if f_new > fx + roundoff * (1 + abs(fx)):
            if y is x:
                # plain gradient step failed to descend: curvature underestimated
                L *= 2.0
                continue
            y, gy, t = x, gx, 1.0
            continue
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = x_new + ((t - 1) / t_new) * (x_new - x)
        x, fx, gx, t = x_new, min(f_new, fx), g_new, t_new
        gy = obj.gradient(y) if t > 1 else gx
        history.append(fx)
        L /= 1.2
    raise InnerSolverError(
        f"inner solver hit {max_iter} iterations (|grad|_inf = {np.max(np.abs(gx)):.3g})",
        iterate=x, grad_norm=float(np.max(np.abs(gx))),
    )


def mm_step(state: CortexState, params: SimParams, geom: ChannelGeometry | None, cfg: MMConfig,
            obstacle: SoftObstacle | None = None) -> tuple[CortexState, StepReport]:
    """One minimizing-movement step with the flow frozen at the old state."""
    geom = geom if geom is not None else ChannelGeometry.free()
    if geom.has_walls and obstacle is None:
        X = state.positions
        pad = 0.25
        bbox = ((X[:, 0].min() - pad, X[:, 0].max() + pad), (X[:, 1].min() - pad, X[:, 1].max() + pad))
        obstacle = SoftObstacle.build(geom, cfg.delta, bbox)
    D = flow_velocity(state, params) if params.v else np.zeros_like(state.positions)
    obj = MMObjective(state.positions, params, cfg.tau, D, obstacle)
    Y, iters, gnorm, hist = minimize_accelerated(obj, state.positions.copy(), cfg.tol, cfg.max_iter)
    new = CortexState(Y, state.t + cfg.tau)
    disp = float(np.max(np.linalg.norm(Y - state.positions, axis=1)))
    report = StepReport(disp, 0, total_energy(new, params, obstacle), 1, disp, iters, gnorm, hist)
    return new, report
