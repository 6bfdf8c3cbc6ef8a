"""Discrete cortex state and the force/energy terms acting on it.

The cortex is a closed chain of ``N`` nodes indexed on a discrete torus,
``X[i] == X[i + N]``.  The actin coordinate step is ``ds = 1 / N``.  Every
force here is returned as an ``(N, 2)`` array of per-node L2 forces (the
Euclidean gradient of the discrete energy divided by ``ds``), so that the
explicit and minimizing-movement integrators share one code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

MIN_NODES = 8
LENGTH_UNIT_UM = 47.6
TIME_UNIT_MIN = 8.0


class OrientationError(ValueError):
    """Raised for a clockwise (negatively oriented) cortex."""


class CoercivityError(AssertionError):
    """Raised if a total energy falls below the coercivity bound."""


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class SimParams:
    """Physical and numerical parameters in model units.

    ``a`` is the spread of the compensating force in actin-coordinate
    units; since the total amount of actin is 1, ``h = a / L`` equals
    ``a``.  The default projection tube ``eps`` is 0.1 um; a tube of 0.1
    model units would be wider than every channel of interest.
    """

    p: float = 3.2
    kappa: float = 1.0
    mu: float = 1.0
    v: float = 2.0
    a: float = 0.1
    omega: tuple[float, float] = (-1.0, 0.0)
    dt: float = 4e-2
    eps: float = 0.1 / LENGTH_UNIT_UM
    compensating: bool = True
    flow_arc: str = "forward"

    def __post_init__(self):
        if not self.p < 2 * math.pi * self.kappa:
            raise ValueError(
                f"(A1) violated: pressure p={self.p} must be below "
                f"2*pi*kappa={2 * math.pi * self.kappa:.6g}"
            )
        for name in ("kappa", "mu", "dt", "eps", "a"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.v < 0:
            raise ValueError(f"v must be non-negative, got {self.v}")
        om = np.asarray(self.omega, dtype=float)
        if om.shape != (2,) or abs(np.hypot(*om) - 1.0) > 1e-12:
            raise ValueError(f"omega must be a unit 2-vector, got {self.omega}")
        if self.flow_arc not in ("forward", "complementary"):
            raise ValueError(f"flow_arc must be 'forward' or 'complementary', got {self.flow_arc!r}")
        object.__setattr__(self, "omega", (float(om[0]), float(om[1])))

    @property
    def h(self) -> float:
        return self.a

    @property
    def arc_sign(self) -> int:
        return 1 if self.flow_arc == "forward" else -1

    def with_(self, **changes) -> "SimParams":
        return replace(self, **changes)


@dataclass
class CortexState:
    positions: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        X = np.ascontiguousarray(self.positions, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError(f"positions must have shape (N, 2), got {X.shape}")
        if X.shape[0] < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} nodes, got {X.shape[0]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("positions contain non-finite values")
        self.positions = X

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def ds(self) -> float:
        return 1.0 / self.N

    def com(self) -> np.ndarray:
        """Discrete center of mass ``sum_i X_i ds``."""
        return self.positions.mean(axis=0)

    def copy(self) -> "CortexState":
        return CortexState(self.positions.copy(), self.t)


@dataclass(frozen=True)
class EnergyReport:
    E_el: float
    E_p: float
    E_obst: float
    E_total: float
    enclosed_area: float
    cortex_length: float
    isoperimetric_ratio: float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


# ---------------------------------------------------------------------------
# construction


def make_circle(N: int, center=(0.0, 0.0), radius: float = 1.0, t: float = 0.0) -> CortexState:
    if N < MIN_NODES:
        raise ValueError(f"need at least {MIN_NODES} nodes, got {N}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    theta = 2 * np.pi * np.arange(N) / N
    X = np.column_stack([np.cos(theta), np.sin(theta)]) * radius + np.asarray(center, float)
    return CortexState(X, t)


def make_perturbed_circle(N: int, radius: float, amplitude: float = 0.05, mode: int = 3,
                          center=(0.0, 0.0), t: float = 0.0) -> CortexState:
    """Circle with radial perturbation ``radius * (1 + amplitude * cos(mode * theta))``."""
    if not 0 <= amplitude < 1:
        raise ValueError(f"amplitude must lie in [0, 1), got {amplitude}")
    theta = 2 * np.pi * np.arange(N) / N
    r = radius * (1 + amplitude * np.cos(mode * theta))
    X = np.column_stack([r * np.cos(theta), r * np.sin(theta)]) + np.asarray(center, float)
    return CortexState(X, t)


def equilibrium_radius(p: float, N: int | None = None, kappa: float = 1.0) -> float:
    """Radius of the force-free circle.

    With ``N=None`` this is the continuum value ``kappa / (2 pi kappa - p)``.
    For a regular ``N``-gon the discrete balance of elastic flux and
    pressure gives ``kappa / (2 N kappa sin(pi/N) - p cos(pi/N))``.
    """
    if N is None:
        return kappa / (2 * np.pi * kappa - p)
    return kappa / (2 * N * kappa * np.sin(np.pi / N) - p * np.cos(np.pi / N))


# ---------------------------------------------------------------------------
# geometry of the chain


def _segments(X: np.ndarray) -> np.ndarray:
    return np.roll(X, -1, axis=0) - X


def _central(X: np.ndarray) -> np.ndarray:
    """``X_{i+1} - X_{i-1}``."""
    return np.roll(X, -1, axis=0) - np.roll(X, 1, axis=0)


def perp(a: np.ndarray) -> np.ndarray:
    """``(a, b)^perp = (-b, a)``."""
    a = np.asarray(a, dtype=float)
    return np.stack([-a[..., 1], a[..., 0]], axis=-1)


def shoelace_area(X: np.ndarray) -> float:
    """Signed enclosed area; positive for counter-clockwise chains."""
    Xn = np.roll(X, -1, axis=0)
    return 0.5 * float(np.sum(X[:, 0] * Xn[:, 1] - X[:, 1] * Xn[:, 0]))


def cortex_length(X: np.ndarray) -> float:
    return float(np.linalg.norm(_segments(X), axis=1).sum())


def check_orientation(state: CortexState) -> None:
    if shoelace_area(state.positions) <= 0:
        raise OrientationError("cortex is not positively oriented (shoelace area <= 0)")


# ---------------------------------------------------------------------------
# energies


def elastic_energy(X: np.ndarray, kappa: float = 1.0) -> float:
    ds = 1.0 / X.shape[0]
    stretch = np.maximum(np.linalg.norm(_segments(X), axis=1) / ds - 1.0, 0.0)
    return 0.5 * kappa * ds * float(np.sum(stretch**2))


def pressure_energy(X: np.ndarray, p: float) -> float:
    return -p * shoelace_area(X)


def coercivity_bound(p: float, kappa: float = 1.0) -> float:
    """Lower bound ``-pi kappa^2 / (2 pi kappa - p)`` on the total energy."""
    return -np.pi * kappa**2 / (2 * np.pi * kappa - p)


class _CoercivityMonitor:
    """Records the worst margin ``E_total - bound`` over every report."""

    tol = 1e-6

    def __init__(self):
        self.reset()

    def reset(self):
        self.count = 0
        self.worst_margin = math.inf

    def record(self, E_total: float, bound: float) -> None:
        margin = E_total - bound
        self.count += 1
        self.worst_margin = min(self.worst_margin, margin)
        if margin < -self.tol:
            raise CoercivityError(f"E_total={E_total:.12g} below bound {bound:.12g}")


coercivity_monitor = _CoercivityMonitor()


def total_energy(state: CortexState, params: SimParams, obstacle=None) -> EnergyReport:
    X = state.positions
    E_el = elastic_energy(X, params.kappa)
    area = shoelace_area(X)
    E_p = -params.p * area
    E_obst = 0.0
    if obstacle is not None:
        E_obst = state.ds * float(np.sum(obstacle.potential(X)))
    length = cortex_length(X)
    iso = 4 * np.pi * area / length**2 if length > 0 else 0.0
    report = EnergyReport(E_el, E_p, E_obst, E_el + E_p + E_obst, area, length, iso)
    coercivity_monitor.record(report.E_total, coercivity_bound(params.p, params.kappa))
    return report


# ---------------------------------------------------------------------------
# forces


def elastic_flux(X: np.ndarray, kappa: float = 1.0) -> np.ndarray:
    """``kappa (|X_{i+1}-X_i|/ds - 1)_+ (X_{i+1}-X_i)/|X_{i+1}-X_i|`` on segment i+1/2."""
    ds = 1.0 / X.shape[0]
    seg = _segments(X)
    length = np.linalg.norm(seg, axis=1)
    stretch = length / ds - 1.0
    coef = np.zeros_like(length)
    ok = (stretch > 0) & (length > 0)
    coef[ok] = kappa * stretch[ok] / length[ok]
    return seg * coef[:, None]


def elastic_force(state: CortexState, kappa: float = 1.0) -> np.ndarray:
    G = elastic_flux(state.positions, kappa)
    return (G - np.roll(G, 1, axis=0)) * state.N


def pressure_force(state: CortexState, p: float, mask: np.ndarray | None = None) -> np.ndarray:
    """``-p (X_{i+1} - X_{i-1})^perp / (2 ds)``; ``mask`` zeroes p node-wise."""
    F = -p * perp(_central(state.positions)) * (0.5 * state.N)
    if mask is not None:
        F = F * np.asarray(mask, dtype=float)[:, None]
    return F


def leading_trailing(state: CortexState, omega) -> tuple[int, int]:
    proj = state.positions @ np.asarray(omega, dtype=float)
    # argmax/argmin return the first occurrence, i.e. ties go to the smallest index
    return int(np.argmax(proj)), int(np.argmin(proj))


def flow_arc_mask(N: int, i0: int, i1: int, arc_sign: int = 1) -> np.ndarray:
    """Nodes on the cyclic arc ``i1 -> i0`` (forward) or ``i0 -> i1`` (complementary)."""
    idx = np.arange(N)
    if arc_sign > 0:
        return (idx - i1) % N <= (i0 - i1) % N
    return (idx - i0) % N <= (i1 - i0) % N


def flow_term(state: CortexState, v: float, i0: int, i1: int, arc_sign: int = 1) -> np.ndarray:
    """Cortical-flow velocity ``v 1_arc (X_{i+1} - X_{i-1}) / (2 ds)``.

    With ``arc_sign=-1`` the complementary arc is used and the sign flips,
    so material still travels from the trailing to the leading end.
    """
    N = state.N
    out = np.zeros((N, 2))
    if v == 0 or i0 == i1:
        return out
    on = flow_arc_mask(N, i0, i1, arc_sign)
    out[on] = arc_sign * v * _central(state.positions)[on] * (0.5 * N)
    return out


def mollified_delta(a: float, ds: float, offset) -> np.ndarray | float:
    """Cosine-bump weight at cyclic index distance ``offset``.

    Normalized so that ``sum_i weight(i) * ds == 1`` over the torus.  For
    ``a <= ds`` the bump degenerates to a single node of weight ``1/ds``.
    """
    weights = delta_weights(a, int(round(1.0 / ds)))
    out = weights[np.mod(np.asarray(offset), weights.size)]
    return float(out) if np.ndim(out) == 0 else out


def delta_weights(a: float, N: int) -> np.ndarray:
    """Weights ``w[k]`` for cyclic offsets ``k = 0..N-1``."""
    ds = 1.0 / N
    k = np.arange(N)
    dist = np.minimum(k, N - k) * ds
    w = np.where(dist < a, 0.5 * (1.0 + np.cos(np.pi * dist / a)), 0.0)
    if a <= ds:
        w = (k == 0).astype(float)
    return w / (w.sum() * ds)


def _lead_trail_midpoints(X: np.ndarray, i0: int, i1: int, arc_sign: int):
    N = X.shape[0]
    if arc_sign > 0:
        trail = 0.5 * (X[(i1 - 1) % N] + X[i1])
        lead = 0.5 * (X[(i0 + 1) % N] + X[i0])
    else:
        trail = 0.5 * (X[(i1 + 1) % N] + X[i1])
        lead = 0.5 * (X[(i0 - 1) % N] + X[i0])
    return trail, lead


def compensating_force(
    state: CortexState, v: float, a: float, i0: int, i1: int,
    arc_sign: int = 1, weights: np.ndarray | None = None,
) -> np.ndarray:
    """Force spread around both ends so that ``sum (flow + comp) ds == 0``."""
    N = state.N
    if v == 0 or i0 == i1:
        return np.zeros((N, 2))
    if weights is None:
        weights = delta_weights(a, N)
    trail, lead = _lead_trail_midpoints(state.positions, i0, i1, arc_sign)
    idx = np.arange(N)
    spread = weights[(idx - i0) % N] + weights[(idx - i1) % N]
    return 0.5 * v * np.outer(spread, trail - lead)


def total_force(
    state: CortexState, params: SimParams, pressure_mask: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Unprojected velocity ``F[X]_i`` of the explicit scheme."""
    i0, i1 = leading_trailing(state, params.omega)
    F = (elastic_force(state, params.kappa) + pressure_force(state, params.p, pressure_mask)) / params.mu
    F += flow_term(state, params.v, i0, i1, params.arc_sign)
    if params.compensating:
        F += compensating_force(state, params.v, params.a, i0, i1, params.arc_sign, weights)
    return F


# ---------------------------------------------------------------------------
# diagnostics


def arclength(X: np.ndarray) -> np.ndarray:
    """Cumulative arclength ``l(s_i)``, length ``N + 1`` (last entry is the perimeter)."""
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(_segments(X), axis=1))])


def density(X: np.ndarray) -> np.ndarray:
    """Actin density per segment ``ds / |X_{i+1} - X_i|``."""
    ds = 1.0 / X.shape[0]
    with np.errstate(divide="ignore"):
        return ds / np.linalg.norm(_segments(X), axis=1)


def holder_modulus(frames: np.ndarray, times: np.ndarray, n_pairs: int = 2000, seed: int = 0) -> float:
    """Empirical ``sup |X(s1,t1) - X(s0,t0)| / (|s1-s0|^(1/2) + |t1-t0|^(1/4))``."""
    rng = np.random.default_rng(seed)
    F, N = frames.shape[:2]
    f = rng.integers(0, F, size=(n_pairs, 2))
    i = rng.integers(0, N, size=(n_pairs, 2))
    keep = (f[:, 0] != f[:, 1]) | (i[:, 0] != i[:, 1])
    f, i = f[keep], i[keep]
    diff = np.linalg.norm(frames[f[:, 1], i[:, 1]] - frames[f[:, 0], i[:, 0]], axis=1)
    dsig = np.abs(i[:, 1] - i[:, 0])
    dsig = np.minimum(dsig, N - dsig) / N
    dt = np.abs(times[f[:, 1]] - times[f[:, 0]])
    return float(np.max(diff / (np.sqrt(dsig) + dt**0.25)))


@dataclass
class Diagnostics:
    com_series: np.ndarray
    speed_series: np.ndarray
    arclength: np.ndarray
    density: np.ndarray
    holder_modulus: float = field(default=float("nan"))


def diagnostics(traj) -> Diagnostics:
    frames = np.asarray(traj.positions)
    times = np.asarray(traj.times)
    if frames.shape[0] < 2:
        raise ValueError("time-dependent diagnostics need at least 2 frames")
    com = frames.mean(axis=1)
    speed = np.linalg.norm(np.diff(com, axis=0), axis=1) / np.diff(times)
    arc = np.stack([arclength(X) for X in frames])
    dens = np.stack([density(X) for X in frames])
    return Diagnostics(com, speed, arc, dens, holder_modulus(frames, times))
