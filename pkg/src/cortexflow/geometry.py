"""Confinement domains: free space, flat channels and ratchet channels.

Channels run along the x-axis with walls at ``y = +-half_width(x)``.  A
channel may be preceded by a reservoir: with ``entry_x`` set, the whole
half-plane ``x < entry_x`` belongs to the admissible domain and the
channel mouth is closed by vertical faces ``x = entry_x, |y| >= half_width``.

The ratchet wall solves ``g = sin(2 pi x / L0 + alpha g)``.  Writing
``theta = 2 pi x / L0 + alpha g`` gives the explicit parametrization
``x = L0 (theta - alpha sin theta) / (2 pi)``, ``g = sin theta`` which is
monotone in ``theta`` for ``alpha < 1``; it is used for sampling the wall.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.signal import fftconvolve

FP_TOL = 1e-12
FP_MAXITER = 200
# vertical extent used for the entry faces of the reservoir
FACE_TOP = 1e3


class ConvergenceError(RuntimeError):
    pass


def solve_ratchet_phase(phase, alpha: float, tol: float = FP_TOL, maxiter: int | None = None):
    """Solve ``g = sin(phase + alpha g)`` by plain fixed-point iteration from 0.

    The map contracts with factor ``alpha``; the default iteration cap
    grows accordingly as ``alpha`` approaches 1.
    """
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if maxiter is None:
        need = math.log(tol / 2) / math.log(alpha) if alpha > 0 else 1
        maxiter = max(FP_MAXITER, int(need) + 20)
    phase = np.mod(np.asarray(phase, dtype=float), 2 * np.pi)
    g = np.zeros_like(phase)
    for _ in range(maxiter):
        g_new = np.sin(phase + alpha * g)
        # the residual of g_new is at most alpha * |g_new - g|
        done = np.all(np.abs(g_new - g) < tol)
        g = g_new
        if done:
            break
    else:
        raise ConvergenceError(f"fixed point did not converge in {maxiter} iterations")
    resid = np.max(np.abs(g - np.sin(phase + alpha * g)), initial=0.0)
    if resid >= tol:
        raise ConvergenceError(f"fixed point residual {resid:.3g} above {tol}")
    return g


@dataclass(frozen=True)
class RatchetSpec:
    """Ratchet walls made of consecutive sections ``(wavelength, length)``.

    Section lengths are snapped to a whole number of wavelengths (at least
    one) so that the profile is continuous at every junction.
    """

    sections: tuple[tuple[float, float], ...]
    w0: float
    d0: float
    alpha: float = 0.4

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.w0 > 0:
            raise ValueError(f"w0 must be positive, got {self.w0}")
        if self.d0 < 0:
            raise ValueError(f"d0 must be non-negative, got {self.d0}")
        if not self.sections:
            raise ValueError("at least one section is required")
        snapped = []
        for L0, length in self.sections:
            if not L0 > 0:
                raise ValueError(f"wavelength must be positive, got {L0}")
            periods = max(1, int(round(length / L0)))
            snapped.append((float(L0), periods * float(L0)))
        object.__setattr__(self, "sections", tuple(snapped))

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s[1] for s in self.sections])])

    @property
    def total_length(self) -> float:
        return float(self.offsets[-1])

    def locate(self, x):
        """Section index and section-local coordinate (periodic extension at both ends)."""
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.offsets, x, side="right") - 1
        k = np.clip(k, 0, len(self.sections) - 1)
        return k, x - self.offsets[k]

    def max_slope(self) -> float:
        """Upper bound on ``|f'(x)|``."""
        L0min = min(s[0] for s in self.sections)
        return self.d0 * 2 * math.pi / (L0min * (1 - self.alpha))


def wall_profile(spec: RatchetSpec, x) -> np.ndarray | float:
    """``f(x) = d0 (g(x) - 1) - w0``; the walls sit at ``y = +-f(x)``."""
    k, local = spec.locate(x)
    L0 = np.asarray([s[0] for s in spec.sections])[k]
    g = solve_ratchet_phase(2 * np.pi * local / L0, spec.alpha)
    f = spec.d0 * (g - 1.0) - spec.w0
    return float(f) if np.ndim(f) == 0 else f


class WallPoint(NamedTuple):
    foot: np.ndarray
    dist: float
    tangent: np.ndarray
    normal: np.ndarray
    ambiguous: bool


class WallPolyline(NamedTuple):
    """Upper wall as a polyline, in the layout the integration kernels expect.

    ``x`` is non-decreasing.  When the geometry has a reservoir, the first
    two points form the vertical entry face and ``graph_start`` is 1.
    """

    x: np.ndarray
    y: np.ndarray
    graph_start: int
    has_entry: bool
    entry_x: float
    lipschitz: float


@dataclass(frozen=True)
class ChannelGeometry:
    """Admissible domain.  ``kind`` is ``"free"``, ``"flat"`` or ``"ratchet"``."""

    kind: str = "free"
    half_width: float | None = None
    ratchet: RatchetSpec | None = None
    entry_x: float | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.kind not in ("free", "flat", "ratchet"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.kind == "flat" and not (self.half_width and self.half_width > 0):
            raise ValueError("flat channel needs a positive half_width")
        if self.kind == "ratchet" and self.ratchet is None:
            raise ValueError("ratchet channel needs a RatchetSpec")

    @classmethod
    def free(cls) -> "ChannelGeometry":
        return cls("free")

    @classmethod
    def flat(cls, half_width: float, entry_x: float | None = None) -> "ChannelGeometry":
        return cls("flat", half_width=float(half_width), entry_x=entry_x)

    @classmethod
    def ratcheted(cls, spec: RatchetSpec, entry_x: float | None = None) -> "ChannelGeometry":
        if spec.d0 == 0:
            return cls("flat", half_width=spec.w0, entry_x=entry_x)
        return cls("ratchet", ratchet=spec, entry_x=entry_x)

    @property
    def has_walls(self) -> bool:
        return self.kind != "free"

    @property
    def start(self) -> float:
        """x-coordinate where the wall profile's own coordinate is zero."""
        return 0.0 if self.entry_x is None else float(self.entry_x)

    @property
    def channel_end(self) -> float:
        if self.kind == "ratchet":
            return self.start + self.ratchet.total_length
        return math.inf

    def wall_half_width(self, x):
        """Distance from the axis to the upper wall, ``-f(x)``."""
        if self.kind == "flat":
            return np.full(np.shape(x), self.half_width) if np.ndim(x) else self.half_width
        if self.kind == "ratchet":
            return -wall_profile(self.ratchet, np.asarray(x, dtype=float) - self.start)
        raise ValueError("no walls")

    def section_of(self, x) -> np.ndarray:
        if self.kind != "ratchet":
            return np.zeros(np.shape(x), dtype=int)
        k, _ = self.ratchet.locate(np.asarray(x, dtype=float) - self.start)
        return k

    # -- sampling ----------------------------------------------------------

    def _ratchet_samples(self, x_lo: float, x_hi: float, per_wavelength: int):
        """Upper-wall samples covering ``[x_lo, x_hi]`` with their parameters.

        Returns ``x, y, section, theta`` where ``theta`` is the section-local
        phase parameter.
        """
        spec = self.ratchet
        out = []
        offsets = spec.offsets
        n_sec = len(spec.sections)
        lo, hi = x_lo - self.start, x_hi - self.start
        for k, (L0, length) in enumerate(spec.sections):
            a = offsets[k] if k > 0 else min(lo, 0.0)
            b = offsets[k + 1] if k < n_sec - 1 else max(hi, offsets[-1])
            a, b = max(a, lo), min(b, hi)
            if a > b:
                continue
            # local phase range; the periodic extension reuses the same formula
            th_a = _theta_of_local(a - offsets[k], L0, spec.alpha)
            th_b = _theta_of_local(b - offsets[k], L0, spec.alpha)
            n = max(2, int(math.ceil((th_b - th_a) / (2 * math.pi) * per_wavelength)) + 1)
            th = np.linspace(th_a, th_b, n)
            xs = offsets[k] + L0 * (th - spec.alpha * np.sin(th)) / (2 * math.pi)
            ys = spec.w0 + spec.d0 * (1.0 - np.sin(th))
            out.append((xs + self.start, ys, np.full(n, k), th))
        xs, ys, ks, ths = (np.concatenate(c) for c in zip(*out))
        return xs, ys, ks, ths

    def wall_polyline(self, x_lo: float = -5.0, x_hi: float = 10.0, per_wavelength: int = 256) -> WallPolyline:
        key = ("poly", x_lo, x_hi, per_wavelength)
        if key in self._cache:
            return self._cache[key]
        if not self.has_walls:
            raise ValueError("no walls")
        lo = self.start if self.entry_x is not None else x_lo
        if self.kind == "flat":
            xs = np.array([lo, x_hi], dtype=float)
            ys = np.full(2, self.half_width)
            lip = 1.0
        else:
            xs, ys, _, _ = self._ratchet_samples(lo, x_hi, per_wavelength)
            keep = np.concatenate([[True], np.diff(xs) > 0])
            xs, ys = xs[keep], ys[keep]
            lip = math.sqrt(1 + self.ratchet.max_slope() ** 2)
        g0 = 0
        if self.entry_x is not None:
            xs = np.concatenate([[self.start], xs])
            ys = np.concatenate([[FACE_TOP], ys])
            g0 = 1
        poly = WallPolyline(np.ascontiguousarray(xs), np.ascontiguousarray(ys), g0,
                            self.entry_x is not None, self.start, lip)
        self._cache[key] = poly
        return poly

    def wall_table(self, x_lo: float, x_hi: float, n: int = 2000) -> np.ndarray:
        """Rows ``(x, y_top, y_bottom)`` for plotting."""
        x = np.linspace(x_lo, x_hi, n)
        hw = self.wall_half_width(x)
        return np.column_stack([x, hw, -hw])


def _theta_of_local(xl: float, L0: float, alpha: float) -> float:
    """Invert ``x = L0 (theta - alpha sin theta) / (2 pi)`` (Newton, monotone)."""
    target = 2 * math.pi * xl / L0
    th = target
    for _ in range(100):
        step = (th - alpha * math.sin(th) - target) / (1 - alpha * math.cos(th))
        th -= step
        if abs(step) < 1e-15:
            break
    return th


# ---------------------------------------------------------------------------
# point queries


def inside(geom: ChannelGeometry, x) -> np.ndarray | bool:
    """Strict membership in the admissible domain, vectorized over ``(..., 2)``."""
    pts = np.asarray(x, dtype=float)
    if not geom.has_walls:
        out = np.ones(pts.shape[:-1], dtype=bool)
    else:
        out = np.abs(pts[..., 1]) < geom.wall_half_width(pts[..., 0])
        if geom.entry_x is not None:
            out |= pts[..., 0] < geom.entry_x
    return bool(out) if out.ndim == 0 else out


def closest_wall_point(geom: ChannelGeometry, x, samples_per_wavelength: int = 64,
                       bisection_steps: int = 30) -> WallPoint:
    """Orthogonal projection of ``x`` onto the channel boundary.

    ``dist`` is positive inside the domain.  The normal points out of the
    domain and the tangent is the normal rotated by +90 degrees.  Ratchet
    walls are searched on a sampled polyline, then refined by bisection on
    the wall parameter.
    """
    if not geom.has_walls:
        raise ValueError("no walls")
    px, py = (float(c) for c in x)
    sy = 1.0 if py >= 0 else -1.0
    qy = abs(py)
    cands = []  # (distance, foot_x, foot_y, segment normal)

    if geom.kind == "flat":
        fx = max(px, geom.start) if geom.entry_x is not None else px
        cands.append((math.hypot(px - fx, qy - geom.half_width), fx, geom.half_width, (0.0, 1.0)))
    else:
        hw = float(geom.wall_half_width(px))
        reach = abs(hw - qy) + 1e-9
        lo, hi = px - reach, px + reach
        if geom.entry_x is not None:
            lo = max(lo, geom.start)
        if lo <= hi:
            cands.append(_ratchet_foot(geom, px, qy, lo, hi, samples_per_wavelength, bisection_steps))
    if geom.entry_x is not None:
        y_face = float(geom.wall_half_width(geom.start))
        fy = max(qy, y_face)
        cands.append((math.hypot(px - geom.start, qy - fy), geom.start, fy, (1.0, 0.0)))

    cands.sort(key=lambda c: c[0])
    d, fx, fy, seg_n = cands[0]
    ambiguous = len(cands) > 1 and abs(cands[1][0] - d) < 1e-12 and (cands[1][1], cands[1][2]) != (fx, fy)
    is_in = bool(inside(geom, (px, qy)))
    if d > 1e-14:
        n = np.array([fx - px, fy - qy]) / d
        if not is_in:
            n = -n
    else:
        n = np.array(seg_n, dtype=float)
    foot = np.array([fx, sy * fy])
    normal = np.array([n[0], sy * n[1]])
    tangent = np.array([-normal[1], normal[0]])
    return WallPoint(foot, d if is_in else -d, tangent, normal, ambiguous)


def _ratchet_foot(geom, px, qy, lo, hi, per_wavelength, steps):
    spec = geom.ratchet
    xs, ys, ks, ths = geom._ratchet_samples(lo, hi, per_wavelength)
    j = int(np.argmin((xs - px) ** 2 + (ys - qy) ** 2))
    k = int(ks[j])
    L0 = spec.sections[k][0]
    off = spec.offsets[k] + geom.start

    def point(th):
        return (off + L0 * (th - spec.alpha * math.sin(th)) / (2 * math.pi),
                spec.w0 + spec.d0 * (1 - math.sin(th)))

    def dderiv(th):
        wx, wy = point(th)
        dx = L0 * (1 - spec.alpha * math.cos(th)) / (2 * math.pi)
        dy = -spec.d0 * math.cos(th)
        return (wx - px) * dx + (wy - qy) * dy

    dth = 2 * math.pi / per_wavelength
    a, b = ths[j] - dth, ths[j] + dth
    best = ths[j]
    if dderiv(a) < 0 < dderiv(b):
        for _ in range(steps):
            m = 0.5 * (a + b)
            if dderiv(m) > 0:
                b = m
            else:
                a = m
        best = 0.5 * (a + b)
    fx, fy = point(best)
    d = math.hypot(fx - px, fy - qy)
    if d > math.hypot(xs[j] - px, ys[j] - qy):
        fx, fy, d = xs[j], ys[j], math.hypot(xs[j] - px, ys[j] - qy)
    return (d, fx, fy, (0.0, 1.0))


# ---------------------------------------------------------------------------
# softened obstacle


def cosine_kernel(radius: float, spacing: float) -> np.ndarray:
    """Radially symmetric cosine bump sampled on a grid, summing to one."""
    m = int(math.ceil(radius / spacing))
    g = np.arange(-m, m + 1) * spacing
    r = np.hypot(*np.meshgrid(g, g, indexing="ij"))
    k = np.where(r < radius, 0.5 * (1 + np.cos(np.pi * r / radius)), 0.0)
    return k / k.sum()


@dataclass
class SoftObstacle:
    """``W = 1 / (delta + rho * 1_domain)`` sampled on a grid.

    The grid values are interpolated with a bicubic spline so that the
    potential and its gradient are mutually consistent (the minimizing
    movement solver relies on that).
    """

    delta: float
    kernel_width: float
    xg: np.ndarray
    yg: np.ndarray
    W: np.ndarray
    kernel_sum: float
    out_of_grid: int = 0

    @classmethod
    def build(cls, geom: ChannelGeometry, delta: float, bbox, kernel_width: float | None = None,
              spacing: float | None = None) -> "SoftObstacle":
        if not delta > 0:
            raise ValueError("delta must be positive")
        kernel_width = 2 * delta if kernel_width is None else kernel_width
        spacing = delta / 4 if spacing is None else spacing
        (x0, x1), (y0, y1) = bbox
        pad = kernel_width + 2 * spacing
        xg = np.arange(x0 - pad, x1 + pad + spacing, spacing)
        yg = np.arange(y0 - pad, y1 + pad + spacing, spacing)
        XX, YY = np.meshgrid(xg, yg, indexing="ij")
        ind = inside(geom, np.stack([XX, YY], axis=-1)).astype(float)
        kern = cosine_kernel(kernel_width, spacing)
        smooth = np.clip(fftconvolve(ind, kern, mode="same"), 0.0, 1.0)
        # rim of the grid has no neighbours outside; freeze it to the raw indicator
        m = kern.shape[0] // 2
        for sl in (np.s_[:m, :], np.s_[-m:, :], np.s_[:, :m], np.s_[:, -m:]):
            smooth[sl] = ind[sl]
        W = 1.0 / (delta + smooth)
        return cls(delta, kernel_width, xg, yg, W, float(kern.sum()))

    @cached_property
    def _spline(self) -> RectBivariateSpline:
        return RectBivariateSpline(self.xg, self.yg, self.W, kx=3, ky=3)

    def _clamp(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        lo = np.array([self.xg[0], self.yg[0]])
        hi = np.array([self.xg[-1], self.yg[-1]])
        Xc = np.clip(X, lo, hi)
        n_out = int(np.count_nonzero(np.any(Xc != X, axis=-1)))
        if n_out:
            self.out_of_grid += n_out
            warnings.warn(f"{n_out} point(s) outside the obstacle grid were clamped", RuntimeWarning,
                          stacklevel=3)
        return Xc

    def potential(self, X) -> np.ndarray:
        X = np.atleast_2d(self._clamp(X))
        return self._spline.ev(X[:, 0], X[:, 1])

    def gradient(self, X) -> np.ndarray:
        X = np.atleast_2d(self._clamp(X))
        s = self._spline
        return np.column_stack([s.ev(X[:, 0], X[:, 1], dx=1), s.ev(X[:, 0], X[:, 1], dy=1)])


def soft_potential_grad(obs: SoftObstacle, x) -> np.ndarray:
    g = obs.gradient(np.atleast_2d(np.asarray(x, dtype=float)))
    return g[0] if np.ndim(x) == 1 else g
