import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from cortexflow.geometry import (
    ChannelGeometry, ConvergenceError, RatchetSpec, SoftObstacle, closest_wall_point, cosine_kernel,
    inside, solve_ratchet_phase, wall_profile,
)

X0 = 47.6
FIG7 = dict(w0=1.4 / X0, d0=2.7 / X0, alpha=0.4)


def dense_wall(spec, x_lo, x_hi, n=400_001, start=0.0):
    """Brute-force upper wall samples from the explicit parametrization."""
    L0 = spec.sections[0][0]
    th = np.linspace(2 * np.pi * (x_lo - start) / L0 - 1.0, 2 * np.pi * (x_hi - start) / L0 + 1.0, n)
    x = start + L0 * (th - spec.alpha * np.sin(th)) / (2 * np.pi)
    return x, spec.w0 + spec.d0 * (1 - np.sin(th))


# -- fixed point -------------------------------------------------------------

def test_fixed_point_quarter_wavelength():
    # g = cos(0.4 g) at phase pi/2; independent root by bracketing
    g = solve_ratchet_phase(np.pi / 2, 0.4)
    root = brentq(lambda u: u - math.cos(0.4 * u), 0.0, 1.0, xtol=1e-15)
    assert g == pytest.approx(root, abs=1e-12)
    assert g == pytest.approx(0.9313987, abs=1e-7)


def test_inside_quarter_wavelength_margin():
    spec = RatchetSpec(((0.160, 0.160),), w0=0.0777, d0=0.063, alpha=0.4)
    g = ChannelGeometry.ratcheted(spec)
    # half-width 0.0777 + 0.063 (1 - 0.9313987) = 0.0820219
    assert float(g.wall_half_width(0.040)) == pytest.approx(0.0820219, abs=1e-7)
    assert inside(g, (0.040, 0.082))
    assert not inside(g, (0.040, 0.08203))


def test_fixed_point_alpha_zero_is_sine():
    ph = np.linspace(-7, 7, 101)
    assert np.allclose(solve_ratchet_phase(ph, 0.0), np.sin(ph), atol=1e-15)


def test_fixed_point_iteration_cap():
    with pytest.raises(ConvergenceError):
        solve_ratchet_phase(1.0, 0.9, maxiter=3)


@given(st.floats(-50, 50), st.floats(0, 0.95))
def test_fixed_point_residual(phase, alpha):
    g = solve_ratchet_phase(phase, alpha)
    assert abs(g - math.sin(phase + alpha * g)) < 1e-11


@given(st.floats(0, 0.9), st.floats(0.01, 0.5), st.floats(-3, 3))
def test_wall_profile_matches_parametrization(alpha, L0, x):
    spec = RatchetSpec(((L0, L0),), w0=0.03, d0=0.05, alpha=alpha)
    # theta solving x = L0 (theta - alpha sin theta) / 2 pi gives g = sin theta
    target = 2 * math.pi * (x % L0) / L0
    th = target
    for _ in range(60):
        th -= (th - alpha * math.sin(th) - target) / (1 - alpha * math.cos(th))
    assert wall_profile(spec, x) == pytest.approx(-(0.03 + 0.05 * (1 - math.sin(th))), abs=1e-10)


# -- ratchet spec ------------------------------------------------------------

def test_sections_snap_to_whole_periods():
    spec = RatchetSpec(((0.1, 0.34), (0.2, 0.05)), w0=0.02, d0=0.03)
    assert spec.sections == ((0.1, pytest.approx(0.3)), (0.2, pytest.approx(0.2)))
    assert spec.total_length == pytest.approx(0.5)


def test_profile_continuous_at_junctions():
    spec = RatchetSpec(((3.9 / X0, 0.3), (7.6 / X0, 0.3), (11.7 / X0, 0.5)), **FIG7)
    for x in spec.offsets[1:-1]:
        assert wall_profile(spec, x - 1e-9) == pytest.approx(wall_profile(spec, x + 1e-9), abs=1e-6)


@pytest.mark.parametrize("kw", [dict(alpha=1.0), dict(alpha=-0.1), dict(w0=0.0), dict(d0=-1.0)])
def test_ratchet_spec_validation(kw):
    base = dict(w0=0.03, d0=0.05, alpha=0.4)
    base.update(kw)
    with pytest.raises(ValueError):
        RatchetSpec(((0.1, 0.5),), **base)


def test_wall_extremes():
    spec = RatchetSpec(((0.1, 1.0),), **FIG7)
    a = FIG7["alpha"]
    # narrowest at theta = pi/2, widest at theta = 3 pi/2
    x_min = 0.1 * (np.pi / 2 - a) / (2 * np.pi)
    x_max = 0.1 * (3 * np.pi / 2 + a) / (2 * np.pi)
    assert -wall_profile(spec, x_min) == pytest.approx(FIG7["w0"], abs=1e-12)
    assert -wall_profile(spec, x_max) == pytest.approx(FIG7["w0"] + 2 * FIG7["d0"], abs=1e-12)
    hw = -wall_profile(spec, np.linspace(0, 1, 20001))
    assert hw.min() >= FIG7["w0"] - 1e-12
    assert hw.max() <= FIG7["w0"] + 2 * FIG7["d0"] + 1e-12


# -- membership and closest points -------------------------------------------

def test_inside_flat_and_reservoir():
    g = ChannelGeometry.flat(0.05, entry_x=0.0)
    pts = np.array([[0.1, 0.04], [0.1, 0.06], [-0.1, 5.0], [0.1, -0.05]])
    assert inside(g, pts).tolist() == [True, False, True, False]
    assert inside(ChannelGeometry.free(), pts).all()


def test_flat_closest_point():
    g = ChannelGeometry.flat(0.05)
    wp = closest_wall_point(g, (0.3, 0.04))
    assert np.allclose(wp.foot, [0.3, 0.05])
    assert wp.dist == pytest.approx(0.01)
    assert np.allclose(wp.normal, [0, 1])
    wp = closest_wall_point(g, (0.3, -0.07))
    assert wp.dist == pytest.approx(-0.02)
    assert np.allclose(wp.normal, [0, -1])


def test_ratchet_closest_point_at_origin():
    # the steep rising flank is closer than the wall directly above
    spec = RatchetSpec(((3.9 / X0, 1.0),), **FIG7)
    g = ChannelGeometry.ratcheted(spec)
    wp = closest_wall_point(g, (0.0, 0.0))
    xs, ys = dense_wall(spec, -0.2, 0.2)
    d = np.hypot(xs, ys)
    j = np.argmin(d)
    assert wp.dist == pytest.approx(d[j], abs=1e-8)
    assert np.allclose(wp.foot, [xs[j], ys[j]], atol=1e-5)
    assert wp.dist < FIG7["w0"] + FIG7["d0"]


@given(st.floats(0.0, 1.0), st.floats(-1.0, 1.0))
def test_ratchet_closest_point_oracle(x, frac):
    spec = RatchetSpec(((7.6 / X0, 1.2),), **FIG7)
    g = ChannelGeometry.ratcheted(spec)
    y = frac * float(g.wall_half_width(x)) * 1.3
    wp = closest_wall_point(g, (x, y))
    xs, ys = dense_wall(spec, x - 0.2, x + 0.2)
    d = np.min(np.hypot(xs - x, ys - abs(y)))
    assert abs(wp.dist) == pytest.approx(d, abs=1e-7)
    assert math.copysign(1, wp.dist) == (1 if inside(g, (x, y)) else -1) or abs(wp.dist) < 1e-12
    assert np.linalg.norm(wp.normal) == pytest.approx(1.0)
    assert wp.tangent @ wp.normal == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.0, 1.0), st.floats(-1.0, 1.0))
def test_normal_points_out_of_domain(x, frac):
    g = ChannelGeometry.ratcheted(RatchetSpec(((3.9 / X0, 1.2),), **FIG7))
    y = frac * 0.9 * float(g.wall_half_width(x))
    wp = closest_wall_point(g, (x, y))
    assert wp.dist > 0
    probe = wp.foot + 1e-7 * wp.normal
    assert not inside(g, probe)


def test_entry_face_candidate():
    g = ChannelGeometry.flat(0.05, entry_x=0.0)
    wp = closest_wall_point(g, (-0.01, 0.2))
    assert np.allclose(wp.foot, [0.0, 0.2])
    assert wp.dist == pytest.approx(0.01)
    assert np.allclose(wp.normal, [1.0, 0.0])


def test_wall_polyline_has_entry_face():
    g = ChannelGeometry.flat(0.05, entry_x=0.5)
    p = g.wall_polyline(-1, 2)
    assert p.has_entry and p.graph_start == 1
    assert p.x[0] == p.x[1] == 0.5 and p.y[0] > 100


def test_free_geometry_has_no_walls():
    with pytest.raises(ValueError):
        closest_wall_point(ChannelGeometry.free(), (0, 0))


# -- softened obstacle -------------------------------------------------------

def test_cosine_kernel_normalized():
    k = cosine_kernel(0.01, 0.001)
    assert k.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(k, k[::-1, ::-1])


def test_soft_obstacle_levels():
    g = ChannelGeometry.flat(0.1)
    obs = SoftObstacle.build(g, 0.01, ((-0.2, 0.2), (-0.3, 0.3)))
    W = obs.potential(np.array([[0.0, 0.0], [0.0, 0.25]]))
    assert W[0] == pytest.approx(1 / (1 + 0.01), rel=1e-6)
    assert W[1] == pytest.approx(1 / 0.01, rel=1e-6)


def test_soft_obstacle_gradient_matches_potential():
    g = ChannelGeometry.flat(0.1)
    obs = SoftObstacle.build(g, 0.01, ((-0.2, 0.2), (-0.3, 0.3)))
    pts = np.array([[0.01, 0.095], [0.0, 0.1], [0.02, -0.105]])
    h = 1e-6
    fd = np.column_stack([
        (obs.potential(pts + [h, 0]) - obs.potential(pts - [h, 0])) / (2 * h),
        (obs.potential(pts + [0, h]) - obs.potential(pts - [0, h])) / (2 * h),
    ])
    assert np.allclose(obs.gradient(pts), fd, rtol=1e-5, atol=1e-3)


def test_soft_obstacle_clamps_with_warning():
    obs = SoftObstacle.build(ChannelGeometry.flat(0.1), 0.01, ((-0.1, 0.1), (-0.2, 0.2)))
    with pytest.warns(RuntimeWarning):
        obs.potential(np.array([[5.0, 0.0]]))
    assert obs.out_of_grid == 1
