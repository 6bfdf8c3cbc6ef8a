import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cortexflow import _backend
from cortexflow.cortex import SimParams, delta_weights, equilibrium_radius, make_circle, make_perturbed_circle
from cortexflow.geometry import ChannelGeometry, RatchetSpec

pytestmark = pytest.mark.skipif(_backend.compiled_advance is None, reason="compiled kernel not built")

X0 = 47.6
N = 200


def call(fn, X, nsub, omega, a=0.1, push=-1, geom=None, v=2.0, comp=1, arc=1, dt=1e-5):
    prm = SimParams()
    if geom is None:
        z = np.zeros(2)
        w, lip = (z, z, 0, 0, 0, 0.0), 1.0
    else:
        p = geom.wall_polyline(-5.0, 10.0)
        w, lip = (p.x, p.y, p.graph_start, 1, int(p.has_entry), p.entry_x), p.lipschitz
    X = X.copy()
    out = fn(X, nsub, dt, 1.0 / N, 1.0, 1.0, prm.p, v, omega[0], omega[1], delta_weights(a, N),
             comp, arc, push, *w, prm.eps, lip, 1.0 / N)
    return X, out


def agree(X, nsub, **kw):
    Xp, op = call(_backend.python_advance, X, nsub, **kw)
    Xc, oc = call(_backend.compiled_advance, X, nsub, **kw)
    assert op[0] == oc[0] and op[1] == oc[1]
    assert op[3] == oc[3] and op[4] == oc[4]
    assert np.abs(Xp - Xc).max() < 1e-12
    return Xc, oc


def test_backend_selection():
    assert _backend.BACKEND in ("compiled", "python")
    assert _backend.advance in (_backend.compiled_advance, _backend.python_advance)


@given(st.floats(0, 2 * np.pi), st.floats(0.004, 0.8), st.integers(-1, 40), st.sampled_from([1, -1]),
       st.booleans())
@settings(max_examples=25)
def test_free_space_agreement(ang, a, push, arc, comp):
    X = make_perturbed_circle(N, 0.33, 0.05, 3).positions
    agree(X, 50, omega=(np.cos(ang), np.sin(ang)), a=a, push=push, arc=arc, comp=int(comp))


def test_ratchet_mouth_agreement():
    geom = ChannelGeometry.ratcheted(RatchetSpec(((3.9 / X0, 2.0),), w0=1.4 / X0, d0=2.7 / X0), 0.0)
    r = equilibrium_radius(3.2, N)
    X = make_circle(N, center=(-r - 0.001, 0.0), radius=r).positions
    agree(X, 3000, omega=(1.0, 0.0), push=25, geom=geom)


def test_expanding_in_ratchet_agreement():
    # a slightly undersized cell inflates against the narrow necks
    geom = ChannelGeometry.ratcheted(RatchetSpec(((0.4, 2.0),), w0=0.3, d0=0.05), 0.0)
    X = make_circle(N, center=(0.5, 0.0), radius=0.2994).positions
    _, oc = agree(X, 3000, omega=(1.0, 0.0), geom=geom)
    assert oc[4] > 0  # projection was exercised


def test_flat_channel_agreement():
    geom = ChannelGeometry.flat(0.3)
    X = make_circle(N, radius=0.2994).positions
    agree(X, 500, omega=(1.0, 0.0), geom=geom)


def test_status_codes_agree_on_blow_up():
    X = make_perturbed_circle(N, 0.33, 0.05, 3).positions
    _, oc = agree(X, 100, omega=(1.0, 0.0), dt=1e-3)
    assert oc[0] == 1 and oc[1] < 100
