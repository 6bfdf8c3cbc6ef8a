"""NumPy reference implementation of the explicit integration kernel.

Same call signature and semantics as the compiled ``_kernels.advance``;
used when the extension is unavailable or ``CORTEXFLOW_PURE_PYTHON=1``.
"""

import numpy as np

from . import cortex


def _half_width(wx, wy, g0, x):
    return np.interp(x, wx[g0:], wy[g0:])


def wall_query(wx, wy, g0, has_entry, entry_x, eps, lip, X):
    """Vectorized tube query: ``(dist, nx, ny)``, with ``dist = eps`` outside the tube."""
    n_nodes = X.shape[0]
    dist = np.full(n_nodes, eps)
    nx = np.zeros(n_nodes)
    ny = np.zeros(n_nodes)
    px = X[:, 0]
    sy = np.where(X[:, 1] >= 0, 1.0, -1.0)
    qy = np.abs(X[:, 1])
    hw = _half_width(wx, wy, g0, px)
    cand = np.ones(n_nodes, dtype=bool)
    if has_entry:
        cand &= ~(px < entry_x - eps)
        far = (px > entry_x + eps) & (hw - qy >= eps * lip)
    else:
        far = hw - qy >= eps * lip
    cand &= ~far
    if not cand.any():
        return dist, nx, ny

    n = wx.size
    for i in np.flatnonzero(cand):
        lo = max(np.searchsorted(wx, px[i] - eps, side="left") - 1, 0)
        hi = min(np.searchsorted(wx, px[i] + eps, side="right"), n - 1)
        if hi <= lo:
            continue
        ax, ay = wx[lo:hi], wy[lo:hi]
        ex, ey = wx[lo + 1:hi + 1] - ax, wy[lo + 1:hi + 1] - ay
        skip = ((ay < qy[i] - eps) & (ay + ey < qy[i] - eps)) | ((ay > qy[i] + eps) & (ay + ey > qy[i] + eps))
        L2 = ex * ex + ey * ey
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(L2 > 0, ((px[i] - ax) * ex + (qy[i] - ay) * ey) / L2, 0.0)
        t = np.clip(t, 0.0, 1.0)
        fx, fy = ax + t * ex, ay + t * ey
        d2 = (px[i] - fx) ** 2 + (qy[i] - fy) ** 2
        d2[skip] = np.inf
        j = int(np.argmin(d2))  # first minimum, as in the compiled loop
        if not d2[j] < eps * eps:
            continue
        d = np.sqrt(d2[j])
        is_in = (has_entry and px[i] < entry_x) or (qy[i] < hw[i])
        if d > 1e-14:
            cx, cy = (fx[j] - px[i]) / d, (fy[j] - qy[i]) / d
            if not is_in:
                cx, cy = -cx, -cy
        else:
            L = np.sqrt(L2[j])
            cx, cy = -ey[j] / L, ex[j] / L
        dist[i] = d if is_in else -d
        nx[i] = cx
        ny[i] = sy[i] * cy
    return dist, nx, ny


def advance(X, nsub, dt, ds, kappa, mu, p, v, omx, omy, weights, comp_on, arc_sign, push_half,
            wx, wy, g0, has_walls, has_entry, entry_x, eps, lip, max_disp):
    N = X.shape[0]
    params_omega = np.array([omx, omy])
    state = cortex.CortexState.__new__(cortex.CortexState)
    state.t = 0.0
    step_max = 0.0
    nproj = nproj_total = done = 0
    status = 0
    idx = np.arange(N)
    for _ in range(nsub):
        state.positions = X
        i0, i1 = cortex.leading_trailing(state, params_omega)
        mask = None
        if push_half >= 0:
            d = (idx - i1) % N
            mask = np.minimum(d, N - d) > push_half
        V = (cortex.elastic_force(state, kappa) + cortex.pressure_force(state, p, mask)) / mu
        if v != 0.0 and i0 != i1:
            V += cortex.flow_term(state, v, i0, i1, arc_sign)
            if comp_on:
                V += cortex.compensating_force(state, v, 0.0, i0, i1, arc_sign, weights)
        nproj = 0
        if has_walls:
            dist, nx, ny = wall_query(wx, wy, g0, has_entry, entry_x, eps, lip, X)
            fdotn = V[:, 0] * nx + V[:, 1] * ny
            hit = (dist < eps) & (fdotn > 0)
            if hit.any():
                tx, ty = -ny[hit], nx[hit]
                ft = V[hit, 0] * tx + V[hit, 1] * ty
                V[hit, 0] = ft * tx
                V[hit, 1] = ft * ty
                nproj = int(hit.sum())
        step2 = np.sum(V * V, axis=1) * dt * dt
        if not np.all(np.isfinite(step2)):
            status = 2
            break
        disp2 = float(step2.max())
        if disp2 > max_disp * max_disp:
            status = 1
            break
        X += dt * V
        step_max = max(step_max, disp2)
        nproj_total += nproj
        done += 1
    return status, done, float(np.sqrt(step_max)), nproj, nproj_total
