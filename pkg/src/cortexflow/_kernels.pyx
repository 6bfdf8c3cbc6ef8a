# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled explicit integrator for the cortex chain.

Mirrors :mod:`cortexflow._pykernels` exactly; both are exercised against
each other in the test-suite.
"""

import numpy as np

from libc.math cimport sqrt, fabs, isfinite


cdef struct WallHit:
    double dist
    double nx
    double ny


cdef inline Py_ssize_t _lower_bound(const double[::1] a, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _upper_bound(const double[::1] a, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef double _half_width(const double[::1] gx, const double[::1] gy,
                        Py_ssize_t g0, double x) noexcept nogil:
    # gx/gy from index g0 on is the graph part of the wall (monotone in x)
    cdef Py_ssize_t n = gx.shape[0]
    cdef Py_ssize_t j
    cdef double t
    if x <= gx[g0]:
        return gy[g0]
    if x >= gx[n - 1]:
        return gy[n - 1]
    j = _upper_bound(gx, x) - 1
    if j < g0:
        j = g0
    if gx[j + 1] == gx[j]:
        return gy[j + 1]
    t = (x - gx[j]) / (gx[j + 1] - gx[j])
    return gy[j] + t * (gy[j + 1] - gy[j])


cdef WallHit _query(const double[::1] wx, const double[::1] wy, Py_ssize_t g0,
                    int has_entry, double entry_x, double eps, double lip,
                    double px, double py) noexcept nogil:
    """Signed distance and outward normal, only resolved inside the eps tube.

    Returns dist = eps (a sentinel meaning "outside the tube") whenever the
    node is provably at least eps away from every wall point.
    """
    cdef WallHit hit
    cdef double sy = 1.0 if py >= 0.0 else -1.0
    cdef double qy = fabs(py)
    cdef double hw, best, d2, ax, ay, bx, by, ex, ey, L2, t, fx, fy, cx, cy
    cdef double bfx = 0.0, bfy = 0.0, snx = 0.0, sny = 1.0
    cdef Py_ssize_t n = wx.shape[0], j, lo, hi
    cdef int inside
    hit.dist = eps
    hit.nx = 0.0
    hit.ny = 0.0
    if has_entry and px < entry_x - eps:
        return hit
    hw = _half_width(wx, wy, g0, px)
    if px > entry_x + eps or not has_entry:
        if hw - qy >= eps * lip:
            return hit
    inside = (has_entry and px < entry_x) or (qy < hw)

    lo = _lower_bound(wx, px - eps) - 1
    hi = _upper_bound(wx, px + eps)
    if lo < 0:
        lo = 0
    if hi > n - 1:
        hi = n - 1
    best = 1e300
    for j in range(lo, hi):
        ax = wx[j]
        ay = wy[j]
        bx = wx[j + 1]
        by = wy[j + 1]
        if (ay < qy - eps and by < qy - eps) or (ay > qy + eps and by > qy + eps):
            continue
        ex = bx - ax
        ey = by - ay
        L2 = ex * ex + ey * ey
        if L2 > 0.0:
            t = ((px - ax) * ex + (qy - ay) * ey) / L2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        else:
            t = 0.0
        fx = ax + t * ex
        fy = ay + t * ey
        d2 = (px - fx) * (px - fx) + (qy - fy) * (qy - fy)
        if d2 < best:
            best = d2
            bfx = fx
            bfy = fy
            L2 = sqrt(L2)
            if L2 > 0.0:
                snx = -ey / L2
                sny = ex / L2
    if best >= eps * eps:
        return hit
    best = sqrt(best)
    if best > 1e-14:
        if inside:
            cx = (bfx - px) / best
            cy = (bfy - qy) / best
        else:
            cx = (px - bfx) / best
            cy = (qy - bfy) / best
    else:
        cx = snx
        cy = sny
    hit.dist = best if inside else -best
    hit.nx = cx
    hit.ny = sy * cy
    return hit


def advance(double[:, ::1] X, Py_ssize_t nsub, double dt, double ds,
            double kappa, double mu, double p, double v,
            double omx, double omy, const double[::1] weights, int comp_on,
            int arc_sign, Py_ssize_t push_half,
            const double[::1] wx, const double[::1] wy, Py_ssize_t g0,
            int has_walls, int has_entry, double entry_x, double eps, double lip,
            double max_disp):
    """Advance ``X`` in place by up to ``nsub`` explicit substeps.

    Returns ``(status, steps_done, max_step_disp, n_projected_last,
    n_projected_total)``; status 0 ok, 1 displacement above ``max_disp``,
    2 non-finite value. On failure ``X`` holds the last good state.
    """
    cdef Py_ssize_t N = X.shape[0]
    cdef double[:, ::1] V = np.zeros((N, 2))
    cdef double[:, ::1] G = np.zeros((N, 2))
    cdef Py_ssize_t n, i, ip, im, i0, i1, k, d
    cdef double proj, pmax, pmin, lx, ly, nrm, stretch, cx, cy, fx, fy, fdotn, tx, ty
    cdef double mtx, mty, mlx, mly, step, step_max = 0.0, disp2, pi_
    cdef int status = 0, on_arc
    cdef Py_ssize_t nproj = 0, nproj_total = 0, done = 0
    cdef WallHit hit
    cdef double inv_ds = 1.0 / ds
    cdef double limit2 = max_disp * max_disp

    with nogil:
        for n in range(nsub):
            # leading / trailing node, ties to smallest index
            i0 = 0
            i1 = 0
            pmax = omx * X[0, 0] + omy * X[0, 1]
            pmin = pmax
            for i in range(1, N):
                proj = omx * X[i, 0] + omy * X[i, 1]
                if proj > pmax:
                    pmax = proj
                    i0 = i
                if proj < pmin:
                    pmin = proj
                    i1 = i

            # elastic flux on segments i+1/2
            for i in range(N):
                ip = i + 1 if i + 1 < N else 0
                lx = X[ip, 0] - X[i, 0]
                ly = X[ip, 1] - X[i, 1]
                nrm = sqrt(lx * lx + ly * ly)
                stretch = nrm * inv_ds - 1.0
                if stretch > 0.0 and nrm > 0.0:
                    G[i, 0] = kappa * stretch * lx / nrm
                    G[i, 1] = kappa * stretch * ly / nrm
                else:
                    G[i, 0] = 0.0
                    G[i, 1] = 0.0

            if arc_sign > 0:
                mtx = 0.5 * (X[(i1 - 1 + N) % N, 0] + X[i1, 0])
                mty = 0.5 * (X[(i1 - 1 + N) % N, 1] + X[i1, 1])
                mlx = 0.5 * (X[(i0 + 1) % N, 0] + X[i0, 0])
                mly = 0.5 * (X[(i0 + 1) % N, 1] + X[i0, 1])
            else:
                mtx = 0.5 * (X[(i1 + 1) % N, 0] + X[i1, 0])
                mty = 0.5 * (X[(i1 + 1) % N, 1] + X[i1, 1])
                mlx = 0.5 * (X[(i0 - 1 + N) % N, 0] + X[i0, 0])
                mly = 0.5 * (X[(i0 - 1 + N) % N, 1] + X[i0, 1])

            nproj = 0
            for i in range(N):
                ip = i + 1 if i + 1 < N else 0
                im = i - 1 if i > 0 else N - 1
                cx = 0.5 * (X[ip, 0] - X[im, 0]) * inv_ds
                cy = 0.5 * (X[ip, 1] - X[im, 1]) * inv_ds
                fx = (G[i, 0] - G[im, 0]) * inv_ds
                fy = (G[i, 1] - G[im, 1]) * inv_ds
                pi_ = p
                if push_half >= 0:
                    d = (i - i1 + N) % N
                    if d > N - d:
                        d = N - d
                    if d <= push_half:
                        pi_ = 0.0
                # -p (X_{i+1} - X_{i-1})^perp / (2 ds), (a, b)^perp = (-b, a)
                fx = fx + pi_ * cy
                fy = fy - pi_ * cx
                fx = fx / mu
                fy = fy / mu
                if v != 0.0 and i0 != i1:
                    if arc_sign > 0:
                        on_arc = ((i - i1 + N) % N) <= ((i0 - i1 + N) % N)
                    else:
                        on_arc = ((i - i0 + N) % N) <= ((i1 - i0 + N) % N)
                    if on_arc:
                        fx = fx + arc_sign * v * cx
                        fy = fy + arc_sign * v * cy
                    if comp_on:
                        k = (i - i0 + N) % N
                        d = (i - i1 + N) % N
                        fx = fx + 0.5 * v * (mtx - mlx) * (weights[k] + weights[d])
                        fy = fy + 0.5 * v * (mty - mly) * (weights[k] + weights[d])
                if has_walls:
                    hit = _query(wx, wy, g0, has_entry, entry_x, eps, lip,
                                 X[i, 0], X[i, 1])
                    if hit.dist < eps:
                        fdotn = fx * hit.nx + fy * hit.ny
                        if fdotn > 0.0:
                            tx = -hit.ny
                            ty = hit.nx
                            fdotn = fx * tx + fy * ty
                            fx = fdotn * tx
                            fy = fdotn * ty
                            nproj = nproj + 1
                V[i, 0] = fx
                V[i, 1] = fy

            disp2 = 0.0
            for i in range(N):
                step = (V[i, 0] * V[i, 0] + V[i, 1] * V[i, 1]) * dt * dt
                if not isfinite(step):
                    status = 2
                    break
                if step > disp2:
                    disp2 = step
            if status == 0 and disp2 > limit2:
                status = 1
            if status != 0:
                break
            for i in range(N):
                X[i, 0] = X[i, 0] + dt * V[i, 0]
                X[i, 1] = X[i, 1] + dt * V[i, 1]
            if disp2 > step_max:
                step_max = disp2
            nproj_total = nproj_total + nproj
            done = done + 1

    return status, done, sqrt(step_max), nproj, nproj_total
