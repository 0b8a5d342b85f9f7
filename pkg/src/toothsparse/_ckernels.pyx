# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Every function here has a numpy twin in
``_pykernels`` with the same signature and semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, fabs, INFINITY

cnp.import_array()

ctypedef cnp.float64_t f8
ctypedef cnp.int64_t i8

# exp(-x) underflows to zero beyond this
cdef double EXP_CUTOFF = 745.0


def nearest(const f8[:, ::1] points, const f8[:, ::1] queries):
    cdef Py_ssize_t n = points.shape[0], q = queries.shape[0]
    cdef Py_ssize_t i, j, best
    cdef double dx, dy, dz, d, bd
    idx = np.empty(q, dtype=np.int64)
    dist = np.empty(q, dtype=np.float64)
    cdef i8[::1] idx_v = idx
    cdef f8[::1] dist_v = dist
    with nogil:
        for j in range(q):
            best = 0
            bd = INFINITY
            for i in range(n):
                dx = points[i, 0] - queries[j, 0]
                dy = points[i, 1] - queries[j, 1]
                dz = points[i, 2] - queries[j, 2]
                d = dx * dx + dy * dy + dz * dz
                # strict comparison keeps the lowest index on ties
                if d < bd:
                    bd = d
                    best = i
            idx_v[j] = best
            dist_v[j] = sqrt(bd)
    return idx, dist


def cpd_posterior(const f8[:, ::1] target, const f8[:, ::1] moving,
                  double sigma2, double log_c):
    """Posterior P[m, n] of moving point m generating target point n.

    ``log_c`` is the log of the uniform-component constant (``-inf`` when the
    outlier weight is zero).  Returns ``(P, outlier_mass, log_den)`` where
    ``log_den[n] = log(sum_m exp(-|x_n - y_m|^2 / 2 sigma2) + c)``.
    """
    cdef Py_ssize_t N = target.shape[0], M = moving.shape[0]
    cdef Py_ssize_t m, n
    cdef double inv = 1.0 / (2.0 * sigma2)
    cdef double dx, dy, dz, dmin, s, t, lc, lse, hi, lo
    P = np.empty((M, N), dtype=np.float64)
    outlier = np.empty(N, dtype=np.float64)
    log_den = np.empty(N, dtype=np.float64)
    cdef f8[:, ::1] Pv = P
    cdef f8[::1] ov = outlier
    cdef f8[::1] lv = log_den
    with nogil:
        for n in range(N):
            dmin = INFINITY
            for m in range(M):
                dx = moving[m, 0] - target[n, 0]
                dy = moving[m, 1] - target[n, 1]
                dz = moving[m, 2] - target[n, 2]
                t = (dx * dx + dy * dy + dz * dz) * inv
                Pv[m, n] = t
                if t < dmin:
                    dmin = t
            s = 0.0
            for m in range(M):
                t = Pv[m, n] - dmin
                if t > EXP_CUTOFF:
                    t = 0.0
                else:
                    t = exp(-t)
                Pv[m, n] = t
                s += t
            # s >= 1 because the closest term is exp(0)
            lc = log_c + dmin
            if lc > log(s):
                hi = lc
                lo = log(s)
            else:
                hi = log(s)
                lo = lc
            lse = hi + log1p(exp(lo - hi))
            t = exp(-lse)
            for m in range(M):
                Pv[m, n] = Pv[m, n] * t
            ov[n] = exp(lc - lse)
            lv[n] = lse - dmin
    return P, outlier, log_den


def weighted_sq_distance(const f8[:, ::1] P, const f8[:, ::1] target, const f8[:, ::1] moving):
    """``sum_mn P[m, n] |target[n] - moving[m]|^2`` from explicit differences."""
    cdef Py_ssize_t N = target.shape[0], M = moving.shape[0]
    cdef Py_ssize_t m, n
    cdef double dx, dy, dz, acc = 0.0, row
    with nogil:
        for m in range(M):
            row = 0.0
            for n in range(N):
                dx = moving[m, 0] - target[n, 0]
                dy = moving[m, 1] - target[n, 1]
                dz = moving[m, 2] - target[n, 2]
                row += P[m, n] * (dx * dx + dy * dy + dz * dz)
            acc += row
    return acc


cdef inline double _soft(double v, double thr) nogil:
    if v > thr:
        return v - thr
    if v < -thr:
        return v + thr
    return 0.0


def admm_bpdn(const f8[:, ::1] vt, const f8[::1] s, const f8[::1] b, double eps,
              f8[::1] z, f8[::1] u1, f8[::1] u2, f8[::1] v, double rho,
              Py_ssize_t n_iter, Py_ssize_t check_every, double gap_tol,
              double best_p, double best_d):
    """ADMM for min |x|_1 s.t. |diag(s) vt x - b|_2 <= eps, vt with orthonormal rows.

    Splitting: v = B x (projected onto the eps-ball around b), z = x
    (soft-thresholded).  The state ``z, u1, u2, v`` is updated in place so a
    run can be resumed.  Every ``check_every`` iterations z is repaired to
    feasibility (upper bound) and the scaled multiplier of the ball constraint
    gives a dual lower bound; the run stops once the relative gap between the
    best bounds seen, including ``best_p``/``best_d`` passed in, is below
    ``gap_tol``.  Returns ``(x, best_p, best_d, iterations, rho)`` where ``x``
    is the best feasible point found in this call or ``None``.
    """
    cdef Py_ssize_t r = vt.shape[0], N = vt.shape[1]
    cdef Py_ssize_t it, i, k, done = 0
    cdef double acc, nw, scale, rn, sn
    cdef double p_val, d_val, g, gmax, ynorm, by
    cdef bint improved = False

    x_a = np.zeros(N); zold_a = np.zeros(N); q_a = np.zeros(N); zf_a = np.zeros(N)
    best_a = np.zeros(N)
    vold_a = np.zeros(r); w_a = np.zeros(r); t_a = np.zeros(r); bx_a = np.zeros(r)
    d_a = np.empty(r)
    cdef f8[::1] x = x_a, zold = zold_a, q = q_a, zf = zf_a, best = best_a
    cdef f8[::1] vold = vold_a, w = w_a, tr = t_a, bx = bx_a, dd = d_a
    for k in range(r):
        dd[k] = s[k] * s[k] / (1.0 + s[k] * s[k])

    with nogil:
        for it in range(n_iter):
            done = it + 1
            # x = (B'B + I)^-1 (B'(v - u1) + z - u2), B = diag(s) vt
            for k in range(r):
                tr[k] = s[k] * (v[k] - u1[k])
            for i in range(N):
                acc = z[i] - u2[i]
                for k in range(r):
                    acc += vt[k, i] * tr[k]
                q[i] = acc
            for k in range(r):
                acc = 0.0
                for i in range(N):
                    acc += vt[k, i] * q[i]
                tr[k] = dd[k] * acc
            for i in range(N):
                acc = q[i]
                for k in range(r):
                    acc -= vt[k, i] * tr[k]
                x[i] = acc
            # v: project B x + u1 onto the ball around b
            nw = 0.0
            for k in range(r):
                acc = 0.0
                for i in range(N):
                    acc += vt[k, i] * x[i]
                bx[k] = s[k] * acc
                w[k] = bx[k] + u1[k] - b[k]
                nw += w[k] * w[k]
            nw = sqrt(nw)
            scale = 1.0
            if nw > eps:
                scale = eps / nw
            for k in range(r):
                vold[k] = v[k]
                v[k] = b[k] + w[k] * scale
            for i in range(N):
                zold[i] = z[i]
                z[i] = _soft(x[i] + u2[i], 1.0 / rho)
            for k in range(r):
                u1[k] += bx[k] - v[k]
            for i in range(N):
                u2[i] += x[i] - z[i]

            if done % check_every != 0 and done != n_iter:
                continue
            # upper bound: repair z to feasibility along the pseudo-inverse of B
            nw = 0.0
            for k in range(r):
                acc = 0.0
                for i in range(N):
                    acc += vt[k, i] * z[i]
                w[k] = s[k] * acc - b[k]
                nw += w[k] * w[k]
            nw = sqrt(nw)
            for i in range(N):
                zf[i] = z[i]
            if nw > eps:
                scale = 1.0 - eps / nw
                for k in range(r):
                    tr[k] = w[k] * scale / s[k]
                for i in range(N):
                    acc = 0.0
                    for k in range(r):
                        acc += vt[k, i] * tr[k]
                    zf[i] -= acc
            p_val = 0.0
            for i in range(N):
                p_val += fabs(zf[i])
            if p_val < best_p:
                best_p = p_val
                improved = True
                for i in range(N):
                    best[i] = zf[i]
            # lower bound from y = +-rho u1 scaled into |B'y|_inf <= 1
            gmax = 0.0
            for i in range(N):
                acc = 0.0
                for k in range(r):
                    acc += vt[k, i] * s[k] * u1[k]
                acc = fabs(acc * rho)
                if acc > gmax:
                    gmax = acc
            ynorm = 0.0
            by = 0.0
            for k in range(r):
                ynorm += u1[k] * u1[k]
                by += b[k] * u1[k]
            g = rho
            if gmax > 1.0:
                g = rho / gmax
            ynorm = sqrt(ynorm) * g
            by = by * g
            d_val = by - eps * ynorm
            if -by - eps * ynorm > d_val:
                d_val = -by - eps * ynorm
            if d_val > best_d:
                best_d = d_val
            if best_p <= 0.0 or (best_p - best_d) <= gap_tol * best_p:
                break
            # residual balancing, at most every 100 iterations
            if done % 100 == 0:
                rn = 0.0
                sn = 0.0
                for k in range(r):
                    rn += (bx[k] - v[k]) * (bx[k] - v[k])
                    tr[k] = s[k] * (v[k] - vold[k])
                for i in range(N):
                    rn += (x[i] - z[i]) * (x[i] - z[i])
                    acc = z[i] - zold[i]
                    for k in range(r):
                        acc += vt[k, i] * tr[k]
                    sn += acc * acc
                rn = sqrt(rn)
                sn = rho * sqrt(sn)
                if rn > 10.0 * sn and rho < 1e8:
                    rho *= 2.0
                    for k in range(r):
                        u1[k] *= 0.5
                    for i in range(N):
                        u2[i] *= 0.5
                elif sn > 10.0 * rn and rho > 1e-8:
                    rho *= 0.5
                    for k in range(r):
                        u1[k] *= 2.0
                    for i in range(N):
                        u2[i] *= 2.0
    return (best_a if improved else None), best_p, best_d, done, rho


def fnv1a64(const unsigned char[::1] data, cnp.uint64_t h=0xcbf29ce484222325):
    cdef Py_ssize_t i, n = data.shape[0]
    cdef cnp.uint64_t prime = 0x100000001b3
    with nogil:
        for i in range(n):
            h = (h ^ data[i]) * prime
    return h
