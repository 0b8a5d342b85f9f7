"""Pure numpy implementations of the compiled kernels in ``_ckernels``.

Semantics match the compiled versions exactly; results agree to rounding.
"""
import numpy as np

_CHUNK = 4096


def nearest(points, queries):
    n = points.shape[0]
    q = queries.shape[0]
    idx = np.empty(q, dtype=np.int64)
    dist = np.empty(q, dtype=np.float64)
    step = max(1, _CHUNK * 64 // max(n, 1))
    for start in range(0, q, step):
        qs = queries[start:start + step]
        diff = qs[:, None, :] - points[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        # argmin returns the first occurrence, i.e. the lowest index on ties
        j = np.argmin(d2, axis=1)
        idx[start:start + step] = j
        dist[start:start + step] = np.sqrt(d2[np.arange(len(qs)), j])
    return idx, dist


def cpd_posterior(target, moving, sigma2, log_c):
    diff = moving[:, None, :] - target[None, :, :]
    t = np.einsum("mnk,mnk->mn", diff, diff) / (2.0 * sigma2)
    dmin = t.min(axis=0)
    k = np.exp(-(t - dmin))
    s = k.sum(axis=0)
    lc = log_c + dmin
    lse = np.logaddexp(np.log(s), lc)
    P = k * np.exp(-lse)
    outlier = np.exp(lc - lse)
    return P, outlier, lse - dmin


def weighted_sq_distance(P, target, moving):
    total = 0.0
    step = max(1, 2_000_000 // max(target.shape[0] * 3, 1))
    for start in range(0, moving.shape[0], step):
        diff = moving[start:start + step, None, :] - target[None, :, :]
        total += float(np.sum(P[start:start + step] * np.einsum("mnk,mnk->mn", diff, diff)))
    return total


def _soft(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def admm_bpdn(vt, s, b, eps, z, u1, u2, v, rho, n_iter, check_every, gap_tol,
              best_p, best_d):
    N = vt.shape[1]
    dd = s * s / (1.0 + s * s)
    best = None
    done = 0
    for it in range(n_iter):
        done = it + 1
        q = vt.T @ (s * (v - u1)) + z - u2
        x = q - vt.T @ (dd * (vt @ q))
        bx = s * (vt @ x)
        w = bx + u1 - b
        nw = np.sqrt(w @ w)
        vold = v.copy()
        v[:] = b + (w * (eps / nw) if nw > eps else w)
        zold = z.copy()
        z[:] = _soft(x + u2, 1.0 / rho)
        u1 += bx - v
        u2 += x - z

        if done % check_every != 0 and done != n_iter:
            continue
        res = s * (vt @ z) - b
        nr = np.sqrt(res @ res)
        zf = z.copy()
        if nr > eps:
            zf -= vt.T @ (res * (1.0 - eps / nr) / s)
        p_val = np.abs(zf).sum()
        if p_val < best_p:
            best_p = p_val
            best = zf
        gmax = np.abs(vt.T @ (s * u1)).max() * rho if N else 0.0
        g = rho / gmax if gmax > 1.0 else rho
        by = (b @ u1) * g
        yn = np.sqrt(u1 @ u1) * g
        best_d = max(best_d, by - eps * yn, -by - eps * yn)
        if best_p <= 0.0 or (best_p - best_d) <= gap_tol * best_p:
            break
        if done % 100 == 0:
            rn = np.sqrt(np.sum((bx - v) ** 2) + np.sum((x - z) ** 2))
            sn = rho * np.linalg.norm(vt.T @ (s * (v - vold)) + (z - zold))
            if rn > 10.0 * sn and rho < 1e8:
                rho *= 2.0
                u1 *= 0.5
                u2 *= 0.5
            elif sn > 10.0 * rn and rho > 1e-8:
                rho *= 0.5
                u1 *= 2.0
                u2 *= 2.0
    return best, best_p, best_d, done, rho


_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data, h=0xCBF29CE484222325):
    for byte in bytes(data):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h
