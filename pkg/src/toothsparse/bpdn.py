"""Basis pursuit denoising: minimize |C|_1 subject to |D C - a|_2 <= eps.

The problem is first reduced exactly to the row space of ``D`` via a thin SVD
(the part of ``a`` outside that space is a fixed residual every candidate
pays), then solved by ADMM in the reduced coordinates.  Termination is
certified by a relative duality gap: every reported solution is feasible, and
its l1 norm is within ``dual_tolerance`` (relative) of a proven lower bound
whenever ``converged`` is true.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, InfeasibleError

ABSOLUTE = "absolute"
RELATIVE = "relative"

_CHUNK = 500
_CHECK_EVERY = 20
# multipliers applied to the conditioning-based base scale, tried in order
_KAPPA_SCHEDULE = (1.0, 10.0, 0.1, 100.0)
# residual slack in the normalized problem, where |b| <= 1
_ROUNDING = 1e-11


@dataclass(frozen=True)
class BpdnConfig:
    """Solver settings.

    ``epsilon_mode`` is ``"absolute"`` (``epsilon_value`` in the target's
    units) or ``"relative"`` (a fraction of the target's 2-norm).
    ``primal_tolerance`` bounds the allowed constraint violation as
    ``primal_tolerance * (1 + eps)``; ``dual_tolerance`` is the relative
    duality gap at which the solve is declared converged.
    """

    epsilon_mode: str = RELATIVE
    epsilon_value: float = 0.01
    max_iterations: int = 40000
    primal_tolerance: float = 1e-6
    dual_tolerance: float = 1e-8

    def __post_init__(self):
        if self.epsilon_mode not in (ABSOLUTE, RELATIVE):
            raise DataError(f"epsilon_mode must be 'absolute' or 'relative', got {self.epsilon_mode!r}")
        if not np.isfinite(self.epsilon_value) or self.epsilon_value < 0:
            raise DataError(f"epsilon_value must be finite and >= 0, got {self.epsilon_value}")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        if not (self.primal_tolerance > 0 and self.dual_tolerance > 0):
            raise DataError("tolerances must be positive")

    def resolve_epsilon(self, target_norm: float) -> float:
        if self.epsilon_mode == ABSOLUTE:
            return float(self.epsilon_value)
        return float(self.epsilon_value) * float(target_norm)


@dataclass(frozen=True)
class SparseCode:
    coefficients: np.ndarray
    residual_norm: float
    l1_norm: float
    iterations_used: int
    converged: bool
    epsilon: float
    duality_gap: float
    relaxed: bool = False

    @property
    def coefficient_sum(self) -> float:
        """Sum of the coefficients (diagnostic only; not constrained)."""
        return float(self.coefficients.sum())

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "residual_norm": self.residual_norm,
            "l1_norm": self.l1_norm,
            "coefficient_sum": self.coefficient_sum,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "epsilon": self.epsilon,
            "duality_gap": self.duality_gap,
            "relaxed": self.relaxed,
        }


def least_squares_residual(dictionary, target) -> float:
    """Smallest achievable ``|D C - a|_2`` over all C."""
    D, a = _check(dictionary, target)
    U, s, _ = _reduce(D)
    return float(np.linalg.norm(a - U @ (U.T @ a)))


def solve_bpdn(dictionary, target, config: BpdnConfig | None = None, relax_infeasible: bool = False) -> SparseCode:
    """Solve ``min |C|_1 s.t. |D C - a|_2 <= eps``.

    Parameters
    ----------
    relax_infeasible : bool
        When even the least-squares residual exceeds ``eps``, solve at
        ``eps`` equal to that residual instead of raising; the returned code
        has ``relaxed=True``.

    Raises
    ------
    DataError
        Non-finite or mis-shaped input.
    InfeasibleError
        Even the least-squares residual exceeds ``eps`` (plus slack) and
        ``relax_infeasible`` is false.
    """
    config = config or BpdnConfig()
    D, a = _check(dictionary, target)
    m, N = D.shape
    na = float(np.linalg.norm(a))
    eps = config.resolve_epsilon(na)
    slack = config.primal_tolerance * (1.0 + eps)

    if na <= eps:
        return SparseCode(np.zeros(N), na, 0.0, 0, True, eps, 0.0)

    U, s, Vt = _reduce(D)
    a_perp = float(np.linalg.norm(a - U @ (U.T @ a))) if len(s) else na
    relaxed = False
    if a_perp > eps + slack:
        if not relax_infeasible:
            raise InfeasibleError(eps, a_perp)
        eps, relaxed = a_perp, True
        slack = config.primal_tolerance * (1.0 + eps)

    # normalized reduced problem: |diag(sn) Vt x - b| <= e with x = C * s_max / |a|
    s_max = s[0]
    sn = s / s_max
    b = (U.T @ a) / na
    e = np.sqrt(max(eps * eps - a_perp * a_perp, 0.0)) / na
    B = sn[:, None] * Vt

    base = float(np.exp(-np.mean(np.log(sn))))
    best_x = None
    best_p = np.inf
    best_d = 0.0
    used = 0
    per_run = max(config.max_iterations // len(_KAPPA_SCHEDULE), 1)
    gap_tol = config.dual_tolerance

    def gap():
        if not np.isfinite(best_p):
            return np.inf
        return 0.0 if best_p <= 0 else (best_p - best_d) / best_p

    for mult in _KAPPA_SCHEDULE:
        if gap() <= gap_tol or used >= config.max_iterations:
            break
        kappa = base * mult
        sk = np.ascontiguousarray(kappa * sn)
        bk = np.ascontiguousarray(kappa * b)
        ek = kappa * e
        r = len(sn)
        z, u2 = np.zeros(N), np.zeros(N)
        u1, v = np.zeros(r), np.zeros(r)
        rho = 1.0
        run = 0
        while run < per_run and used < config.max_iterations and gap() > gap_tol:
            n_iter = min(_CHUNK, per_run - run, config.max_iterations - used)
            x, best_p, best_d, done, rho = kernels.admm_bpdn(
                Vt, sk, bk, ek, z, u1, u2, v, rho, n_iter, _CHECK_EVERY, gap_tol, best_p, best_d
            )
            run += done
            used += done
            if x is not None:
                best_x = x
            for cand in (z, best_x):
                polished = None if cand is None else _polish(B, b, e, cand)
                if polished is not None:
                    xp, lower = polished
                    pp = float(np.abs(xp).sum())
                    if pp < best_p:
                        best_p, best_x = pp, xp
                    best_d = max(best_d, lower)

    if best_x is None:  # nothing feasible recorded yet
        best_x = np.asarray(Vt.T @ (b / sn))
        best_p = float(np.abs(best_x).sum())
    coef = best_x * (na / s_max)
    residual = float(np.linalg.norm(D @ coef - a))
    g = gap()
    return SparseCode(
        coefficients=coef,
        residual_norm=residual,
        l1_norm=float(np.abs(coef).sum()),
        iterations_used=int(used),
        converged=bool(g <= gap_tol and residual <= eps + slack),
        epsilon=eps,
        duality_gap=float(max(g, 0.0)),
        relaxed=relaxed,
    )


def _check(dictionary, target):
    D = np.asarray(dictionary, dtype=np.float64)
    a = np.asarray(target, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] < 1 or D.shape[1] < 1:
        raise DataError(f"dictionary must be a non-empty matrix, got shape {D.shape}")
    if a.ndim != 1 or a.shape[0] != D.shape[0]:
        raise DataError(f"target length {a.shape} does not match dictionary rows {D.shape[0]}")
    if not (np.isfinite(D).all() and np.isfinite(a).all()):
        raise DataError("dictionary and target must be finite")
    return D, a


def _reduce(D):
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return U[:, :0], s[:0], Vt[:0]
    keep = s > s[0] * max(D.shape) * np.finfo(float).eps
    return U[:, keep], s[keep], np.ascontiguousarray(Vt[keep])


def _polish(B, b, e, z):
    """Exact solve on the support and signs of ``z``.

    Returns ``(x, lower_bound)`` when the support yields a feasible point with
    consistent signs, else ``None``.  ``lower_bound`` is the dual value of the
    certificate built on that support, valid whether or not it is tight.
    """
    S = np.flatnonzero(z)
    r = B.shape[0]
    if S.size == 0 or S.size > r:
        return None
    BS = B[:, S]
    sig = np.sign(z[S])
    u, sv, vt = np.linalg.svd(BS, full_matrices=False)
    if sv[-1] <= sv[0] * max(BS.shape) * np.finfo(float).eps:
        return None
    xls = vt.T @ ((u.T @ b) / sv)
    rls = BS @ xls - b
    nr = float(np.sqrt(rls @ rls))
    if nr > e * (1 + 1e-12) + _ROUNDING:
        return None
    xs = xls
    if e > 0 and nr < e:
        ginv_sig = vt.T @ ((vt @ sig) / sv**2)
        mu = np.sqrt((e * e - nr * nr) / (sig @ ginv_sig))
        xs = xls - mu * ginv_sig
    if np.any(np.sign(xs) != sig):
        return None
    x = np.zeros(B.shape[1])
    x[S] = xs
    res = B @ x - b
    nres = float(np.sqrt(res @ res))
    if nres > e * (1 + 1e-10) + _ROUNDING:
        return None
    if e > 0 and nres > 0.5 * e:
        y = -res
    else:
        y = u @ ((vt @ sig) / sv)
    g = np.abs(B.T @ y).max()
    if g > 0:
        y = y / max(g, 1.0) if e == 0 else y / g
    lower = float(b @ y - e * np.sqrt(y @ y))
    return x, lower
