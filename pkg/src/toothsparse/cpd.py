"""Coherent point drift (non-rigid) registration.

The moving cloud ``Y`` (``M`` points) is deformed as ``Y + G W`` where ``G`` is
the Gaussian Gram matrix of ``Y``; ``W`` and the isotropic variance are fitted
by EM against the fixed cloud ``X`` (``N`` points), with a uniform outlier
component of weight ``w``.  Each pair is normalised internally (centred on the
fixed cloud's centroid, scaled to unit diameter) so ``beta`` is scale-free.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import kernels
from .errors import DataError, SingularSystemError
from .geometry import as_cloud, diameter

# lower bound on the normalised variance
_SIGMA2_FLOOR = 1e-10


@dataclass(frozen=True)
class CpdConfig:
    beta: float = 2.0
    lam: float = 3.0
    outlier_weight: float = 0.1
    max_iterations: int = 100
    tolerance: float = 1e-6

    def __post_init__(self):
        if not self.beta > 0:
            raise DataError(f"beta must be > 0, got {self.beta}")
        if not self.lam > 0:
            raise DataError(f"lambda must be > 0, got {self.lam}")
        if not 0.0 <= self.outlier_weight < 1.0:
            raise DataError(f"outlier weight must lie in [0, 1), got {self.outlier_weight}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DataError("max_iterations must be a positive integer")
        if not self.tolerance > 0:
            raise DataError("tolerance must be > 0")

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "lambda": self.lam,
            "outlier_weight": self.outlier_weight,
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class CpdResult:
    deformed: np.ndarray
    final_variance: float
    iterations_used: int
    objective_trace: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class CpdIterate:
    """E-step snapshot passed to the optional callback (normalised units)."""

    iteration: int
    posterior: np.ndarray
    outlier_mass: np.ndarray
    sigma2: float
    objective: float


def gaussian_gram(points: np.ndarray, beta: float) -> np.ndarray:
    sq = np.einsum("ij,ij->i", points, points)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * points @ points.T, 0.0)
    return np.exp(-d2 / (2.0 * beta * beta))


def initial_variance(target: np.ndarray, moving: np.ndarray) -> float:
    """Mean squared distance over all pairs, divided by the dimension."""
    N, D = target.shape
    M = moving.shape[0]
    total = M * np.sum(target * target) + N * np.sum(moving * moving) - 2.0 * target.sum(0) @ moving.sum(0)
    return float(max(total, 0.0) / (D * M * N))


def cpd_nonrigid(
    source,
    target,
    config: CpdConfig | None = None,
    callback: Optional[Callable[[CpdIterate], None]] = None,
) -> CpdResult:
    """Deform ``source`` onto ``target``.

    Parameters
    ----------
    source : (M, 3) array
        Moving cloud; the output keeps its size and order.
    target : (N, 3) array
        Fixed cloud.  ``N`` need not equal ``M``.
    config : CpdConfig, optional
    callback : callable, optional
        Called once per E-step with a :class:`CpdIterate`.

    Returns
    -------
    CpdResult
        ``objective_trace[k]`` is the negative log-likelihood plus the
        coherence penalty at the parameters after ``k`` M-steps.

    Raises
    ------
    DataError
        Empty or non-finite input.
    SingularSystemError
        The coefficient system is numerically singular.
    """
    cfg = config or CpdConfig()
    Y0 = as_cloud(source, "source")
    X0 = as_cloud(target, "target")

    center = X0.mean(axis=0)
    scale = max(diameter(X0), diameter(Y0))
    if scale == 0.0:
        scale = 1.0
    X = (X0 - center) / scale
    Y = (Y0 - center) / scale
    N, D = X.shape
    M = Y.shape[0]

    G = gaussian_gram(Y, cfg.beta)
    W = np.zeros((M, D))
    T = Y.copy()
    sigma2 = max(initial_variance(X, Y), _SIGMA2_FLOOR)
    w = cfg.outlier_weight
    lam = cfg.lam

    trace = []
    prev = None
    m_steps = 0
    for it in range(cfg.max_iterations + 1):
        if w > 0:
            log_c = 1.5 * np.log(2.0 * np.pi * sigma2) + np.log(w / (1.0 - w)) + np.log(M / N)
        else:
            log_c = -np.inf
        P, outlier, log_den = kernels.cpd_posterior(X, T, sigma2, log_c)
        nll = -N * (np.log1p(-w) - np.log(M) - 1.5 * np.log(2.0 * np.pi * sigma2)) - log_den.sum()
        obj = float(nll + 0.5 * lam * np.sum(W * (G @ W)))
        trace.append(obj)
        if callback is not None:
            callback(CpdIterate(it, P, outlier, sigma2, obj))
        if prev is not None and abs(prev - obj) <= cfg.tolerance * max(abs(prev), 1.0):
            break
        if it == cfg.max_iterations:
            break
        prev = obj

        P1 = P.sum(axis=1)
        Np = P1.sum()
        PX = P @ X
        reg = lam * sigma2
        A = P1[:, None] * G
        A[np.diag_indices(M)] += reg
        W = _solve(A, PX - P1[:, None] * Y, reg)
        T = Y + G @ W
        if Np > 0:
            sigma2 = kernels.weighted_sq_distance(P, X, np.ascontiguousarray(T)) / (Np * D)
        sigma2 = max(float(sigma2), _SIGMA2_FLOOR)
        m_steps += 1

    return CpdResult(
        deformed=T * scale + center,
        final_variance=sigma2 * scale * scale,
        iterations_used=m_steps,
        objective_trace=tuple(trace),
    )


def _solve(A, B, reg):
    # two steps of iterative refinement: A is poorly conditioned once the variance is small
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(A, check_finite=False)
            out = scipy.linalg.lu_solve(lu, B, check_finite=False)
            for _ in range(2):
                out = out + scipy.linalg.lu_solve(lu, B - A @ out, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
        raise SingularSystemError(f"deformation coefficient system is singular: {exc}", reg) from None
    if not np.isfinite(out).all():
        raise SingularSystemError("deformation coefficient system produced non-finite values", reg)
    return out
