"""Point-cloud primitives: rigid transforms, Procrustes, nearest neighbours, Chamfer.

Point clouds are plain ``(n, 3)`` float64 arrays in millimetres.  Row order
matters for corresponded clouds and is preserved by every function here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError, DegenerateInputError

ORTHONORMAL_TOL = 1e-9


def as_cloud(points, name: str = "cloud") -> np.ndarray:
    """Validate and return ``points`` as a C-contiguous ``(n, 3)`` float64 array."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] == 0:
        raise DataError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite coordinates")
    return arr


@dataclass(frozen=True)
class RigidTransform:
    """``x -> rotation @ x + translation`` with a proper rotation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise DataError("rotation must be 3x3 and translation a 3-vector")
        if not (np.isfinite(R).all() and np.isfinite(t).all()):
            raise DataError("transform contains non-finite values")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHONORMAL_TOL or abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
            raise DataError("rotation must be orthonormal with determinant +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def apply(self, points) -> np.ndarray:
        return apply_transform(self, points)

    def compose(self, first: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``first`` and then ``self``."""
        return RigidTransform(self.rotation @ first.rotation, self.rotation @ first.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def to_dict(self) -> dict:
        return {
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.asarray(d["rotation"], dtype=float), np.asarray(d["translation"], dtype=float))


def apply_transform(t: RigidTransform, points) -> np.ndarray:
    pts = as_cloud(points)
    return pts @ t.rotation.T + t.translation


def compose(second: RigidTransform, first: RigidTransform) -> RigidTransform:
    return second.compose(first)


def procrustes_rigid(source, target) -> RigidTransform:
    """Least-squares rigid transform mapping ``source`` onto ``target``.

    Points correspond by row.  Rotation comes from the SVD of the centred
    cross-covariance with the determinant sign corrected, so reflections are
    never returned.  No scaling.

    Raises
    ------
    DataError
        Row counts differ.
    DegenerateInputError
        Fewer than 3 points, or ``source`` is (numerically) collinear.
    """
    src = as_cloud(source, "source")
    dst = as_cloud(target, "target")
    if src.shape != dst.shape:
        raise DataError(f"source and target differ in size: {src.shape[0]} vs {dst.shape[0]}")
    if src.shape[0] < 3:
        raise DegenerateInputError("rigid alignment needs at least 3 points")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    a = src - mu_s
    b = dst - mu_d
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= sv[0] * 1e-10:
        raise DegenerateInputError("source points are collinear or coincident")
    H = a.T @ b
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return RigidTransform(R, mu_d - R @ mu_s)


def rms_residual(t: RigidTransform, source, target) -> float:
    diff = apply_transform(t, source) - as_cloud(target)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


class NeighborIndex:
    """Exact nearest-neighbour lookup over a fixed cloud.

    Exhaustive search; ties resolve to the lowest point index.
    """

    __slots__ = ("_points",)

    def __init__(self, cloud):
        pts = as_cloud(cloud).copy()
        pts.setflags(write=False)
        self._points = pts

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self):
        return self._points.shape[0]

    def query(self, queries):
        """Return ``(indices, distances)`` for each row of ``queries``."""
        q = as_cloud(queries, "queries")
        return kernels.nearest(self._points, q)


def nn_index(cloud) -> NeighborIndex:
    return NeighborIndex(cloud)


def nn_query(index: NeighborIndex, p) -> tuple[int, float]:
    """Nearest point of ``index`` to the single point ``p``."""
    idx, dist = index.query(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(dist[0])


def chamfer_mean(a, b) -> float:
    """Symmetric mean nearest-neighbour distance.

    ``0.5 * (mean_a d(a, B) + mean_b d(b, A))``.
    """
    A = as_cloud(a, "a")
    B = as_cloud(b, "b")
    _, dab = kernels.nearest(B, A)
    _, dba = kernels.nearest(A, B)
    return 0.5 * (float(dab.mean()) + float(dba.mean()))


def centroid(points) -> np.ndarray:
    return as_cloud(points).mean(axis=0)


def diameter(points) -> float:
    """Largest pairwise distance, bounded via the bounding-box diagonal for large clouds."""
    pts = as_cloud(points)
    if pts.shape[0] <= 2000:
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
