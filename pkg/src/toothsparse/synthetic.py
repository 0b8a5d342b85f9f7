"""Synthetic dental cohorts with a known low-rank deformation model.

Template teeth are superellipsoid surfaces placed along a power-law arch
``y = depth * (1 - |x / (width/2)|**exponent)``; the upper arch sits at
positive z, the lower at negative z, quadrants 1 and 4 at negative x.  Each
subject is the template displaced by ``sum_k z_k * mode_k`` with
``z ~ N(0, I_K)``, then perturbed by i.i.d. Gaussian noise and moved by a
random rigid jitter.  Every mode is a smooth analytic field with its
infinitesimal rigid part (as seen by tooth centroids) projected out, so
noiseless subjects align to the template by the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .correspondence import DentalModel, DentalTemplate
from .errors import DataError
from .geometry import RigidTransform
from .teeth import ALL_LABELS, validate_label

DEFAULT_POINTS = {1: 150, 2: 150, 3: 180, 4: 220, 5: 220, 6: 300, 7: 300}

# (mesiodistal, buccolingual, crown height) in mm, indexed by position 1..7
_UPPER_DIMS = {1: (8.5, 7.0, 10.5), 2: (6.5, 6.0, 9.0), 3: (7.5, 8.0, 10.0), 4: (7.0, 9.0, 8.5),
               5: (6.5, 9.0, 7.5), 6: (10.0, 11.0, 7.5), 7: (9.0, 11.0, 7.0)}
_LOWER_DIMS = {1: (5.0, 6.0, 9.0), 2: (5.5, 6.0, 9.5), 3: (7.0, 7.5, 11.0), 4: (7.0, 7.5, 8.5),
               5: (7.0, 8.0, 8.0), 6: (11.0, 10.5, 7.5), 7: (10.5, 10.0, 7.0)}
# superellipsoid exponent; < 1 is boxier
_EXPONENT = {1: 0.6, 2: 0.65, 3: 0.8, 4: 0.75, 5: 0.75, 6: 0.55, 7: 0.55}
_OCCLUSAL_GAP = 0.5
_LOWER_ARCH_SCALE = 0.93


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 20
    latent_rank: int = 8
    noise_sigma: float = 0.0
    points_per_tooth: Mapping[int, int] = field(default_factory=dict)
    arch_width: float = 50.0
    arch_depth: float = 42.0
    arch_exponent: float = 2.0
    jitter_rotation_deg: float = 3.0
    jitter_translation_mm: float = 2.0
    mode_amplitude: float = 0.5
    resample_fraction: float = 0.1
    scramble: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise DataError("n_subjects must be >= 1")
        if self.latent_rank < 0:
            raise DataError("latent_rank must be >= 0")
        if self.latent_rank > len(MODE_NAMES):
            raise DataError(f"latent_rank {self.latent_rank} exceeds the {len(MODE_NAMES)} available modes")
        if not self.noise_sigma >= 0:
            raise DataError("noise_sigma must be >= 0")
        for lab, n in self.points_per_tooth.items():
            validate_label(lab)
            if int(n) < 4:
                raise DataError(f"tooth {lab}: at least 4 points are required, got {n}")
        if not (self.arch_width > 0 and self.arch_depth > 0 and self.arch_exponent > 0):
            raise DataError("arch parameters must be positive")
        if self.jitter_rotation_deg < 0 or self.jitter_translation_mm < 0:
            raise DataError("jitter magnitudes must be >= 0")
        if not 0.0 <= self.resample_fraction <= 1.0:
            raise DataError("resample_fraction must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise DataError("seed must be a 64-bit unsigned integer")

    def t_points(self, label: int) -> int:
        if label in self.points_per_tooth:
            return int(self.points_per_tooth[label])
        return DEFAULT_POINTS[label % 10]

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "latent_rank": self.latent_rank,
            "noise_sigma": self.noise_sigma,
            "points_per_tooth": {str(lab): self.t_points(lab) for lab in ALL_LABELS},
            "arch_width": self.arch_width,
            "arch_depth": self.arch_depth,
            "arch_exponent": self.arch_exponent,
            "jitter_rotation_deg": self.jitter_rotation_deg,
            "jitter_translation_mm": self.jitter_translation_mm,
            "mode_amplitude": self.mode_amplitude,
            "resample_fraction": self.resample_fraction,
            "scramble": self.scramble,
            "seed": int(self.seed),
        }


@dataclass(frozen=True)
class ToothFrame:
    """Placement of one template tooth."""

    label: int
    center: np.ndarray
    tangent: np.ndarray  # distal direction along the arch
    normal: np.ndarray  # buccal direction
    jaw: float  # +1 upper, -1 lower
    side: float  # -1 for quadrants 1 and 4, +1 otherwise
    arc: float  # arch length from the midline to the tooth centre, mm
    arc_max: float  # arch length to the distal end of the second molar, mm
    dims: tuple
    exponent: float


@dataclass(frozen=True)
class SynthSubject:
    model: DentalModel
    truth: Mapping[int, np.ndarray]
    latent: np.ndarray
    jitter: RigidTransform


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` quasi-uniform unit vectors in a fixed order."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = i * (np.pi * (3.0 - np.sqrt(5.0)))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _surface(frame: ToothFrame, u: np.ndarray) -> np.ndarray:
    v = np.sign(u) * np.abs(u) ** frame.exponent
    md, bl, h = frame.dims
    a = v[:, 0] * (md / 2)
    b = v[:, 1] * (bl / 2)
    c = v[:, 2] * (h / 2)
    return frame.center + a[:, None] * frame.tangent + b[:, None] * frame.normal + c[:, None] * np.array([0.0, 0.0, 1.0])


def _arch_frames(config: SynthConfig) -> dict[int, ToothFrame]:
    frames = {}
    for jaw, quadrants, dims, scale in ((1.0, (1, 2), _UPPER_DIMS, 1.0), (-1.0, (4, 3), _LOWER_DIMS, _LOWER_ARCH_SCALE)):
        hw = 0.5 * config.arch_width * scale
        depth = config.arch_depth * scale
        e = config.arch_exponent
        xs = np.linspace(0.0, hw, 20001)
        ys = depth * (1.0 - (xs / hw) ** e)
        seg = np.hypot(np.diff(xs), np.diff(ys))
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        widths = np.array([dims[p][0] for p in range(1, 8)])
        shrink = min(1.0, 0.97 * arc[-1] / widths.sum())
        centers_s = shrink * (np.cumsum(widths) - widths / 2)
        arc_max = shrink * widths.sum()
        for p in range(1, 8):
            s = centers_s[p - 1]
            x = float(np.interp(s, arc, xs))
            y = depth * (1.0 - (x / hw) ** e)
            slope = -depth * e * (x / hw) ** (e - 1) / hw if x > 0 else 0.0
            t = np.array([1.0, slope]) / np.hypot(1.0, slope)
            n = np.array([-t[1], t[0]])
            h = dims[p][2]
            z = jaw * (h / 2 + _OCCLUSAL_GAP)
            for quad, side in zip(quadrants, (-1.0, 1.0)):
                lab = quad * 10 + p
                center = np.array([side * x, y, z])
                tangent = np.array([side * t[0], t[1], 0.0])
                normal = np.array([side * n[0], n[1], 0.0])
                frames[lab] = ToothFrame(lab, center, tangent, normal, jaw, side, float(s), float(arc_max),
                                         dims[p], _EXPONENT[p])
    # centre the arch on the mean tooth centre; x is symmetric already
    shift = np.mean([f.center for f in frames.values()], axis=0)
    shift[0] = 0.0
    return {lab: ToothFrame(f.label, f.center - shift, f.tangent, f.normal, f.jaw, f.side, f.arc, f.arc_max,
                            f.dims, f.exponent) for lab, f in frames.items()}


def generate_template(config: SynthConfig | None = None) -> DentalTemplate:
    """28 superellipsoid teeth on the arch; deterministic for a given config."""
    config = config or SynthConfig()
    frames = _arch_frames(config)
    return DentalTemplate({lab: _surface(f, fibonacci_sphere(config.t_points(lab))) for lab, f in frames.items()})


def sample_tooth_surface(config: SynthConfig, label: int, n: int) -> np.ndarray:
    """``n`` quasi-uniform points on the template surface of tooth ``label``."""
    return _surface(_arch_frames(config)[validate_label(label)], fibonacci_sphere(int(n)))


# ---- deformation modes: functions (frame, points) -> displacement -----------------

def _arch_width(f, P):
    return np.column_stack([P[:, 0], np.zeros(len(P)), np.zeros(len(P))])


def _arch_depth(f, P):
    return np.column_stack([np.zeros(len(P)), P[:, 1], np.zeros(len(P))])


def _quadrant_scale(f, P):
    on = 1.0 if f.side < 0 else 0.0
    return on * np.column_stack([P[:, 0], P[:, 1], np.zeros(len(P))])


def _mesiodistal_tip(f, P):
    return f.side * np.cross(f.normal, P - f.center)


def _vertical_opening(f, P):
    return np.tile([0.0, 0.0, f.jaw], (len(P), 1))


def _tooth_size(f, P):
    return P - f.center


def _anterior_protrusion(f, P):
    return np.tile(f.normal * np.exp(-(f.arc / 15.0) ** 2), (len(P), 1))


def _curve_of_spee(f, P):
    return np.tile([0.0, 0.0, (f.arc / f.arc_max) ** 2], (len(P), 1))


def _torque(f, P):
    return f.jaw * np.cross(f.tangent, P - f.center)


def _jaw_size_ratio(f, P):
    return f.jaw * (P - f.center)


def _molar_distalization(f, P):
    return np.tile(f.tangent * (f.arc / f.arc_max) ** 3, (len(P), 1))


MODES: tuple[tuple[str, Callable], ...] = (
    ("arch_width", _arch_width),
    ("arch_depth", _arch_depth),
    ("quadrant_scale", _quadrant_scale),
    ("mesiodistal_tip", _mesiodistal_tip),
    ("vertical_opening", _vertical_opening),
    ("tooth_size", _tooth_size),
    ("anterior_protrusion", _anterior_protrusion),
    ("curve_of_spee", _curve_of_spee),
    ("torque", _torque),
    ("jaw_size_ratio", _jaw_size_ratio),
    ("molar_distalization", _molar_distalization),
)
MODE_NAMES = tuple(name for name, _ in MODES)


class DeformationModel:
    """The K leading modes, rigid-projected and scaled, evaluable at any tooth points."""

    def __init__(self, config: SynthConfig):
        self.config = config
        self.frames = _arch_frames(config)
        self.template = generate_template(config)
        self.rank = config.latent_rank
        labels = list(ALL_LABELS)
        centroids = np.array([self.template[lab].mean(axis=0) for lab in labels])
        cc = centroids - centroids.mean(axis=0)
        inertia = np.sum(cc * cc) * np.eye(3) - cc.T @ cc
        self._corrections = []
        self._scales = []
        n_pts = sum(self.template[lab].shape[0] for lab in labels)
        for _, fn in MODES[: self.rank]:
            disp = {lab: fn(self.frames[lab], self.template[lab]) for lab in labels}
            dc = np.array([disp[lab].mean(axis=0) for lab in labels])
            v = dc.mean(axis=0)
            omega = np.linalg.solve(inertia, np.sum(np.cross(cc, dc - v), axis=0))
            # rigid motion omega x (p - c0) + v, c0 = mean template centroid
            c0 = centroids.mean(axis=0)
            sq = 0.0
            for lab in labels:
                d = disp[lab] - (np.cross(omega, self.template[lab] - c0) + v)
                sq += np.sum(d * d)
            self._corrections.append((omega, v, c0))
            self._scales.append(config.mode_amplitude / np.sqrt(sq / n_pts))

    def basis(self, label: int, points: np.ndarray) -> np.ndarray:
        """Displacements of ``points`` (on tooth ``label``) per mode, shape ``(K, n, 3)``."""
        f = self.frames[label]
        out = np.empty((self.rank, len(points), 3))
        for k, (_, fn) in enumerate(MODES[: self.rank]):
            omega, v, c0 = self._corrections[k]
            out[k] = self._scales[k] * (fn(f, points) - (np.cross(omega, points - c0) + v))
        return out

    def deform(self, label: int, points: np.ndarray, latent: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            return points.copy()
        return points + np.tensordot(latent, self.basis(label, points), axes=1)

    def resample_near(self, label: int, rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Fresh surface points, each within about one sample spacing of template point ``rows[i]``."""
        n_total = self.template[label].shape[0]
        u = fibonacci_sphere(n_total)[rows]
        spacing = np.sqrt(4.0 * np.pi / n_total)
        step = rng.normal(scale=spacing / np.sqrt(2.0), size=u.shape)
        step -= np.sum(step * u, axis=1, keepdims=True) * u
        u = u + step
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return _surface(self.frames[label], u)


def random_rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(max_deg) * rng.uniform(-1.0, 1.0)
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def subject_id(i: int) -> str:
    return f"s{i:04d}"


def generate_subject(model: DeformationModel, index: int) -> SynthSubject:
    """Subject ``index``; depends only on the config seed and ``index``."""
    cfg = model.config
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(index,)))
    latent = rng.normal(size=cfg.latent_rank)
    R = random_rotation(rng, cfg.jitter_rotation_deg)
    t = cfg.jitter_translation_mm * rng.uniform(-1.0, 1.0, size=3)
    jitter = RigidTransform(R, t)
    truth = {}
    raw = {}
    for lab in ALL_LABELS:
        tpl = model.template[lab]
        pts = model.deform(lab, tpl, latent)
        if cfg.noise_sigma > 0:
            pts = pts + rng.normal(scale=cfg.noise_sigma, size=pts.shape)
        cloud = pts.copy()
        if cfg.scramble:
            n_new = int(round(cfg.resample_fraction * len(pts)))
            if n_new:
                rows = np.sort(rng.choice(len(pts), size=n_new, replace=False))
                fresh = model.deform(lab, model.resample_near(lab, rows, rng), latent)
                if cfg.noise_sigma > 0:
                    fresh = fresh + rng.normal(scale=cfg.noise_sigma, size=fresh.shape)
                cloud[rows] = fresh
            cloud = cloud[rng.permutation(len(cloud))]
        truth[lab] = jitter.apply(pts)
        raw[lab] = jitter.apply(cloud)
    return SynthSubject(DentalModel(subject_id(index), raw), truth, latent, jitter)


def generate_cohort(config: SynthConfig | None = None) -> tuple[DentalTemplate, list[SynthSubject]]:
    config = config or SynthConfig()
    model = DeformationModel(config)
    return model.template, [generate_subject(model, i) for i in range(config.n_subjects)]
