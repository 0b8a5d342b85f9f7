"""Template alignment and point-to-point correspondence of tooth clouds."""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .cpd import CpdConfig, cpd_nonrigid
from .errors import DataError
from .geometry import RigidTransform, apply_transform, as_cloud, procrustes_rigid
from .parallel import ordered_map
from .teeth import ALL_LABELS, validate_label, validate_labels


def _frozen_teeth(teeth: Mapping) -> Mapping[int, np.ndarray]:
    out = {}
    for lab, cloud in teeth.items():
        key = validate_label(lab)
        if key in out:
            raise DataError(f"duplicate tooth label {key}")
        arr = as_cloud(cloud, f"tooth {key}").copy()
        arr.setflags(write=False)
        out[key] = arr
    return MappingProxyType(dict(sorted(out.items())))


@dataclass(frozen=True, init=False)
class DentalTemplate:
    """28 template teeth; point order of each cloud defines correspondence."""

    teeth: Mapping[int, np.ndarray]

    def __init__(self, teeth: Mapping):
        frozen = _frozen_teeth(teeth)
        if tuple(frozen) != ALL_LABELS:
            missing = sorted(set(ALL_LABELS) - set(frozen))
            raise DataError(f"template must contain all 28 teeth; missing {missing}")
        object.__setattr__(self, "teeth", frozen)

    def __getitem__(self, label) -> np.ndarray:
        return self.teeth[validate_label(label)]

    def t_points(self, label) -> int:
        return self[label].shape[0]

    def centroids(self, labels: Iterable[int]) -> np.ndarray:
        return np.array([self.teeth[lab].mean(axis=0) for lab in labels])


@dataclass(frozen=True, init=False)
class DentalModel:
    """A subject's labelled tooth clouds (raw, any cardinality)."""

    subject_id: str
    teeth: Mapping[int, np.ndarray]

    def __init__(self, subject_id: str, teeth: Mapping):
        frozen = _frozen_teeth(teeth)
        if not frozen:
            raise DataError("a dental model needs at least one tooth")
        object.__setattr__(self, "subject_id", str(subject_id))
        object.__setattr__(self, "teeth", frozen)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(self.teeth)

    def __getitem__(self, label) -> np.ndarray:
        return self.teeth[validate_label(label)]

    def without(self, labels: Iterable[int]) -> "DentalModel":
        drop = set(validate_labels(labels))
        return DentalModel(self.subject_id, {k: v for k, v in self.teeth.items() if k not in drop})

    def transformed(self, t: RigidTransform) -> "DentalModel":
        return DentalModel(self.subject_id, {k: apply_transform(t, v) for k, v in self.teeth.items()})


@dataclass(frozen=True, init=False)
class CorrespondedTooth:
    """A tooth cloud whose point k matches template point k."""

    label: int
    cloud: np.ndarray

    def __init__(self, label, cloud):
        arr = as_cloud(cloud, "corresponded tooth").copy()
        arr.setflags(write=False)
        object.__setattr__(self, "label", validate_label(label))
        object.__setattr__(self, "cloud", arr)

    @property
    def t_points(self) -> int:
        return self.cloud.shape[0]


def centroid_alignment(model_teeth: Mapping[int, np.ndarray], template_teeth: Mapping[int, np.ndarray], labels) -> RigidTransform:
    """Rigid transform taking model tooth centroids onto template tooth centroids."""
    labels = sorted(validate_labels(labels))
    if len(labels) < 2:
        raise DataError(f"alignment needs at least 2 common teeth, got {labels}")
    for lab in labels:
        if lab not in model_teeth or lab not in template_teeth:
            raise DataError(f"tooth {lab} is not present in both model and template")
    src = np.array([np.asarray(model_teeth[lab]).mean(axis=0) for lab in labels])
    dst = np.array([np.asarray(template_teeth[lab]).mean(axis=0) for lab in labels])
    return procrustes_rigid(src, dst)


def align_model_to_template(model: DentalModel, template: DentalTemplate, use_labels=None) -> RigidTransform:
    """Transform mapping ``model`` into the template frame.

    Fitted on per-tooth centroids of ``use_labels`` (default: every tooth of
    the model).  Two labels give a rank-1 centroid set, which raises
    :class:`~toothsparse.errors.DegenerateInputError`.
    """
    labels = model.labels if use_labels is None else use_labels
    return centroid_alignment(model.teeth, template.teeth, labels)


def correspond_tooth(template_tooth, subject_tooth, cfg: CpdConfig | None = None) -> np.ndarray:
    """Re-index ``subject_tooth`` into template point order.

    The template tooth is deformed onto the subject tooth by CPD; each deformed
    point is then replaced by its nearest subject point (coordinates copied,
    several template points may pick the same subject point).
    """
    tpl = as_cloud(template_tooth, "template tooth")
    sub = as_cloud(subject_tooth, "subject tooth")
    deformed = cpd_nonrigid(tpl, sub, cfg).deformed
    idx, _ = kernels.nearest(sub, np.ascontiguousarray(deformed))
    return sub[idx]


def correspond_model(
    model: DentalModel,
    template: DentalTemplate,
    cfg: CpdConfig | None = None,
    labels=None,
    transform: RigidTransform | None = None,
) -> dict[int, np.ndarray]:
    """Corresponded clouds, in the template frame, for the model's teeth.

    ``labels`` restricts which teeth are corresponded (default all present);
    ``transform`` overrides the model-to-template alignment, which otherwise
    uses every present tooth.
    """
    if transform is None:
        if len(model.labels) < 2:
            raise DataError("correspondence needs a model with at least 2 teeth")
        transform = align_model_to_template(model, template)
    todo = model.labels if labels is None else sorted(validate_labels(labels))
    for lab in todo:
        if lab not in model.teeth:
            raise DataError(f"tooth {lab} is not present in model {model.subject_id!r}")

    def one(lab):
        return correspond_tooth(template[lab], apply_transform(transform, model[lab]), cfg)

    return dict(zip(todo, ordered_map(one, todo)))
