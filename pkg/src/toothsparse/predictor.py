"""Iterative missing-tooth prediction by sparse coding of adjacent teeth.

Each iteration:

1. rigidly align the model to the template (first on the remaining teeth,
   later on the remaining plus the current predicted teeth);
2. correspond the support teeth and stack their coordinates into ``a``;
3. solve ``min |C|_1 s.t. |D_support C - a| <= eps``;
4. predict every missing tooth as ``D_missing @ C``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .adjacency import resolve_adjacent
from .bpdn import BpdnConfig, SparseCode, solve_bpdn
from .correspondence import DentalModel, DentalTemplate, centroid_alignment, correspond_model
from .cpd import CpdConfig
from .dictionary import DictionarySet, stack_dictionaries
from .errors import DataError, NoSupportError
from .geometry import RigidTransform, apply_transform
from .teeth import ALL_LABELS, validate_labels

EARLY_STOP_MM = 1e-3


@dataclass(frozen=True)
class PredictionConfig:
    """``relax_infeasible``: when the configured eps is below the best
    least-squares residual, re-solve at exactly that residual instead of
    failing.  The relaxation is recorded per iteration."""

    t: int = 1
    iterations: int = 3
    cpd: CpdConfig = field(default_factory=CpdConfig)
    bpdn: BpdnConfig = field(default_factory=BpdnConfig)
    relax_infeasible: bool = True
    early_stop_mm: float = EARLY_STOP_MM

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise DataError("iterations must be an integer >= 1")
        if int(self.t) != self.t or self.t < 1:
            raise DataError("t must be an integer >= 1")
        if self.early_stop_mm < 0:
            raise DataError("early_stop_mm must be >= 0")

    def to_dict(self) -> dict:
        b = self.bpdn
        return {
            "t": self.t,
            "iterations": self.iterations,
            "relax_infeasible": self.relax_infeasible,
            "early_stop_mm": self.early_stop_mm,
            "cpd": self.cpd.to_dict(),
            "bpdn": {
                "epsilon_mode": b.epsilon_mode,
                "epsilon_value": b.epsilon_value,
                "max_iterations": b.max_iterations,
                "primal_tolerance": b.primal_tolerance,
                "dual_tolerance": b.dual_tolerance,
            },
        }


@dataclass(frozen=True)
class IterationRecord:
    transform: RigidTransform  # subject frame -> template frame
    residual_norm: float
    epsilon_used: float
    relaxed: bool
    converged: bool
    movement_mm: float | None
    truth_error: Mapping[int, float] | None


@dataclass(frozen=True)
class PredictionResult:
    predicted_template: Mapping[int, np.ndarray]
    predicted_subject: Mapping[int, np.ndarray]
    sparse_code: SparseCode
    adjacent_labels: tuple[int, ...]
    iterations: tuple[IterationRecord, ...]

    @property
    def final_transform(self) -> RigidTransform:
        return self.iterations[-1].transform

    def diagnostics(self) -> dict:
        return {
            "adjacent_labels": list(self.adjacent_labels),
            "missing_labels": sorted(self.predicted_template),
            "iterations": [
                {
                    "alignment": rec.transform.to_dict(),
                    "residual_norm": rec.residual_norm,
                    "epsilon_used": rec.epsilon_used,
                    "relaxed": rec.relaxed,
                    "converged": rec.converged,
                    "movement_mm": rec.movement_mm,
                    "truth_error_mm": None if rec.truth_error is None
                    else {str(k): v for k, v in sorted(rec.truth_error.items())},
                }
                for rec in self.iterations
            ],
        }


def _mean_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def code_support(
    corresponded: Mapping[int, np.ndarray],
    dicts: DictionarySet,
    labels: Iterable[int],
    config: PredictionConfig,
) -> tuple[SparseCode, bool]:
    """Sparse code of the stacked support clouds; returns ``(code, relaxed)``."""
    labels = list(labels)
    target = np.concatenate([np.asarray(corresponded[lab]).reshape(-1) for lab in labels])
    D = stack_dictionaries(dicts, labels)
    # rows of target and dictionary must match tooth for tooth, point for point
    row = 0
    for lab in labels:
        n = dicts[lab].data.shape[0]
        if np.asarray(corresponded[lab]).size != n:
            raise DataError(f"tooth {lab}: corresponded cloud has {np.asarray(corresponded[lab]).shape[0]} points, "
                            f"dictionary expects {n // 3}")
        row += n
    if not row == D.shape[0] == target.shape[0]:
        raise DataError("stacked support and dictionary rows are misaligned")
    code = solve_bpdn(D, target, config.bpdn, relax_infeasible=config.relax_infeasible)
    return code, code.relaxed


def predict(
    model: DentalModel,
    missing: Iterable[int],
    dicts: DictionarySet,
    template: DentalTemplate,
    config: PredictionConfig | None = None,
    truth: Mapping[int, np.ndarray] | None = None,
) -> PredictionResult:
    """Predict the teeth in ``missing`` from the teeth present in ``model``.

    Parameters
    ----------
    truth : mapping, optional
        Ground-truth corresponded clouds in the subject frame; when given,
        each iteration records the mean index-wise error per missing tooth.

    Raises
    ------
    NoSupportError
        Nothing to predict from (every tooth missing, or no support teeth).
    InfeasibleError
        eps is below the least-squares residual and relaxation is disabled.
    """
    config = config or PredictionConfig()
    miss = sorted(validate_labels(missing))
    if not miss:
        raise DataError("no missing teeth given")
    if set(miss) == set(ALL_LABELS):
        raise NoSupportError("every tooth is missing; there is nothing to predict from")
    present = list(model.labels)
    overlap = set(miss) & set(present)
    if overlap:
        raise DataError(f"teeth {sorted(overlap)} are marked missing but present in the model")
    support = resolve_adjacent(miss, present, config.t)

    transform = centroid_alignment(model.teeth, template.teeth, present)
    records = []
    prev_subject = None
    code = None
    pred_t: dict[int, np.ndarray] = {}
    pred_s: dict[int, np.ndarray] = {}
    for it in range(config.iterations):
        if it > 0:
            merged = dict(model.teeth)
            merged.update(pred_s)
            transform = centroid_alignment(merged, template.teeth, sorted(merged))
        corr = correspond_model(model, template, config.cpd, labels=support, transform=transform)
        code, relaxed = code_support(corr, dicts, support, config)
        inverse = transform.inverse()
        pred_t = {lab: dicts[lab].reconstruct(code.coefficients) for lab in miss}
        pred_s = {lab: apply_transform(inverse, pred_t[lab]) for lab in miss}
        movement = None
        if prev_subject is not None:
            movement = float(np.mean([_mean_distance(pred_s[lab], prev_subject[lab]) for lab in miss]))
        truth_err = None
        if truth is not None:
            truth_err = {lab: _mean_distance(pred_s[lab], np.asarray(truth[lab])) for lab in miss if lab in truth}
        records.append(IterationRecord(transform, code.residual_norm, code.epsilon, relaxed, code.converged,
                                       movement, truth_err))
        if movement is not None and movement < config.early_stop_mm:
            break
        prev_subject = pred_s

    for d in (pred_t, pred_s):
        for arr in d.values():
            arr.setflags(write=False)
    return PredictionResult(pred_t, pred_s, code, tuple(support), tuple(records))
