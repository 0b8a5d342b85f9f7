"""Prediction metrics, experiment sweeps and report tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .correspondence import CorrespondedTooth, DentalModel, DentalTemplate
from .dictionary import DictionarySet
from .errors import DataError
from .geometry import apply_transform, as_cloud, chamfer_mean, procrustes_rigid
from .parallel import ordered_map
from .predictor import PredictionConfig, predict
from .teeth import ALL_LABELS, validate_labels

CSV_HEADER = ("pattern", "tooth", "subject_id", "prediction_error_mm", "shape_error_mm")
DETAIL_HEADER = CSV_HEADER + (
    "first_iteration_error_mm", "baseline_error_mm", "iterations", "relaxed", "converged",
)

TABLE2 = (
    (12, 11),
    (13, 12, 11),
    (14, 13, 12, 11),
    (15, 14, 13, 12, 11),
    (16, 15, 14, 13, 12, 11),
    (17, 16, 15, 14, 13, 12, 11),
)
TABLE3 = (
    (11, 41),
    (12, 11, 41, 42),
    (13, 12, 11, 41, 42, 43),
    (14, 13, 12, 11, 41, 42, 43, 44),
    (15, 14, 13, 12, 11, 41, 42, 43, 44, 45),
    (16, 15, 14, 13, 12, 11, 41, 42, 43, 44, 45, 46),
    (17, 16, 15, 14, 13, 12, 11, 41, 42, 43, 44, 45, 46, 47),
)
NAMED_PATTERNS = {"table2": TABLE2, "table3": TABLE3}


def _pair(predicted, truth) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(predicted, CorrespondedTooth) and isinstance(truth, CorrespondedTooth):
        if predicted.label != truth.label:
            raise DataError(f"comparing tooth {predicted.label} with tooth {truth.label}")
    p = as_cloud(getattr(predicted, "cloud", predicted), "predicted")
    t = as_cloud(getattr(truth, "cloud", truth), "truth")
    if p.shape != t.shape:
        raise DataError(f"point counts differ: {p.shape[0]} vs {t.shape[0]}")
    return p, t


def prediction_error(predicted, truth) -> float:
    """Mean distance between index-matched points, mm."""
    p, t = _pair(predicted, truth)
    return float(np.mean(np.linalg.norm(p - t, axis=1)))


def shape_error(predicted, truth) -> float:
    """Chamfer distance between ``predicted`` and ``truth`` with rigid motion removed.

    ``predicted`` is aligned onto ``truth`` by index-wise Procrustes.  That fit
    minimises squared point distances, not Chamfer distance, so on clouds that
    are already nearly aligned it can land marginally worse than no motion at
    all; the smaller of the aligned and unaligned distances is returned.  The
    unaligned Chamfer distance never exceeds :func:`prediction_error`, hence
    neither does this.
    """
    p, t = _pair(predicted, truth)
    aligned = apply_transform(procrustes_rigid(p, t), p)
    return min(chamfer_mean(aligned, t), chamfer_mean(p, t))


@dataclass(frozen=True)
class EvalSubject:
    """A complete model plus ground-truth corresponded clouds in its own frame."""

    model: DentalModel
    truth: Mapping[int, np.ndarray]

    @property
    def subject_id(self) -> str:
        return self.model.subject_id


@dataclass(frozen=True)
class ResultRow:
    pattern: tuple[int, ...]
    tooth: int
    subject_id: str
    prediction_error: float
    shape_error: float
    first_iteration_error: float
    baseline_error: float
    iterations: int
    relaxed: bool
    converged: bool


def pattern_name(pattern: Sequence[int]) -> str:
    return " ".join(str(x) for x in pattern)


@dataclass(frozen=True)
class ToothSummary:
    n: int
    prediction_mean: float
    prediction_std: float
    shape_mean: float
    shape_std: float
    first_iteration_mean: float
    baseline_mean: float


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[ResultRow, ...]
    patterns: tuple[tuple[int, ...], ...]
    split: Mapping = field(default_factory=dict)
    config: Mapping = field(default_factory=dict)

    def summary(self) -> dict[tuple[tuple[int, ...], int], ToothSummary]:
        """Per (pattern, tooth) means and sample standard deviations.

        Rows are reduced in subject-id order so the result does not depend on
        evaluation order.
        """
        groups: dict = {}
        for row in sorted(self.rows, key=lambda r: r.subject_id):
            groups.setdefault((row.pattern, row.tooth), []).append(row)
        out = {}
        for pattern in self.patterns:
            for tooth in pattern:
                rows = groups.get((pattern, tooth), [])
                if not rows:
                    continue
                pm, ps = _mean_std([r.prediction_error for r in rows])
                sm, ss = _mean_std([r.shape_error for r in rows])
                fm, _ = _mean_std([r.first_iteration_error for r in rows])
                bm, _ = _mean_std([r.baseline_error for r in rows])
                out[(pattern, tooth)] = ToothSummary(len(rows), pm, ps, sm, ss, fm, bm)
        return out

    def mean(self, attr: str = "prediction_error", pattern=None) -> float:
        vals = [getattr(r, attr) for r in sorted(self.rows, key=lambda r: (r.subject_id, r.pattern, r.tooth))
                if pattern is None or r.pattern == tuple(pattern)]
        return math.fsum(vals) / len(vals)

    def shape_violations(self) -> int:
        """Rows where shape error exceeds prediction error (beyond rounding)."""
        return sum(r.shape_error > r.prediction_error + 1e-12 for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([pattern_name(r.pattern), r.tooth, r.subject_id, repr(r.prediction_error), repr(r.shape_error)])
        return buf.getvalue()

    def details_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DETAIL_HEADER)
        for r in self.rows:
            w.writerow([pattern_name(r.pattern), r.tooth, r.subject_id, repr(r.prediction_error),
                        repr(r.shape_error), repr(r.first_iteration_error), repr(r.baseline_error),
                        r.iterations, int(r.relaxed), int(r.converged)])
        return buf.getvalue()

    def summary_text(self) -> str:
        summ = self.summary()
        lines = []
        single = all(len(p) == 1 for p in self.patterns)
        if single:
            lines.append("Single missing tooth: prediction and shape error (mm), mean +- sd")
            lines.append(f"{'tooth':>5}  {'n':>4}  {'prediction':>17}  {'shape':>17}  {'first iter':>10}  {'copy template':>13}")
            for pattern in self.patterns:
                s = summ.get((pattern, pattern[0]))
                if s is None:
                    continue
                lines.append(f"{pattern[0]:>5}  {s.n:>4}  {s.prediction_mean:8.4f} +- {s.prediction_std:6.4f}"
                             f"  {s.shape_mean:8.4f} +- {s.shape_std:6.4f}  {s.first_iteration_mean:10.4f}"
                             f"  {s.baseline_mean:13.4f}")
        else:
            lines.append("Multiple missing teeth: per-tooth mean error (mm)")
            for pattern in self.patterns:
                cells = [summ.get((pattern, t)) for t in pattern]
                if any(c is None for c in cells):
                    continue
                lines.append("teeth       " + "".join(f"{t:>8}" for t in pattern))
                lines.append("prediction  " + "".join(f"{c.prediction_mean:8.3f}" for c in cells))
                lines.append("shape       " + "".join(f"{c.shape_mean:8.3f}" for c in cells))
                lines.append("")
        if self.rows:
            lines.append(f"mean prediction error {self.mean('prediction_error'):.4f} mm, "
                         f"mean shape error {self.mean('shape_error'):.4f} mm over {len(self.rows)} rows")
            lines.append(f"shape error above prediction error in {self.shape_violations()} rows")
        return "\n".join(lines).rstrip() + "\n"


def evaluate_case(subject: EvalSubject, pattern: Sequence[int], dicts: DictionarySet,
                  template: DentalTemplate, config: PredictionConfig) -> list[ResultRow]:
    pattern = tuple(validate_labels(pattern))
    for lab in pattern:
        if lab not in subject.truth:
            raise DataError(f"subject {subject.subject_id!r} has no ground truth for tooth {lab}")
    model = subject.model.without(pattern)
    result = predict(model, pattern, dicts, template, config, truth=subject.truth)
    first = result.iterations[0]
    back = first.transform.inverse()
    relaxed = any(rec.relaxed for rec in result.iterations)
    converged = all(rec.converged for rec in result.iterations)
    rows = []
    for lab in pattern:
        truth = np.asarray(subject.truth[lab])
        pred = result.predicted_subject[lab]
        rows.append(ResultRow(
            pattern=pattern,
            tooth=lab,
            subject_id=subject.subject_id,
            prediction_error=prediction_error(pred, truth),
            shape_error=shape_error(pred, truth),
            first_iteration_error=first.truth_error[lab],
            baseline_error=prediction_error(apply_transform(back, template[lab]), truth),
            iterations=len(result.iterations),
            relaxed=relaxed,
            converged=converged,
        ))
    return rows


def run_pattern_experiments(subjects: Sequence[EvalSubject], template: DentalTemplate, dicts: DictionarySet,
                            patterns: Sequence[Sequence[int]], config: PredictionConfig | None = None,
                            split: Mapping | None = None, allow_overlap: bool = False) -> MetricsReport:
    """Remove each pattern from every subject, predict, and score.

    Test subjects must not be dictionary subjects unless ``allow_overlap``.
    """
    config = config or PredictionConfig()
    patterns = tuple(tuple(validate_labels(p)) for p in patterns)
    if not patterns:
        raise DataError("no patterns given")
    train = set(dicts.subject_ids)
    for s in subjects:
        if s.subject_id in train and not allow_overlap:
            raise DataError(f"test subject {s.subject_id!r} is also a dictionary subject")
    cases = [(p, s) for p in patterns for s in subjects]
    results = ordered_map(lambda c: evaluate_case(c[1], c[0], dicts, template, config), cases)
    rows = tuple(r for rs in results for r in rs)
    return MetricsReport(rows, patterns, dict(split or {}), config.to_dict())


def run_single_missing_sweep(subjects: Sequence[EvalSubject], template: DentalTemplate, dicts: DictionarySet,
                             config: PredictionConfig | None = None, split: Mapping | None = None,
                             allow_overlap: bool = False) -> MetricsReport:
    """One experiment per tooth type: that tooth removed from every test subject."""
    return run_pattern_experiments(subjects, template, dicts, [(lab,) for lab in ALL_LABELS], config, split,
                                   allow_overlap)


def parse_patterns(text: str) -> list[tuple[int, ...]]:
    """One pattern per line, comma-separated labels; blank lines and ``#`` comments ignored."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if any(not p for p in parts):
            raise DataError(f"empty label in pattern line {line!r}")
        out.append(tuple(validate_labels(parts)))
    if not out:
        raise DataError("pattern file contains no patterns")
    return out
