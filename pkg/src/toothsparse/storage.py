"""Cohort directories and point-cloud text files.

Layout::

    COHORT/cohort.json                  {"format", "version", "subjects", "generator"}
    COHORT/template/<FDI>.xyz           + manifest.json
    COHORT/subjects/<id>/<FDI>.xyz      + manifest.json
    COHORT/subjects/<id>/truth/<FDI>.xyz   ground-truth corresponded clouds (synthetic only)

``.xyz`` files hold one ``x y z`` triple per line, written with ``repr`` so
values round-trip exactly.  JSON is written with sorted keys.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .correspondence import DentalModel, DentalTemplate
from .errors import DataError, FormatError
from .geometry import RigidTransform, as_cloud
from .teeth import validate_label

COHORT_FORMAT = "toothsparse-cohort"
COHORT_VERSION = 1


def format_xyz(points) -> str:
    pts = as_cloud(points)
    return "".join(f"{float(x)!r} {float(y)!r} {float(z)!r}\n" for x, y, z in pts.tolist())


def write_xyz(path, points) -> None:
    Path(path).write_text(format_xyz(points), encoding="utf-8")


def read_xyz(path) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
    if not rows:
        raise FormatError(f"{path}: no points")
    arr = np.array(rows, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise FormatError(f"{path}: non-finite coordinates")
    return arr


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"missing file {path}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None


def write_teeth(directory, teeth: Mapping[int, np.ndarray]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for lab in sorted(teeth):
        write_xyz(directory / f"{lab}.xyz", teeth[lab])


def read_teeth(directory, labels) -> dict[int, np.ndarray]:
    directory = Path(directory)
    return {validate_label(lab): read_xyz(directory / f"{int(lab)}.xyz") for lab in labels}


def write_model_dir(directory, subject_id: str, teeth: Mapping[int, np.ndarray], corresponded: bool, extra: dict | None = None) -> None:
    directory = Path(directory)
    write_teeth(directory, teeth)
    manifest = {"subject_id": subject_id, "labels": sorted(int(k) for k in teeth), "corresponded": bool(corresponded)}
    if extra:
        manifest.update(extra)
    write_json(directory / "manifest.json", manifest)


def read_model_dir(directory) -> tuple[dict, dict[int, np.ndarray]]:
    """Return ``(manifest, teeth)`` for a subject or template directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"not a directory: {directory}")
    manifest = read_json(directory / "manifest.json")
    if not isinstance(manifest, dict) or "labels" not in manifest or "subject_id" not in manifest:
        raise FormatError(f"{directory}/manifest.json lacks subject_id or labels")
    try:
        labels = [validate_label(x) for x in manifest["labels"]]
    except DataError as exc:
        raise FormatError(f"{directory}/manifest.json: {exc}") from None
    return manifest, read_teeth(directory, labels)


def load_model(directory) -> DentalModel:
    manifest, teeth = read_model_dir(directory)
    return DentalModel(manifest["subject_id"], teeth)


def save_template(directory, template: DentalTemplate) -> None:
    write_model_dir(directory, "template", dict(template.teeth), corresponded=True)


def load_template(directory) -> DentalTemplate:
    _, teeth = read_model_dir(directory)
    return DentalTemplate(teeth)


def load_truth(subject_dir) -> dict[int, np.ndarray] | None:
    """Ground-truth corresponded clouds in the subject frame, or ``None`` if absent."""
    tdir = Path(subject_dir) / "truth"
    if not tdir.is_dir():
        return None
    labels = sorted(int(p.stem) for p in tdir.glob("*.xyz"))
    return read_teeth(tdir, labels)


def write_cohort(directory, template: DentalTemplate, subjects, generator: dict | None = None) -> None:
    """Write a synthetic cohort (template, raw models, ground truth)."""
    directory = Path(directory)
    save_template(directory / "template", template)
    ids = []
    for s in subjects:
        sid = s.model.subject_id
        ids.append(sid)
        sdir = directory / "subjects" / sid
        extra = {"latent": [float(v) for v in s.latent], "jitter": s.jitter.to_dict()}
        write_model_dir(sdir, sid, dict(s.model.teeth), corresponded=False, extra={"ground_truth": extra})
        write_teeth(sdir / "truth", s.truth)
    write_json(directory / "cohort.json", {
        "format": COHORT_FORMAT,
        "version": COHORT_VERSION,
        "subjects": ids,
        "generator": generator,
    })


def write_corresponded_cohort(directory, entries, source: str | None = None) -> None:
    """``entries``: iterable of ``(subject_id, {label: cloud}, RigidTransform)`` in template frame."""
    directory = Path(directory)
    ids = []
    for sid, teeth, transform in entries:
        ids.append(sid)
        write_model_dir(directory / "subjects" / sid, sid, teeth, corresponded=True,
                        extra={"alignment": transform.to_dict()})
    write_json(directory / "cohort.json", {
        "format": COHORT_FORMAT,
        "version": COHORT_VERSION,
        "subjects": ids,
        "corresponded_from": source,
    })


def cohort_subject_ids(directory) -> list[str]:
    meta = read_json(Path(directory) / "cohort.json")
    if not isinstance(meta, dict) or meta.get("format") != COHORT_FORMAT:
        raise FormatError(f"{directory} is not a cohort directory")
    if meta.get("version") != COHORT_VERSION:
        raise FormatError(f"unsupported cohort version {meta.get('version')!r}")
    ids = meta.get("subjects")
    if not isinstance(ids, list) or not all(isinstance(s, str) for s in ids):
        raise FormatError("cohort.json: subjects must be a list of ids")
    return ids


def subject_dir(cohort_dir, subject_id: str) -> Path:
    return Path(cohort_dir) / "subjects" / subject_id


def read_alignment(manifest: dict) -> RigidTransform | None:
    d = manifest.get("alignment")
    return None if d is None else RigidTransform.from_dict(d)
