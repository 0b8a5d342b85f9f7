"""Per-tooth coordinate dictionaries and their binary container.

A tooth dictionary for a tooth with ``T`` template points over ``N`` subjects
is a ``(3T, N)`` matrix; column ``j`` holds subject ``j``'s corresponded cloud
flattened point by point, so rows ``3k .. 3k+2`` are point ``k``.

File layout (all integers little-endian)::

    b"TDS1" | uint32 manifest length | UTF-8 JSON manifest
    | float64 blocks, row-major, at manifest offsets | uint64 FNV-1a of all preceding bytes
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .correspondence import CorrespondedTooth
from .errors import ChecksumError, DataError, FormatError
from .teeth import ALL_LABELS, validate_label, validate_labels

MAGIC = b"TDS1"
FORMAT_VERSION = 1


@dataclass(frozen=True, init=False)
class ToothDictionary:
    label: int
    data: np.ndarray
    subject_ids: tuple[str, ...]

    def __init__(self, label, data, subject_ids: Sequence[str]):
        arr = np.array(data, dtype=np.float64, order="C")
        ids = tuple(str(s) for s in subject_ids)
        if arr.ndim != 2 or arr.shape[0] % 3 or arr.shape[0] == 0:
            raise DataError(f"dictionary must be (3T, N) with T >= 1, got {arr.shape}")
        if arr.shape[1] != len(ids) or not ids:
            raise DataError(f"dictionary has {arr.shape[1]} columns but {len(ids)} subject ids")
        if not np.isfinite(arr).all():
            raise DataError("dictionary entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "label", validate_label(label))
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "subject_ids", ids)

    @property
    def t_points(self) -> int:
        return self.data.shape[0] // 3

    @property
    def n_subjects(self) -> int:
        return self.data.shape[1]

    def column_cloud(self, j: int) -> np.ndarray:
        """Subject ``j``'s cloud, de-interleaved to ``(T, 3)``."""
        return self.data[:, j].reshape(-1, 3)

    def reconstruct(self, coefficients) -> np.ndarray:
        """``D @ C`` as a ``(T, 3)`` cloud."""
        return (self.data @ np.asarray(coefficients, dtype=np.float64)).reshape(-1, 3)


def build_dictionary(teeth: Sequence[CorrespondedTooth], subject_ids: Sequence[str] | None = None) -> ToothDictionary:
    """Stack corresponded clouds of one tooth type as dictionary columns.

    ``subject_ids`` defaults to ``"0", "1", ...`` in input order.
    """
    if not teeth:
        raise DataError("cannot build a dictionary from zero subjects")
    label = teeth[0].label
    t = teeth[0].t_points
    for tooth in teeth:
        if tooth.label != label:
            raise DataError(f"label mismatch: {tooth.label} in a dictionary for {label}")
        if tooth.t_points != t:
            raise DataError(f"tooth {label}: point count {tooth.t_points} differs from {t}")
    ids = [str(i) for i in range(len(teeth))] if subject_ids is None else list(subject_ids)
    if len(ids) != len(teeth):
        raise DataError("one subject id per tooth is required")
    data = np.stack([tooth.cloud.reshape(-1) for tooth in teeth], axis=1)
    return ToothDictionary(label, data, ids)


@dataclass(frozen=True, init=False)
class DictionarySet:
    """All 28 tooth dictionaries over one shared subject ordering.

    ``metadata`` is free-form JSON-serialisable provenance (e.g. the cohort
    and split the dictionaries were built from).
    """

    dictionaries: Mapping[int, ToothDictionary]
    subject_ids: tuple[str, ...]
    metadata: Mapping = field(default_factory=dict)

    def __init__(self, dictionaries: Mapping, metadata: Mapping | None = None):
        d = {validate_label(k): v for k, v in dictionaries.items()}
        if tuple(sorted(d)) != ALL_LABELS:
            missing = sorted(set(ALL_LABELS) - set(d))
            raise DataError(f"a dictionary set needs all 28 teeth; missing {missing}")
        ids = None
        for lab, dic in d.items():
            if dic.label != lab:
                raise DataError(f"dictionary for {dic.label} stored under {lab}")
            if ids is None:
                ids = dic.subject_ids
            elif dic.subject_ids != ids:
                raise DataError(f"tooth {lab}: subject ordering differs from the rest of the set")
        object.__setattr__(self, "dictionaries", MappingProxyType(dict(sorted(d.items()))))
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "metadata", MappingProxyType(dict(metadata or {})))

    def __getitem__(self, label) -> ToothDictionary:
        return self.dictionaries[validate_label(label)]

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)


def build_dictionary_set(subjects: Sequence[tuple[str, Mapping[int, np.ndarray]]],
                         metadata: Mapping | None = None) -> DictionarySet:
    """Dictionaries for all 28 teeth from ``(subject_id, {label: cloud})`` pairs.

    Every subject must provide all 28 corresponded clouds in the template frame.
    """
    subjects = list(subjects)
    if not subjects:
        raise DataError("cannot build dictionaries from zero subjects")
    per_label = {lab: [] for lab in ALL_LABELS}
    for sid, teeth in subjects:
        absent = sorted(set(ALL_LABELS) - set(teeth))
        if absent:
            raise DataError(f"subject {sid!r} lacks teeth {absent}")
        for lab in ALL_LABELS:
            per_label[lab].append(CorrespondedTooth(lab, teeth[lab]))
    ids = [sid for sid, _ in subjects]
    return DictionarySet({lab: build_dictionary(per_label[lab], ids) for lab in ALL_LABELS}, metadata)


def stack_dictionaries(dset: DictionarySet, labels: Sequence[int]) -> np.ndarray:
    """Vertically concatenate the dictionaries of ``labels`` in the given order."""
    labels = list(labels)
    if not labels:
        raise DataError("no labels to stack")
    for lab in validate_labels(labels):
        if lab not in dset.dictionaries:
            raise DataError(f"unknown tooth {lab}")
    return np.vstack([dset[lab].data for lab in labels])


def dictionary_set_bytes(dset: DictionarySet) -> bytes:
    offsets = {}
    pos = 0
    for lab, dic in dset.dictionaries.items():
        offsets[str(lab)] = pos
        pos += dic.data.size * 8
    manifest = {
        "version": FORMAT_VERSION,
        "subject_ids": list(dset.subject_ids),
        "labels": list(dset.dictionaries),
        "t_points": {str(lab): dic.t_points for lab, dic in dset.dictionaries.items()},
        "offsets": offsets,
        "metadata": dict(dset.metadata),
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray(MAGIC)
    body += struct.pack("<I", len(mbytes))
    body += mbytes
    for dic in dset.dictionaries.values():
        body += dic.data.astype("<f8", copy=False).tobytes(order="C")
    body += struct.pack("<Q", kernels.fnv1a64(np.frombuffer(bytes(body), dtype=np.uint8)))
    return bytes(body)


def save_dictionary_set(dset: DictionarySet, path) -> None:
    Path(path).write_bytes(dictionary_set_bytes(dset))


def parse_dictionary_set(blob: bytes) -> DictionarySet:
    """Decode and validate a TDS1 byte string."""
    if len(blob) < 4 + 4 + 8:
        raise FormatError("dictionary file is truncated")
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}; not a dictionary set")
    (mlen,) = struct.unpack_from("<I", blob, 4)
    data_start = 8 + mlen
    if data_start + 8 > len(blob):
        raise FormatError("dictionary file is truncated (manifest)")
    (stored,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    actual = kernels.fnv1a64(np.frombuffer(blob, dtype=np.uint8, count=len(blob) - 8))
    if stored != actual:
        raise ChecksumError(f"checksum mismatch: stored {stored:016x}, computed {actual:016x}")
    try:
        manifest = json.loads(blob[8:data_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable manifest: {exc}") from None
    if not isinstance(manifest, dict):
        raise FormatError("manifest must be a JSON object")
    if manifest.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported dictionary format version {manifest.get('version')!r}")
    try:
        ids = [str(s) for s in manifest["subject_ids"]]
        labels = [int(x) for x in manifest["labels"]]
        t_points = {int(k): int(v) for k, v in manifest["t_points"].items()}
        offsets = {int(k): int(v) for k, v in manifest["offsets"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"manifest is missing or has malformed fields: {exc}") from None
    if sorted(labels) != list(ALL_LABELS):
        raise FormatError(f"dictionary set must hold all 28 teeth, found {len(set(labels))}")
    data_end = len(blob) - 8
    n = len(ids)
    dicts = {}
    for lab in labels:
        if lab not in t_points or lab not in offsets:
            raise FormatError(f"manifest lacks size or offset for tooth {lab}")
        nbytes = 3 * t_points[lab] * n * 8
        start = data_start + offsets[lab]
        if offsets[lab] < 0 or start + nbytes > data_end:
            raise FormatError(f"data block for tooth {lab} runs past the end of the file")
        arr = np.frombuffer(blob, dtype="<f8", count=3 * t_points[lab] * n, offset=start)
        dicts[lab] = ToothDictionary(lab, arr.astype(np.float64).reshape(3 * t_points[lab], n), ids)
    return DictionarySet(dicts, manifest.get("metadata") or {})


def load_dictionary_set(path) -> DictionarySet:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read dictionary file {path}: {exc}") from None
    return parse_dictionary_set(blob)
