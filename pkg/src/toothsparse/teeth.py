"""FDI tooth labels and the 2x14 teeth matrix."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import DataError

UPPER = "upper"
LOWER = "lower"

UPPER_ROW = (17, 16, 15, 14, 13, 12, 11, 21, 22, 23, 24, 25, 26, 27)
LOWER_ROW = (47, 46, 45, 44, 43, 42, 41, 31, 32, 33, 34, 35, 36, 37)
N_COLUMNS = 14

#: All 28 labels in FDI order (third molars excluded).
ALL_LABELS = tuple(sorted(UPPER_ROW + LOWER_ROW))

_POS = {lab: (UPPER, i + 1) for i, lab in enumerate(UPPER_ROW)}
_POS.update({lab: (LOWER, i + 1) for i, lab in enumerate(LOWER_ROW)})


@dataclass(frozen=True, order=True)
class TeethMatrixPos:
    row: str
    column: int

    def __post_init__(self):
        if self.row not in (UPPER, LOWER):
            raise DataError(f"row must be 'upper' or 'lower', got {self.row!r}")
        if not isinstance(self.column, int) or not 1 <= self.column <= N_COLUMNS:
            raise DataError(f"column must be an integer in 1..14, got {self.column!r}")


def validate_label(label) -> int:
    """Return ``label`` as an int, raising :class:`DataError` if it is not one of the 28."""
    try:
        lab = int(label)
    except (TypeError, ValueError):
        raise DataError(f"not a tooth label: {label!r}") from None
    if isinstance(label, float) and label != lab:
        raise DataError(f"not a tooth label: {label!r}")
    if lab not in _POS:
        if lab in (18, 28, 38, 48):
            raise DataError(f"third molar {lab} is not supported")
        raise DataError(f"not an FDI label: {label!r}")
    return lab


def validate_labels(labels: Iterable) -> list[int]:
    out = [validate_label(x) for x in labels]
    if len(set(out)) != len(out):
        raise DataError(f"duplicate tooth labels in {out}")
    return out


def quadrant(label: int) -> int:
    return validate_label(label) // 10


def label_to_pos(label) -> TeethMatrixPos:
    row, col = _POS[validate_label(label)]
    return TeethMatrixPos(row, col)


def pos_to_label(pos: TeethMatrixPos) -> int:
    if not isinstance(pos, TeethMatrixPos):
        pos = TeethMatrixPos(*pos)
    row = UPPER_ROW if pos.row == UPPER else LOWER_ROW
    return row[pos.column - 1]


def parse_labels(text: str) -> list[int]:
    """Parse a comma-separated list such as ``"14,15"``."""
    parts = [p.strip() for p in text.split(",")]
    if not text.strip() or any(not p for p in parts):
        raise DataError(f"empty tooth label in {text!r}")
    return validate_labels(parts)
