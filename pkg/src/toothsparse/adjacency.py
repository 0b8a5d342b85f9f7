"""Support-teeth selection on the 2x14 teeth matrix.

Missing teeth span columns ``[lo, hi]``; support is every present tooth, in
either row, whose column lies in ``[lo - t, hi + t]``.  Columns that fall off
the matrix edge wrap to the opposite end (column ``c <= 0`` becomes
``c + 14``, column ``c > 14`` becomes ``c - 14``), so a missing second molar
borrows support from the opposite second molar.
"""
from __future__ import annotations

from typing import Iterable

from .errors import DataError, NoSupportError
from .teeth import LOWER_ROW, N_COLUMNS, UPPER_ROW, label_to_pos, validate_labels


def candidate_columns(lo: int, hi: int, t: int) -> list[int]:
    """Candidate columns in output order: unwrapped ascending, then wrapped ascending."""
    direct = [c for c in range(lo - t, hi + t + 1) if 1 <= c <= N_COLUMNS]
    wrapped = []
    for c in range(lo - t, hi + t + 1):
        if c <= 0:
            wrapped.append(c + N_COLUMNS)
        elif c > N_COLUMNS:
            wrapped.append(c - N_COLUMNS)
    seen = set(direct)
    out = list(direct)
    for c in sorted(wrapped):
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def resolve_adjacent(missing: Iterable[int], present: Iterable[int], t: int = 1) -> list[int]:
    """Ordered support labels for predicting ``missing``.

    Within a column the upper tooth precedes the lower one.

    Raises
    ------
    DataError
        Empty ``missing``, ``t < 1``, or ``missing`` overlaps ``present``.
    NoSupportError
        No present tooth falls in the candidate columns.
    """
    miss = set(validate_labels(missing))
    pres = set(validate_labels(present))
    if not miss:
        raise DataError("at least one missing tooth is required")
    if int(t) != t or t < 1:
        raise DataError(f"adjacency radius must be an integer >= 1, got {t}")
    overlap = miss & pres
    if overlap:
        raise DataError(f"teeth {sorted(overlap)} are listed as both missing and present")
    cols = [label_to_pos(lab).column for lab in miss]
    out = []
    for c in candidate_columns(min(cols), max(cols), int(t)):
        for row in (UPPER_ROW, LOWER_ROW):
            lab = row[c - 1]
            if lab in pres:
                out.append(lab)
    if not out:
        raise NoSupportError(f"no present teeth adjacent to missing {sorted(miss)}")
    return out
