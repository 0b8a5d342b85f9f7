import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toothsparse.adjacency import candidate_columns, resolve_adjacent
from toothsparse.errors import DataError, NoSupportError
from toothsparse.teeth import ALL_LABELS, TeethMatrixPos, label_to_pos, pos_to_label

# Worked out by hand from the column rule with t = 1 and every other tooth
# present: columns c-1..c+1, upper before lower, wrapped columns last.
SINGLE_MISSING = {
    17: [47, 16, 46, 27, 37],
    16: [17, 47, 46, 15, 45],
    15: [16, 46, 45, 14, 44],
    14: [15, 45, 44, 13, 43],
    13: [14, 44, 43, 12, 42],
    12: [13, 43, 42, 11, 41],
    11: [12, 42, 41, 21, 31],
    21: [11, 41, 31, 22, 32],
    22: [21, 31, 32, 23, 33],
    23: [22, 32, 33, 24, 34],
    24: [23, 33, 34, 25, 35],
    25: [24, 34, 35, 26, 36],
    26: [25, 35, 36, 27, 37],
    27: [26, 36, 37, 17, 47],
    47: [17, 16, 46, 27, 37],
    46: [17, 47, 16, 15, 45],
    45: [16, 46, 15, 14, 44],
    44: [15, 45, 14, 13, 43],
    43: [14, 44, 13, 12, 42],
    42: [13, 43, 12, 11, 41],
    41: [12, 42, 11, 21, 31],
    31: [11, 41, 21, 22, 32],
    32: [21, 31, 22, 23, 33],
    33: [22, 32, 23, 24, 34],
    34: [23, 33, 24, 25, 35],
    35: [24, 34, 25, 26, 36],
    36: [25, 35, 26, 27, 37],
    37: [26, 36, 27, 17, 47],
}

FOURTEEN_MISSING = [17, 16, 15, 14, 13, 12, 11, 41, 42, 43, 44, 45, 46, 47]


def others(missing):
    return [lab for lab in ALL_LABELS if lab not in set(missing)]


@pytest.mark.parametrize("missing", sorted(SINGLE_MISSING))
def test_single_missing_table(missing):
    assert resolve_adjacent([missing], others([missing]), t=1) == SINGLE_MISSING[missing]


def test_two_premolars():
    assert resolve_adjacent([14, 15], others([14, 15])) == [16, 46, 45, 44, 13, 43]


def test_fourteen_missing():
    assert resolve_adjacent(FOURTEEN_MISSING, others(FOURTEEN_MISSING)) == [21, 31, 27, 37]


def test_candidate_columns():
    assert candidate_columns(1, 1, 1) == [1, 2, 14]
    assert candidate_columns(14, 14, 1) == [13, 14, 1]
    assert candidate_columns(5, 6, 2) == [3, 4, 5, 6, 7, 8]
    assert candidate_columns(1, 7, 1) == [1, 2, 3, 4, 5, 6, 7, 8, 14]
    # both borders wrap into columns already covered
    assert candidate_columns(1, 14, 1) == list(range(1, 15))


def test_absent_candidates_are_skipped():
    present = [lab for lab in others([17]) if lab not in (47, 27)]
    assert resolve_adjacent([17], present) == [16, 46, 37]


def test_larger_radius():
    assert resolve_adjacent([11], others([11]), t=2) == [13, 43, 12, 42, 41, 21, 31, 22, 32]


def test_errors():
    with pytest.raises(DataError):
        resolve_adjacent([], ALL_LABELS)
    with pytest.raises(DataError):
        resolve_adjacent([11], ALL_LABELS)
    with pytest.raises(DataError):
        resolve_adjacent([11], others([11]), t=0)
    with pytest.raises(DataError):
        resolve_adjacent([18], others([11]))
    with pytest.raises(NoSupportError):
        resolve_adjacent([11], [17, 27])


def mirror(lab):
    p = label_to_pos(lab)
    return pos_to_label(TeethMatrixPos(p.row, 15 - p.column))


label_sets = st.lists(st.sampled_from(ALL_LABELS), min_size=1, max_size=28, unique=True)


@settings(max_examples=300, deadline=None)
@given(missing=label_sets, keep=st.lists(st.booleans(), min_size=28, max_size=28), t=st.integers(1, 4))
def test_resolver_properties(missing, keep, t):
    present = [lab for lab, k in zip(ALL_LABELS, keep) if k and lab not in missing]
    try:
        out = resolve_adjacent(missing, present, t)
    except NoSupportError:
        out = None
    try:
        mirrored = resolve_adjacent([mirror(x) for x in missing], [mirror(x) for x in present], t)
    except NoSupportError:
        mirrored = None
    if out is None:
        assert mirrored is None
        return
    assert set(out) <= set(present)
    assert not set(out) & set(missing)
    assert len(out) == len(set(out))
    assert out == resolve_adjacent(missing, present, t)
    assert sorted(mirror(x) for x in out) == sorted(mirrored)


@pytest.mark.parametrize("missing", ALL_LABELS)
def test_single_missing_has_same_row_neighbour(missing):
    out = resolve_adjacent([missing], others([missing]))
    p = label_to_pos(missing)
    neighbours = {c for c in (p.column - 1, p.column + 1) if 1 <= c <= 14}
    assert any(label_to_pos(x).row == p.row and label_to_pos(x).column in neighbours for x in out)
