import json
import struct

import numpy as np
import pytest

from toothsparse.correspondence import CorrespondedTooth
from toothsparse.dictionary import (
    DictionarySet, ToothDictionary, build_dictionary, build_dictionary_set, dictionary_set_bytes,
    load_dictionary_set, parse_dictionary_set, save_dictionary_set, stack_dictionaries,
)
from toothsparse.errors import ChecksumError, DataError, FormatError
from toothsparse.teeth import ALL_LABELS


def tiny_set(rng, n=3, t=2):
    return build_dictionary_set(
        [(f"s{j}", {lab: rng.normal(size=(t, 3)) for lab in ALL_LABELS}) for j in range(n)],
        metadata={"note": "tiny"})


def test_layout_two_subjects_two_points():
    a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    b = np.array([[7.0, 8.0, 9.0], [10.0, 11.0, 12.0]])
    d = build_dictionary([CorrespondedTooth(11, a), CorrespondedTooth(11, b)], ["a", "b"])
    expected = np.array([[1, 7], [2, 8], [3, 9], [4, 10], [5, 11], [6, 12]], dtype=float)
    np.testing.assert_array_equal(d.data, expected)
    assert d.t_points == 2 and d.n_subjects == 2
    assert d.subject_ids == ("a", "b")


def test_single_subject_is_flattened_cloud():
    a = np.arange(12.0).reshape(4, 3)
    d = build_dictionary([CorrespondedTooth(36, a)])
    np.testing.assert_array_equal(d.data[:, 0], a.reshape(-1))
    assert d.subject_ids == ("0",)


def test_column_round_trip_and_reconstruct(rng):
    clouds = [rng.normal(size=(5, 3)) for _ in range(4)]
    d = build_dictionary([CorrespondedTooth(22, c) for c in clouds])
    for j, c in enumerate(clouds):
        np.testing.assert_array_equal(d.column_cloud(j), c)
    coef = rng.normal(size=4)
    np.testing.assert_allclose(d.reconstruct(coef), sum(w * c for w, c in zip(coef, clouds)), atol=1e-12)
    assert not d.data.flags.writeable


def test_build_errors(rng):
    with pytest.raises(DataError):
        build_dictionary([])
    with pytest.raises(DataError):
        build_dictionary([CorrespondedTooth(11, np.ones((2, 3))), CorrespondedTooth(12, np.ones((2, 3)))])
    with pytest.raises(DataError):
        build_dictionary([CorrespondedTooth(11, np.ones((2, 3))), CorrespondedTooth(11, np.ones((3, 3)))])
    with pytest.raises(DataError):
        build_dictionary([CorrespondedTooth(11, np.ones((2, 3)))], ["a", "b"])
    with pytest.raises(DataError):
        ToothDictionary(11, np.ones((4, 1)), ["a"])
    with pytest.raises(DataError):
        ToothDictionary(11, np.full((3, 1), np.nan), ["a"])


def test_stack_in_requested_order(rng):
    dset = tiny_set(rng)
    stacked = stack_dictionaries(dset, [47, 16])
    np.testing.assert_array_equal(stacked, np.vstack([dset[47].data, dset[16].data]))
    with pytest.raises(DataError):
        stack_dictionaries(dset, [])
    with pytest.raises(DataError):
        stack_dictionaries(dset, [18])


def test_set_requires_all_teeth_and_shared_order(rng):
    dset = tiny_set(rng)
    partial = dict(dset.dictionaries)
    partial.pop(36)
    with pytest.raises(DataError):
        DictionarySet(partial)
    shuffled = dict(dset.dictionaries)
    d = shuffled[11]
    shuffled[11] = ToothDictionary(11, d.data, tuple(reversed(d.subject_ids)))
    with pytest.raises(DataError):
        DictionarySet(shuffled)
    with pytest.raises(DataError, match=r"\[36\]"):
        build_dictionary_set([("x", {lab: np.ones((2, 3)) for lab in ALL_LABELS if lab != 36})])
    with pytest.raises(DataError):
        build_dictionary_set([])


def test_tds_round_trip_is_bit_exact(rng, tmp_path):
    dset = tiny_set(rng, n=4, t=3)
    path = tmp_path / "d.tds"
    save_dictionary_set(dset, path)
    back = load_dictionary_set(path)
    assert back.subject_ids == dset.subject_ids
    assert dict(back.metadata) == {"note": "tiny"}
    for lab in ALL_LABELS:
        assert back[lab].data.tobytes() == dset[lab].data.tobytes()
    assert dictionary_set_bytes(back) == path.read_bytes()


def test_tds_header_layout(rng):
    blob = dictionary_set_bytes(tiny_set(rng))
    assert blob[:4] == b"TDS1"
    (mlen,) = struct.unpack_from("<I", blob, 4)
    manifest = json.loads(blob[8:8 + mlen])
    assert manifest["version"] == 1
    assert len(blob) == 8 + mlen + 28 * 3 * 2 * 3 * 8 + 8


@pytest.mark.parametrize("where", ["header", "manifest", "data", "checksum"])
def test_tds_single_byte_corruption_detected(rng, where):
    blob = bytearray(dictionary_set_bytes(tiny_set(rng)))
    (mlen,) = struct.unpack_from("<I", blob, 4)
    pos = {"header": 2, "manifest": 10, "data": 8 + mlen + 17, "checksum": len(blob) - 3}[where]
    blob[pos] ^= 0x40
    with pytest.raises((ChecksumError, FormatError)):
        parse_dictionary_set(bytes(blob))


def test_tds_data_corruption_is_checksum_error(rng):
    blob = bytearray(dictionary_set_bytes(tiny_set(rng)))
    blob[-20] ^= 0x01
    with pytest.raises(ChecksumError):
        parse_dictionary_set(bytes(blob))


def _reseal(body: bytes) -> bytes:
    from toothsparse import kernels
    return body + struct.pack("<Q", kernels.fnv1a64(np.frombuffer(body, dtype=np.uint8)))


def _with_manifest(blob: bytes, edit) -> bytes:
    (mlen,) = struct.unpack_from("<I", blob, 4)
    manifest = json.loads(blob[8:8 + mlen])
    edit(manifest)
    m = json.dumps(manifest).encode()
    return _reseal(b"TDS1" + struct.pack("<I", len(m)) + m + blob[8 + mlen:-8])


def test_tds_structural_errors(rng):
    blob = dictionary_set_bytes(tiny_set(rng))
    with pytest.raises(FormatError):
        parse_dictionary_set(blob[:10])
    with pytest.raises(FormatError):
        parse_dictionary_set(_reseal(b"XXXX" + blob[4:-8]))
    with pytest.raises(FormatError):
        parse_dictionary_set(_with_manifest(blob, lambda m: m.update(version=2)))
    with pytest.raises(FormatError):
        parse_dictionary_set(_with_manifest(blob, lambda m: m["labels"].remove(36)))
    with pytest.raises(FormatError):
        parse_dictionary_set(_with_manifest(blob, lambda m: m["offsets"].update({"47": 10**6})))
    with pytest.raises(FormatError):
        parse_dictionary_set(_reseal(blob[:-8 - 48]))


def test_missing_file(tmp_path):
    with pytest.raises(FormatError):
        load_dictionary_set(tmp_path / "absent.tds")
