import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csprobe.embedstore import (
    BadMagicError,
    ContainerError,
    EmbeddingSet,
    NonFiniteValueError,
    TruncatedContainerError,
    UnsupportedVersionError,
    mean_pool,
    read_container,
    write_container,
)


def make_set(records, dim, kind="word", model="toy", layer=3):
    return EmbeddingSet(model_name=model, layer=layer, kind=kind, dim=dim, records=records)


def test_round_trip_small(tmp_path):
    rng = np.random.default_rng(0)
    records = {
        "a": rng.normal(size=(3, 4)).astype(np.float32),
        "b": rng.normal(size=(2, 4)).astype(np.float32),
    }
    path = tmp_path / "s.csem"
    write_container(make_set(records, dim=4), path)
    loaded = read_container(path)
    assert loaded.dim == 4
    assert loaded.layer == 3
    assert loaded.kind == "word"
    assert len(loaded) == 2
    for rid in records:
        assert loaded.records[rid].dtype == np.float32
        assert np.array_equal(loaded.records[rid], records[rid])


def test_rewrite_is_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    records = {f"id{i}": rng.normal(size=(i + 1, 5)).astype(np.float32) for i in range(4)}
    p1 = tmp_path / "a.csem"
    p2 = tmp_path / "b.csem"
    write_container(make_set(records, dim=5), p1)
    write_container(read_container(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_set(tmp_path):
    path = tmp_path / "empty.csem"
    write_container(make_set({}, dim=8), path)
    loaded = read_container(path)
    assert len(loaded) == 0
    assert loaded.dim == 8


def test_file_size_formula(tmp_path):
    # header + id bytes + 4 (id_len) + 4 (n_rows) + dim*4 payload per record
    dim = 768
    rec = {"x": np.zeros((1, dim), dtype=np.float32)}
    path = tmp_path / "one.csem"
    write_container(make_set(rec, dim=dim, kind="sentence_mean"), path)
    header = json.dumps(
        {"model": "toy", "layer": 3, "kind": "sentence_mean", "dim": dim, "count": 1},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    expected = 4 + 2 + 2 + 4 + len(header) + 4 + len(b"x") + 4 + dim * 4
    assert path.stat().st_size == expected


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.csem"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(BadMagicError):
        read_container(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "v9.csem"
    path.write_bytes(b"CSEM" + struct.pack("<HHI", 9, 0, 2) + b"{}")
    with pytest.raises(UnsupportedVersionError):
        read_container(path)


def test_truncated_record(tmp_path):
    path = tmp_path / "ok.csem"
    write_container(make_set({"a": np.ones((2, 3), dtype=np.float32)}, dim=3), path)
    data = path.read_bytes()
    cut = tmp_path / "cut.csem"
    cut.write_bytes(data[:-5])
    with pytest.raises(TruncatedContainerError):
        read_container(cut)


def test_corrupt_count_does_not_overallocate(tmp_path):
    # a header declaring a huge count must fail on truncation, not try to allocate
    header = json.dumps(
        {"model": "m", "layer": 0, "kind": "word", "dim": 4, "count": 2**31},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    path = tmp_path / "huge.csem"
    path.write_bytes(b"CSEM" + struct.pack("<HHI", 1, 0, len(header)) + header)
    with pytest.raises(TruncatedContainerError):
        read_container(path)


def test_nan_rejected_before_write(tmp_path):
    bad = {"a": np.array([[np.nan, 1.0]], dtype=np.float32)}
    with pytest.raises(NonFiniteValueError):
        write_container(make_set(bad, dim=2), tmp_path / "nan.csem")
    assert not (tmp_path / "nan.csem").exists()


def test_nonfinite_rejected_on_read(tmp_path):
    path = tmp_path / "inf.csem"
    write_container(make_set({"a": np.ones((1, 2), dtype=np.float32)}, dim=2), path)
    data = bytearray(path.read_bytes())
    # overwrite the float payload (last 8 bytes) with +inf
    data[-8:] = struct.pack("<ff", np.inf, 1.0)
    path.write_bytes(bytes(data))
    with pytest.raises(NonFiniteValueError):
        read_container(path)


def test_sentence_kind_requires_single_row(tmp_path):
    bad = make_set({"a": np.ones((2, 2), dtype=np.float32)}, dim=2, kind="sentence_cls")
    with pytest.raises(ContainerError):
        write_container(bad, tmp_path / "x.csem")


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "t.csem"
    write_container(make_set({}, dim=2), path)
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(ContainerError):
        read_container(path)


@st.composite
def embedding_sets(draw):
    dim = draw(st.integers(min_value=1, max_value=6))
    kind = draw(st.sampled_from(["word", "sentence_cls", "sentence_mean", "probe_matrix"]))
    n_records = draw(st.integers(min_value=0, max_value=4))
    ids = draw(
        st.lists(
            st.text(
                alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=8
            ),
            min_size=n_records,
            max_size=n_records,
            unique=True,
        )
    )
    seed = draw(st.integers(min_value=0, max_value=2**31 - 1))
    rng = np.random.default_rng(seed)
    records = {}
    for rid in ids:
        rows = 1 if kind.startswith("sentence") else draw(st.integers(min_value=1, max_value=5))
        records[rid] = rng.normal(size=(rows, dim)).astype(np.float32)
    return EmbeddingSet(
        model_name=draw(st.sampled_from(["m1", "m2"])),
        layer=draw(st.integers(min_value=0, max_value=24)),
        kind=kind,
        dim=dim,
        records=records,
    )


@given(embedding_sets())
@settings(max_examples=60, deadline=None)
def test_round_trip_property(tmp_path_factory, eset):
    path = tmp_path_factory.mktemp("rt") / "x.csem"
    write_container(eset, path)
    loaded = read_container(path)
    assert loaded.model_name == eset.model_name
    assert loaded.layer == eset.layer
    assert loaded.kind == eset.kind
    assert loaded.dim == eset.dim
    assert set(loaded.records) == set(eset.records)
    for rid, mat in eset.records.items():
        assert loaded.records[rid].tobytes() == mat.tobytes()


def test_mean_pool_basic():
    out = mean_pool(np.array([[1.0, 1.0], [3.0, 3.0]], dtype=np.float32))
    assert out.dtype == np.float64
    assert np.allclose(out, [2.0, 2.0])


def test_mean_pool_single_row_identity():
    row = np.array([[0.5, -1.0, 2.0]], dtype=np.float32)
    assert np.allclose(mean_pool(row), row[0])


def test_mean_pool_matches_sum_oracle():
    rng = np.random.default_rng(5)
    mat = rng.normal(size=(5, 7)).astype(np.float32)
    oracle = np.array([sum(float(mat[r, c]) for r in range(5)) / 5.0 for c in range(7)])
    assert np.allclose(mean_pool(mat), oracle, atol=1e-6)


def test_mean_pool_permutation_invariant():
    rng = np.random.default_rng(6)
    mat = rng.normal(size=(6, 3))
    perm = rng.permutation(6)
    assert np.allclose(mean_pool(mat), mean_pool(mat[perm]), atol=1e-12)


def test_mean_pool_empty_errors():
    with pytest.raises(ValueError):
        mean_pool(np.zeros((0, 4)))
