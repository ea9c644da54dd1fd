import numpy as np
import pytest

from csextract.container import read_csem, write_csem


def test_own_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    records = {"a": rng.normal(size=(3, 4)).astype(np.float32),
               "b": rng.normal(size=(1, 4)).astype(np.float32)}
    path = tmp_path / "x.csem"
    write_csem(path, model="tiny", layer=1, kind="word", dim=4, records=records)
    header, loaded = read_csem(path)
    assert header == {"model": "tiny", "layer": 1, "kind": "word", "dim": 4, "count": 2}
    for rid in records:
        assert loaded[rid].tobytes() == records[rid].tobytes()


def test_rejects_bad_shapes(tmp_path):
    with pytest.raises(ValueError):
        write_csem(tmp_path / "bad.csem", model="m", layer=0, kind="word", dim=3,
                   records={"a": np.ones((2, 4), dtype=np.float32)})
    with pytest.raises(ValueError):
        write_csem(tmp_path / "bad2.csem", model="m", layer=0, kind="nope", dim=3, records={})


def test_cross_validates_against_analysis_reader(tmp_path):
    """The analysis toolkit's reader must accept extractor-written files
    bit-exactly; this is the cross-implementation contract check."""
    csprobe_embed = pytest.importorskip("csprobe.embedstore")
    rng = np.random.default_rng(1)
    records = {f"s{i}": rng.normal(size=(i + 1, 6)).astype(np.float32) for i in range(4)}
    path = tmp_path / "cross.csem"
    write_csem(path, model="tiny", layer=2, kind="word", dim=6, records=records)
    eset = csprobe_embed.read_container(path)
    assert eset.model_name == "tiny"
    assert eset.layer == 2
    assert eset.kind == "word"
    assert eset.dim == 6
    for rid, mat in records.items():
        assert eset.records[rid].tobytes() == mat.tobytes()
    # and the reverse: analysis-toolkit-written files parse here, byte-identically
    out = tmp_path / "back.csem"
    csprobe_embed.write_container(eset, out)
    assert out.read_bytes() == path.read_bytes()
