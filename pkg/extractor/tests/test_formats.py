import struct

import numpy as np
import pytest

from embex.formats import read_embeddings, write_embeddings


def test_header_layout(tmp_path):
    vectors = np.ones((3, 16), dtype=np.float32)
    write_embeddings(tmp_path / "x", vectors, [{"id": f"r{i}"} for i in range(3)])
    raw = (tmp_path / "x.cemb").read_bytes()
    magic, version, dim, count = struct.unpack_from("<4sIIQ", raw, 0)
    assert magic == b"CEMB"
    assert version == 1
    assert (dim, count) == (16, 3)
    assert len(raw) == 20 + 3 * 16 * 4


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    vectors = rng.normal(size=(5, 8)).astype(np.float32)
    records = [{"id": f"r{i}", "label": "optimism", "captions": {"sc": "text"}} for i in range(5)]
    write_embeddings(tmp_path / "rt", vectors, records)
    back_vectors, back_records = read_embeddings(tmp_path / "rt")
    np.testing.assert_array_equal(back_vectors, vectors)
    assert [r["id"] for r in back_records] == [r["id"] for r in records]
    assert back_records[0]["captions"] == {"sc": "text"}


def test_length_mismatch_rejected(tmp_path):
    with pytest.raises(ValueError, match="manifest records"):
        write_embeddings(tmp_path / "bad", np.ones((2, 4)), [{"id": "only-one"}])


def test_non_finite_rejected(tmp_path):
    vectors = np.ones((1, 4))
    vectors[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        write_embeddings(tmp_path / "nan", vectors, [{"id": "a"}])
