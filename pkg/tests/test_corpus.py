"""Tests for manifests and the EMB1 embedding container."""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from biaslens._rand import philox
from biaslens.corpus import (
    CorpusError,
    EmbeddingSet,
    load_manifest,
    merge_sets,
    read_embeddings,
    write_embeddings,
)


def _assemble_emb1(vectors, labels, datasets, model_tag="") -> bytes:
    """Build EMB1 bytes by hand, independently of the writer."""
    vectors = np.asarray(vectors, dtype="<f4")
    labels = np.asarray(labels, dtype="<u2")
    header = json.dumps(
        {
            "n": vectors.shape[0],
            "d": vectors.shape[1],
            "dtype": "f32",
            "datasets": list(datasets),
            "model_tag": model_tag,
        },
        separators=(",", ":"),
    ).encode("utf-8")
    return (
        b"EMB1"
        + struct.pack("<I", len(header))
        + header
        + vectors.tobytes()
        + labels.tobytes()
    )


def test_read_hand_assembled_file(tmp_path):
    raw = _assemble_emb1(
        [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], [0, 1], ["a", "b"], "toy"
    )
    path = tmp_path / "two.emb"
    path.write_bytes(raw)
    es = read_embeddings(path)
    assert es.n == 2 and es.d == 3
    np.testing.assert_array_equal(
        es.vectors, np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32)
    )
    np.testing.assert_array_equal(es.labels, [0, 1])
    assert es.datasets == ["a", "b"]
    assert es.model_tag == "toy"


def test_write_matches_golden_bytes(tmp_path):
    es = EmbeddingSet(
        vectors=np.array([[0.5, -1.25]], dtype=np.float32),
        labels=np.array([0], dtype=np.uint16),
        datasets=["only"],
        model_tag="golden",
    )
    path = tmp_path / "one.emb"
    write_embeddings(es, path)
    assert path.read_bytes() == _assemble_emb1(
        [[0.5, -1.25]], [0], ["only"], "golden"
    )


def test_round_trip_fuzz(tmp_path):
    for seed in range(25):
        rng = philox(900, seed)
        n = int(rng.integers(1, 40))
        d = int(rng.integers(1, 20))
        k = int(rng.integers(1, 5))
        es = EmbeddingSet(
            vectors=rng.normal(size=(n, d)).astype(np.float32),
            labels=rng.integers(0, k, size=n).astype(np.uint16),
            datasets=[f"ds{j}" for j in range(k)],
            model_tag=f"fuzz-{seed}",
        )
        path = tmp_path / f"rt{seed}.emb"
        write_embeddings(es, path)
        back = read_embeddings(path)
        np.testing.assert_array_equal(back.vectors, es.vectors)
        np.testing.assert_array_equal(back.labels, es.labels)
        assert back.datasets == es.datasets
        assert back.model_tag == es.model_tag


def test_reader_ignores_extra_header_keys(tmp_path):
    es = EmbeddingSet(
        vectors=np.ones((3, 2), dtype=np.float32),
        labels=np.zeros(3, dtype=np.uint16),
        datasets=["x"],
    )
    path = tmp_path / "extra.emb"
    write_embeddings(es, path, extra_header={"note": "hello", "skipped": [1, 2]})
    back = read_embeddings(path)
    assert back.n == 3 and back.datasets == ["x"]


@pytest.mark.parametrize(
    "mangle, phrase",
    [
        (lambda raw: b"XXXX" + raw[4:], "magic"),
        (lambda raw: raw[:-1], "size mismatch"),
        (lambda raw: raw + b"\x00", "size mismatch"),
        (lambda raw: raw[:6], "magic"),
        (lambda raw: raw[:9] + b"X" + raw[10:], "header"),
    ],
)
def test_reader_rejects_corrupt_files(tmp_path, mangle, phrase):
    raw = _assemble_emb1([[1.0, 2.0]], [0], ["a"])
    path = tmp_path / "bad.emb"
    path.write_bytes(mangle(raw))
    with pytest.raises(CorpusError) as err:
        read_embeddings(path)
    assert phrase in str(err.value)
    assert "bad.emb" in str(err.value)


def test_reader_rejects_wrong_dtype_and_labels(tmp_path):
    path = tmp_path / "bad.emb"

    header = json.dumps(
        {"n": 1, "d": 1, "dtype": "f64", "datasets": ["a"], "model_tag": ""},
        separators=(",", ":"),
    ).encode()
    path.write_bytes(b"EMB1" + struct.pack("<I", len(header)) + header
                     + b"\x00" * 10)
    with pytest.raises(CorpusError, match="dtype"):
        read_embeddings(path)

    # label index out of range for the dataset list
    path.write_bytes(_assemble_emb1([[1.0]], [3], ["a"]))
    with pytest.raises(CorpusError, match="out of range"):
        read_embeddings(path)

    # NaN payload
    path.write_bytes(_assemble_emb1([[float("nan")]], [0], ["a"]))
    with pytest.raises(CorpusError, match="non-finite"):
        read_embeddings(path)


def test_missing_header_key(tmp_path):
    header = json.dumps({"n": 1, "d": 1, "dtype": "f32", "datasets": ["a"]},
                        separators=(",", ":")).encode()
    path = tmp_path / "short.emb"
    path.write_bytes(b"EMB1" + struct.pack("<I", len(header)) + header
                     + b"\x00" * 6)
    with pytest.raises(CorpusError, match="model_tag"):
        read_embeddings(path)


def test_embedding_set_validation():
    good = dict(
        vectors=np.zeros((2, 2), dtype=np.float32),
        labels=np.zeros(2, dtype=np.uint16),
        datasets=["a"],
    )
    EmbeddingSet(**good)
    with pytest.raises(CorpusError):
        EmbeddingSet(**{**good, "labels": np.zeros(3, dtype=np.uint16)})
    with pytest.raises(CorpusError):
        EmbeddingSet(**{**good, "datasets": []})
    with pytest.raises(CorpusError):
        EmbeddingSet(**{**good, "datasets": ["a", ""]})
    with pytest.raises(CorpusError):
        EmbeddingSet(**{**good, "vectors": np.zeros((0, 2), dtype=np.float32),
                        "labels": np.zeros(0, dtype=np.uint16)})


def test_merge_two_sets_labels():
    a = EmbeddingSet(np.zeros((2, 3), np.float32),
                     np.zeros(2, np.uint16), ["A"])
    b = EmbeddingSet(np.ones((3, 3), np.float32),
                     np.zeros(3, np.uint16), ["B"])
    merged = merge_sets([a, b])
    assert merged.n == 5
    assert merged.datasets == ["A", "B"]
    np.testing.assert_array_equal(merged.labels, [0, 0, 1, 1, 1])


def test_merge_single_identity():
    a = EmbeddingSet(np.arange(6, dtype=np.float32).reshape(2, 3),
                     np.array([0, 1], np.uint16), ["A", "B"], "t")
    merged = merge_sets([a])
    np.testing.assert_array_equal(merged.vectors, a.vectors)
    np.testing.assert_array_equal(merged.labels, a.labels)
    assert merged.datasets == a.datasets


def test_merge_dimension_mismatch():
    a = EmbeddingSet(np.zeros((1, 3), np.float32), np.zeros(1, np.uint16), ["A"])
    b = EmbeddingSet(np.zeros((1, 4), np.float32), np.zeros(1, np.uint16), ["B"])
    with pytest.raises(CorpusError, match="mismatch"):
        merge_sets([a, b])


def test_merge_associative_up_to_naming():
    rng = philox(901)
    sets = []
    for i, name in enumerate(["A", "B", "C"]):
        sets.append(EmbeddingSet(
            rng.normal(size=(2 + i, 4)).astype(np.float32),
            rng.integers(0, 1, size=2 + i).astype(np.uint16),
            [name],
        ))
    a, b, c = sets
    left = merge_sets([merge_sets([a, b]), c])
    right = merge_sets([a, merge_sets([b, c])])
    assert left.datasets == right.datasets
    np.testing.assert_array_equal(left.labels, right.labels)
    np.testing.assert_array_equal(left.vectors, right.vectors)


def test_merge_shared_dataset_names():
    a = EmbeddingSet(np.zeros((2, 2), np.float32),
                     np.array([0, 1], np.uint16), ["X", "Y"])
    b = EmbeddingSet(np.ones((1, 2), np.float32),
                     np.array([0], np.uint16), ["Y"])
    merged = merge_sets([a, b])
    assert merged.datasets == ["X", "Y"]
    np.testing.assert_array_equal(merged.labels, [0, 1, 1])


def _write_manifest(tmp_path, text):
    path = tmp_path / "m.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_manifest_parse_and_order(tmp_path):
    path = _write_manifest(
        tmp_path,
        "path,dataset,width,height\n"
        "img/0.png,A,640,480\n"
        "img/1.png,B,224,224\n"
        "img/2.png,A,100,200\n",
    )
    man = load_manifest(path)
    assert len(man) == 3
    assert man.datasets == ["A", "B"]
    assert [r.path for r in man.records] == ["img/0.png", "img/1.png", "img/2.png"]
    assert man.records[0].width == 640 and man.records[2].height == 200


def test_manifest_large_order_preserved(tmp_path):
    rows = [f"p{i}.png,ds{i % 7},{10 + i % 90},{20 + i % 70}" for i in range(2000)]
    path = _write_manifest(tmp_path,
                           "path,dataset,width,height\n" + "\n".join(rows) + "\n")
    man = load_manifest(path)
    assert len(man) == 2000
    for i in (0, 999, 1999):
        rec = man.records[i]
        assert rec.path == f"p{i}.png"
        assert rec.dataset == f"ds{i % 7}"
        assert rec.width == 10 + i % 90


@pytest.mark.parametrize(
    "body, phrase",
    [
        ("path,dataset,width\nx.png,A,3\n", "header"),
        ("path,dataset,width,height\nx.png,A,0,5\n", "non-positive"),
        ("path,dataset,width,height\nx.png,A,3\n", "4 columns"),
        ("path,dataset,width,height\nx.png,A,w,5\n", "non-integer"),
        ("path,dataset,width,height\nx.png,A,3,5\nx.png,B,4,4\n", "duplicate"),
        ("path,dataset,width,height\nx.png,,3,5\n", "dataset"),
        ("path,dataset,width,height\n", "no data rows"),
        ("", "empty"),
    ],
)
def test_manifest_rejects(tmp_path, body, phrase):
    path = _write_manifest(tmp_path, body)
    with pytest.raises(CorpusError) as err:
        load_manifest(path)
    assert phrase in str(err.value)
    assert "m.csv" in str(err.value)


def test_manifest_missing_file(tmp_path):
    with pytest.raises(CorpusError, match="not found"):
        load_manifest(tmp_path / "nope.csv")
