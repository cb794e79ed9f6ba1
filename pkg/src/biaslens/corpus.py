"""Corpus manifests and the EMB1 embedding container format.

A corpus is described by a CSV manifest (``path,dataset,width,height``) and,
optionally, by a binary embedding file.  The embedding container is a small
self-describing format:

========  =====================================================
bytes     content
========  =====================================================
0-3       ASCII magic ``EMB1``
4-7       u32 little-endian length ``L`` of the JSON header
8-(8+L)   UTF-8 JSON: ``n``, ``d``, ``dtype`` ("f32"),
          ``datasets`` (list of names), ``model_tag``
...       ``n*d`` float32 little-endian values, row-major
...       ``n`` uint16 little-endian labels (indices into
          ``datasets``)
========  =====================================================

No trailing bytes are permitted.  Readers ignore unknown extra keys in the
JSON header so producers can attach provenance without breaking consumers.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMB1_MAGIC = b"EMB1"

_MANIFEST_HEADER = ["path", "dataset", "width", "height"]


class CorpusError(ValueError):
    """A manifest or embedding file violates the format contract."""


@dataclass(frozen=True)
class ManifestRecord:
    """One image entry of a corpus manifest."""

    path: str
    dataset: str
    width: int
    height: int


@dataclass
class CorpusManifest:
    """A validated list of manifest records.

    Invariants: positive dimensions, non-empty dataset names, unique paths,
    at least one record.
    """

    records: list[ManifestRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.records:
            raise CorpusError("manifest has no records")
        seen: set[str] = set()
        for rec in self.records:
            if not rec.path:
                raise CorpusError("manifest record with empty path")
            if rec.path in seen:
                raise CorpusError(f"duplicate path in manifest: {rec.path!r}")
            seen.add(rec.path)
            if not rec.dataset:
                raise CorpusError(f"empty dataset name for {rec.path!r}")
            if rec.width < 1 or rec.height < 1:
                raise CorpusError(
                    f"non-positive dimensions for {rec.path!r}: "
                    f"{rec.width}x{rec.height}"
                )

    @property
    def datasets(self) -> list[str]:
        """Distinct dataset names in order of first appearance."""
        names: list[str] = []
        seen: set[str] = set()
        for rec in self.records:
            if rec.dataset not in seen:
                seen.add(rec.dataset)
                names.append(rec.dataset)
        return names

    def __len__(self) -> int:
        return len(self.records)


def load_manifest(path: str | Path) -> CorpusManifest:
    """Parse and validate a CSV manifest.

    The header row must be exactly ``path,dataset,width,height``.  Raises
    :class:`CorpusError` on malformed rows, duplicate paths or a missing
    file; error messages always name the offending file.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"manifest not found: {path}")
    records: list[ManifestRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError(f"empty manifest: {path}") from None
        if header != _MANIFEST_HEADER:
            raise CorpusError(
                f"bad manifest header in {path}: expected "
                f"{','.join(_MANIFEST_HEADER)!r}, got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CorpusError(
                    f"{path}:{lineno}: expected 4 columns, got {len(row)}"
                )
            img_path, dataset, width_s, height_s = row
            try:
                width = int(width_s)
                height = int(height_s)
            except ValueError:
                raise CorpusError(
                    f"{path}:{lineno}: non-integer dimensions "
                    f"{width_s!r}x{height_s!r}"
                ) from None
            records.append(ManifestRecord(img_path, dataset, width, height))
    if not records:
        raise CorpusError(f"manifest has no data rows: {path}")
    try:
        return CorpusManifest(records)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from None


@dataclass
class EmbeddingSet:
    """A labeled block of row vectors tied to a list of dataset names."""

    vectors: np.ndarray
    labels: np.ndarray
    datasets: list[str]
    model_tag: str = ""

    def __post_init__(self) -> None:
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint16)
        if self.vectors.ndim != 2:
            raise CorpusError("vectors must be a 2-D array")
        n, d = self.vectors.shape
        if n < 1 or d < 1:
            raise CorpusError(f"empty embedding set: shape {n}x{d}")
        if self.labels.shape != (n,):
            raise CorpusError(
                f"labels shape {self.labels.shape} does not match n={n}"
            )
        if not self.datasets:
            raise CorpusError("embedding set without dataset names")
        if any(not name for name in self.datasets):
            raise CorpusError("empty dataset name")
        if not np.all(np.isfinite(self.vectors)):
            raise CorpusError("non-finite embedding values")
        if self.labels.size and int(self.labels.max()) >= len(self.datasets):
            raise CorpusError(
                f"label {int(self.labels.max())} out of range for "
                f"{len(self.datasets)} datasets"
            )

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def _header_bytes(es: EmbeddingSet, extra: dict | None = None) -> bytes:
    header = {
        "n": es.n,
        "d": es.d,
        "dtype": "f32",
        "datasets": list(es.datasets),
        "model_tag": es.model_tag,
    }
    if extra:
        header.update(extra)
    return json.dumps(header, separators=(",", ":")).encode("utf-8")


def write_embeddings(es: EmbeddingSet, path: str | Path,
                     extra_header: dict | None = None) -> None:
    """Serialize an embedding set to the EMB1 container.

    ``extra_header`` lets producers record additional provenance keys;
    readers ignore them.
    """
    blob = _header_bytes(es, extra_header)
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(es.vectors, "<f4").tobytes())
        fh.write(np.ascontiguousarray(es.labels, "<u2").tobytes())


def read_embeddings(path: str | Path) -> EmbeddingSet:
    """Parse an EMB1 file, validating the layout byte for byte."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"embedding file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:4] != EMB1_MAGIC:
        raise CorpusError(f"bad magic in {path}: not an EMB1 file")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + hlen:
        raise CorpusError(f"truncated header in {path}")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorpusError(f"unparseable header in {path}: {exc}") from None
    for key in ("n", "d", "dtype", "datasets", "model_tag"):
        if key not in header:
            raise CorpusError(f"missing header key {key!r} in {path}")
    if header["dtype"] != "f32":
        raise CorpusError(
            f"unsupported dtype {header['dtype']!r} in {path}"
        )
    n, d = int(header["n"]), int(header["d"])
    body = raw[8 + hlen:]
    want = n * d * 4 + n * 2
    if len(body) != want:
        raise CorpusError(
            f"payload size mismatch in {path}: expected {want} bytes "
            f"after header, found {len(body)}"
        )
    vectors = np.frombuffer(body[: n * d * 4], dtype="<f4").reshape(n, d)
    labels = np.frombuffer(body[n * d * 4:], dtype="<u2")
    try:
        return EmbeddingSet(
            vectors=vectors.copy(),
            labels=labels.copy(),
            datasets=[str(name) for name in header["datasets"]],
            model_tag=str(header["model_tag"]),
        )
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from None


def merge_sets(sets: list[EmbeddingSet]) -> EmbeddingSet:
    """Concatenate embedding sets, re-mapping labels to a merged name list.

    All inputs must share the embedding width.  Dataset names are merged in
    order of first appearance; model tags are joined with ``+`` when they
    differ.
    """
    if not sets:
        raise CorpusError("merge_sets needs at least one input")
    d = sets[0].d
    for es in sets[1:]:
        if es.d != d:
            raise CorpusError(
                f"embedding width mismatch: {es.d} != {d}"
            )
    names: list[str] = []
    index: dict[str, int] = {}
    for es in sets:
        for name in es.datasets:
            if name not in index:
                index[name] = len(names)
                names.append(name)
    vec_parts = []
    lab_parts = []
    for es in sets:
        remap = np.array([index[name] for name in es.datasets], dtype=np.uint16)
        vec_parts.append(es.vectors)
        lab_parts.append(remap[es.labels])
    tags = []
    for es in sets:
        if es.model_tag and es.model_tag not in tags:
            tags.append(es.model_tag)
    return EmbeddingSet(
        vectors=np.concatenate(vec_parts, axis=0),
        labels=np.concatenate(lab_parts, axis=0),
        datasets=names,
        model_tag="+".join(tags),
    )
