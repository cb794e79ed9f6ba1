"""Writer for the EMB1 embedding container.

Layout, in order: ASCII magic ``EMB1``; u32 little-endian length of the
JSON header; UTF-8 JSON header carrying ``n``, ``d``, ``dtype`` (always
``"f32"``), ``datasets`` and ``model_tag`` plus any extra provenance
keys; ``n*d`` float32 little-endian values, row-major; ``n`` uint16
little-endian labels indexing into ``datasets``.  No trailing bytes.
Consumers ignore unknown header keys, so provenance (skipped rows, the
normalization flag, prompt templates) travels with the file without
breaking any reader.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from embexport.errors import ExportError

EMB1_MAGIC = b"EMB1"


def write_emb1(path: str | Path, vectors: np.ndarray, labels: np.ndarray,
               datasets: list[str], model_tag: str = "",
               extra: dict | None = None) -> None:
    """Serialize one block of labeled vectors to ``path``.

    ``vectors`` is cast to float32 and ``labels`` to uint16; the inputs
    are validated against the container contract first so a bad export
    fails loudly here instead of at read time.
    """
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ExportError("vectors must be a 2-D array")
    n, d = vectors.shape
    if n < 1 or d < 1:
        raise ExportError(f"empty embedding block: shape {n}x{d}")
    if not np.all(np.isfinite(vectors)):
        raise ExportError("non-finite embedding values")
    labels = np.ascontiguousarray(labels, dtype=np.uint16)
    if labels.shape != (n,):
        raise ExportError(
            f"labels shape {labels.shape} does not match n={n}"
        )
    if not datasets:
        raise ExportError("no dataset names")
    if any(not name for name in datasets):
        raise ExportError("empty dataset name")
    if int(labels.max()) >= len(datasets):
        raise ExportError(
            f"label {int(labels.max())} out of range for "
            f"{len(datasets)} datasets"
        )
    header = {
        "n": n,
        "d": d,
        "dtype": "f32",
        "datasets": list(datasets),
        "model_tag": model_tag,
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(vectors, "<f4").tobytes())
        fh.write(np.ascontiguousarray(labels, "<u2").tobytes())
