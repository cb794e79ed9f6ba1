"""Reader for corpus manifest CSVs.

The manifest format is shared with the analyzer toolkit: header row
exactly ``path,dataset,width,height``, one image per row, ``path``
resolved relative to the manifest's own directory.  The exporter only
needs paths and dataset names; the declared dimensions are validated but
otherwise unused (the encoder's preprocessing decides the input size).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from embexport.errors import ExportError

_HEADER = ["path", "dataset", "width", "height"]


@dataclass(frozen=True)
class ManifestRow:
    """One image entry of a corpus manifest."""

    path: str
    dataset: str
    width: int
    height: int


def read_manifest(path: str | Path) -> list[ManifestRow]:
    """Parse and validate a manifest; error messages name the file."""
    path = Path(path)
    if not path.is_file():
        raise ExportError(f"manifest not found: {path}")
    rows: list[ManifestRow] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ExportError(f"empty manifest: {path}") from None
        if header != _HEADER:
            raise ExportError(
                f"bad manifest header in {path}: expected "
                f"{','.join(_HEADER)!r}, got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ExportError(
                    f"{path}:{lineno}: expected 4 columns, got {len(row)}"
                )
            img_path, dataset, width_s, height_s = row
            if not img_path:
                raise ExportError(f"{path}:{lineno}: empty image path")
            if img_path in seen:
                raise ExportError(
                    f"{path}:{lineno}: duplicate path {img_path!r}"
                )
            seen.add(img_path)
            if not dataset:
                raise ExportError(f"{path}:{lineno}: empty dataset name")
            try:
                width = int(width_s)
                height = int(height_s)
            except ValueError:
                raise ExportError(
                    f"{path}:{lineno}: non-integer dimensions "
                    f"{width_s!r}x{height_s!r}"
                ) from None
            if width < 1 or height < 1:
                raise ExportError(
                    f"{path}:{lineno}: non-positive dimensions "
                    f"{width}x{height}"
                )
            rows.append(ManifestRow(img_path, dataset, width, height))
    if not rows:
        raise ExportError(f"manifest has no data rows: {path}")
    return rows


def dataset_names(rows: list[ManifestRow]) -> list[str]:
    """Distinct dataset names in order of first appearance."""
    names: list[str] = []
    seen: set[str] = set()
    for row in rows:
        if row.dataset not in seen:
            seen.add(row.dataset)
            names.append(row.dataset)
    return names


def resolve_image_path(manifest_path: str | Path, row: ManifestRow) -> Path:
    """Absolute location of a manifest row's image file."""
    p = Path(row.path)
    if p.is_absolute():
        return p
    return Path(manifest_path).parent / p
