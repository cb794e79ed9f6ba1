"""Helpers shared by the exporter tests."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def _philox(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key))


def write_image(path: Path, seed: int, width: int, height: int) -> None:
    """Deterministic RGB noise image, keyed only by ``seed``."""
    from PIL import Image

    rng = _philox(0xE0, seed)
    arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    Image.fromarray(arr).save(path)


def write_manifest(path: Path, rows: list[tuple[str, str, int, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "dataset", "width", "height"])
        writer.writerows(rows)


class Corpus:
    """A manifest on disk plus the label sequence it encodes."""

    def __init__(self, manifest: Path, datasets: list[str],
                 labels: list[int]):
        self.manifest = manifest
        self.datasets = datasets
        self.labels = labels
