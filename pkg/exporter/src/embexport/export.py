"""Export jobs: manifest images and text-prompt banks to EMB1 files.

The exporter is a strict producer: it loads images, runs an encoder and
writes containers.  All assessment of the resulting vectors happens on
the consumer side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from embexport.emb1 import write_emb1
from embexport.encoders import Encoder, load_encoder
from embexport.errors import ExportError
from embexport.manifest import dataset_names, read_manifest, resolve_image_path

log = logging.getLogger(__name__)

# Prompt phrasings: bare phrases, or the common caption-style wrapper.
TEMPLATES = {
    "bare": "{}",
    "photo": "a photo of {}",
}


@dataclass
class ExportJob:
    """Parameters of one manifest-to-embeddings run."""

    manifest: str | Path
    model: str
    out: str | Path
    normalize: bool = False
    batch_size: int = 16
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ExportError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass
class ExportResult:
    """What was written where, plus any rows that had to be skipped."""

    out: Path
    n: int
    d: int
    datasets: list[str]
    skipped: list[dict] = field(default_factory=list)


def _unit_rows(vectors: np.ndarray, what: str) -> np.ndarray:
    wide = vectors.astype(np.float64)
    norms = np.linalg.norm(wide, axis=1)
    if np.any(norms == 0.0):
        raise ExportError(f"zero-norm {what} row; cannot normalize")
    return (wide / norms[:, None]).astype(np.float32)


def export_image_embeddings(job: ExportJob,
                            encoder: Encoder | None = None) -> ExportResult:
    """Embed every readable manifest image, preserving manifest order.

    Unreadable images are skipped with a logged warning and recorded,
    with their original manifest indices, under the ``skipped`` header
    key of the output file.
    """
    rows = read_manifest(job.manifest)
    names = dataset_names(rows)
    label_of = {name: idx for idx, name in enumerate(names)}
    if encoder is None:
        encoder = load_encoder(job.model, job.device)

    from PIL import Image

    images = []
    labels = []
    skipped: list[dict] = []
    for idx, row in enumerate(rows):
        path = resolve_image_path(job.manifest, row)
        try:
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
        except OSError as exc:
            log.warning("skipping %s (row %d): %s", path, idx, exc)
            skipped.append({"index": idx, "path": row.path})
            continue
        labels.append(label_of[row.dataset])
    if not images:
        raise ExportError(f"no readable images in {job.manifest}")

    vectors = encoder.embed_images(images, batch_size=job.batch_size)
    if job.normalize:
        vectors = _unit_rows(vectors, "image embedding")
    tag = encoder.image_tag()
    if job.normalize:
        tag += "|unit-norm"
    write_emb1(job.out, vectors, np.asarray(labels), names, tag,
               extra={"skipped": skipped, "normalized": job.normalize})
    log.info("wrote %s: %d x %d vectors, %d skipped",
             job.out, vectors.shape[0], vectors.shape[1], len(skipped))
    return ExportResult(out=Path(job.out), n=vectors.shape[0],
                        d=vectors.shape[1], datasets=names, skipped=skipped)


def parse_prompts(path: str | Path) -> list[tuple[str, str]]:
    """Read ``category<TAB>prompt`` lines; ``#`` comments and blanks skip."""
    path = Path(path)
    if not path.is_file():
        raise ExportError(f"prompt file not found: {path}")
    prompts: list[tuple[str, str]] = []
    for lineno, line in enumerate(
            path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ExportError(
                f"{path}:{lineno}: expected 'category<TAB>prompt'"
            )
        category, prompt = line.split("\t", 1)
        category, prompt = category.strip(), prompt.strip()
        if not category or not prompt:
            raise ExportError(
                f"{path}:{lineno}: empty category or prompt"
            )
        prompts.append((category, prompt))
    if not prompts:
        raise ExportError(f"no prompts in {path}")
    return prompts


def export_prompt_bank(prompts: list[tuple[str, str]], model: str,
                       out: str | Path, template: str = "bare",
                       device: str = "cpu",
                       encoder: Encoder | None = None) -> ExportResult:
    """Embed prompts into a unit-norm bank, categories as dataset names."""
    if template not in TEMPLATES:
        raise ExportError(
            f"unknown template {template!r}; choose from "
            f"{tuple(TEMPLATES)}"
        )
    if not prompts:
        raise ExportError("no prompts to export")
    categories: list[str] = []
    labels: list[int] = []
    for category, _ in prompts:
        if category not in categories:
            categories.append(category)
        labels.append(categories.index(category))
    if encoder is None:
        encoder = load_encoder(model, device)
    texts = [TEMPLATES[template].format(prompt) for _, prompt in prompts]
    vectors = _unit_rows(encoder.embed_texts(texts), "prompt embedding")
    write_emb1(out, vectors, np.asarray(labels), categories,
               encoder.text_tag(template), extra={"template": template})
    log.info("wrote %s: %d prompts in %d categories",
             out, len(texts), len(categories))
    return ExportResult(out=Path(out), n=vectors.shape[0],
                        d=vectors.shape[1], datasets=categories)
