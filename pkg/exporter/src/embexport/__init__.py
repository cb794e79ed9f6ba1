"""Embedding exporter: manifest images and text prompts to EMB1 files.

A thin producer in front of pretrained encoders.  It reads the same
corpus manifests and writes the same EMB1 containers as the analyzer
toolkit, but never computes metrics itself -- the two sides meet only at
the file formats.
"""

from embexport.errors import ExportError
from embexport.export import (
    ExportJob,
    ExportResult,
    export_image_embeddings,
    export_prompt_bank,
    parse_prompts,
)

__all__ = [
    "ExportError",
    "ExportJob",
    "ExportResult",
    "export_image_embeddings",
    "export_prompt_bank",
    "parse_prompts",
]

__version__ = "0.1.0"
