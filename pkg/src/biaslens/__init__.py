"""Diagnostics for dataset bias in image corpora.

The package covers two complementary angles:

* low-level acquisition artifacts (resolution statistics, resampling
  residuals, procedurally generated test corpora), and
* high-level semantic separability (dimensionality reduction, clustering,
  matching metrics, linear probes, prompt-based characterization).
"""

from biaslens.corpus import (
    CorpusError,
    CorpusManifest,
    EmbeddingSet,
    ManifestRecord,
    load_manifest,
    merge_sets,
    read_embeddings,
    write_embeddings,
)

__all__ = [
    "CorpusError",
    "CorpusManifest",
    "EmbeddingSet",
    "ManifestRecord",
    "load_manifest",
    "merge_sets",
    "read_embeddings",
    "write_embeddings",
]

__version__ = "0.1.0"
