"""Error type shared by the exporter modules."""

from __future__ import annotations


class ExportError(ValueError):
    """Unusable input data, checkpoint or export parameters."""
