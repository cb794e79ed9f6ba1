"""Checkpoint loading and batched feature extraction.

Wraps a transformers checkpoint (local directory or hub identifier)
behind one small interface.  Vision--text models such as the CLIP family
expose projected image and text features; vision-only encoders such as
the ViT/DINOv2 families expose the pooled encoder output (falling back
to the leading token when no pooler exists).  Inference always runs in
eval mode under ``torch.no_grad`` so identical inputs yield identical
vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from embexport.errors import ExportError

# Preprocessing settings worth pinning in the model tag: anything that
# changes the pixels a checkpoint actually sees.
_PROC_KEYS = (
    "image_processor_type",
    "do_resize",
    "size",
    "resample",
    "do_center_crop",
    "crop_size",
    "do_rescale",
    "rescale_factor",
    "do_normalize",
    "image_mean",
    "image_std",
    "do_convert_rgb",
)


def _plain(value):
    """JSON-safe copy of processor config values (drops None entries)."""
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items() if v is not None}
    if hasattr(value, "__dict__"):
        return {k: _plain(v) for k, v in vars(value).items()
                if v is not None}
    return str(value)


def _features(out):
    """Feature matrix from either a raw tensor or a model-output object."""
    import torch

    if torch.is_tensor(out):
        return out
    pooled = getattr(out, "pooler_output", None)
    if pooled is not None:
        return pooled
    hidden = getattr(out, "last_hidden_state", None)
    if hidden is not None:
        return hidden[:, 0]
    raise ExportError(
        f"cannot extract features from {type(out).__name__}"
    )


@dataclass
class Encoder:
    """A loaded checkpoint, its preprocessing and the target device."""

    model_ref: str
    model: object
    processor: object | None
    tokenizer: object | None
    device: str

    @property
    def arch(self) -> str:
        return type(self.model).__name__

    @property
    def has_text_tower(self) -> bool:
        return (self.tokenizer is not None
                and hasattr(self.model, "get_text_features"))

    def image_tag(self) -> str:
        """Model identity plus pinned preprocessing, for the EMB1 header."""
        if self.processor is None:
            desc = "no-image-processor"
        else:
            cfg = _plain(self.processor.to_dict())
            desc = json.dumps(
                {k: cfg[k] for k in _PROC_KEYS if k in cfg},
                sort_keys=True, separators=(",", ":"),
            )
        return f"{self.model_ref}|{self.arch}|{desc}"

    def text_tag(self, template: str) -> str:
        return f"{self.model_ref}|{self.arch}|text|template={template}"

    def embed_images(self, images, batch_size: int = 16) -> np.ndarray:
        """Feature rows for a list of PIL images, in input order."""
        import torch

        if self.processor is None:
            raise ExportError(
                f"model {self.model_ref!r} has no image processor"
            )
        fn = getattr(self.model, "get_image_features", None) or self.model
        parts = []
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                batch = images[start:start + batch_size]
                px = self.processor(images=batch, return_tensors="pt")
                px = px["pixel_values"].to(self.device)
                feats = _features(fn(pixel_values=px))
                parts.append(feats.cpu().numpy().astype(np.float32))
        return np.concatenate(parts, axis=0)

    def embed_texts(self, texts) -> np.ndarray:
        """Feature rows for a list of strings, in input order."""
        import torch

        if not self.has_text_tower:
            raise ExportError(
                f"model {self.model_ref!r} has no text tower"
            )
        enc = self.tokenizer(list(texts), padding=True, truncation=True,
                             return_tensors="pt").to(self.device)
        with torch.no_grad():
            feats = _features(self.model.get_text_features(**enc))
        return feats.cpu().numpy().astype(np.float32)


def load_encoder(model_ref: str, device: str = "cpu") -> Encoder:
    """Resolve a checkpoint into an eval-mode :class:`Encoder`.

    The tokenizer and image processor are each optional: a vision-only
    checkpoint loads without a tokenizer (text export then fails with a
    clear error) and vice versa.
    """
    import torch
    from transformers import AutoImageProcessor, AutoModel, AutoTokenizer
    from transformers.utils import logging as hf_logging

    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()
    try:
        model = AutoModel.from_pretrained(model_ref)
    except (OSError, ValueError, EnvironmentError) as exc:
        raise ExportError(
            f"cannot resolve model {model_ref!r}: {exc}"
        ) from None
    model.eval()
    model.to(torch.device(device))
    try:
        processor = AutoImageProcessor.from_pretrained(model_ref)
    except (OSError, ValueError, EnvironmentError):
        processor = None
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_ref)
    except (OSError, ValueError, EnvironmentError):
        tokenizer = None
    return Encoder(model_ref=str(model_ref), model=model,
                   processor=processor, tokenizer=tokenizer, device=device)
