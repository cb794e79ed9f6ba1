"""Shared fixtures: tiny local checkpoints and a small image corpus.

The checkpoints are randomly initialized miniatures of the two encoder
families the exporter supports, built on the fly in a session temp
directory so no test ever needs the network.
"""

from __future__ import annotations

import os

import pytest

from _exutil import Corpus, write_image, write_manifest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(code, title): marks a test as a named release gate",
    )
    # Checkpoints are local; keep the model-hub machinery offline.
    os.environ.setdefault("HF_HUB_OFFLINE", "1")


@pytest.fixture(scope="session")
def tiny_clip(tmp_path_factory) -> str:
    """A miniature vision--text checkpoint with projection dim 16."""
    import torch
    from tokenizers import pre_tokenizers
    from transformers import (
        CLIPConfig,
        CLIPImageProcessor,
        CLIPModel,
        CLIPTextConfig,
        CLIPTokenizer,
        CLIPVisionConfig,
    )

    out = tmp_path_factory.mktemp("ckpt") / "tiny-clip"
    out.mkdir()
    chars = sorted(pre_tokenizers.ByteLevel.alphabet())
    vocab: dict[str, int] = {}
    for c in chars:
        vocab[c] = len(vocab)
    for c in chars:
        vocab[c + "</w>"] = len(vocab)
    vocab["<|startoftext|>"] = len(vocab)
    vocab["<|endoftext|>"] = len(vocab)
    tok = CLIPTokenizer(vocab=vocab, merges=[], model_max_length=77)
    tok.save_pretrained(out)
    cfg = CLIPConfig(
        text_config=CLIPTextConfig(
            vocab_size=len(vocab), hidden_size=32, intermediate_size=64,
            num_hidden_layers=2, num_attention_heads=2,
            max_position_embeddings=77,
            bos_token_id=tok.bos_token_id, eos_token_id=tok.eos_token_id,
        ),
        vision_config=CLIPVisionConfig(
            hidden_size=32, intermediate_size=64, num_hidden_layers=2,
            num_attention_heads=2, image_size=32, patch_size=16,
            num_channels=3,
        ),
        projection_dim=16,
    )
    torch.manual_seed(0)
    model = CLIPModel(cfg)
    model.eval()
    model.save_pretrained(out)
    CLIPImageProcessor(
        size={"shortest_edge": 32},
        crop_size={"height": 32, "width": 32},
    ).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_dino(tmp_path_factory) -> str:
    """A miniature vision-only checkpoint with hidden size 32."""
    import torch
    from transformers import BitImageProcessor, Dinov2Config, Dinov2Model

    out = tmp_path_factory.mktemp("ckpt") / "tiny-dino"
    out.mkdir()
    cfg = Dinov2Config(hidden_size=32, num_hidden_layers=2,
                       num_attention_heads=2, intermediate_size=64,
                       image_size=32, patch_size=16)
    torch.manual_seed(1)
    model = Dinov2Model(cfg)
    model.eval()
    model.save_pretrained(out)
    BitImageProcessor(
        size={"shortest_edge": 32},
        crop_size={"height": 32, "width": 32},
        do_center_crop=True,
    ).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def image_corpus(tmp_path_factory) -> Corpus:
    """Twelve readable images, two datasets interleaved, varied sizes."""
    root = tmp_path_factory.mktemp("corpus")
    sizes = [(24, 24), (40, 52), (33, 17), (64, 48), (20, 30), (48, 64)]
    rows = []
    labels = []
    for i in range(12):
        name = f"img_{i:03d}.png"
        width, height = sizes[i % len(sizes)]
        write_image(root / name, i, width, height)
        dataset = "camA" if i % 2 == 0 else "camB"
        rows.append((name, dataset, width, height))
        labels.append(0 if dataset == "camA" else 1)
    manifest = root / "manifest.csv"
    write_manifest(manifest, rows)
    return Corpus(manifest, ["camA", "camB"], labels)
