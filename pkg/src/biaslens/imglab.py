"""Image containers, bilinear resampling, residuals and synthetic corpora.

Pixels are float64 in [0, 255] with shape (height, width, channels) and 1 or
3 channels.  Resampling follows the half-pixel-center convention (the source
coordinate of output pixel ``i`` is ``(i + 0.5) * in/out - 0.5``) with
edge-clamped reads, so resizing to the same dimensions reproduces the input
bit for bit.

Residual rasters are stored in a small binary format: a 16-byte header
(magic ``RES1`` plus u32 width/height/channels, little-endian) followed by
row-major float32 data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from biaslens._rand import mix64, philox

RES1_MAGIC = b"RES1"

TEXTURE_KINDS = ("value-noise", "blob-field", "stripe-warp")

# Amplitude (in gray levels) of the pixel-locked checkerboard dither that
# gen_fake stamps onto every texture after contrast stretching.  It models a
# fixed acquisition-grid artifact shared by all images of a corpus: the
# pattern lives at the native pixel pitch, so resampling folds it into a
# resolution-dependent signature while leaving the texture statistics alone.
DITHER_AMPLITUDE = 20.0


@dataclass
class Image:
    """A float image in [0, 255] with explicit channel axis."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise ValueError(f"expected 2-D or 3-D pixel array, got {px.ndim}-D")
        if px.shape[2] not in (1, 3):
            raise ValueError(f"expected 1 or 3 channels, got {px.shape[2]}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("empty image")
        if not np.all(np.isfinite(px)):
            raise ValueError("non-finite pixel values")
        if px.min() < 0.0 or px.max() > 255.0:
            raise ValueError(
                f"pixel values outside [0, 255]: "
                f"min {px.min():.3f}, max {px.max():.3f}"
            )
        self.pixels = np.ascontiguousarray(px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass
class ResidualImage:
    """A signed difference raster in [-255, 255]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 2:
            vals = vals[:, :, None]
        if vals.ndim != 3 or vals.shape[2] not in (1, 3):
            raise ValueError("residual must be (h, w, 1|3)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite residual values")
        if vals.min() < -255.0 or vals.max() > 255.0:
            raise ValueError("residual values outside [-255, 255]")
        self.values = np.ascontiguousarray(vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.values)))


def _axis_weights(out_size: int, in_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sampling indices and fractions for one axis (half-pixel centers)."""
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=float) + 0.5) * scale - 0.5
    i0 = np.floor(src)
    frac = src - i0
    lo = np.clip(i0, 0, in_size - 1).astype(np.intp)
    hi = np.clip(i0 + 1, 0, in_size - 1).astype(np.intp)
    return lo, hi, frac


def _box3(px: np.ndarray) -> np.ndarray:
    """3x3 box filter with edge-clamped borders."""
    padded = np.pad(px, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(px)
    for dy in range(3):
        for dx in range(3):
            out += padded[dy:dy + px.shape[0], dx:dx + px.shape[1]]
    return out / 9.0


def resize_bilinear(img: Image, out_w: int, out_h: int,
                    prefilter: bool = False) -> Image:
    """Bilinear resample to ``out_w`` x ``out_h``.

    With ``prefilter`` a 3x3 box filter smooths the source first, which
    tames aliasing for strong downscales.  Output values are clamped to
    [0, 255].
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"non-positive output size: {out_w}x{out_h}")
    px = img.pixels
    if prefilter:
        px = _box3(px)
    x_lo, x_hi, x_f = _axis_weights(out_w, img.width)
    y_lo, y_hi, y_f = _axis_weights(out_h, img.height)
    rows = px[y_lo] * (1.0 - y_f)[:, None, None] + px[y_hi] * y_f[:, None, None]
    out = (rows[:, x_lo] * (1.0 - x_f)[None, :, None]
           + rows[:, x_hi] * x_f[None, :, None])
    return Image(np.clip(out, 0.0, 255.0))


def two_step_resize(img: Image, mid: int, final: int) -> Image:
    """Resize to ``mid`` x ``mid`` and then to ``final`` x ``final``."""
    return resize_bilinear(resize_bilinear(img, mid, mid), final, final)


def residual_image(img: Image, pipeline_size: int) -> ResidualImage:
    """Round-trip resample residual at the original resolution.

    The image is resized down to ``pipeline_size`` square and back up to its
    native size; the residual is the round-trip reconstruction minus the
    original.  Images already at ``pipeline_size`` square have an exactly
    zero residual.
    """
    down = resize_bilinear(img, pipeline_size, pipeline_size)
    back = resize_bilinear(down, img.width, img.height)
    return ResidualImage(back.pixels - img.pixels)


def pixel_features(img: Image, side: int) -> np.ndarray:
    """Flatten a ``side`` x ``side`` bilinear thumbnail into [0, 1] features."""
    if side < 2:
        raise ValueError(f"feature side must be >= 2, got {side}")
    thumb = resize_bilinear(img, side, side)
    return (thumb.pixels / 255.0).ravel()


# ---------------------------------------------------------------------------
# Synthetic image generation


@dataclass(frozen=True)
class FakeSpec:
    """Recipe for one procedurally generated RGB image."""

    width: int
    height: int
    texture_kind: str
    seed: int

    def __post_init__(self) -> None:
        if self.width < 8 or self.height < 8:
            raise ValueError(
                f"fake images must be at least 8x8, got "
                f"{self.width}x{self.height}"
            )
        if self.texture_kind not in TEXTURE_KINDS:
            raise ValueError(
                f"unknown texture kind {self.texture_kind!r}; "
                f"expected one of {TEXTURE_KINDS}"
            )


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _value_noise(rng: np.random.Generator, w: int, h: int,
                 cells: int) -> np.ndarray:
    """One octave of smoothly interpolated lattice noise on a (h, w) grid.

    ``cells`` counts lattice cells across the longer image side, so the
    spatial scale of the pattern is a fixed fraction of the image no matter
    the pixel resolution.
    """
    longer = max(w, h)
    cx = max(1, round(cells * w / longer))
    cy = max(1, round(cells * h / longer))
    lattice = rng.random((cy + 1, cx + 1))
    u = (np.arange(w, dtype=float) + 0.5) / w * cx
    v = (np.arange(h, dtype=float) + 0.5) / h * cy
    ui = np.minimum(u.astype(np.intp), cx - 1)
    vi = np.minimum(v.astype(np.intp), cy - 1)
    uf = _smoothstep(u - ui)
    vf = _smoothstep(v - vi)
    top = (lattice[vi][:, ui] * (1.0 - uf)[None, :]
           + lattice[vi][:, ui + 1] * uf[None, :])
    bot = (lattice[vi + 1][:, ui] * (1.0 - uf)[None, :]
           + lattice[vi + 1][:, ui + 1] * uf[None, :])
    return top * (1.0 - vf)[:, None] + bot * vf[:, None]


def _field_value_noise(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    field = np.zeros((h, w))
    weight = 1.0
    for cells in (6, 12, 24, 48):
        field += weight * _value_noise(rng, w, h, cells)
        weight *= 0.5
    return field


def _field_blobs(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    n_blobs = 40
    cx = rng.random(n_blobs)
    cy = rng.random(n_blobs)
    sigma = rng.uniform(0.03, 0.18, n_blobs)
    amp = rng.uniform(-1.0, 1.0, n_blobs)
    x = (np.arange(w, dtype=float) + 0.5) / w
    y = (np.arange(h, dtype=float) + 0.5) / h
    field = np.zeros((h, w))
    for i in range(n_blobs):
        gx = np.exp(-0.5 * ((x - cx[i]) / sigma[i]) ** 2)
        gy = np.exp(-0.5 * ((y - cy[i]) / sigma[i]) ** 2)
        field += amp[i] * gy[:, None] * gx[None, :]
    return field


def _field_stripes(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    # Stripe frequencies stay well below the pixel pitch at every size the
    # toolkit resizes to, so the stripes themselves survive resampling
    # instead of turning into aliasing noise.
    theta = rng.uniform(0.0, np.pi)
    freq = rng.uniform(4.0, 11.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    warp_amp = rng.uniform(0.05, 0.25)
    warp = warp_amp * (_value_noise(rng, w, h, 4)
                       + 0.5 * _value_noise(rng, w, h, 8))
    x = (np.arange(w, dtype=float) + 0.5) / w
    y = (np.arange(h, dtype=float) + 0.5) / h
    t = np.cos(theta) * x[None, :] + np.sin(theta) * y[:, None]
    return np.sin(2.0 * np.pi * freq * (t + warp) + phase)


_FIELDS = {
    "value-noise": _field_value_noise,
    "blob-field": _field_blobs,
    "stripe-warp": _field_stripes,
}


def gen_fake(spec: FakeSpec) -> Image:
    """Generate a deterministic RGB texture image from a spec.

    Each channel is an independent random field whose spatial scales are
    fractions of the image size, so the texture family is statistically
    identical across native resolutions.  Channels are contrast-stretched
    to the full [0, 255] range, then a +/- ``DITHER_AMPLITUDE`` checkerboard
    locked to the native pixel grid is added (clipped), emulating a fixed
    acquisition artifact at the sensor pitch.
    """
    kind_id = TEXTURE_KINDS.index(spec.texture_kind)
    rng = philox(mix64(spec.seed, kind_id, spec.width, spec.height))
    make_field = _FIELDS[spec.texture_kind]
    channels = []
    for _ in range(3):
        field = make_field(rng, spec.width, spec.height)
        lo, hi = float(field.min()), float(field.max())
        if hi - lo < 1e-12:
            stretched = np.full_like(field, 127.5)
        else:
            stretched = (field - lo) / (hi - lo) * 255.0
        channels.append(stretched)
    px = np.stack(channels, axis=2)
    yy, xx = np.indices((spec.height, spec.width))
    checker = np.where((xx + yy) % 2 == 0, DITHER_AMPLITUDE, -DITHER_AMPLITUDE)
    px = np.clip(px + checker[:, :, None], 0.0, 255.0)
    return Image(px)


# ---------------------------------------------------------------------------
# File I/O


def read_png(path: str | Path) -> Image:
    """Load a PNG (or any raster Pillow reads) as grayscale or RGB."""
    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=float)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=float)
    return Image(arr)


def write_png(img: Image, path: str | Path) -> None:
    """Save an image as 8-bit PNG (values rounded to the nearest level)."""
    arr = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        PILImage.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(arr, mode="RGB").save(path)


def write_residual(res: ResidualImage, path: str | Path) -> None:
    """Serialize a residual raster (RES1 header + float32 data)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", RES1_MAGIC, res.width, res.height,
                             res.channels))
        fh.write(np.ascontiguousarray(res.values, "<f4").tobytes())


def read_residual(path: str | Path) -> ResidualImage:
    """Parse a RES1 residual raster."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != RES1_MAGIC:
        raise ValueError(f"not a RES1 file: {path}")
    _, w, h, c = struct.unpack_from("<4sIII", raw, 0)
    want = 16 + w * h * c * 4
    if len(raw) != want:
        raise ValueError(
            f"payload size mismatch in {path}: expected {want} bytes, "
            f"found {len(raw)}"
        )
    vals = np.frombuffer(raw[16:], dtype="<f4").astype(float).reshape(h, w, c)
    return ResidualImage(vals)


def residual_preview(res: ResidualImage, path: str | Path) -> None:
    """Save a PNG preview mapping residual x to gray level (x + 255) / 2."""
    mapped = (res.values + 255.0) / 2.0
    write_png(Image(mapped), path)
