"""Storage normalization: resize so the smallest dimension is 640, re-encode JPEG q75.

Images whose smallest dimension is not larger than the limit keep their
original size but are still re-encoded at quality 75. EXIF orientation is
baked in and all other metadata is stripped.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

from PIL import Image, ImageOps

JPEG_QUALITY = 75
MIN_DIM_LIMIT = 640
# 4:2:0 chroma subsampling (PIL subsampling code 2).
JPEG_SUBSAMPLING = 2

# Resampling kernel is not pinned by the storage rules; bicubic is recorded in
# the stage's sidecar metadata so reruns can reproduce outputs.
RESAMPLE_KERNEL = Image.Resampling.BICUBIC
RESAMPLE_KERNEL_NAME = "bicubic"


class DecodeError(ValueError):
    """Input bytes could not be decoded as an image."""


@dataclass(frozen=True)
class ResizePlan:
    source: tuple[int, int]
    target: tuple[int, int]
    resized: bool


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def target_dimensions(width: int, height: int, limit: int = MIN_DIM_LIMIT) -> ResizePlan:
    """Plan the stored dimensions for an image.

    If min(width, height) > limit, scale so the smaller dimension equals the
    limit exactly and round the other half-up; otherwise keep the original
    dimensions.
    """
    if width < 1 or height < 1:
        raise ValueError(f"dimensions must be >= 1, got {width}x{height}")
    smallest = min(width, height)
    if smallest <= limit:
        return ResizePlan(source=(width, height), target=(width, height), resized=False)
    scale = limit / smallest
    if width <= height:
        target = (limit, _round_half_up(height * scale))
    else:
        target = (_round_half_up(width * scale), limit)
    return ResizePlan(source=(width, height), target=target, resized=True)


def decode_image(data: bytes) -> Image.Image:
    """Decode and apply EXIF orientation; raises DecodeError on bad input."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as e:
        raise DecodeError(f"cannot decode image: {e}") from e
    return ImageOps.exif_transpose(img)


def transcode(data: bytes, plan: ResizePlan, quality: int = JPEG_QUALITY) -> bytes:
    """Re-encode image bytes as baseline JPEG at the planned dimensions.

    Output is quality-`quality` 4:2:0 JPEG with metadata stripped; the
    orientation from EXIF is already applied by decode. Single-channel inputs
    stay single-channel.
    """
    if plan.target[0] < 1 or plan.target[1] < 1:
        raise ValueError(f"zero-area target in plan: {plan}")
    img = decode_image(data)
    if img.mode in ("P", "RGBA", "CMYK", "YCbCr"):
        img = img.convert("RGB")
    elif img.mode in ("LA", "1", "I", "I;16", "F"):
        img = img.convert("L")
    if img.size != plan.target:
        img = img.resize(plan.target, RESAMPLE_KERNEL)
    out = io.BytesIO()
    save_kwargs = {"format": "JPEG", "quality": quality, "progressive": False}
    if img.mode == "RGB":
        save_kwargs["subsampling"] = JPEG_SUBSAMPLING
    img.save(out, **save_kwargs)
    return out.getvalue()


def sample_grid_pixels(img: Image.Image, min_samples: int = 1000) -> list[tuple[int, int, int]] | int:
    """Sample RGB triples on a fixed stride grid for the grey-level probe.

    Returns the channel count for single-channel images (they are grey by
    definition) and at least min_samples triples otherwise, or every pixel
    for small images.
    """
    if img.mode in ("L", "1", "I", "I;16", "F"):
        return 1
    rgb = img if img.mode == "RGB" else img.convert("RGB")
    w, h = rgb.size
    total = w * h
    stride = max(1, int(math.sqrt(total / min_samples)))
    pixels = rgb.load()
    sample = [
        pixels[x, y][:3]
        for y in range(0, h, stride)
        for x in range(0, w, stride)
    ]
    return sample
