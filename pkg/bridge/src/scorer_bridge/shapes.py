"""Synthetic 3-class shape dataset for desk-scale training runs.

Classes are linearly separable by construction (distinct shape and hue):
0 = circle (warm red), 1 = triangle (green), 2 = cross (blue), drawn large
on a grey noise background so every test-time crop sees part of the shape.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .io_utils import atomic_write_lines

CLASS_NAMES = ("circle", "triangle", "cross")
IMAGE_SIZE = 256


def make_shape_image(class_id: int, rng: random.Random, size: int = IMAGE_SIZE) -> np.ndarray:
    base = rng.randint(120, 170)
    noise_rng = np.random.default_rng(rng.getrandbits(32))
    img = np.clip(
        base + noise_rng.normal(0.0, 12.0, (size, size, 3)), 0, 255
    ).astype(np.uint8)

    cx = size // 2 + rng.randint(-size // 10, size // 10)
    cy = size // 2 + rng.randint(-size // 10, size // 10)
    radius = rng.randint(int(size * 0.28), int(size * 0.38))

    def jitter(r, g, b):
        return (
            int(np.clip(r + rng.randint(-25, 25), 0, 255)),
            int(np.clip(g + rng.randint(-25, 25), 0, 255)),
            int(np.clip(b + rng.randint(-25, 25), 0, 255)),
        )

    if class_id == 0:
        cv2.circle(img, (cx, cy), radius, jitter(200, 60, 50), -1)
    elif class_id == 1:
        points = np.array(
            [(cx, cy - radius), (cx - radius, cy + radius), (cx + radius, cy + radius)]
        )
        cv2.fillPoly(img, [points], jitter(60, 190, 70))
    elif class_id == 2:
        color = jitter(50, 80, 200)
        arm = max(8, radius // 3)
        cv2.rectangle(img, (cx - radius, cy - arm), (cx + radius, cy + arm), color, -1)
        cv2.rectangle(img, (cx - arm, cy - radius), (cx + arm, cy + radius), color, -1)
    else:
        raise ValueError(f"class_id must be 0..2, got {class_id}")
    return img


def generate_split(n: int, seed: int) -> list[tuple[np.ndarray, int]]:
    """n images with labels cycling through the classes, deterministic in seed."""
    rng = random.Random(seed)
    return [(make_shape_image(i % 3, rng), i % 3) for i in range(n)]


def write_split(out_dir: Path | str, n: int, seed: int, split_name: str) -> Path:
    """Write PNGs plus a labels.jsonl of {"id", "path", "class_id"} rows."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (array, label) in enumerate(generate_split(n, seed)):
        name = f"{split_name}_{i:04d}.png"
        Image.fromarray(array).save(out_dir / name, format="PNG")
        rows.append(json.dumps(
            {"id": f"{split_name}_{i:04d}", "path": name, "class_id": label},
            separators=(",", ":"),
        ))
    labels_path = out_dir / f"{split_name}_labels.jsonl"
    atomic_write_lines(labels_path, rows)
    return labels_path
