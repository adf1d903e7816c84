"""Face localization emitting clamped boxes per image.

The default detector is a deliberately simple multi-scale template
correlator: a canonical face template (oval head, dark eyes, mouth) is
matched against an image pyramid and peaks above the correlation threshold
become boxes. It is a desk-scale stand-in validated on synthetic fixtures;
any real detector can replace it as long as it emits the same evidence rows.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import cv2
import numpy as np
from PIL import Image

from .io_utils import atomic_write_lines

TEMPLATE_SIZE = 32
DEFAULT_THRESHOLD = 0.62
PYRAMID_STEP = 1.25
MIN_FACE_PX = 24
# interior window (eyes through mouth) relative to the drawn face canvas;
# matching on the interior keeps the correlation background-independent
_INTERIOR = (0.24, 0.78, 0.22, 0.78)  # y0, y1, x0, x1 fractions
_BOX_EXPAND = 1.45  # interior window -> approximate full-head box


def draw_face(size: int = 200, background: int = 210) -> np.ndarray:
    """Synthetic face: the same geometry the template is built from."""
    img = np.full((size, size, 3), background, np.uint8)
    c = size // 2
    cv2.ellipse(img, (c, c), (int(size * 0.32), int(size * 0.40)), 0, 0, 360, (225, 205, 190), -1)
    eye_y = int(c - size * 0.10)
    for dx in (-int(size * 0.13), int(size * 0.13)):
        cv2.ellipse(img, (c + dx, eye_y), (int(size * 0.06), int(size * 0.035)), 0, 0, 360,
                    (60, 60, 70), -1)
    cv2.line(img, (c, eye_y + int(size * 0.05)), (c, c + int(size * 0.12)), (170, 150, 140), 3)
    cv2.ellipse(img, (c, int(c + size * 0.22)), (int(size * 0.12), int(size * 0.04)), 0, 0, 180,
                (90, 80, 90), -1)
    return img


def _face_template(size: int = TEMPLATE_SIZE) -> np.ndarray:
    canvas = 256
    rgb = draw_face(canvas)
    grey = cv2.cvtColor(rgb, cv2.COLOR_RGB2GRAY)
    y0, y1, x0, x1 = (int(f * canvas) for f in _INTERIOR)
    interior = grey[y0:y1, x0:x1]
    return cv2.resize(interior, (size, size), interpolation=cv2.INTER_AREA).astype(np.float32)


def _nms(boxes: list[tuple[float, float, float, float, float]], iou_threshold: float = 0.3):
    boxes = sorted(boxes, key=lambda b: -b[4])
    kept: list[tuple[float, float, float, float, float]] = []
    for box in boxes:
        x1, y1, w1, h1, _ = box
        overlap = False
        for kx, ky, kw, kh, _ in kept:
            ix = max(0.0, min(x1 + w1, kx + kw) - max(x1, kx))
            iy = max(0.0, min(y1 + h1, ky + kh) - max(y1, ky))
            inter = ix * iy
            union = w1 * h1 + kw * kh - inter
            if union > 0 and inter / union > iou_threshold:
                overlap = True
                break
        if not overlap:
            kept.append(box)
    return kept


@dataclass
class FaceTemplateDetector:
    threshold: float = DEFAULT_THRESHOLD
    name: str = "template-correlation/1"

    def __post_init__(self):
        self._template = _face_template()

    def detect(self, image: np.ndarray) -> list[tuple[int, int, int, int]]:
        """Boxes as (x, y, w, h) in pixel coordinates, clamped to the image."""
        grey = cv2.cvtColor(image, cv2.COLOR_RGB2GRAY).astype(np.float32)
        height, width = grey.shape
        candidates = []
        scale = 1.0
        current = grey
        while min(current.shape) >= TEMPLATE_SIZE:
            response = cv2.matchTemplate(current, self._template, cv2.TM_CCOEFF_NORMED)
            response = np.nan_to_num(response)
            ys, xs = np.where(response >= self.threshold)
            for y, x in zip(ys.tolist(), xs.tolist()):
                # expand the matched interior window to a full-head box
                window = TEMPLATE_SIZE * scale
                size = window * _BOX_EXPAND
                cx = (x + TEMPLATE_SIZE / 2.0) * scale
                cy = (y + TEMPLATE_SIZE / 2.0) * scale
                candidates.append(
                    (cx - size / 2.0, cy - size / 2.0, size, size, float(response[y, x]))
                )
            scale *= PYRAMID_STEP
            new_w = int(round(width / scale))
            new_h = int(round(height / scale))
            if min(new_w, new_h) < TEMPLATE_SIZE:
                break
            current = cv2.resize(grey, (new_w, new_h), interpolation=cv2.INTER_AREA)

        boxes = []
        for x, y, w, h, score in _nms(candidates):
            x1 = max(0, int(round(x)))
            y1 = max(0, int(round(y)))
            x2 = min(width, int(round(x + w)))
            y2 = min(height, int(round(y + h)))
            if x2 - x1 >= MIN_FACE_PX and y2 - y1 >= MIN_FACE_PX:
                boxes.append((x1, y1, x2 - x1, y2 - y1))
        boxes.sort()
        return boxes


def _decode_array(path: Path) -> Optional[np.ndarray]:
    try:
        with path.open("rb") as f:
            img = Image.open(io.BytesIO(f.read()))
            img.load()
        return np.asarray(img.convert("RGB"))
    except Exception:
        return None


def detect_faces(
    items: Iterable[tuple[str, Path]],
    out_path: Path | str,
    detector: Optional[FaceTemplateDetector] = None,
) -> dict:
    """Detect faces for (image_id, path) pairs into a face evidence file."""
    detector = detector or FaceTemplateDetector()
    lines = []
    n_ok = n_err = 0
    for image_id, path in items:
        array = _decode_array(Path(path))
        if array is None:
            lines.append(json.dumps({"id": image_id, "error": "decode"}, separators=(",", ":")))
            n_err += 1
            continue
        boxes = [list(box) for box in detector.detect(array)]
        lines.append(json.dumps({"id": image_id, "boxes": boxes}, separators=(",", ":")))
        n_ok += 1
    atomic_write_lines(out_path, lines)
    return {"scored": n_ok, "decode_errors": n_err}
