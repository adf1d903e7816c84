"""Scene scoring: top-5 (category id, probability) evidence rows per image."""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Iterable, Optional

import torch
from PIL import Image

from .io_utils import atomic_write_lines
from .models import SCENE_INPUT_SIZE, TinySceneNet, normalize_batch


def _decode_rgb(path: Path) -> Optional[Image.Image]:
    try:
        with path.open("rb") as f:
            img = Image.open(io.BytesIO(f.read()))
            img.load()
        return img.convert("RGB")
    except Exception:
        return None


def _to_tensor(img: Image.Image) -> torch.Tensor:
    resized = img.resize((SCENE_INPUT_SIZE, SCENE_INPUT_SIZE), Image.Resampling.BICUBIC)
    data = torch.frombuffer(bytearray(resized.tobytes()), dtype=torch.uint8)
    x = data.view(SCENE_INPUT_SIZE, SCENE_INPUT_SIZE, 3).permute(2, 0, 1).float() / 255.0
    return normalize_batch(x.unsqueeze(0))


@torch.no_grad()
def score_scenes(
    items: Iterable[tuple[str, Path]],
    out_path: Path | str,
    model: Optional[TinySceneNet] = None,
    top_k: int = 5,
) -> dict:
    """Score (image_id, path) pairs into a scene evidence file.

    Probabilities come from the softmax output layer; the top-5 list is
    sorted by descending probability with ascending-id tie breaks, so two
    runs over the same inputs are byte-identical. Undecodable images produce
    an error-marker row.
    """
    model = model or TinySceneNet()
    model.eval()
    lines = []
    n_ok = n_err = 0
    for image_id, path in items:
        img = _decode_rgb(Path(path))
        if img is None:
            lines.append(json.dumps({"id": image_id, "error": "decode"}, separators=(",", ":")))
            n_err += 1
            continue
        logits = model(_to_tensor(img))[0].double()
        probs = torch.softmax(logits, dim=0)
        order = sorted(range(model.n_categories), key=lambda c: (-probs[c].item(), c))[:top_k]
        top5 = [[c, probs[c].item()] for c in order]
        lines.append(json.dumps({"id": image_id, "top5": top5}, separators=(",", ":")))
        n_ok += 1
    atomic_write_lines(out_path, lines)
    return {"scored": n_ok, "decode_errors": n_err}
