"""Five-crop inference: per-image 5xN probability vectors, no fusion here.

Crop geometry comes from the pipeline's crop planner (the single source of
geometry truth); fusion stays on the consumer side. Output goes through the
pipeline's prediction-file writer, so the schema cannot drift.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import torch
from PIL import Image

from countrykit.evaluation import CROP_SIZE, PredictionRecord, crop_plan, write_prediction_file

from .models import TinyCountryNet, normalize_batch


class ClassCountMismatch(ValueError):
    pass


@torch.no_grad()
def infer_country(
    items: Iterable[tuple[str, int, Path]],
    model: TinyCountryNet,
    n_classes: int,
    out_path: Path | str,
    image_dir: Optional[Path | str] = None,
) -> tuple[list[PredictionRecord], dict[str, np.ndarray]]:
    """Score (image_id, true_class, path) items into a 5xN prediction file.

    Returns the records plus each image's own five-crop mean vector
    (computed here at float64) so consumers can cross-check their fusion.
    """
    if model.n_classes != n_classes:
        raise ClassCountMismatch(
            f"model outputs {model.n_classes} classes, grouping expects {n_classes}"
        )
    model.eval()
    records: list[PredictionRecord] = []
    own_means: dict[str, np.ndarray] = {}
    for image_id, true_class, path in items:
        path = Path(path)
        if image_dir is not None and not path.is_absolute():
            path = Path(image_dir) / path
        img = Image.open(path).convert("RGB")
        plan = crop_plan(*img.size)
        resized = img.resize(plan.resized, Image.Resampling.BICUBIC)
        rows = []
        # one forward pass per crop: batched CPU convolutions are not
        # bitwise-identical across batch rows, and identical crops must
        # produce identical vectors
        for _label, x, y in plan.crops:
            tile = resized.crop((x, y, x + CROP_SIZE, y + CROP_SIZE))
            array = np.asarray(tile, dtype=np.float32) / 255.0
            crop_batch = torch.from_numpy(array).permute(2, 0, 1).unsqueeze(0)
            logits = model(normalize_batch(crop_batch))
            rows.append(torch.softmax(logits.double(), dim=1)[0].numpy())
        vectors = np.stack(rows)
        records.append(
            PredictionRecord(image_id=image_id, true_class=true_class, crop_vectors=vectors)
        )
        own_means[image_id] = vectors.mean(axis=0)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_name(out_path.name + ".tmp")
    write_prediction_file(tmp, records, n_classes)
    os.replace(tmp, out_path)
    return records, own_means
