"""Grey-level flags: pixel probing here, the decision rule stays downstream."""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Iterable

from PIL import Image

from countrykit.filters import grey_filter
from countrykit.normalize import sample_grid_pixels

from .io_utils import atomic_write_lines


def flag_grey(items: Iterable[tuple[str, Path]], out_path: Path | str) -> dict:
    """Probe (image_id, path) pairs and emit {"id", "is_grey"} rows."""
    lines = []
    n_ok = n_err = 0
    for image_id, path in items:
        try:
            with Path(path).open("rb") as f:
                img = Image.open(io.BytesIO(f.read()))
                img.load()
        except Exception:
            lines.append(json.dumps({"id": image_id, "error": "decode"}, separators=(",", ":")))
            n_err += 1
            continue
        sample = sample_grid_pixels(img)
        lines.append(json.dumps(
            {"id": image_id, "is_grey": bool(grey_filter(sample))}, separators=(",", ":")
        ))
        n_ok += 1
    atomic_write_lines(out_path, lines)
    return {"scored": n_ok, "decode_errors": n_err}
