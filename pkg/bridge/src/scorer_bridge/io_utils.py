"""Small shared helpers: atomic writes and manifest-driven image listings."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable


def atomic_write_lines(path: Path | str, lines: Iterable[str]) -> None:
    """Write via temp file + rename so consumers polling the directory never
    see a half-written file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")
    os.replace(tmp, path)


def atomic_write_text(path: Path | str, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_labels_file(path: Path | str) -> list[dict]:
    """JSONL of {"id", "path", "class_id"} rows written by make-shapes."""
    rows = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def resolve(path: str, base_dir: Path | str | None) -> Path:
    p = Path(path)
    if p.is_absolute() or base_dir is None:
        return p
    return Path(base_dir) / p
