#!/usr/bin/env python3
"""Run the whole pipeline end to end on the checked-in toy fixtures.

Generates one deterministic image per fixture manifest record, then drives
gen-queries -> assign-country -> filter -> normalize -> group -> split ->
weights -> eval through the CLI, leaving every artifact under --out-dir.

Usage: python scripts/run_fixture_pipeline.py [--out-dir out/fixture_run]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from countrykit.cli import main as countrykit_main
from countrykit.manifest import read_manifest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"
DATA = ROOT / "data"


def make_image(width: int, height: int, seed: int, grey: bool) -> Image.Image:
    rng = np.random.default_rng(seed)
    block = 16
    bw, bh = -(-width // block), -(-height // block)
    if grey:
        tiles = rng.integers(0, 256, size=(bh, bw), dtype=np.uint8)
        arr = np.kron(tiles, np.ones((block, block), dtype=np.uint8))
        return Image.fromarray(arr[:height, :width], mode="L")
    tiles = rng.integers(0, 256, size=(bh, bw, 3), dtype=np.uint8)
    arr = np.repeat(np.repeat(tiles, block, axis=0), block, axis=1)
    return Image.fromarray(arr[:height, :width], mode="RGB")


def run(argv: list[str]) -> None:
    print("  $ countrykit " + " ".join(argv), file=sys.stderr)
    code = countrykit_main(argv)
    if code != 0:
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/fixture_run")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out_dir)
    image_dir = out / "source_images"
    image_dir.mkdir(parents=True, exist_ok=True)
    records = list(read_manifest(FIXTURES / "manifest_500.jsonl"))
    for i, record in enumerate(records):
        img = make_image(record.width, record.height, seed=i, grey=(i % 13 == 4))
        img.save(image_dir / record.path_or_url, format="PNG")
    print(f"generated {len(records)} source images -> {image_dir}", file=sys.stderr)

    run(["gen-queries", "--cities", str(FIXTURES / "cities_50.tsv"),
         "--keywords", str(FIXTURES / "keywords_10.txt"),
         "--out-queries", str(out / "queries.txt"), "--out-boxes", str(out / "boxes.jsonl")])
    run(["assign-country", "--manifest", str(FIXTURES / "manifest_500.jsonl"),
         "--boundaries", str(FIXTURES / "boundaries_toy.geojson"),
         "--out", str(out / "m1_assigned.jsonl")])
    run(["filter", "--manifest", str(out / "m1_assigned.jsonl"),
         "--taxonomy", str(DATA / "scene_taxonomy_365.tsv"),
         "--blacklist", str(DATA / "scene_blacklist.txt"),
         "--scene-evidence", str(FIXTURES / "evidence_scene.jsonl"),
         "--face-evidence", str(FIXTURES / "evidence_face.jsonl"),
         "--grey-evidence", str(FIXTURES / "evidence_grey.jsonl"),
         "--out", str(out / "m2_filtered.jsonl"),
         "--report-out", str(out / "filter_report.json")])
    run(["normalize", "--manifest", str(out / "m2_filtered.jsonl"),
         "--image-dir", str(image_dir), "--out-dir", str(out / "images"),
         "--workers", "4", "--out", str(out / "m3_normalized.jsonl")])
    run(["group", "--manifest", str(out / "m3_normalized.jsonl"), "--k", "7",
         "--grouping-out", str(out / "grouping.txt"), "--out", str(out / "m4_grouped.jsonl")])
    run(["split", "--manifest", str(out / "m4_grouped.jsonl"), "--seed", str(args.seed),
         "--out", str(out / "m5_split.jsonl")])
    run(["weights", "--manifest", str(out / "m5_split.jsonl"), "--out", str(out / "weights.tsv")])
    run(["eval",
         "--predictions", f"fixture={FIXTURES / 'predictions_5crop.txt'}",
         "--strategies", "average,max,single_UL,single_UR,single_LL,single_LR,single_C",
         "--coords", str(FIXTURES / "coords_baseline.jsonl"),
         "--boundaries", str(FIXTURES / "boundaries_toy.geojson"),
         "--grouping", str(out / "grouping.txt"),
         "--out-report", str(out / "report.json"), "--out-table", str(out / "report.txt")])

    print(f"\ndone; artifacts under {out}", file=sys.stderr)
    print((out / "report.txt").read_text(encoding="utf-8"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
