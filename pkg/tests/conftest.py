import random
from pathlib import Path

import pytest
from PIL import Image

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parents[1] / "data"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def toy_boundaries():
    from countrykit.geo import load_boundaries

    return load_boundaries(FIXTURES / "boundaries_toy.geojson")


@pytest.fixture(scope="session")
def taxonomy():
    from countrykit.filters import load_taxonomy

    return load_taxonomy(DATA / "scene_taxonomy_365.tsv", DATA / "scene_blacklist.txt")


@pytest.fixture(scope="session")
def manifest_records():
    from countrykit.manifest import read_manifest

    return list(read_manifest(FIXTURES / "manifest_500.jsonl"))


def make_image(width: int, height: int, seed: int = 0, grey: bool = False) -> Image.Image:
    """Deterministic test image: random colored blocks, optionally grey-level."""
    import numpy as np

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


def generate_fixture_images(records, out_dir: Path) -> None:
    """Write one deterministic PNG per manifest record, matching its dimensions."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, record in enumerate(records):
        img = make_image(record.width, record.height, seed=i, grey=(i % 13 == 4))
        img.save(out_dir / record.path_or_url, format="PNG")


@pytest.fixture(scope="session")
def fixture_image_dir(tmp_path_factory, manifest_records) -> Path:
    out_dir = tmp_path_factory.mktemp("images")
    generate_fixture_images(manifest_records, out_dir)
    return out_dir


def run_full_pipeline(out_dir: Path, image_dir: Path, seed: int = 7) -> dict[str, Path]:
    """Drive every stage through the CLI; returns the artifact paths."""
    from countrykit.cli import main

    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "queries": out_dir / "queries.txt",
        "boxes": out_dir / "boxes.jsonl",
        "m_assigned": out_dir / "m1_assigned.jsonl",
        "m_filtered": out_dir / "m2_filtered.jsonl",
        "filter_report": out_dir / "filter_report.json",
        "m_normalized": out_dir / "m3_normalized.jsonl",
        "normalize_meta": out_dir / "m3_normalized.jsonl.meta.json",
        "m_grouped": out_dir / "m4_grouped.jsonl",
        "grouping": out_dir / "grouping.txt",
        "m_split": out_dir / "m5_split.jsonl",
        "weights": out_dir / "weights.tsv",
        "report": out_dir / "report.json",
        "table": out_dir / "report.txt",
    }
    steps = [
        ["gen-queries",
         "--cities", str(FIXTURES / "cities_50.tsv"),
         "--keywords", str(FIXTURES / "keywords_10.txt"),
         "--out-queries", str(artifacts["queries"]),
         "--out-boxes", str(artifacts["boxes"])],
        ["assign-country",
         "--manifest", str(FIXTURES / "manifest_500.jsonl"),
         "--boundaries", str(FIXTURES / "boundaries_toy.geojson"),
         "--out", str(artifacts["m_assigned"])],
        ["filter",
         "--manifest", str(artifacts["m_assigned"]),
         "--taxonomy", str(DATA / "scene_taxonomy_365.tsv"),
         "--blacklist", str(DATA / "scene_blacklist.txt"),
         "--scene-evidence", str(FIXTURES / "evidence_scene.jsonl"),
         "--face-evidence", str(FIXTURES / "evidence_face.jsonl"),
         "--grey-evidence", str(FIXTURES / "evidence_grey.jsonl"),
         "--out", str(artifacts["m_filtered"]),
         "--report-out", str(artifacts["filter_report"]),
         "--queue-out", str(out_dir / "needs_evidence.jsonl")],
        ["normalize",
         "--manifest", str(artifacts["m_filtered"]),
         "--image-dir", str(image_dir),
         "--out-dir", str(out_dir / "images"),
         "--workers", "2",
         "--out", str(artifacts["m_normalized"])],
        ["group",
         "--manifest", str(artifacts["m_normalized"]),
         "--k", "7",
         "--grouping-out", str(artifacts["grouping"]),
         "--out", str(artifacts["m_grouped"])],
        ["split",
         "--manifest", str(artifacts["m_grouped"]),
         "--seed", str(seed),
         "--out", str(artifacts["m_split"])],
        ["weights",
         "--manifest", str(artifacts["m_split"]),
         "--out", str(artifacts["weights"])],
        ["eval",
         "--predictions", f"fixture={FIXTURES / 'predictions_5crop.txt'}",
         "--strategies", "average,max,single_UL,single_UR,single_LL,single_LR,single_C",
         "--coords", str(FIXTURES / "coords_baseline.jsonl"),
         "--boundaries", str(FIXTURES / "boundaries_toy.geojson"),
         "--grouping", str(artifacts["grouping"]),
         "--out-report", str(artifacts["report"]),
         "--out-table", str(artifacts["table"])],
    ]
    for step in steps:
        code = main(step)
        assert code == 0, f"stage {step[0]} exited {code}"
    return artifacts
