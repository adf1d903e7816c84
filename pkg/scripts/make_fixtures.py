#!/usr/bin/env python3
"""Regenerate the checked-in test fixtures under tests/fixtures/.

Everything is seeded, so reruns are byte-identical. The fixture world is a
toy planet with 8 synthetic countries (one with a hole, one crossing the
antimeridian, one multi-part archipelago), a 500-record manifest whose
records sit inside those countries (plus a few offshore and mid-ocean), and
evidence/prediction files consistent with that manifest.

Usage: python scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import random
import sys
from datetime import date, timedelta
from pathlib import Path

from countrykit import geo, manifest
from countrykit.dataset_ops import SplitConfig, split_dataset
from countrykit.evaluation import PredictionRecord, write_prediction_file
from countrykit.filters import load_taxonomy
from countrykit.grouping import CountryStat, compute_grouping, map_country_to_class, write_grouping

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"
SEED = 20240613

TOY_K = 7

# GeoJSON rings are [lon, lat].
TOY_COUNTRIES = {
    "AA": {
        "name": "Aland Flats",
        "geometry": {"type": "Polygon", "coordinates": [
            [[0, 0], [10, 0], [10, 10], [0, 10], [0, 0]]
        ]},
    },
    "BB": {
        "name": "Borundia",
        "geometry": {"type": "Polygon", "coordinates": [
            [[10, 0], [20, 0], [20, 10], [10, 10], [10, 0]]
        ]},
    },
    "CC": {
        "name": "Cabrel Triangle",
        "geometry": {"type": "Polygon", "coordinates": [
            [[0, 20], [10, 20], [0, 30], [0, 20]]
        ]},
    },
    "DD": {
        "name": "Dorvan Ringland",
        "geometry": {"type": "Polygon", "coordinates": [
            [[40, 40], [50, 40], [50, 50], [40, 50], [40, 40]],
            [[44, 44], [46, 44], [46, 46], [44, 46], [44, 44]],
        ]},
    },
    "EE": {
        "name": "Elbow Coast",
        "geometry": {"type": "Polygon", "coordinates": [
            [[-20, 0], [-10, 0], [-10, 5], [-15, 5], [-15, 10], [-20, 10], [-20, 0]]
        ]},
    },
    "FF": {
        "name": "Farline Strait",
        "geometry": {"type": "Polygon", "coordinates": [
            [[175, -5], [-175, -5], [-175, 5], [175, 5], [175, -5]]
        ]},
    },
    "GG": {
        "name": "Gull Rock",
        "geometry": {"type": "Polygon", "coordinates": [
            [[60, 60], [60.3, 60], [60.3, 60.3], [60, 60.3], [60, 60]]
        ]},
    },
    "HH": {
        "name": "Harrow Archipelago",
        "geometry": {"type": "MultiPolygon", "coordinates": [
            [[[100, -30], [105, -30], [105, -25], [100, -25], [100, -30]]],
            [[[107, -30], [112, -30], [112, -25], [107, -25], [107, -30]]],
        ]},
    },
}

# (lat range, lon range) boxes guaranteed inside each country for sampling.
SAFE_INTERIOR = {
    "AA": ((1.0, 9.0), (1.0, 9.0)),
    "BB": ((1.0, 9.0), (11.0, 19.0)),
    "CC": ((21.0, 24.0), (1.0, 4.0)),
    "DD": ((41.0, 43.5), (41.0, 49.0)),
    "EE": ((1.0, 4.0), (-19.0, -11.0)),
    "FF": ((-4.0, 4.0), (176.0, 179.0)),
    "GG": ((60.05, 60.25), (60.05, 60.25)),
    "HH": ((-29.0, -26.0), (101.0, 104.0)),
}

# Rough country shares of the 500-record manifest.
COUNTRY_SHARES = {
    "AA": 0.26, "BB": 0.22, "CC": 0.12, "DD": 0.10,
    "EE": 0.10, "FF": 0.07, "GG": 0.03, "HH": 0.06,
}
# Remaining ~4%: offshore (fallback) and mid-ocean (unassignable) points.

CITY_NAMES = [
    "Arbor", "Brayford", "Calder", "Dunmore", "Eastvale", "Fenwick", "Garrow",
    "Halden", "Ivers", "Jorvik", "Keld", "Lunden", "Marrow", "Nordby",
    "Ostia", "Pelham", "Quarry", "Ravel", "Selby", "Tarn",
]


def write_boundaries() -> Path:
    features = []
    for code, spec in TOY_COUNTRIES.items():
        features.append({
            "type": "Feature",
            "properties": {"code": code, "name": spec["name"]},
            "geometry": spec["geometry"],
        })
    doc = {"type": "FeatureCollection", "features": features}
    out = FIXTURES / "boundaries_toy.geojson"
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return out


def write_cities(rng: random.Random) -> Path:
    # 50 rows, 12 below the population-1000 threshold -> 38 kept.
    out = FIXTURES / "cities_50.tsv"
    rows = []
    codes = list(SAFE_INTERIOR)
    for i in range(50):
        code = codes[i % len(codes)]
        (lat_lo, lat_hi), (lon_lo, lon_hi) = SAFE_INTERIOR[code]
        name = f"{CITY_NAMES[i % len(CITY_NAMES)]}{'' if i < len(CITY_NAMES) else ' ' + str(i)}"
        if i < 12:
            population = rng.randint(40, 999)
        else:
            population = rng.randint(1000, 2_000_000)
        rows.append((
            name,
            code,
            round(rng.uniform(lat_lo, lat_hi), 4),
            round(rng.uniform(lon_lo, lon_hi), 4),
            population,
        ))
    with out.open("w", encoding="utf-8") as f:
        f.write("# columns: name\tcountry_code\tlat\tlon\tpopulation\n")
        for name, code, lat, lon, population in rows:
            f.write(f"{name}\t{code}\t{lat}\t{lon}\t{population}\n")
    return out


def write_keywords() -> Path:
    out = FIXTURES / "keywords_10.txt"
    words = ["church", "museum", "skyline", "bridge", "market",
             "harbor", "castle", "station", "plaza", "tower"]
    out.write_text("\n".join(words) + "\n", encoding="utf-8")
    return out


def build_records(rng: random.Random) -> list[manifest.ImageRecord]:
    records = []
    sources = ("flickr", "mapillary", "unsplash")
    base_day = date(2005, 1, 1)
    index = 0

    def add(lat, lon, *, force_old=False, force_no_date=False):
        nonlocal index
        source = sources[index % 3]
        native = f"img{index:04d}"
        # dimension mix: ~1/4 larger than the 640 limit on the small side
        if index % 4 == 0:
            width = rng.randint(660, 1400)
            height = rng.randint(660, 1400)
        else:
            width = rng.randint(96, 600)
            height = rng.randint(96, 600)
        if force_no_date or index % 11 == 5:
            captured = None
        elif force_old or index % 9 == 7:
            captured = base_day + timedelta(days=rng.randint(0, 2500))  # pre-2012
        else:
            captured = date(2012, 1, 1) + timedelta(days=rng.randint(0, 4000))
        record = manifest.ImageRecord(
            id=manifest.make_record_id(source, native),
            source=source,
            lat=round(lat, 6),
            lon=round(lon, 6),
            width=width,
            height=height,
            path_or_url=f"{native}.png",
            captured_at=captured,
            status="raw",
        )
        records.append(record)
        index += 1

    for code, share in COUNTRY_SHARES.items():
        (lat_lo, lat_hi), (lon_lo, lon_hi) = SAFE_INTERIOR[code]
        for _ in range(int(500 * share)):
            add(rng.uniform(lat_lo, lat_hi), rng.uniform(lon_lo, lon_hi))

    # Points just east of GG's tiny island: outside every polygon but within
    # 25 km of GG's centroid (60.15, 60.15), so the fallback assigns them.
    for _ in range(6):
        add(rng.uniform(60.05, 60.25), 60.3 + rng.uniform(0.02, 0.12))
    # Mid-ocean, unassignable.
    for _ in range(8):
        add(rng.uniform(-45.0, -35.0), rng.uniform(-140.0, -120.0))
    while len(records) < 500:
        (lat_lo, lat_hi), (lon_lo, lon_hi) = SAFE_INTERIOR["AA"]
        add(rng.uniform(lat_lo, lat_hi), rng.uniform(lon_lo, lon_hi))
    return records


def write_evidence(records, rng: random.Random, taxonomy) -> None:
    urban_ids = sorted(i for i, c in taxonomy.categories.items() if c.supercategory == "urban")
    natural_ids = sorted(i for i, c in taxonomy.categories.items() if c.supercategory == "natural")
    indoor_ids = sorted(i for i, c in taxonomy.categories.items() if c.supercategory == "indoor")
    blacklist_ids = sorted(taxonomy.blacklist)
    plain_urban = [i for i in urban_ids if i not in taxonomy.blacklist]

    def top5(categories, weights):
        raw = [(c, rng.uniform(*w)) for c, w in zip(categories, weights)]
        total = sum(p for _, p in raw) + rng.uniform(0.05, 0.2)
        pairs = [(c, round(p / total, 6)) for c, p in raw]
        pairs.sort(key=lambda cp: (-cp[1], cp[0]))
        return pairs

    scene_path = FIXTURES / "evidence_scene.jsonl"
    face_path = FIXTURES / "evidence_face.jsonl"
    grey_path = FIXTURES / "evidence_grey.jsonl"
    with scene_path.open("w", encoding="utf-8") as fs, \
         face_path.open("w", encoding="utf-8") as ff, \
         grey_path.open("w", encoding="utf-8") as fg:
        for i, record in enumerate(records):
            kind = i % 10
            if kind < 6:  # clearly urban
                cats = rng.sample(plain_urban, 4) + [rng.choice(natural_ids)]
                weights = [(0.3, 0.5), (0.15, 0.25), (0.05, 0.1), (0.03, 0.06), (0.01, 0.03)]
            elif kind < 8:  # natural / indoor dominated
                cats = rng.sample(natural_ids, 3) + rng.sample(indoor_ids, 2)
                weights = [(0.3, 0.5), (0.15, 0.25), (0.05, 0.1), (0.03, 0.06), (0.01, 0.03)]
            elif kind == 8:  # blacklisted top-1 (urban-heavy so urban rule passes)
                cats = [rng.choice(blacklist_ids)] + rng.sample(plain_urban, 4)
                weights = [(0.55, 0.7), (0.1, 0.15), (0.04, 0.08), (0.02, 0.04), (0.01, 0.02)]
            else:  # borderline urban
                cats = rng.sample(plain_urban, 2) + rng.sample(natural_ids, 3)
                weights = [(0.25, 0.35), (0.2, 0.3), (0.1, 0.2), (0.05, 0.1), (0.01, 0.05)]
            fs.write(json.dumps({"id": record.id, "top5": [[c, p] for c, p in top5(cats, weights)]},
                                separators=(",", ":")) + "\n")

            if i % 7 == 3:  # single face box, ~5-25% of area
                bw = int(record.width * rng.uniform(0.2, 0.5))
                bh = int(record.height * rng.uniform(0.2, 0.5))
                x = rng.randint(0, max(0, record.width - bw))
                y = rng.randint(0, max(0, record.height - bh))
                boxes = [[x, y, bw, bh]]
            elif i % 7 == 5:  # two small overlapping boxes
                bw = max(4, int(record.width * 0.1))
                bh = max(4, int(record.height * 0.1))
                x = rng.randint(0, max(0, record.width - 2 * bw))
                y = rng.randint(0, max(0, record.height - 2 * bh))
                boxes = [[x, y, bw, bh], [x + bw // 2, y + bh // 2, bw, bh]]
            else:
                boxes = []
            ff.write(json.dumps({"id": record.id, "boxes": boxes}, separators=(",", ":")) + "\n")

            fg.write(json.dumps({"id": record.id, "is_grey": i % 13 == 4},
                                separators=(",", ":")) + "\n")


def write_roundtrip(records) -> None:
    out = FIXTURES / "roundtrip_100.jsonl"
    with out.open("w", encoding="utf-8") as f:
        for record in records[:100]:
            f.write(manifest.serialize_record(record) + "\n")


def write_predictions_and_coords(records, pset, rng: random.Random) -> None:
    # Country assignment + toy grouping give each prediction its true class.
    by_country: dict[str, list[manifest.ImageRecord]] = {}
    for record in records:
        code = geo.assign_country(record.lat, record.lon, pset, fallback_km=25.0)
        if code is not None:
            by_country.setdefault(code, []).append(record)
    stats = [
        CountryStat(
            code=code,
            count=len(group),
            centroid=(sum(r.lat for r in group) / len(group),
                      sum(r.lon for r in group) / len(group)),
        )
        for code, group in sorted(by_country.items())
    ]
    grouping = compute_grouping(stats, TOY_K)
    write_grouping(FIXTURES / "grouping_toy.txt", grouping)

    np_rng = np.random.default_rng(SEED)
    prediction_records = []
    flat = [(code, record) for code, group in sorted(by_country.items()) for record in group]
    for code, record in flat[:80]:
        true_class = map_country_to_class(code, grouping)
        # signal strength varies per image and per crop so fusion strategies
        # disagree and top-k curves are nontrivial
        image_signal = np_rng.uniform(0.0, 1.4)
        crops = np.zeros((5, TOY_K))
        for crop in range(5):
            noise = np_rng.uniform(0.0, 1.0, TOY_K)
            noise[true_class] += image_signal * np_rng.uniform(0.3, 1.2)
            crops[crop] = noise / noise.sum()
        prediction_records.append(
            PredictionRecord(image_id=record.id, true_class=true_class, crop_vectors=crops)
        )
    write_prediction_file(FIXTURES / "predictions_5crop.txt", prediction_records, TOY_K)

    coords_path = FIXTURES / "coords_baseline.jsonl"
    with coords_path.open("w", encoding="utf-8") as f:
        for code, record in flat[:40]:
            true_class = map_country_to_class(code, grouping)
            f.write(json.dumps({
                "id": record.id, "lat": record.lat, "lon": record.lon,
                "true_class": true_class,
            }, separators=(",", ":")) + "\n")
        # two mid-ocean points, unassignable, arbitrary true class
        for i, (lat, lon) in enumerate([(-40.0, -130.0), (-42.0, -125.0)]):
            f.write(json.dumps({
                "id": f"ocean{i}", "lat": lat, "lon": lon, "true_class": 0,
            }, separators=(",", ":")) + "\n")


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    write_boundaries()
    write_cities(rng)
    write_keywords()

    taxonomy = load_taxonomy(ROOT / "data" / "scene_taxonomy_365.tsv",
                             ROOT / "data" / "scene_blacklist.txt")
    records = build_records(rng)
    manifest.write_manifest(FIXTURES / "manifest_500.jsonl", records)
    write_evidence(records, rng, taxonomy)
    write_roundtrip(records)

    pset = geo.load_boundaries(FIXTURES / "boundaries_toy.geojson")
    write_predictions_and_coords(records, pset, rng)
    print(f"fixtures written under {FIXTURES}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
