"""Pipeline CLI: every stage reads and writes manifests, so runs are resumable.

Progress and counts go to standard error; data goes to files only. Exit
codes: 0 ok, 1 data/config error, 2 usage. Stage outputs are sorted before
writing, so identical inputs and seed produce byte-identical artifacts
regardless of worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import dataset_ops, evaluation, filters, geo, grouping, manifest, normalize, querygen
from .config import ConfigError, PipelineConfig, load_config

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


def log(message: str) -> None:
    print(message, file=sys.stderr)


class StageError(RuntimeError):
    """Data-level failure; maps to exit code 1."""


def _load_cfg(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig()


def _pick(flag_value, config_value, default=None):
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


def _require(value, name: str):
    if value is None:
        raise StageError(f"missing required input: {name} (flag or config)")
    return value


def _read_records(path: Path | str) -> list[manifest.ImageRecord]:
    path = Path(path)
    if not path.exists():
        raise StageError(f"manifest not found: {path}")
    try:
        return list(manifest.read_manifest(path))
    except manifest.ManifestError as e:
        raise StageError(f"{path}: {e}") from e


# ---------------------------------------------------------------------------
# gen-queries
# ---------------------------------------------------------------------------


def cmd_gen_queries(args) -> int:
    cfg = _load_cfg(args)
    city_path = _require(_pick(args.cities, cfg.city_table), "city table")
    keyword_path = _require(_pick(args.keywords, cfg.keywords), "keywords")
    min_pop = _pick(args.min_population, cfg.min_population, 1000)
    half_width = _pick(args.half_width_km, cfg.bbox_half_width_km, 10.0)

    try:
        cities = querygen.load_city_table(city_path, min_pop)
        keywords = querygen.load_keywords(keyword_path)
    except (OSError, querygen.CityTableError) as e:
        raise StageError(str(e)) from e
    if not keywords:
        raise StageError(f"keyword list is empty: {keyword_path}")
    log(f"cities: {len(cities)} (population >= {min_pop}); keywords: {len(keywords)}")

    raw = querygen.raw_query_count(len(cities), len(keywords))
    log(f"raw query count: {raw}")

    if args.count_only:
        counts = querygen.count_queries(cities, keywords)
        log(f"deduplicated query count: {counts.deduplicated}")
        return EXIT_OK

    out_queries = Path(_require(args.out_queries, "--out-queries"))
    out_queries.parent.mkdir(parents=True, exist_ok=True)
    emitted = set()
    with out_queries.open("w", encoding="utf-8") as f:
        for query in querygen.keyword_queries(cities, keywords):
            emitted.add(query)
            f.write(query + "\n")
    log(f"wrote {raw} queries ({len(emitted)} deduplicated) -> {out_queries}")

    if args.out_boxes:
        out_boxes = Path(args.out_boxes)
        out_boxes.parent.mkdir(parents=True, exist_ok=True)
        with out_boxes.open("w", encoding="utf-8") as f:
            for city, boxes in querygen.city_bboxes(cities, half_width):
                row = {
                    "name": city.name,
                    "country_code": city.country_code,
                    "lat": city.lat,
                    "lon": city.lon,
                    "boxes": [
                        [b.lat_min, b.lat_max, b.lon_min, b.lon_max] for b in boxes
                    ],
                }
                f.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
        log(f"wrote bounding boxes for {len(cities)} cities -> {out_boxes}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# assign-country
# ---------------------------------------------------------------------------


def cmd_assign_country(args) -> int:
    cfg = _load_cfg(args)
    boundary_path = _require(_pick(args.boundaries, cfg.boundaries), "boundaries")
    fallback_km = _pick(args.fallback_km, cfg.fallback_km, 25.0)
    records = _read_records(args.manifest)
    try:
        pset = geo.load_boundaries(boundary_path)
    except (OSError, geo.BoundaryError) as e:
        raise StageError(str(e)) from e

    out_records = []
    assigned = 0
    unassigned = 0
    for record in records:
        if record.status == "rejected":
            out_records.append(record)
            continue
        code = geo.assign_country(record.lat, record.lon, pset, fallback_km)
        if code is None:
            unassigned += 1
            out_records.append(
                record.with_updates(status="rejected", rejection_reason="unassignable_gps")
            )
        else:
            assigned += 1
            out_records.append(record.with_updates(country_code=code))
    n = manifest.write_manifest(args.out, out_records)
    log(f"assigned {assigned}, unassignable {unassigned}; wrote {n} records -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# filter
# ---------------------------------------------------------------------------


def cmd_filter(args) -> int:
    cfg = _load_cfg(args)
    taxonomy_path = _require(_pick(args.taxonomy, cfg.taxonomy), "taxonomy")
    blacklist_path = _pick(args.blacklist, cfg.blacklist)
    filter_config = filters.FilterConfig(
        cutoff_year=_pick(args.cutoff_year, cfg.cutoff_year, 2012),
        urban_threshold=_pick(args.urban_threshold, cfg.urban_threshold, 0.5),
        blacklist_threshold=_pick(args.blacklist_threshold, cfg.blacklist_threshold, 0.5),
        face_area_threshold=_pick(args.face_threshold, cfg.face_area_threshold, 0.10),
        grey_max_channel_diff=cfg.grey_max_channel_diff,
        grey_min_fraction=cfg.grey_min_fraction,
    )
    records = _read_records(args.manifest)

    store = filters.EvidenceStore()
    for path, loader, name in (
        (_pick(args.scene_evidence, cfg.scene_evidence), filters.load_scene_evidence, "scene"),
        (_pick(args.face_evidence, cfg.face_evidence), filters.load_face_evidence, "face"),
        (_pick(args.grey_evidence, cfg.grey_evidence), filters.load_grey_evidence, "grey"),
    ):
        if path is None:
            raise StageError(f"missing {name} evidence file (flag or config)")
        if not Path(path).exists():
            raise StageError(f"{name} evidence file not found: {path}")
        try:
            loader(path, store)
        except filters.EvidenceError as e:
            raise StageError(str(e)) from e

    try:
        taxonomy = filters.load_taxonomy(taxonomy_path, blacklist_path)
    except filters.TaxonomyError as e:
        raise StageError(str(e)) from e

    out_records = []
    outcomes = []
    queue: list[dict] = []
    stats = filters.FilterStats()
    for record in records:
        if record.status == "rejected":
            out_records.append(record)
            continue
        if record.id in store.errors:
            stats.decode_errors += 1
            queue.append({"id": record.id, "error": store.errors[record.id]})
            out_records.append(record)
            continue
        evidence = store.evidence_for(record.id)
        try:
            outcome = filters.run_cascade(record, evidence, taxonomy, filter_config)
        except filters.MissingEvidenceError as e:
            stats.needs_evidence += 1
            queue.append({"id": record.id, "missing": e.stage})
            out_records.append(record)
            continue
        outcomes.append(outcome)
        stats.add_outcome(outcome)
        if outcome.kept:
            out_records.append(
                record.with_updates(status="kept", is_color=not evidence.is_grey)
            )
        else:
            out_records.append(
                record.with_updates(status="rejected", rejection_reason=outcome.reason)
            )

    n = manifest.write_manifest(args.out, out_records)
    report = stats.to_dict()
    if args.report_out:
        report_path = Path(args.report_out)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.queue_out and queue:
        queue_path = Path(args.queue_out)
        queue_path.parent.mkdir(parents=True, exist_ok=True)
        with queue_path.open("w", encoding="utf-8") as f:
            for row in sorted(queue, key=lambda r: r["id"]):
                f.write(json.dumps(row, sort_keys=True) + "\n")
    log(f"filter report: {json.dumps(report, sort_keys=True)}")
    log(f"wrote {n} records -> {args.out}")
    if stats.needs_evidence and args.strict_evidence:
        raise StageError(f"{stats.needs_evidence} records lack evidence (strict mode)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------


def cmd_normalize(args) -> int:
    cfg = _load_cfg(args)
    image_dir = Path(_require(_pick(args.image_dir, cfg.image_dir), "image dir"))
    out_dir = Path(_require(args.out_dir, "--out-dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    quality = _pick(args.quality, cfg.jpeg_quality, 75)
    limit = _pick(args.limit, cfg.min_dim_limit, 640)
    workers = args.workers or 1
    records = _read_records(args.manifest)

    def process(record: manifest.ImageRecord):
        if record.status == "rejected":
            return record, None
        src = Path(record.path_or_url)
        if not src.is_absolute():
            src = image_dir / src
        if not src.exists():
            return record, f"missing file: {src}"
        try:
            data = src.read_bytes()
            img = normalize.decode_image(data)
            plan = normalize.target_dimensions(img.size[0], img.size[1], limit)
            encoded = normalize.transcode(data, plan, quality)
        except (normalize.DecodeError, ValueError) as e:
            return record, str(e)
        out_name = f"{record.id}.jpg"
        (out_dir / out_name).write_bytes(encoded)
        updated = record.with_updates(
            width=plan.target[0], height=plan.target[1], path_or_url=out_name
        )
        return updated, None

    errors: list[tuple[str, str]] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, records))
    else:
        results = [process(r) for r in records]
    out_records = []
    for record, error in results:
        out_records.append(record)
        if error is not None:
            errors.append((record.id, error))

    n = manifest.write_manifest(args.out, out_records)
    meta = {
        "resample_kernel": normalize.RESAMPLE_KERNEL_NAME,
        "jpeg_quality": quality,
        "min_dim_limit": limit,
        "decode_errors": [{"id": i, "error": e} for i, e in sorted(errors)],
    }
    meta_path = Path(args.out).with_suffix(Path(args.out).suffix + ".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log(f"normalized {n - len(errors)} records, {len(errors)} errors; wrote -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# group / split / weights
# ---------------------------------------------------------------------------


def _eligible(records):
    return [r for r in records if r.status != "rejected" and r.country_code is not None]


def cmd_group(args) -> int:
    cfg = _load_cfg(args)
    records = _read_records(args.manifest)
    eligible = _eligible(records)
    if not eligible:
        raise StageError("no records with country codes; run assign-country first")

    codes = sorted({r.country_code for r in eligible})
    grouping_file = _pick(args.grouping_file, cfg.grouping)
    if grouping_file is not None:
        try:
            cgrouping = grouping.load_grouping(grouping_file, expected_codes=codes)
        except grouping.GroupingError as e:
            raise StageError(str(e)) from e
        log(f"loaded grouping with K={cgrouping.k} from {grouping_file}")
    else:
        k = _pick(args.k, cfg.k, 61)
        min_images = _pick(args.min_images, cfg.min_images, 0)
        by_country: dict[str, list[manifest.ImageRecord]] = {}
        for record in eligible:
            by_country.setdefault(record.country_code, []).append(record)
        stats = [
            grouping.CountryStat(
                code=code,
                count=len(group),
                centroid=(
                    sum(r.lat for r in group) / len(group),
                    sum(r.lon for r in group) / len(group),
                ),
            )
            for code, group in sorted(by_country.items())
        ]
        try:
            cgrouping = grouping.compute_grouping(stats, k, min_images)
        except grouping.GroupingError as e:
            raise StageError(str(e)) from e
        log(f"computed grouping with K={cgrouping.k} over {len(stats)} countries")
        small = grouping.small_groups(cgrouping, stats, min_images)
        if small:
            log(f"classes below min_images={min_images}: {small}")

    if args.grouping_out:
        grouping.write_grouping(args.grouping_out, cgrouping)
        log(f"wrote grouping -> {args.grouping_out}")

    out_records = []
    for record in records:
        if record.status != "rejected" and record.country_code is not None:
            class_id = grouping.map_country_to_class(record.country_code, cgrouping)
            out_records.append(record.with_updates(class_id=class_id))
        else:
            out_records.append(record)
    n = manifest.write_manifest(args.out, out_records)
    log(f"wrote {n} records -> {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _load_cfg(args)
    records = _read_records(args.manifest)
    try:
        split_config = dataset_ops.SplitConfig.create(
            train=_pick(args.train, cfg.train_ratio, "0.96"),
            val=_pick(args.val, cfg.val_ratio, "0.02"),
            test=_pick(args.test, cfg.test_ratio, "0.02"),
            seed=_pick(args.seed, cfg.seed, 0),
        )
    except dataset_ops.SplitError as e:
        raise StageError(str(e)) from e

    eligible = _eligible(records)
    try:
        split_records = dataset_ops.split_dataset(eligible, split_config)
    except dataset_ops.SplitError as e:
        raise StageError(str(e)) from e
    by_id = {r.id: r for r in split_records}
    out_records = [by_id.get(r.id, r) for r in records]
    n = manifest.write_manifest(args.out, out_records)
    stats = manifest.ManifestStats()
    for record in out_records:
        stats.add(record)
    log(f"split counts: {dict(sorted(stats.per_split.items()))}")
    log(f"wrote {n} records -> {args.out}")
    return EXIT_OK


def cmd_weights(args) -> int:
    cfg = _load_cfg(args)
    records = _read_records(args.manifest)
    eligible = [r for r in _eligible(records) if r.class_id is not None]
    if not eligible:
        raise StageError("no records with class ids; run group first")
    has_split = any(r.split is not None for r in eligible)
    if has_split:
        counted = [r for r in eligible if r.split == "train"]
        source = "train split"
    else:
        counted = eligible
        source = "all eligible records"
    counts: dict[int, int] = {}
    for record in counted:
        counts[record.class_id] = counts.get(record.class_id, 0) + 1
    # classes present in the manifest but absent from the count basis get 0
    for record in eligible:
        counts.setdefault(record.class_id, 0)
    try:
        table = dataset_ops.class_weights(counts, rescale_mean_one=args.rescale_mean_one)
    except dataset_ops.WeightError as e:
        raise StageError(str(e)) from e
    dataset_ops.write_weight_table(args.out, table, counts_source=source)
    if table.excluded:
        log(f"zero-count classes excluded: {table.excluded}")
    log(f"wrote {table.n_classes} class weights ({source}) -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / report
# ---------------------------------------------------------------------------


def _parse_named_paths(values: list[str]) -> list[tuple[str, Path]]:
    out = []
    for value in values:
        if "=" in value:
            name, _, path = value.partition("=")
        else:
            name, path = Path(value).stem, value
        out.append((name, Path(path)))
    return out


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    strategies = (
        [s.strip() for s in args.strategies.split(",") if s.strip()]
        if args.strategies
        else [cfg.fusion_strategy]
    )
    for strategy in strategies:
        if strategy not in evaluation.FUSION_STRATEGIES:
            raise StageError(f"unknown fusion strategy {strategy!r}")

    named_sets: dict[str, list] = {}
    for name, path in _parse_named_paths(args.predictions or []):
        if not path.exists():
            raise StageError(f"prediction file not found: {path}")
        try:
            header, records = evaluation.read_prediction_file(path)
        except evaluation.PredictionFileError as e:
            raise StageError(str(e)) from e
        log(f"read {len(records)} predictions (N={header['n_classes']}) from {path}")
        named_sets[name] = records

    if args.coords:
        boundary_path = _require(_pick(args.boundaries, cfg.boundaries), "boundaries")
        grouping_path = _require(_pick(args.grouping, cfg.grouping), "grouping")
        try:
            pset = geo.load_boundaries(boundary_path)
            cgrouping = grouping.load_grouping(grouping_path)
        except (geo.BoundaryError, grouping.GroupingError) as e:
            raise StageError(str(e)) from e
        coords_path = Path(args.coords)
        if not coords_path.exists():
            raise StageError(f"coords file not found: {coords_path}")
        points = []
        with coords_path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    points.append(json.loads(line))
        classes = evaluation.coords_to_class(
            [(p["lat"], p["lon"]) for p in points],
            pset,
            cgrouping,
            _pick(args.fallback_km, cfg.fallback_km, 25.0),
        )
        hard = [
            evaluation.HardPrediction(p["id"], int(p["true_class"]), c)
            for p, c in zip(points, classes)
        ]
        unassigned = sum(1 for c in classes if c is None)
        log(f"coords baseline: {len(hard)} points, {unassigned} unassignable")
        named_sets[args.coords_name] = hard

    if not named_sets:
        raise StageError("nothing to evaluate: give --predictions and/or --coords")

    report = evaluation.build_report(named_sets, strategies, cfg.topk)
    evaluation.write_report(args.out_report, report)
    log(f"wrote report -> {args.out_report}")
    if args.out_table:
        table_path = Path(args.out_table)
        table_path.parent.mkdir(parents=True, exist_ok=True)
        table_path.write_text(evaluation.render_table(report), encoding="utf-8")
        log(f"wrote table -> {args.out_table}")
    return EXIT_OK


def cmd_report(args) -> int:
    chunks = []
    for path in args.reports:
        path = Path(path)
        if not path.exists():
            raise StageError(f"report not found: {path}")
        chunks.append(evaluation.render_table(evaluation.read_report(path)))
    table = "\n".join(chunks)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table, encoding="utf-8")
        log(f"wrote table -> {args.out}")
    else:
        sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = _load_cfg(args)
    problems: list[str] = []
    records = _read_records(args.manifest)
    try:
        stats = manifest.validate_manifest(records)
        log(f"manifest ok: {json.dumps(stats.to_dict(), sort_keys=True)}")
    except manifest.ManifestError as e:
        problems.append(str(e))

    taxonomy = None
    taxonomy_path = _pick(args.taxonomy, cfg.taxonomy)
    if taxonomy_path:
        try:
            taxonomy = filters.load_taxonomy(taxonomy_path, _pick(args.blacklist, cfg.blacklist))
            log(f"taxonomy ok: {len(taxonomy.categories)} categories, "
                f"{len(taxonomy.blacklist)} blacklisted")
        except filters.TaxonomyError as e:
            problems.append(str(e))

    for name, path, validator in (
        ("scene evidence", _pick(args.scene_evidence, cfg.scene_evidence),
         lambda p: filters.validate_scene_evidence_file(p, taxonomy)),
        ("face evidence", _pick(args.face_evidence, cfg.face_evidence),
         filters.validate_face_evidence_file),
        ("grey evidence", _pick(args.grey_evidence, cfg.grey_evidence),
         filters.validate_grey_evidence_file),
        ("predictions", args.predictions_file, evaluation.validate_prediction_file),
    ):
        if not path:
            continue
        if not Path(path).exists():
            problems.append(f"{name} file not found: {path}")
            continue
        warnings = validator(path)
        if warnings:
            problems.extend(f"{name}: {w}" for w in warnings)
        else:
            log(f"{name} ok: {path}")

    grouping_path = _pick(args.grouping, cfg.grouping)
    if grouping_path:
        try:
            cgrouping = grouping.load_grouping(grouping_path)
            log(f"grouping ok: K={cgrouping.k}, {len(cgrouping.assignment)} countries")
        except grouping.GroupingError as e:
            problems.append(str(e))

    boundary_path = _pick(args.boundaries, cfg.boundaries)
    if boundary_path:
        try:
            pset = geo.load_boundaries(boundary_path)
            log(f"boundaries ok: {len(pset.countries)} countries")
        except geo.BoundaryError as e:
            problems.append(str(e))

    if problems:
        for problem in problems:
            log(f"INVALID: {problem}")
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="countrykit",
        description="Build, curate, and evaluate country-recognition image datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="YAML config file with defaults for all stages")

    p = sub.add_parser("gen-queries", help="Generate keyword-by-city queries and city bounding boxes.")
    add_config(p)
    p.add_argument("--cities", help="Tab-separated city table")
    p.add_argument("--keywords", help="Keyword list, one per line")
    p.add_argument("--min-population", type=int, dest="min_population")
    p.add_argument("--half-width-km", type=float, dest="half_width_km")
    p.add_argument("--out-queries", dest="out_queries")
    p.add_argument("--out-boxes", dest="out_boxes")
    p.add_argument("--count-only", action="store_true", dest="count_only")
    p.set_defaults(func=cmd_gen_queries)

    p = sub.add_parser("assign-country", help="Reverse-geocode records to country codes.")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--boundaries")
    p.add_argument("--fallback-km", type=float, dest="fallback_km")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assign_country)

    p = sub.add_parser("filter", help="Run the date/grey/scene/face cascade over evidence files.")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--blacklist")
    p.add_argument("--scene-evidence", dest="scene_evidence")
    p.add_argument("--face-evidence", dest="face_evidence")
    p.add_argument("--grey-evidence", dest="grey_evidence")
    p.add_argument("--cutoff-year", type=int, dest="cutoff_year")
    p.add_argument("--urban-threshold", type=float, dest="urban_threshold")
    p.add_argument("--blacklist-threshold", type=float, dest="blacklist_threshold")
    p.add_argument("--face-threshold", type=float, dest="face_threshold")
    p.add_argument("--out", required=True)
    p.add_argument("--report-out", dest="report_out")
    p.add_argument("--queue-out", dest="queue_out", help="needs-evidence queue (JSONL)")
    p.add_argument("--strict-evidence", action="store_true", dest="strict_evidence")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("normalize", help="Resize to min-dim 640 and re-encode JPEG q75.")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-dir", dest="image_dir")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--quality", type=int)
    p.add_argument("--limit", type=int, help="min-dimension limit (default 640)")
    p.add_argument("--workers", type=int, default=0, help="0 = sequential")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("group", help="Assign country classes from a grouping file or greedy merge.")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--grouping-file", dest="grouping_file")
    p.add_argument("--k", type=int)
    p.add_argument("--min-images", type=int, dest="min_images")
    p.add_argument("--grouping-out", dest="grouping_out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("split", help="Assign train/val/test splits per country.")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--test")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("weights", help="Emit the 1/sqrt(n) class-weight table.")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--rescale-mean-one", action="store_true", dest="rescale_mean_one")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("eval", help="Score prediction files and/or a coordinate baseline.")
    add_config(p)
    p.add_argument("--predictions", action="append",
                   help="prediction file, optionally as name=path; repeatable")
    p.add_argument("--strategies", help="comma-separated fusion strategies")
    p.add_argument("--coords", help="JSONL of {id, lat, lon, true_class} GPS predictions")
    p.add_argument("--coords-name", dest="coords_name", default="coords")
    p.add_argument("--boundaries")
    p.add_argument("--grouping")
    p.add_argument("--fallback-km", type=float, dest="fallback_km")
    p.add_argument("--out-report", dest="out_report", required=True)
    p.add_argument("--out-table", dest="out_table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="Render report JSON files as aligned text tables.")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="Validate manifests and data files.")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--blacklist")
    p.add_argument("--scene-evidence", dest="scene_evidence")
    p.add_argument("--face-evidence", dest="face_evidence")
    p.add_argument("--grey-evidence", dest="grey_evidence")
    p.add_argument("--predictions-file", dest="predictions_file")
    p.add_argument("--grouping")
    p.add_argument("--boundaries")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (StageError, ConfigError) as e:
        log(f"error: {e}")
        return EXIT_DATA
    except (manifest.ManifestError, OSError) as e:
        log(f"error: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
