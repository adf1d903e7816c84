import json
import random
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from countrykit.filters import (
    EvidenceStore,
    FaceBox,
    FilterConfig,
    FilterEvidence,
    MissingEvidenceError,
    SceneCategory,
    SceneTaxonomy,
    TaxonomyError,
    cascade_report,
    date_filter,
    face_ratio,
    grey_filter,
    load_face_evidence,
    load_grey_evidence,
    load_scene_evidence,
    run_cascade,
    scene_filter,
    urban_score,
    validate_face_evidence_file,
    validate_grey_evidence_file,
    validate_scene_evidence_file,
)
from countrykit.manifest import ImageRecord


def tiny_taxonomy() -> SceneTaxonomy:
    cats = {
        0: SceneCategory(0, "street", "urban"),
        1: SceneCategory(1, "plaza", "urban"),
        2: SceneCategory(2, "airfield", "urban"),
        3: SceneCategory(3, "forest", "natural"),
        4: SceneCategory(4, "beach", "natural"),
        5: SceneCategory(5, "kitchen", "indoor"),
    }
    return SceneTaxonomy(categories=cats, blacklist={2})


def record(
    rid="img0",
    captured=date(2015, 6, 1),
    width=1000,
    height=1000,
) -> ImageRecord:
    return ImageRecord(
        id=rid,
        source="flickr",
        lat=1.0,
        lon=1.0,
        width=width,
        height=height,
        path_or_url=f"{rid}.jpg",
        captured_at=captured,
    )


# ---------------------------------------------------------------------------
# urban_score / scene_filter
# ---------------------------------------------------------------------------


def test_urban_score_zero_when_all_natural():
    assert urban_score([(3, 0.5), (4, 0.3)], tiny_taxonomy()) == 0.0


def test_urban_score_sums_urban_probabilities():
    top5 = [(0, 0.4), (2, 0.2), (3, 0.3)]
    assert urban_score(top5, tiny_taxonomy()) == pytest.approx(0.6)


def test_urban_score_unknown_category_errors():
    with pytest.raises(TaxonomyError, match="999"):
        urban_score([(999, 0.5)], tiny_taxonomy())


def test_urban_score_permutation_invariant():
    taxonomy = tiny_taxonomy()
    top5 = [(0, 0.3), (1, 0.2), (3, 0.25), (4, 0.15), (5, 0.1)]
    rng = random.Random(1)
    expected = urban_score(top5, taxonomy)
    for _ in range(20):
        shuffled = top5[:]
        rng.shuffle(shuffled)
        assert urban_score(shuffled, taxonomy) == pytest.approx(expected)


def test_urban_score_matches_filtered_sum_oracle(taxonomy):
    rng = random.Random(11)
    ids = sorted(taxonomy.categories)
    for _ in range(1000):
        chosen = rng.sample(ids, 5)
        raw = [rng.uniform(0, 0.3) for _ in range(5)]
        top5 = sorted(zip(chosen, raw), key=lambda cp: -cp[1])
        oracle = 0.0
        for cat_id, p in top5:
            if taxonomy.categories[cat_id].supercategory == "urban":
                oracle += p
        assert urban_score(top5, taxonomy) == pytest.approx(oracle, abs=1e-12)


def test_urban_exactly_half_is_rejected():
    reason, score = scene_filter([(0, 0.5), (3, 0.4)], tiny_taxonomy())
    assert score == 0.5
    assert reason == "non_urban"


def test_urban_just_above_half_is_kept():
    reason, score = scene_filter([(0, 0.51), (3, 0.4)], tiny_taxonomy())
    assert reason is None and score == pytest.approx(0.51)


def test_blacklisted_top1_rejected():
    reason, _ = scene_filter([(2, 0.9), (0, 0.05)], tiny_taxonomy(), blacklist_threshold=0.5)
    assert reason == "blacklisted_scene"


def test_blacklisted_below_threshold_survives():
    reason, _ = scene_filter([(2, 0.4), (0, 0.3)], tiny_taxonomy(), blacklist_threshold=0.5)
    assert reason is None


# ---------------------------------------------------------------------------
# grey_filter
# ---------------------------------------------------------------------------


def test_single_channel_is_grey():
    assert grey_filter(1) is True
    assert grey_filter(3) is False


def test_pure_red_not_grey():
    assert grey_filter([(255, 0, 0)] * 1500) is False


def test_grey_with_small_noise():
    rng = random.Random(5)
    sample = []
    for _ in range(2000):
        base = rng.randint(0, 252)
        sample.append((base + rng.randint(0, 3), base + rng.randint(0, 3), base + rng.randint(0, 3)))
    assert grey_filter(sample) is True


def test_channel_order_permutation_invariant():
    rng = random.Random(6)
    sample = [(rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255)) for _ in range(1200)]
    permuted = [(b, r, g) for r, g, b in sample]
    assert grey_filter(sample) == grey_filter(permuted)


def test_grey_fraction_threshold():
    # 99.4% grey < 99.5% threshold -> not grey; 99.6% -> grey
    grey_px = (100, 100, 100)
    color_px = (200, 40, 10)
    assert grey_filter([grey_px] * 994 + [color_px] * 6) is False
    assert grey_filter([grey_px] * 996 + [color_px] * 4) is True


# ---------------------------------------------------------------------------
# date_filter
# ---------------------------------------------------------------------------


def test_date_before_cutoff_rejected():
    assert date_filter(date(2011, 12, 31), 2012).kept is False


def test_date_on_cutoff_kept():
    decision = date_filter(date(2012, 1, 1), 2012)
    assert decision.kept is True and decision.date_unknown is False


def test_missing_date_kept_but_flagged():
    decision = date_filter(None, 2012)
    assert decision.kept is True and decision.date_unknown is True


def test_date_unknown_counted_in_report():
    outcome = run_cascade(record(captured=None), _evidence("img0"), tiny_taxonomy(), FilterConfig())
    assert outcome.kept is True and outcome.date_unknown is True
    stats = cascade_report([outcome])
    assert stats.date_unknown == 1


# ---------------------------------------------------------------------------
# face_ratio
# ---------------------------------------------------------------------------


def test_no_boxes_zero_ratio():
    assert face_ratio([], 1000, 1000) == 0.0


def test_single_box_ratio():
    ratio = face_ratio([FaceBox(0, 0, 400, 300)], 1000, 1000)
    assert ratio == pytest.approx(0.12)
    assert ratio > 0.10


def test_fully_overlapping_boxes_count_once():
    boxes = [FaceBox(100, 100, 100, 100), FaceBox(100, 100, 100, 100)]
    assert face_ratio(boxes, 1000, 1000) == pytest.approx(0.01)


def test_boxes_clamped_to_image():
    ratio = face_ratio([FaceBox(-50, -50, 100, 100)], 100, 100)
    assert ratio == pytest.approx(0.25)


def _raster_union(boxes, width, height) -> float:
    # integer-grid rasterization oracle (boxes have integer coordinates)
    grid = [[False] * width for _ in range(height)]
    for box in boxes:
        x1, y1 = max(0, int(box.x)), max(0, int(box.y))
        x2 = min(width, int(box.x + box.w))
        y2 = min(height, int(box.y + box.h))
        for y in range(y1, y2):
            row = grid[y]
            for x in range(x1, x2):
                row[x] = True
    return sum(sum(row) for row in grid) / (width * height)


def test_union_matches_rasterization_oracle():
    rng = random.Random(21)
    for _ in range(200):
        width, height = rng.randint(40, 120), rng.randint(40, 120)
        boxes = []
        for _ in range(rng.randint(0, 6)):
            w, h = rng.randint(1, width), rng.randint(1, height)
            x = rng.randint(-10, width - 1)
            y = rng.randint(-10, height - 1)
            boxes.append(FaceBox(x, y, w, h))
        sweep = face_ratio(boxes, width, height)
        raster = _raster_union(boxes, width, height)
        assert sweep == pytest.approx(raster, abs=1e-12)


@settings(max_examples=100)
@given(
    boxes=st.lists(
        st.tuples(
            st.integers(0, 90), st.integers(0, 90), st.integers(1, 60), st.integers(1, 60)
        ),
        max_size=5,
    ),
    extra=st.tuples(st.integers(0, 90), st.integers(0, 90), st.integers(1, 60), st.integers(1, 60)),
)
def test_adding_a_box_never_decreases_ratio(boxes, extra):
    base = [FaceBox(*b) for b in boxes]
    ratio_before = face_ratio(base, 100, 100)
    ratio_after = face_ratio(base + [FaceBox(*extra)], 100, 100)
    assert 0.0 <= ratio_before <= 1.0
    assert ratio_after >= ratio_before - 1e-12


# ---------------------------------------------------------------------------
# cascade
# ---------------------------------------------------------------------------


def _evidence(rid, top5=None, boxes=(), is_grey=False):
    return FilterEvidence(
        image_id=rid,
        scene_top5=top5 if top5 is not None else [(0, 0.8)],
        face_boxes=list(boxes),
        is_grey=is_grey,
    )


def test_first_failing_stage_sets_reason():
    config = FilterConfig()
    old = record(captured=date(2005, 1, 1))
    evidence = _evidence(old.id, boxes=[FaceBox(0, 0, 600, 600)])
    outcome = run_cascade(old, evidence, tiny_taxonomy(), config)
    assert outcome.kept is False
    assert outcome.reason == "date"  # date precedes face in the fixed order


def test_passing_all_stages_keeps_record():
    outcome = run_cascade(record(), _evidence("img0"), tiny_taxonomy(), FilterConfig())
    assert outcome.kept is True and outcome.reason is None
    assert outcome.urban_probability == pytest.approx(0.8)
    assert outcome.face_ratio == 0.0


def test_missing_evidence_raises_not_keeps():
    evidence = FilterEvidence(image_id="img0", scene_top5=None, face_boxes=[], is_grey=False)
    with pytest.raises(MissingEvidenceError):
        run_cascade(record(), evidence, tiny_taxonomy(), FilterConfig())


def test_grey_stage_rejects():
    outcome = run_cascade(record(), _evidence("img0", is_grey=True), tiny_taxonomy(), FilterConfig())
    assert outcome.reason == "grey"


def test_cascade_matches_independent_predicate_oracle(manifest_records, taxonomy, fixtures_dir):
    store = EvidenceStore()
    load_scene_evidence(fixtures_dir / "evidence_scene.jsonl", store)
    load_face_evidence(fixtures_dir / "evidence_face.jsonl", store)
    load_grey_evidence(fixtures_dir / "evidence_grey.jsonl", store)
    config = FilterConfig()

    urban_ids = {i for i, c in taxonomy.categories.items() if c.supercategory == "urban"}

    def oracle(rec):
        # brute-force re-statement of the four predicates, first failure wins
        if rec.captured_at is not None and rec.captured_at < date(2012, 1, 1):
            return "date"
        if store.grey[rec.id]:
            return "grey"
        top5 = store.scene[rec.id]
        urban_total = sum(p for c, p in top5 if c in urban_ids)
        if urban_total <= 0.5:
            return "non_urban"
        if top5[0][0] in taxonomy.blacklist and top5[0][1] >= 0.5:
            return "blacklisted_scene"
        area = _raster_union(
            [FaceBox(*map(int, (b.x, b.y, b.w, b.h))) for b in store.face[rec.id]],
            rec.width,
            rec.height,
        )
        if area > 0.10:
            return "face_area"
        return None

    mismatches = []
    outcomes = []
    for rec in manifest_records:
        outcome = run_cascade(rec, store.evidence_for(rec.id), taxonomy, config)
        outcomes.append(outcome)
        expected = oracle(rec)
        if outcome.reason != expected:
            mismatches.append((rec.id, outcome.reason, expected))
    assert not mismatches, mismatches[:5]

    stats = cascade_report(outcomes)
    survivors = {o.image_id for o in outcomes if o.kept}
    oracle_survivors = {r.id for r in manifest_records if oracle(r) is None}
    assert survivors == oracle_survivors
    assert stats.kept + sum(stats.rejected.values()) == stats.total == len(manifest_records)


def test_cascade_report_reconciles():
    outcomes = []
    for i in range(3):
        outcomes.append(
            run_cascade(record(f"old{i}", captured=date(2000, 1, 1)), _evidence(f"old{i}"),
                        tiny_taxonomy(), FilterConfig())
        )
    for i in range(2):
        evidence = _evidence(f"face{i}", boxes=[FaceBox(0, 0, 900, 900)])
        outcomes.append(run_cascade(record(f"face{i}"), evidence, tiny_taxonomy(), FilterConfig()))
    for i in range(5):
        outcomes.append(run_cascade(record(f"ok{i}"), _evidence(f"ok{i}"),
                                    tiny_taxonomy(), FilterConfig()))
    stats = cascade_report(outcomes)
    assert stats.total == 10
    assert stats.kept == 5
    assert stats.rejected["date"] == 3
    assert stats.rejected["face_area"] == 2
    assert stats.kept + sum(stats.rejected.values()) == stats.total


def test_report_is_deterministic(manifest_records, taxonomy, fixtures_dir):
    store = EvidenceStore()
    load_scene_evidence(fixtures_dir / "evidence_scene.jsonl", store)
    load_face_evidence(fixtures_dir / "evidence_face.jsonl", store)
    load_grey_evidence(fixtures_dir / "evidence_grey.jsonl", store)

    def run_once():
        outcomes = [
            run_cascade(r, store.evidence_for(r.id), taxonomy, FilterConfig())
            for r in manifest_records
        ]
        return json.dumps(cascade_report(outcomes).to_dict(), sort_keys=True)

    assert run_once() == run_once()


# ---------------------------------------------------------------------------
# evidence schema validators
# ---------------------------------------------------------------------------


def test_fixture_evidence_files_conform(fixtures_dir, taxonomy):
    assert validate_scene_evidence_file(fixtures_dir / "evidence_scene.jsonl", taxonomy) == []
    assert validate_face_evidence_file(fixtures_dir / "evidence_face.jsonl") == []
    assert validate_grey_evidence_file(fixtures_dir / "evidence_grey.jsonl") == []


def test_scene_validator_flags_bad_rows(tmp_path):
    path = tmp_path / "scene.jsonl"
    path.write_text(
        '{"id":"a","top5":[[0,0.4],[1,0.6]]}\n'
        '{"id":"a","top5":[[0,1.4]]}\n',
        encoding="utf-8",
    )
    warnings = validate_scene_evidence_file(path)
    assert any("not sorted" in w for w in warnings)
    assert any("duplicate id" in w for w in warnings)
    assert any("out of [0,1]" in w for w in warnings)


def test_error_marker_rows_routed_to_errors(tmp_path):
    path = tmp_path / "scene.jsonl"
    path.write_text('{"id":"bad","error":"decode"}\n', encoding="utf-8")
    store = load_scene_evidence(path)
    assert store.errors == {"bad": "decode"}
    assert validate_scene_evidence_file(path) == []
