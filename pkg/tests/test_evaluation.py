import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from countrykit.evaluation import (
    CROP_LABELS,
    EvalError,
    HardPrediction,
    PredictionRecord,
    balanced_accuracy,
    build_report,
    confusion_counts,
    coords_to_class,
    crop_plan,
    fuse_scores,
    read_prediction_file,
    read_report,
    render_table,
    topk_accuracy,
    validate_prediction_file,
    write_prediction_file,
    write_report,
)
from countrykit.grouping import load_grouping


def soft(image_id, true_class, vector):
    return PredictionRecord(image_id=image_id, true_class=true_class,
                            fused=np.asarray(vector, dtype=np.float64))


def random_simplex(rng, n):
    raw = [rng.random() + 1e-9 for _ in range(n)]
    total = sum(raw)
    return [x / total for x in raw]


# ---------------------------------------------------------------------------
# crop_plan
# ---------------------------------------------------------------------------


def test_256_square_crop_offsets_exact():
    plan = crop_plan(256, 256)
    assert plan.resized == (256, 256)
    offsets = {label: (x, y) for label, x, y in plan.crops}
    assert offsets == {
        "UL": (0, 0), "UR": (32, 0), "LL": (0, 32), "LR": (32, 32), "C": (16, 16),
    }


def test_1024x768_resizes_to_341x256():
    plan = crop_plan(1024, 768)
    assert plan.resized == (341, 256)


def test_upscaling_permitted():
    plan = crop_plan(100, 50)
    assert min(plan.resized) == 256


def test_all_crops_within_bounds_random_sizes():
    rng = random.Random(12)
    for _ in range(2000):
        w, h = rng.randint(1, 4000), rng.randint(1, 4000)
        plan = crop_plan(w, h)
        rw, rh = plan.resized
        assert min(rw, rh) == 256
        for _, x, y in plan.crops:
            assert 0 <= x and x + 224 <= rw
            assert 0 <= y and y + 224 <= rh


def test_five_crops_cover_everything_up_to_448():
    rng = random.Random(13)
    for _ in range(200):
        # any resized image with max dim <= 448: crops jointly span all rows/cols
        w, h = rng.randint(230, 448), rng.randint(230, 448)
        if min(w, h) != 256:
            continue
        plan = crop_plan(w, h)
        rw, rh = plan.resized
        if max(rw, rh) > 448:
            continue
        cols = set()
        rows = set()
        for _, x, y in plan.crops:
            cols.update(range(x, x + 224))
            rows.update(range(y, y + 224))
        assert cols == set(range(rw))
        assert rows == set(range(rh))


# ---------------------------------------------------------------------------
# fuse_scores
# ---------------------------------------------------------------------------


def test_average_of_identical_vectors_is_identity():
    vector = [0.1, 0.2, 0.7]
    fused = fuse_scores([vector] * 5, "average")
    assert np.allclose(fused.vector, vector)
    assert fused.pred_class == 2


def test_hand_worked_5x2_table():
    crops = [[0.6, 0.4]] + [[0.2, 0.8]] * 4
    averaged = fuse_scores(crops, "average")
    assert np.allclose(averaged.vector, [0.28, 0.72])
    assert averaged.pred_class == 1
    maxed = fuse_scores(crops, "max")
    assert maxed.pred_class == 1  # highest single-crop probability is 0.8
    upper_left = fuse_scores(crops, "single_UL")
    assert upper_left.pred_class == 0


def test_average_matches_mean_oracle():
    rng = random.Random(3)
    for _ in range(1000):
        n = rng.randint(2, 12)
        crops = [random_simplex(rng, n) for _ in range(5)]
        fused = fuse_scores(crops, "average")
        oracle = [sum(c[i] for c in crops) / 5 for i in range(n)]
        assert max(abs(a - b) for a, b in zip(fused.vector, oracle)) < 1e-9


def test_wrong_vector_count_for_strategy():
    with pytest.raises(EvalError, match="needs 5"):
        fuse_scores([[0.5, 0.5]], "average")
    with pytest.raises(EvalError, match="needs 1"):
        fuse_scores([[0.5, 0.5]] * 5, "resize224")


def test_resize224_takes_single_vector():
    fused = fuse_scores([[0.3, 0.7]], "resize224")
    assert fused.pred_class == 1


def test_single_crop_strategies_pick_their_crop():
    crops = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]
    for label, expected in zip(CROP_LABELS, (0, 1, 0, 1, 0)):
        assert fuse_scores(crops, f"single_{label}").pred_class == expected


def test_tie_breaks_to_lowest_class_id():
    fused = fuse_scores([[0.5, 0.5]] * 5, "average")
    assert fused.pred_class == 0


@settings(max_examples=100)
@given(
    scale=st.floats(min_value=0.01, max_value=100, allow_nan=False),
    seed=st.integers(0, 2**31),
)
def test_average_argmax_invariant_under_uniform_rescale(scale, seed):
    rng = random.Random(seed)
    crops = np.array([random_simplex(rng, 8) for _ in range(5)])
    plain = fuse_scores(crops, "average", validate=False)
    scaled = fuse_scores(crops * scale, "average", validate=False)
    assert plain.pred_class == scaled.pred_class


# ---------------------------------------------------------------------------
# topk / balanced accuracy
# ---------------------------------------------------------------------------


def test_topk_equals_one_when_k_is_n():
    rng = random.Random(4)
    predictions = [soft(f"i{j}", rng.randrange(6), random_simplex(rng, 6)) for j in range(50)]
    assert topk_accuracy(predictions, 6) == 1.0


def test_topk_rank_example():
    # one record correct at rank 1, one at rank 4
    first = soft("a", 0, [0.9, 0.05, 0.03, 0.01, 0.01])
    second = soft("b", 3, [0.4, 0.3, 0.2, 0.06, 0.04])
    assert topk_accuracy([first, second], 3) == 0.5
    assert topk_accuracy([first, second], 5) == 1.0


def test_topk_k_above_n_errors():
    with pytest.raises(EvalError, match="exceeds"):
        topk_accuracy([soft("a", 0, [0.6, 0.4])], 3)


def test_topk_matches_bruteforce_rank_scan():
    rng = random.Random(5)
    predictions = [soft(f"i{j}", rng.randrange(9), random_simplex(rng, 9)) for j in range(100)]
    for k in (1, 2, 3, 5, 9):
        oracle = 0
        for pred in predictions:
            order = sorted(range(9), key=lambda c: (-pred.fused[c], c))
            oracle += pred.true_class in order[:k]
        assert topk_accuracy(predictions, k) == oracle / 100


def test_topk_monotone_in_k():
    rng = random.Random(6)
    predictions = [soft(f"i{j}", rng.randrange(7), random_simplex(rng, 7)) for j in range(200)]
    values = [topk_accuracy(predictions, k) for k in range(1, 8)]
    assert all(values[i] <= values[i + 1] for i in range(len(values) - 1))


def test_balanced_accuracy_two_class_example():
    predictions = []
    for i in range(4):  # class 0: recall 1.0
        predictions.append(soft(f"a{i}", 0, [0.9, 0.1]))
    predictions.append(soft("b0", 1, [0.2, 0.8]))  # class 1: recall 0.5
    predictions.append(soft("b1", 1, [0.8, 0.2]))
    assert balanced_accuracy(predictions) == pytest.approx(0.75)


def test_balanced_equals_top1_when_balanced():
    rng = random.Random(7)
    predictions = []
    for cls in range(4):
        for i in range(25):
            vector = random_simplex(rng, 4)
            predictions.append(soft(f"{cls}_{i}", cls, vector))
    per_class = {}
    for cls in range(4):
        subset = [p for p in predictions if p.true_class == cls]
        per_class[cls] = topk_accuracy(subset, 1)
    # uniform ground truth with equal counts: balanced == mean recall == top-1
    assert balanced_accuracy(predictions) == pytest.approx(
        sum(per_class.values()) / 4
    ) == pytest.approx(topk_accuracy(predictions, 1))


def test_balanced_accuracy_from_confusion_matrix():
    # [[8,1,1],[2,6,2],[0,0,10]] -> recalls 0.8, 0.6, 1.0 -> balanced 0.8
    matrix = [[8, 1, 1], [2, 6, 2], [0, 0, 10]]
    predictions = []
    idx = 0
    for true_class, row in enumerate(matrix):
        for pred_class, count in enumerate(row):
            for _ in range(count):
                predictions.append(HardPrediction(f"p{idx}", true_class, pred_class))
                idx += 1
    assert balanced_accuracy(predictions) == pytest.approx(0.8)
    counts = confusion_counts(predictions)
    assert counts[0] == {0: 8, 1: 1, 2: 1}


def test_balanced_accuracy_empty_errors():
    with pytest.raises(EvalError):
        balanced_accuracy([])


# ---------------------------------------------------------------------------
# coords_to_class
# ---------------------------------------------------------------------------


def test_centroid_composition(toy_boundaries, fixtures_dir):
    grouping = load_grouping(fixtures_dir / "grouping_toy.txt")
    aa = toy_boundaries.get("AA")
    classes = coords_to_class([aa.centroid], toy_boundaries, grouping)
    assert classes == [grouping.assignment["AA"]]


def test_mid_ocean_is_none_and_scored_wrong(toy_boundaries, fixtures_dir):
    grouping = load_grouping(fixtures_dir / "grouping_toy.txt")
    classes = coords_to_class([(-40.0, -130.0)], toy_boundaries, grouping)
    assert classes == [None]
    hard = [HardPrediction("x", 0, classes[0])]
    assert topk_accuracy(hard, 1) == 0.0
    assert topk_accuracy(hard, 5) == 0.0


def test_composition_matches_module_oracles(toy_boundaries, fixtures_dir):
    from countrykit.geo import assign_country
    from countrykit.grouping import map_country_to_class

    grouping = load_grouping(fixtures_dir / "grouping_toy.txt")
    rng = random.Random(8)
    points = [(rng.uniform(0, 10), rng.uniform(0, 20)) for _ in range(50)]  # in AA/BB
    composed = coords_to_class(points, toy_boundaries, grouping)
    for (lat, lon), got in zip(points, composed):
        code = assign_country(lat, lon, toy_boundaries, 25.0)
        expected = None if code is None else map_country_to_class(code, grouping)
        assert got == expected


# ---------------------------------------------------------------------------
# prediction files and reports
# ---------------------------------------------------------------------------


def test_prediction_file_roundtrip(tmp_path):
    rng = random.Random(9)
    records = []
    for i in range(10):
        crops = np.array([random_simplex(rng, 4) for _ in range(5)])
        records.append(PredictionRecord(f"img{i}", rng.randrange(4), crop_vectors=crops))
    path = tmp_path / "preds.txt"
    write_prediction_file(path, records, n_classes=4)
    header, loaded = read_prediction_file(path)
    assert header["n_classes"] == 4
    assert header["layout"] == "crops5"
    by_id = {r.image_id: r for r in loaded}
    for record in records:
        assert np.array_equal(by_id[record.image_id].crop_vectors, record.crop_vectors)
    assert validate_prediction_file(path) == []


def test_fixture_prediction_file_conforms(fixtures_dir):
    assert validate_prediction_file(fixtures_dir / "predictions_5crop.txt") == []


def test_prediction_file_bad_width_detected(tmp_path):
    path = tmp_path / "preds.txt"
    path.write_text(
        '# {"n_classes": 3, "layout": "single", "scores": "probabilities"}\n'
        "img0 1 0.5 0.5\n",
        encoding="utf-8",
    )
    warnings = validate_prediction_file(path)
    assert warnings and "expected 3" in warnings[0]


def test_perfect_predictor_all_cells_one():
    predictions = [soft(f"i{j}", j % 3, np.eye(3)[j % 3]) for j in range(30)]
    report = build_report({"toy": predictions}, strategies=("average",), ks=(1, 3))
    metrics = report.sets["toy"]["methods"]["average"]
    assert metrics["top1"] == 1.0 and metrics["top3"] == 1.0 and metrics["balanced"] == 1.0


def test_report_columns_monotone(fixtures_dir):
    _, records = read_prediction_file(fixtures_dir / "predictions_5crop.txt")
    report = build_report({"fixture": records},
                          strategies=("average", "max", "single_C"), ks=(1, 3, 5, 10))
    assert report.ks == (1, 3, 5)  # 10 dropped: only 7 classes
    for metrics in report.sets["fixture"]["methods"].values():
        assert metrics["top1"] <= metrics["top3"] <= metrics["top5"]


def test_report_cells_equal_direct_metric_calls(fixtures_dir):
    _, records = read_prediction_file(fixtures_dir / "predictions_5crop.txt")
    report = build_report({"fixture": records}, strategies=("average",), ks=(1, 3, 5))
    metrics = report.sets["fixture"]["methods"]["average"]
    assert metrics["top1"] == topk_accuracy(records, 1, "average")
    assert metrics["top3"] == topk_accuracy(records, 3, "average")
    assert metrics["balanced"] == balanced_accuracy(records, "average")


def test_report_file_roundtrip_and_table(tmp_path, fixtures_dir):
    _, records = read_prediction_file(fixtures_dir / "predictions_5crop.txt")
    report = build_report({"fixture": records}, strategies=("average", "max"))
    path = tmp_path / "report.json"
    write_report(path, report)
    loaded = read_report(path)
    assert loaded.to_dict() == report.to_dict()
    table = render_table(loaded)
    assert "average" in table and "max" in table and "Top-1" in table
    assert render_table(loaded) == table  # deterministic
    # file is valid, sorted JSON
    parsed = json.loads(path.read_text(encoding="utf-8"))
    assert parsed["n_classes"] == report.n_classes
