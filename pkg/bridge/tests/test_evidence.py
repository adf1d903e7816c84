import json

import numpy as np
import pytest
from PIL import Image

from countrykit.filters import (
    load_scene_evidence,
    validate_face_evidence_file,
    validate_grey_evidence_file,
    validate_scene_evidence_file,
)

from scorer_bridge.faces import FaceTemplateDetector, detect_faces, draw_face
from scorer_bridge.grey import flag_grey
from scorer_bridge.models import TinySceneNet
from scorer_bridge.scenes import score_scenes


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------


def test_scene_rows_validate_against_pipeline_schema(scored_images, tmp_path):
    out = tmp_path / "scene.jsonl"
    summary = score_scenes(scored_images, out)
    assert summary == {"scored": 8, "decode_errors": 1}
    assert validate_scene_evidence_file(out) == []


def test_scene_probabilities_sorted_and_bounded(scored_images, tmp_path):
    out = tmp_path / "scene.jsonl"
    score_scenes(scored_images, out)
    rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    scored = [r for r in rows if "top5" in r]
    assert scored
    for row in scored:
        probs = [p for _, p in row["top5"]]
        assert len(probs) == 5
        assert all(0.0 <= p <= 1.0 for p in probs)
        assert all(probs[i] >= probs[i + 1] for i in range(4))


def test_scene_scoring_deterministic(scored_images, tmp_path):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    score_scenes(scored_images, out1, TinySceneNet(seed=7))
    score_scenes(scored_images, out2, TinySceneNet(seed=7))
    assert out1.read_bytes() == out2.read_bytes()


def test_scene_decode_error_marker(scored_images, tmp_path):
    out = tmp_path / "scene.jsonl"
    score_scenes(scored_images, out)
    store = load_scene_evidence(out)
    assert store.errors == {"broken0": "decode"}
    assert "broken0" not in store.scene


# ---------------------------------------------------------------------------
# faces
# ---------------------------------------------------------------------------


def test_blank_image_yields_zero_boxes():
    detector = FaceTemplateDetector()
    assert detector.detect(np.full((240, 240, 3), 190, np.uint8)) == []


def test_drawn_face_fixture_yields_one_box():
    # fixture size/position chosen after smoke-testing the template detector
    scene = np.full((400, 400, 3), 200, np.uint8)
    scene[50:150, 80:180] = draw_face(100)
    boxes = FaceTemplateDetector().detect(scene)
    assert len(boxes) == 1
    x, y, w, h = boxes[0]
    assert 60 <= x <= 130 and 40 <= y <= 110  # box sits on the drawn face


def test_boxes_always_within_bounds(scored_images, tmp_path):
    out = tmp_path / "faces.jsonl"
    detect_faces(scored_images, out)
    assert validate_face_evidence_file(out) == []
    dims = {}
    for image_id, path in scored_images:
        try:
            with Image.open(path) as img:
                dims[image_id] = img.size
        except Exception:
            continue
    rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    for row in rows:
        if "error" in row:
            continue
        w, h = dims[row["id"]]
        for x, y, bw, bh in row["boxes"]:
            assert 0 <= x and 0 <= y and x + bw <= w and y + bh <= h


def test_face_fixture_detected_in_batch(scored_images, tmp_path):
    out = tmp_path / "faces.jsonl"
    detect_faces(scored_images, out)
    rows = {json.loads(l)["id"]: json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()}
    assert len(rows["face0"]["boxes"]) == 1
    assert rows["shape0"]["boxes"] == []
    assert rows["broken0"] == {"id": "broken0", "error": "decode"}


def test_face_detection_deterministic(scored_images, tmp_path):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    detect_faces(scored_images, out1)
    detect_faces(scored_images, out2)
    assert out1.read_bytes() == out2.read_bytes()


# ---------------------------------------------------------------------------
# grey flags
# ---------------------------------------------------------------------------


def test_grey_flags_validate_and_classify(scored_images, tmp_path):
    out = tmp_path / "grey.jsonl"
    summary = flag_grey(scored_images, out)
    assert summary["decode_errors"] == 1
    assert validate_grey_evidence_file(out) == []
    rows = {json.loads(l)["id"]: json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()}
    assert rows["grey0"]["is_grey"] is True
    assert rows["shape0"]["is_grey"] is False
