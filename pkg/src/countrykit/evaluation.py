"""Five-crop geometry, score fusion, top-k/balanced accuracy, and report tables.

Score vectors are probabilities (the prediction file protocol transmits
normalized scores; fusing logits instead would need a different producer
contract, and the report header records this assumption). Ranking ties break
by ascending class id everywhere so results are identical across platforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geo import CountryPolygonSet, assign_country
from .grouping import ClassGrouping, map_country_to_class

CROP_SIZE = 224
RESIZE_MIN_DIM = 256
CROP_LABELS = ("UL", "UR", "LL", "LR", "C")

FUSION_STRATEGIES = (
    "average",
    "max",
    "single_UL",
    "single_UR",
    "single_LL",
    "single_LR",
    "single_C",
    "resize224",
)

DEFAULT_TOPK = (1, 3, 5, 10)

SCORE_SUM_TOLERANCE = 1e-5


class EvalError(ValueError):
    pass


class PredictionFileError(ValueError):
    pass


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class CropPlan:
    source: tuple[int, int]
    resized: tuple[int, int]
    crops: tuple[tuple[str, int, int], ...]  # (label, x, y), each CROP_SIZE square

    def crop_box(self, label: str) -> tuple[int, int, int, int]:
        for lbl, x, y in self.crops:
            if lbl == label:
                return (x, y, CROP_SIZE, CROP_SIZE)
        raise KeyError(label)


def crop_plan(width: int, height: int) -> CropPlan:
    """Resize so the smaller dimension is exactly 256, then plan the five
    224x224 crops: four corners plus center."""
    if width < 1 or height < 1:
        raise EvalError(f"dimensions must be >= 1, got {width}x{height}")
    smallest = min(width, height)
    if smallest == RESIZE_MIN_DIM:
        rw, rh = width, height
    else:
        scale = RESIZE_MIN_DIM / smallest
        if width <= height:
            rw, rh = RESIZE_MIN_DIM, _round_half_up(height * scale)
        else:
            rw, rh = _round_half_up(width * scale), RESIZE_MIN_DIM
    crops = (
        ("UL", 0, 0),
        ("UR", rw - CROP_SIZE, 0),
        ("LL", 0, rh - CROP_SIZE),
        ("LR", rw - CROP_SIZE, rh - CROP_SIZE),
        ("C", (rw - CROP_SIZE) // 2, (rh - CROP_SIZE) // 2),
    )
    return CropPlan(source=(width, height), resized=(rw, rh), crops=crops)


@dataclass
class FusedScore:
    vector: np.ndarray
    pred_class: int


def _check_vector(vector: np.ndarray, what: str) -> None:
    if np.any(vector < 0) or np.any(vector > 1):
        raise EvalError(f"{what}: score outside [0, 1]")
    total = float(vector.sum())
    if abs(total - 1.0) > SCORE_SUM_TOLERANCE:
        raise EvalError(f"{what}: scores sum to {total!r}, not 1")


def fuse_scores(
    crop_vectors: Sequence[Sequence[float]], strategy: str, validate: bool = True
) -> FusedScore:
    """Fuse per-crop probability vectors into one score vector plus its argmax.

    average: elementwise mean. max: the class attaining the highest
    single-crop probability (vector is the elementwise max, compared
    globally). single_X: that crop's vector. resize224: a single whole-image
    vector is supplied instead of five. Argmax ties break by ascending class
    id. validate=False skips the probability checks for trusted callers.
    """
    if strategy not in FUSION_STRATEGIES:
        raise EvalError(f"unknown fusion strategy {strategy!r}")
    vectors = np.asarray(crop_vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors[None, :]
    expected = 1 if strategy == "resize224" else 5
    if vectors.shape[0] != expected:
        raise EvalError(
            f"strategy {strategy!r} needs {expected} vector(s), got {vectors.shape[0]}"
        )
    if validate:
        for i, row in enumerate(vectors):
            _check_vector(row, f"vector {i}")

    if strategy == "average":
        fused = vectors.mean(axis=0)
    elif strategy == "max":
        fused = vectors.max(axis=0)
    elif strategy == "resize224":
        fused = vectors[0]
    else:
        crop_index = CROP_LABELS.index(strategy.removeprefix("single_"))
        fused = vectors[crop_index]
    # np.argmax returns the first maximum, i.e. the lowest class id on ties.
    return FusedScore(vector=fused, pred_class=int(np.argmax(fused)))


@dataclass
class PredictionRecord:
    """Per-image scores: either five per-crop vectors or one fused vector."""

    image_id: str
    true_class: int
    crop_vectors: Optional[np.ndarray] = None  # (5, N)
    fused: Optional[np.ndarray] = None  # (N,)

    def validate(self) -> None:
        if (self.crop_vectors is None) == (self.fused is None):
            raise EvalError(f"{self.image_id}: provide crop_vectors xor fused")
        if self.crop_vectors is not None:
            if self.crop_vectors.shape[0] != 5:
                raise EvalError(f"{self.image_id}: expected 5 crop vectors")
            for i, row in enumerate(self.crop_vectors):
                _check_vector(row, f"{self.image_id} crop {CROP_LABELS[i]}")
        else:
            _check_vector(self.fused, f"{self.image_id} fused")
        if self.true_class < 0 or self.true_class >= self.n_classes:
            raise EvalError(f"{self.image_id}: true class {self.true_class} out of range")

    @property
    def n_classes(self) -> int:
        if self.crop_vectors is not None:
            return self.crop_vectors.shape[1]
        return self.fused.shape[0]

    def vector_for(self, strategy: str) -> np.ndarray:
        if self.fused is not None:
            return self.fused
        return fuse_scores(self.crop_vectors, strategy).vector


@dataclass
class HardPrediction:
    """A single predicted class (or None when unassignable), no ranking.

    Produced by the coordinate-to-country baseline adapter; top-k accuracy
    degenerates to exact match for every k and unassignable predictions
    count as wrong.
    """

    image_id: str
    true_class: int
    pred_class: Optional[int]


def _rank_of_true(vector: np.ndarray, true_class: int) -> int:
    """1-based rank of the true class, ties broken by ascending class id."""
    score = vector[true_class]
    better = int(np.sum(vector > score))
    ties_before = int(np.sum(vector[:true_class] == score))
    return better + ties_before + 1


def topk_accuracy(
    predictions: Sequence[PredictionRecord | HardPrediction],
    k: int,
    strategy: str = "average",
) -> float:
    """Fraction of records whose true class ranks within the top k."""
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    if not predictions:
        raise EvalError("no predictions")
    correct = 0
    for pred in predictions:
        if isinstance(pred, HardPrediction):
            correct += int(pred.pred_class == pred.true_class)
            continue
        if k > pred.n_classes:
            raise EvalError(f"k={k} exceeds class count {pred.n_classes}")
        vector = pred.vector_for(strategy)
        if _rank_of_true(vector, pred.true_class) <= k:
            correct += 1
    return correct / len(predictions)


def confusion_counts(
    predictions: Sequence[PredictionRecord | HardPrediction],
    strategy: str = "average",
) -> dict[int, dict[Optional[int], int]]:
    """Nested counts true_class -> predicted_class -> n (None = unassignable)."""
    counts: dict[int, dict[Optional[int], int]] = {}
    for pred in predictions:
        if isinstance(pred, HardPrediction):
            predicted = pred.pred_class
        else:
            vector = pred.vector_for(strategy)
            predicted = int(np.argmax(vector))
        row = counts.setdefault(pred.true_class, {})
        row[predicted] = row.get(predicted, 0) + 1
    return counts


def per_class_recall(
    predictions: Sequence[PredictionRecord | HardPrediction],
    strategy: str = "average",
) -> dict[int, float]:
    counts = confusion_counts(predictions, strategy)
    recalls = {}
    for true_class, row in sorted(counts.items()):
        total = sum(row.values())
        recalls[true_class] = row.get(true_class, 0) / total
    return recalls


def balanced_accuracy(
    predictions: Sequence[PredictionRecord | HardPrediction],
    strategy: str = "average",
) -> float:
    """Mean per-class recall over classes present in the ground truth.

    Computed in exact rational arithmetic (recalls are ratios of counts) and
    rounded once at the end, so hand-checkable inputs give bit-exact answers.
    """
    if not predictions:
        raise EvalError("no predictions")
    counts = confusion_counts(predictions, strategy)
    total = Fraction(0)
    for true_class, row in counts.items():
        total += Fraction(row.get(true_class, 0), sum(row.values()))
    return float(total / len(counts))


def coords_to_class(
    gps_predictions: Sequence[tuple[float, float]],
    boundaries: CountryPolygonSet,
    grouping: ClassGrouping,
    fallback_km: float = 25.0,
) -> list[Optional[int]]:
    """Map predicted GPS points to country classes; None when unassignable.

    Composition of country assignment and class lookup; countries outside
    the grouping also yield None (and are reported by the caller).
    """
    classes: list[Optional[int]] = []
    for lat, lon in gps_predictions:
        code = assign_country(lat, lon, boundaries, fallback_km)
        if code is None or code not in grouping.assignment:
            classes.append(None)
        else:
            classes.append(map_country_to_class(code, grouping))
    return classes


# ---------------------------------------------------------------------------
# Prediction files
# ---------------------------------------------------------------------------
#
# Line format: "<image_id> <true_class> <p_1> ... <p_M>" where M is 5*N for
# the five-crop layout ({UL, UR, LL, LR, C} order) or N for a single fused
# vector. The first line is a '#'-prefixed JSON header declaring n_classes,
# layout, and score semantics.


def write_prediction_file(
    path: Path | str,
    records: Sequence[PredictionRecord],
    n_classes: int,
    strategy: Optional[str] = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    layouts = {"crops5" if r.crop_vectors is not None else "single" for r in records}
    if len(layouts) > 1:
        raise PredictionFileError("mixed vector layouts in one file")
    layout = layouts.pop() if layouts else "crops5"
    header = {
        "n_classes": n_classes,
        "layout": layout,
        "crop_order": list(CROP_LABELS) if layout == "crops5" else None,
        "scores": "probabilities",
        "strategy": strategy,
    }
    with path.open("w", encoding="utf-8") as f:
        f.write("# " + json.dumps(header, sort_keys=True) + "\n")
        for record in sorted(records, key=lambda r: r.image_id):
            if record.crop_vectors is not None:
                flat = record.crop_vectors.reshape(-1)
            else:
                flat = record.fused
            probs = " ".join(repr(float(p)) for p in flat)
            f.write(f"{record.image_id} {record.true_class} {probs}\n")


def read_prediction_file(path: Path | str) -> tuple[dict, list[PredictionRecord]]:
    path = Path(path)
    records: list[PredictionRecord] = []
    header: Optional[dict] = None
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if header is None:
                    try:
                        header = json.loads(line.lstrip("#").strip())
                    except json.JSONDecodeError as e:
                        raise PredictionFileError(f"{path}:{line_no}: bad header: {e.msg}") from e
                continue
            if header is None:
                raise PredictionFileError(f"{path}: missing header line")
            parts = line.split()
            if len(parts) < 3:
                raise PredictionFileError(f"{path}:{line_no}: too few fields")
            image_id, true_s = parts[0], parts[1]
            n = int(header["n_classes"])
            layout = header.get("layout", "crops5")
            expected = 5 * n if layout == "crops5" else n
            values = parts[2:]
            if len(values) != expected:
                raise PredictionFileError(
                    f"{path}:{line_no}: expected {expected} probabilities, got {len(values)}"
                )
            vector = np.array([float(v) for v in values], dtype=np.float64)
            if layout == "crops5":
                record = PredictionRecord(image_id, int(true_s), crop_vectors=vector.reshape(5, n))
            else:
                record = PredictionRecord(image_id, int(true_s), fused=vector)
            try:
                record.validate()
            except EvalError as e:
                raise PredictionFileError(f"{path}:{line_no}: {e}") from e
            records.append(record)
    if header is None:
        raise PredictionFileError(f"{path}: empty prediction file")
    return header, records


def validate_prediction_file(path: Path | str) -> list[str]:
    """Schema warnings for a prediction file; empty list means conformant."""
    warnings: list[str] = []
    try:
        header, records = read_prediction_file(path)
    except (PredictionFileError, ValueError) as e:
        return [str(e)]
    if header.get("scores") != "probabilities":
        warnings.append("header does not declare probability scores")
    if header.get("layout") == "crops5" and header.get("crop_order") != list(CROP_LABELS):
        warnings.append(f"header crop_order is not {list(CROP_LABELS)}")
    seen: set[str] = set()
    for record in records:
        if record.image_id in seen:
            warnings.append(f"duplicate image id {record.image_id!r}")
        seen.add(record.image_id)
        if record.n_classes != header["n_classes"]:
            warnings.append(f"{record.image_id}: vector width != n_classes")
    return warnings


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    n_classes: int
    ks: tuple[int, ...]
    sets: dict[str, dict] = field(default_factory=dict)
    score_semantics: str = "probabilities"

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "score_semantics": self.score_semantics,
            "ks": list(self.ks),
            "sets": self.sets,
        }


def _metrics_for(
    predictions: Sequence[PredictionRecord | HardPrediction],
    strategy: str,
    ks: Sequence[int],
) -> dict:
    metrics: dict = {}
    for k in ks:
        metrics[f"top{k}"] = topk_accuracy(predictions, k, strategy)
    metrics["balanced"] = balanced_accuracy(predictions, strategy)
    metrics["per_class_recall"] = {
        str(c): r for c, r in per_class_recall(predictions, strategy).items()
    }
    confusion = confusion_counts(predictions, strategy)
    metrics["confusion"] = {
        str(t): {("unassigned" if p is None else str(p)): n for p, n in sorted(
            row.items(), key=lambda item: (item[0] is None, item[0] if item[0] is not None else -1)
        )}
        for t, row in sorted(confusion.items())
    }
    n_unassigned = sum(
        1 for p in predictions if isinstance(p, HardPrediction) and p.pred_class is None
    )
    if n_unassigned:
        metrics["n_unassigned"] = n_unassigned
    return metrics


def build_report(
    named_sets: Mapping[str, Sequence[PredictionRecord | HardPrediction]],
    strategies: Sequence[str] = ("average",),
    ks: Sequence[int] = DEFAULT_TOPK,
) -> EvalReport:
    """Metrics per test set and fusion strategy.

    k values above the class count are dropped (top-k is undefined there);
    hard-prediction sets get a single "coords_to_class" method row.
    """
    n_classes = 0
    for predictions in named_sets.values():
        for pred in predictions:
            if isinstance(pred, PredictionRecord):
                n_classes = max(n_classes, pred.n_classes)
            else:
                n_classes = max(n_classes, pred.true_class + 1)
    usable_ks = tuple(k for k in ks if k <= n_classes) or (1,)

    report = EvalReport(n_classes=n_classes, ks=usable_ks)
    for name, predictions in named_sets.items():
        entry: dict = {"n": len(predictions), "methods": {}}
        if predictions and isinstance(predictions[0], HardPrediction):
            entry["methods"]["coords_to_class"] = _metrics_for(predictions, "average", usable_ks)
        else:
            for strategy in strategies:
                entry["methods"][strategy] = _metrics_for(predictions, strategy, usable_ks)
        report.sets[name] = entry
    return report


def write_report(path: Path | str, report: EvalReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def read_report(path: Path | str) -> EvalReport:
    with Path(path).open("r", encoding="utf-8") as f:
        obj = json.load(f)
    return EvalReport(
        n_classes=obj["n_classes"],
        ks=tuple(obj["ks"]),
        sets=obj["sets"],
        score_semantics=obj.get("score_semantics", "probabilities"),
    )


def render_table(report: EvalReport) -> str:
    """Aligned text table: one row per method, top-k and balanced columns per set."""
    columns = [f"Top-{k}" for k in report.ks] + ["Bal"]
    methods: list[str] = []
    for entry in report.sets.values():
        for method in entry["methods"]:
            if method not in methods:
                methods.append(method)

    lines = []
    lines.append(f"score semantics: {report.score_semantics}; classes: {report.n_classes}")
    for set_name, entry in report.sets.items():
        lines.append("")
        lines.append(f"Test set: {set_name} ({entry['n']} images)")
        width = max([len(m) for m in methods] + [8])
        header = " " * (width + 2) + "  ".join(f"{c:>7}" for c in columns)
        lines.append(header)
        lines.append("-" * len(header))
        for method in methods:
            metrics = entry["methods"].get(method)
            if metrics is None:
                continue
            cells = [metrics[f"top{k}"] for k in report.ks] + [metrics["balanced"]]
            row = f"{method:<{width}}  " + "  ".join(f"{v:>7.4f}" for v in cells)
            lines.append(row)
    return "\n".join(lines) + "\n"
