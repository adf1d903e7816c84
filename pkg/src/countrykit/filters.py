"""Evidence-driven filter cascade: date, grey-level, scene, and face-area rules.

Evidence comes from external scorers as line-oriented files keyed by image
id (scene top-5 probabilities, face boxes, grey flags). Stages run in the
fixed order date -> grey -> scene -> face; the first failing stage sets the
rejection reason. Records missing evidence for an enabled stage go to a
needs-evidence queue, never silently through.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .manifest import ImageRecord

SUPERCATEGORIES = ("indoor", "natural", "urban")
STAGES = ("date", "grey", "scene", "face")


class TaxonomyError(ValueError):
    pass


class EvidenceError(ValueError):
    pass


class MissingEvidenceError(KeyError):
    """Raised when a record lacks evidence for an enabled stage."""

    def __init__(self, image_id: str, stage: str):
        self.image_id = image_id
        self.stage = stage
        super().__init__(f"{image_id}: missing {stage} evidence")


@dataclass(frozen=True)
class SceneCategory:
    id: int
    name: str
    supercategory: str


@dataclass
class SceneTaxonomy:
    categories: dict[int, SceneCategory]
    blacklist: set[int] = field(default_factory=set)

    def __post_init__(self):
        for cat in self.categories.values():
            if cat.supercategory not in SUPERCATEGORIES:
                raise TaxonomyError(
                    f"category {cat.id} ({cat.name}): supercategory {cat.supercategory!r}"
                    f" not one of {SUPERCATEGORIES}"
                )
        unknown = self.blacklist - set(self.categories)
        if unknown:
            raise TaxonomyError(f"blacklist ids not in taxonomy: {sorted(unknown)}")

    def is_urban(self, category_id: int) -> bool:
        try:
            return self.categories[category_id].supercategory == "urban"
        except KeyError:
            raise TaxonomyError(f"unknown scene category id {category_id}") from None

    def name_to_id(self) -> dict[str, int]:
        return {c.name: c.id for c in self.categories.values()}


def load_taxonomy(path: Path | str, blacklist_path: Optional[Path | str] = None) -> SceneTaxonomy:
    """Taxonomy file: tab-separated "id<TAB>name<TAB>supercategory" rows.

    Blacklist file: one category name or numeric id per line.
    """
    path = Path(path)
    categories: dict[int, SceneCategory] = {}
    with path.open("r", encoding="utf-8") as f:
        for row_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise TaxonomyError(f"{path}:{row_no}: expected 3 columns, got {len(parts)}")
            try:
                cat_id = int(parts[0])
            except ValueError as e:
                raise TaxonomyError(f"{path}:{row_no}: bad category id {parts[0]!r}") from e
            if cat_id in categories:
                raise TaxonomyError(f"{path}:{row_no}: duplicate category id {cat_id}")
            categories[cat_id] = SceneCategory(cat_id, parts[1].strip(), parts[2].strip())

    blacklist: set[int] = set()
    if blacklist_path is not None:
        by_name = {c.name: c.id for c in categories.values()}
        with Path(blacklist_path).open("r", encoding="utf-8") as f:
            for row_no, line in enumerate(f, start=1):
                entry = line.strip()
                if not entry or entry.startswith("#"):
                    continue
                if entry.isdigit():
                    blacklist.add(int(entry))
                elif entry in by_name:
                    blacklist.add(by_name[entry])
                else:
                    raise TaxonomyError(f"{blacklist_path}:{row_no}: unknown category {entry!r}")
    return SceneTaxonomy(categories=categories, blacklist=blacklist)


@dataclass(frozen=True)
class FaceBox:
    x: float
    y: float
    w: float
    h: float

    def clamped(self, width: int, height: int) -> "FaceBox":
        x1 = min(max(self.x, 0.0), float(width))
        y1 = min(max(self.y, 0.0), float(height))
        x2 = min(max(self.x + self.w, 0.0), float(width))
        y2 = min(max(self.y + self.h, 0.0), float(height))
        return FaceBox(x1, y1, max(0.0, x2 - x1), max(0.0, y2 - y1))


@dataclass
class FilterEvidence:
    image_id: str
    scene_top5: Optional[list[tuple[int, float]]] = None
    face_boxes: Optional[list[FaceBox]] = None
    is_grey: Optional[bool] = None

    def validate(self) -> None:
        if self.scene_top5 is not None:
            if len(self.scene_top5) > 5:
                raise EvidenceError(f"{self.image_id}: scene top-5 has {len(self.scene_top5)} entries")
            probs = [p for _, p in self.scene_top5]
            if any(not (0.0 <= p <= 1.0) for p in probs):
                raise EvidenceError(f"{self.image_id}: scene probability out of [0,1]")
            if any(probs[i] < probs[i + 1] for i in range(len(probs) - 1)):
                raise EvidenceError(f"{self.image_id}: scene top-5 not sorted descending")


@dataclass
class FilterConfig:
    cutoff_year: int = 2012
    urban_threshold: float = 0.5
    blacklist_threshold: float = 0.5
    face_area_threshold: float = 0.10
    grey_max_channel_diff: int = 8
    grey_min_fraction: float = 0.995
    stages: tuple[str, ...] = STAGES

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ValueError(f"unknown stages: {bad}")
        for name in ("urban_threshold", "blacklist_threshold", "face_area_threshold", "grey_min_fraction"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} out of [0,1]: {value}")


@dataclass
class FilterOutcome:
    image_id: str
    kept: bool
    reason: Optional[str] = None
    urban_probability: Optional[float] = None
    face_ratio: Optional[float] = None
    date_unknown: bool = False

    def __post_init__(self):
        if (self.reason is not None) == self.kept:
            raise ValueError("reason must be present iff not kept")


# ---------------------------------------------------------------------------
# Individual predicates
# ---------------------------------------------------------------------------


def urban_score(scene_top5: Sequence[tuple[int, float]], taxonomy: SceneTaxonomy) -> float:
    """Sum of top-5 probabilities whose category is urban (outdoor man-made)."""
    return sum(p for cat_id, p in scene_top5 if taxonomy.is_urban(cat_id))


def scene_filter(
    scene_top5: Sequence[tuple[int, float]],
    taxonomy: SceneTaxonomy,
    urban_threshold: float = 0.5,
    blacklist_threshold: float = 0.5,
) -> tuple[Optional[str], float]:
    """(rejection reason or None, urban probability).

    Rejects non_urban unless the urban probability strictly exceeds the
    threshold; then rejects blacklisted_scene when the top-1 category is
    blacklisted with probability >= blacklist_threshold.
    """
    score = urban_score(scene_top5, taxonomy)
    if not score > urban_threshold:
        return "non_urban", score
    if scene_top5:
        top1_id, top1_p = scene_top5[0]
        if top1_id in taxonomy.blacklist and top1_p >= blacklist_threshold:
            return "blacklisted_scene", score
    return None, score


def grey_filter(
    pixel_sample: Sequence[tuple[int, int, int]] | int,
    max_channel_diff: int = 8,
    min_fraction: float = 0.995,
) -> bool:
    """True if the sample looks grey-level.

    Accepts either a channel count (single-channel images are grey by
    definition) or RGB triples sampled on a fixed stride grid. Grey iff at
    least min_fraction of samples have max pairwise channel difference
    <= max_channel_diff; thresholds tolerate JPEG chroma noise.
    """
    if isinstance(pixel_sample, int):
        return pixel_sample == 1
    pixels = list(pixel_sample)
    if not pixels:
        raise ValueError("empty pixel sample")
    near_grey = sum(
        1 for r, g, b in pixels if max(r, g, b) - min(r, g, b) <= max_channel_diff
    )
    return near_grey >= min_fraction * len(pixels)


@dataclass(frozen=True)
class DateDecision:
    kept: bool
    date_unknown: bool = False


def date_filter(captured_at: Optional[date], cutoff_year: int = 2012) -> DateDecision:
    """Reject images captured before cutoff_year-01-01; unknown dates pass, flagged."""
    if captured_at is None:
        return DateDecision(kept=True, date_unknown=True)
    return DateDecision(kept=captured_at >= date(cutoff_year, 1, 1))


def face_ratio(face_boxes: Sequence[FaceBox], width: int, height: int) -> float:
    """Union area of clamped boxes over image area, exact coordinate-compression sweep."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    boxes = [b.clamped(width, height) for b in face_boxes]
    boxes = [b for b in boxes if b.w > 0 and b.h > 0]
    if not boxes:
        return 0.0
    xs = sorted({b.x for b in boxes} | {b.x + b.w for b in boxes})
    union = 0.0
    for i in range(len(xs) - 1):
        x_lo, x_hi = xs[i], xs[i + 1]
        if x_hi <= x_lo:
            continue
        intervals = sorted(
            (b.y, b.y + b.h) for b in boxes if b.x <= x_lo and b.x + b.w >= x_hi
        )
        covered = 0.0
        cur_lo: Optional[float] = None
        cur_hi = 0.0
        for y_lo, y_hi in intervals:
            if cur_lo is None:
                cur_lo, cur_hi = y_lo, y_hi
            elif y_lo <= cur_hi:
                cur_hi = max(cur_hi, y_hi)
            else:
                covered += cur_hi - cur_lo
                cur_lo, cur_hi = y_lo, y_hi
        if cur_lo is not None:
            covered += cur_hi - cur_lo
        union += covered * (x_hi - x_lo)
    return union / (width * height)


# ---------------------------------------------------------------------------
# Cascade
# ---------------------------------------------------------------------------


def run_cascade(
    record: ImageRecord,
    evidence: FilterEvidence,
    taxonomy: SceneTaxonomy,
    config: FilterConfig,
) -> FilterOutcome:
    """Apply enabled stages in fixed order; the first failure sets the reason.

    Raises MissingEvidenceError when an enabled stage has no evidence; the
    batch driver routes those records to the needs-evidence queue.
    """
    stages = config.stages
    reason: Optional[str] = None
    date_unknown = False
    urban_p: Optional[float] = None
    ratio: Optional[float] = None

    if "grey" in stages and evidence.is_grey is None:
        raise MissingEvidenceError(record.id, "grey")
    if "scene" in stages and evidence.scene_top5 is None:
        raise MissingEvidenceError(record.id, "scene")
    if "face" in stages and evidence.face_boxes is None:
        raise MissingEvidenceError(record.id, "face")

    if "scene" in stages:
        scene_reason, urban_p = scene_filter(
            evidence.scene_top5, taxonomy, config.urban_threshold, config.blacklist_threshold
        )
    else:
        scene_reason = None
    if "face" in stages:
        ratio = face_ratio(evidence.face_boxes, record.width, record.height)

    if "date" in stages:
        decision = date_filter(record.captured_at, config.cutoff_year)
        date_unknown = decision.date_unknown
        if not decision.kept:
            reason = "date"
    if reason is None and "grey" in stages and evidence.is_grey:
        reason = "grey"
    if reason is None and scene_reason is not None:
        reason = scene_reason
    if reason is None and "face" in stages and ratio > config.face_area_threshold:
        reason = "face_area"

    return FilterOutcome(
        image_id=record.id,
        kept=reason is None,
        reason=reason,
        urban_probability=urban_p,
        face_ratio=ratio,
        date_unknown=date_unknown,
    )


@dataclass
class FilterStats:
    total: int = 0
    kept: int = 0
    rejected: Counter = field(default_factory=Counter)
    date_unknown: int = 0
    needs_evidence: int = 0
    decode_errors: int = 0

    def add_outcome(self, outcome: FilterOutcome) -> None:
        self.total += 1
        if outcome.kept:
            self.kept += 1
        else:
            self.rejected[outcome.reason] += 1
        if outcome.date_unknown:
            self.date_unknown += 1

    def merge(self, other: "FilterStats") -> "FilterStats":
        return FilterStats(
            total=self.total + other.total,
            kept=self.kept + other.kept,
            rejected=self.rejected + other.rejected,
            date_unknown=self.date_unknown + other.date_unknown,
            needs_evidence=self.needs_evidence + other.needs_evidence,
            decode_errors=self.decode_errors + other.decode_errors,
        )

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "rejected": {k: self.rejected[k] for k in sorted(self.rejected)},
            "rejected_total": sum(self.rejected.values()),
            "date_unknown": self.date_unknown,
            "needs_evidence": self.needs_evidence,
            "decode_errors": self.decode_errors,
        }


def cascade_report(outcomes: Iterable[FilterOutcome]) -> FilterStats:
    """Per-reason counts; kept + sum(rejected) always equals total."""
    stats = FilterStats()
    for outcome in outcomes:
        stats.add_outcome(outcome)
    return stats


# ---------------------------------------------------------------------------
# Evidence files (line-oriented, keyed by image id)
# ---------------------------------------------------------------------------
#
# scene: {"id": ..., "top5": [[category_id, probability], ...]}
# face:  {"id": ..., "boxes": [[x, y, w, h], ...]}
# grey:  {"id": ..., "is_grey": true}
# Any row may instead carry {"id": ..., "error": "<marker>"} for images the
# scorer could not decode; those are counted separately, never kept.


@dataclass
class EvidenceStore:
    scene: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    face: dict[str, list[FaceBox]] = field(default_factory=dict)
    grey: dict[str, bool] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def evidence_for(self, image_id: str) -> FilterEvidence:
        return FilterEvidence(
            image_id=image_id,
            scene_top5=self.scene.get(image_id),
            face_boxes=self.face.get(image_id),
            is_grey=self.grey.get(image_id),
        )


def _iter_evidence_rows(path: Path | str):
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise EvidenceError(f"{path}:{line_no}: not valid JSON: {e.msg}") from e
            if not isinstance(obj, dict) or "id" not in obj:
                raise EvidenceError(f"{path}:{line_no}: row missing id")
            yield line_no, obj


def load_scene_evidence(path: Path | str, store: Optional[EvidenceStore] = None) -> EvidenceStore:
    store = store or EvidenceStore()
    for line_no, obj in _iter_evidence_rows(path):
        if "error" in obj:
            store.errors[obj["id"]] = str(obj["error"])
            continue
        top5 = [(int(c), float(p)) for c, p in obj["top5"]]
        evidence = FilterEvidence(image_id=obj["id"], scene_top5=top5)
        evidence.validate()
        store.scene[obj["id"]] = top5
    return store


def load_face_evidence(path: Path | str, store: Optional[EvidenceStore] = None) -> EvidenceStore:
    store = store or EvidenceStore()
    for line_no, obj in _iter_evidence_rows(path):
        if "error" in obj:
            store.errors[obj["id"]] = str(obj["error"])
            continue
        store.face[obj["id"]] = [FaceBox(*map(float, box)) for box in obj["boxes"]]
    return store


def load_grey_evidence(path: Path | str, store: Optional[EvidenceStore] = None) -> EvidenceStore:
    store = store or EvidenceStore()
    for line_no, obj in _iter_evidence_rows(path):
        if "error" in obj:
            store.errors[obj["id"]] = str(obj["error"])
            continue
        store.grey[obj["id"]] = bool(obj["is_grey"])
    return store


# Schema validators return human-readable warnings; an empty list means the
# file conforms. Used both by the CLI and by external scorer tests.


def validate_scene_evidence_file(path: Path | str, taxonomy: Optional[SceneTaxonomy] = None) -> list[str]:
    warnings: list[str] = []
    seen: set[str] = set()
    for line_no, obj in _iter_evidence_rows(path):
        image_id = obj["id"]
        if image_id in seen:
            warnings.append(f"line {line_no}: duplicate id {image_id!r}")
        seen.add(image_id)
        if "error" in obj:
            continue
        top5 = obj.get("top5")
        if not isinstance(top5, list) or not top5:
            warnings.append(f"line {line_no}: missing or empty top5")
            continue
        if len(top5) > 5:
            warnings.append(f"line {line_no}: top5 has {len(top5)} entries")
        probs = []
        for pair in top5:
            if not (isinstance(pair, list) and len(pair) == 2):
                warnings.append(f"line {line_no}: malformed top5 pair {pair!r}")
                break
            cat, p = pair
            probs.append(float(p))
            if not (0.0 <= float(p) <= 1.0):
                warnings.append(f"line {line_no}: probability {p!r} out of [0,1]")
            if taxonomy is not None and int(cat) not in taxonomy.categories:
                warnings.append(f"line {line_no}: unknown category id {cat}")
        if any(probs[i] < probs[i + 1] for i in range(len(probs) - 1)):
            warnings.append(f"line {line_no}: top5 not sorted descending")
    return warnings


def validate_face_evidence_file(
    path: Path | str, dims: Optional[dict[str, tuple[int, int]]] = None
) -> list[str]:
    warnings: list[str] = []
    seen: set[str] = set()
    for line_no, obj in _iter_evidence_rows(path):
        image_id = obj["id"]
        if image_id in seen:
            warnings.append(f"line {line_no}: duplicate id {image_id!r}")
        seen.add(image_id)
        if "error" in obj:
            continue
        boxes = obj.get("boxes")
        if not isinstance(boxes, list):
            warnings.append(f"line {line_no}: missing boxes list")
            continue
        for box in boxes:
            if not (isinstance(box, list) and len(box) == 4):
                warnings.append(f"line {line_no}: malformed box {box!r}")
                continue
            x, y, w, h = map(float, box)
            if w < 0 or h < 0:
                warnings.append(f"line {line_no}: negative box size {box!r}")
            if dims is not None and image_id in dims:
                iw, ih = dims[image_id]
                if x < 0 or y < 0 or x + w > iw or y + h > ih:
                    warnings.append(f"line {line_no}: box {box!r} outside {iw}x{ih}")
    return warnings


def validate_grey_evidence_file(path: Path | str) -> list[str]:
    warnings: list[str] = []
    seen: set[str] = set()
    for line_no, obj in _iter_evidence_rows(path):
        image_id = obj["id"]
        if image_id in seen:
            warnings.append(f"line {line_no}: duplicate id {image_id!r}")
        seen.add(image_id)
        if "error" in obj:
            continue
        if not isinstance(obj.get("is_grey"), bool):
            warnings.append(f"line {line_no}: is_grey missing or not boolean")
    return warnings
