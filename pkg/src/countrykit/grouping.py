"""Partition country codes into K country classes.

Either load an authoritative grouping file or compute one with a greedy
agglomeration guided by image counts and geographic proximity: repeatedly
merge the group holding the fewest images into its nearest group by
count-weighted centroid distance until exactly K groups remain. The shipped
default grouping file (data/grouping_61.txt) was produced this way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .geo import haversine

GROUPING_FILE_VERSION = "1"


class GroupingError(ValueError):
    pass


class UnknownCountryError(KeyError):
    """Country code absent from the grouping (distinct from unassignable GPS)."""


@dataclass(frozen=True)
class CountryStat:
    code: str
    count: int
    centroid: tuple[float, float]

    def __post_init__(self):
        if self.count < 0:
            raise GroupingError(f"{self.code}: negative image count")


@dataclass
class ClassGrouping:
    k: int
    assignment: dict[str, int]
    labels: dict[int, str] = field(default_factory=dict)

    def validate(self, expected_codes: Optional[Iterable[str]] = None) -> None:
        if self.k < 1:
            raise GroupingError(f"K must be >= 1, got {self.k}")
        class_ids = set(self.assignment.values())
        if any(c < 0 or c >= self.k for c in class_ids):
            raise GroupingError("class id outside [0, K)")
        missing_classes = set(range(self.k)) - class_ids
        if missing_classes:
            raise GroupingError(f"empty classes: {sorted(missing_classes)}")
        if expected_codes is not None:
            missing = sorted(set(expected_codes) - set(self.assignment))
            if missing:
                raise GroupingError(f"countries missing from grouping: {missing}")

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {c: [] for c in range(self.k)}
        for code, class_id in self.assignment.items():
            out[class_id].append(code)
        for codes in out.values():
            codes.sort()
        return out


def map_country_to_class(code: str, grouping: ClassGrouping) -> int:
    try:
        return grouping.assignment[code]
    except KeyError:
        raise UnknownCountryError(code) from None


def load_grouping(path: Path | str, expected_codes: Optional[Iterable[str]] = None) -> ClassGrouping:
    """Grouping file: lines "country_code class_id class_label", '#' comments.

    K is inferred from the class ids; the partition is validated (no
    duplicate assignment, no empty class, and, when a country list is given,
    no missing country).
    """
    path = Path(path)
    assignment: dict[str, int] = {}
    labels: dict[int, str] = {}
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 2)
            if len(parts) < 2:
                raise GroupingError(f"{path}:{line_no}: expected 'code class_id [label]'")
            code = parts[0].upper()
            try:
                class_id = int(parts[1])
            except ValueError as e:
                raise GroupingError(f"{path}:{line_no}: bad class id {parts[1]!r}") from e
            if code in assignment:
                raise GroupingError(f"{path}:{line_no}: duplicate assignment for {code}")
            assignment[code] = class_id
            if len(parts) == 3:
                label = parts[2].strip()
                if class_id in labels and labels[class_id] != label:
                    raise GroupingError(
                        f"{path}:{line_no}: conflicting labels for class {class_id}"
                    )
                labels[class_id] = label
    if not assignment:
        raise GroupingError(f"{path}: empty grouping file")
    k = max(assignment.values()) + 1
    grouping = ClassGrouping(k=k, assignment=assignment, labels=labels)
    grouping.validate(expected_codes)
    return grouping


def write_grouping(path: Path | str, grouping: ClassGrouping) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(f"# grouping-version: {GROUPING_FILE_VERSION}\n")
        f.write(f"# classes: {grouping.k}\n")
        f.write("# columns: country_code class_id class_label\n")
        for code in sorted(grouping.assignment):
            class_id = grouping.assignment[code]
            label = grouping.labels.get(class_id, str(class_id))
            f.write(f"{code}\t{class_id}\t{label}\n")


@dataclass
class _Group:
    codes: list[str]
    count: int
    centroid: tuple[float, float]

    @property
    def key(self) -> str:
        return self.codes[0]  # codes kept sorted; min code identifies the group


def _merge_groups(a: _Group, b: _Group) -> _Group:
    total = a.count + b.count
    if total > 0:
        centroid = (
            (a.centroid[0] * a.count + b.centroid[0] * b.count) / total,
            (a.centroid[1] * a.count + b.centroid[1] * b.count) / total,
        )
    else:
        centroid = (
            (a.centroid[0] + b.centroid[0]) / 2.0,
            (a.centroid[1] + b.centroid[1]) / 2.0,
        )
    return _Group(codes=sorted(a.codes + b.codes), count=total, centroid=centroid)


def _class_label(codes: Sequence[str]) -> str:
    return "+".join(codes)


def compute_grouping(
    stats: Sequence[CountryStat],
    k: int,
    min_images: int = 0,
    *,
    must_link: Sequence[tuple[str, str]] = (),
    pinned: Iterable[str] = (),
) -> ClassGrouping:
    """Greedy agglomeration into exactly K classes.

    Start with one group per country; repeatedly merge the group with the
    smallest image count into its nearest group by count-weighted centroid
    haversine distance, until K groups remain. Ties break by ascending ISO
    code (both when picking the smallest group and its target), so the
    result is deterministic. min_images does not stop the merging early (the
    class count always reaches K exactly); groups still below it in the
    result are reported by `small_groups`.

    must_link pairs are pre-merged; pinned codes never merge in or out (used
    when reproducing externally confirmed memberships).
    """
    if k < 1:
        raise GroupingError(f"K must be >= 1, got {k}")
    if k > len(stats):
        raise GroupingError(f"K={k} exceeds country count {len(stats)}")
    codes = [s.code for s in stats]
    if len(codes) != len(set(codes)):
        raise GroupingError("duplicate country codes in stats")

    groups: dict[str, _Group] = {
        s.code: _Group(codes=[s.code], count=s.count, centroid=s.centroid) for s in stats
    }
    code_to_group: dict[str, str] = {s.code: s.code for s in stats}
    pinned = set(pinned)

    def merge(src_key: str, dst_key: str) -> None:
        merged = _merge_groups(groups[dst_key], groups.pop(src_key))
        del groups[dst_key]
        groups[merged.key] = merged
        for code in merged.codes:
            code_to_group[code] = merged.key

    for a, b in must_link:
        if a not in code_to_group or b not in code_to_group:
            raise GroupingError(f"must_link pair ({a}, {b}) not in stats")
        ka, kb = code_to_group[a], code_to_group[b]
        if ka != kb:
            merge(max(ka, kb), min(ka, kb))
    if len(groups) < k:
        raise GroupingError(f"must_link constraints leave fewer than K={k} groups")

    def is_pinned(group: _Group) -> bool:
        return any(code in pinned for code in group.codes)

    while len(groups) > k:
        movable = [g for g in groups.values() if not is_pinned(g)]
        if not movable:
            raise GroupingError("pinned constraints make K unreachable")
        smallest = min(movable, key=lambda g: (g.count, g.key))
        targets = [
            g for g in groups.values() if g.key != smallest.key and not is_pinned(g)
        ]
        if not targets:
            raise GroupingError("pinned constraints make K unreachable")
        nearest = min(
            targets, key=lambda g: (haversine(smallest.centroid, g.centroid), g.key)
        )
        merge(smallest.key, nearest.key)

    ordered = sorted(groups.values(), key=lambda g: g.key)
    assignment: dict[str, int] = {}
    labels: dict[int, str] = {}
    for class_id, group in enumerate(ordered):
        labels[class_id] = _class_label(group.codes)
        for code in group.codes:
            assignment[code] = class_id
    grouping = ClassGrouping(k=k, assignment=assignment, labels=labels)
    grouping.validate(codes)
    return grouping


def small_groups(grouping: ClassGrouping, stats: Sequence[CountryStat], min_images: int) -> dict[int, int]:
    """Class id -> image count, for classes whose total falls below min_images."""
    counts = {s.code: s.count for s in stats}
    totals: dict[int, int] = {c: 0 for c in range(grouping.k)}
    for code, class_id in grouping.assignment.items():
        totals[class_id] += counts.get(code, 0)
    return {c: n for c, n in sorted(totals.items()) if n < min_images}
