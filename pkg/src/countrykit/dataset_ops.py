"""Deterministic per-country splits and inverse-sqrt class-weighted loss math.

Splitting happens within each country separately: test and val take the
ceiling of their share, train takes the remainder. Class weights are
w_i = 1 / sqrt(n_i), stored unnormalized; the weighted cross entropy of a
one-hot sample reduces to -w_c * log(p_c) for the true class c.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

from .manifest import ImageRecord

LOG_CLAMP_EPS = 1e-12

DEFAULT_RATIOS = ("0.96", "0.02", "0.02")


class SplitError(ValueError):
    pass


class WeightError(ValueError):
    pass


def _to_fraction(value) -> Fraction:
    # Floats go through str() so 0.96 means 24/25, not its binary neighbor.
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class SplitConfig:
    train: Fraction
    val: Fraction
    test: Fraction
    seed: int = 0

    @classmethod
    def create(cls, train="0.96", val="0.02", test="0.02", seed: int = 0) -> "SplitConfig":
        config = cls(_to_fraction(train), _to_fraction(val), _to_fraction(test), int(seed))
        config.validate()
        return config

    def validate(self) -> None:
        for name in ("train", "val", "test"):
            if getattr(self, name) < 0:
                raise SplitError(f"ratio {name} is negative")
        total = self.train + self.val + self.test
        if total != 1:
            raise SplitError(f"ratios must sum to 1 exactly, got {total}")
        if not (-(2**63) <= self.seed < 2**63):
            raise SplitError("seed must fit in 64 bits")


def split_counts(n: int, config: SplitConfig) -> tuple[int, int, int]:
    """(train, val, test) counts for a country with n records.

    test = ceil(ratio_test * n) and val = ceil(ratio_val * n), each capped so
    that at least one record stays in train whenever the train ratio is
    positive (a country must never vanish from training entirely; with n = 1
    the single record trains).
    """
    if n < 0:
        raise SplitError("n must be >= 0")
    reserve = 1 if config.train > 0 and n > 0 else 0
    n_test = min(math.ceil(config.test * n), n - reserve)
    n_test = max(n_test, 0)
    n_val = min(math.ceil(config.val * n), n - reserve - n_test)
    n_val = max(n_val, 0)
    return n - n_val - n_test, n_val, n_test


def _country_rng(seed: int, country_code: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{country_code}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def split_dataset(records: Sequence[ImageRecord], config: SplitConfig) -> list[ImageRecord]:
    """Assign split labels per country; deterministic in the seed.

    Records are grouped by country; each country's ids are sorted, shuffled
    with a seed derived from (seed, country), and allocated test, then val,
    then train. Input order never affects the outcome. Returns new records;
    the input is not mutated.
    """
    by_country: dict[str, list[ImageRecord]] = {}
    for record in records:
        if record.country_code is None:
            raise SplitError(f"record {record.id}: no country_code; assign countries first")
        by_country.setdefault(record.country_code, []).append(record)

    assignment: dict[str, str] = {}
    for country, group in sorted(by_country.items()):
        ids = sorted(r.id for r in group)
        rng = _country_rng(config.seed, country)
        rng.shuffle(ids)
        _, n_val, n_test = split_counts(len(ids), config)
        for image_id in ids[:n_test]:
            assignment[image_id] = "test"
        for image_id in ids[n_test : n_test + n_val]:
            assignment[image_id] = "val"
        for image_id in ids[n_test + n_val :]:
            assignment[image_id] = "train"

    return [r.with_updates(split=assignment[r.id]) for r in records]


class WeightEntry(NamedTuple):
    count: int
    weight: float


@dataclass
class WeightTable:
    entries: dict[int, WeightEntry]
    excluded: list[int] = field(default_factory=list)
    rescaled_mean_one: bool = False

    @property
    def n_classes(self) -> int:
        return len(self.entries)

    def weight(self, class_id: int) -> float:
        return self.entries[class_id].weight


def class_weights(counts: Mapping[int, int], rescale_mean_one: bool = False) -> WeightTable:
    """w_i = 1 / sqrt(n_i) per class; zero-count classes are excluded and reported.

    Weights are stored unnormalized by default; the optional mean-1 rescale
    only changes the global scale, never the per-class ordering.
    """
    if any(n < 0 for n in counts.values()):
        raise WeightError("negative class count")
    positive = {c: n for c, n in counts.items() if n > 0}
    if not positive:
        raise WeightError("all class counts are zero")
    excluded = sorted(c for c, n in counts.items() if n == 0)
    entries = {c: WeightEntry(n, 1.0 / math.sqrt(n)) for c, n in sorted(positive.items())}
    if rescale_mean_one:
        mean = sum(e.weight for e in entries.values()) / len(entries)
        entries = {c: WeightEntry(e.count, e.weight / mean) for c, e in entries.items()}
    return WeightTable(entries=entries, excluded=excluded, rescaled_mean_one=rescale_mean_one)


def write_weight_table(path: Path | str, table: WeightTable, counts_source: str = "train") -> None:
    """Emit "class_id n_i w_i" lines; header records conventions for consumers."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write("# columns: class_id n_i w_i\n")
        f.write("# weight: 1/sqrt(n_i), unnormalized"
                + (" then rescaled to mean 1\n" if table.rescaled_mean_one else "\n"))
        f.write(f"# counts: {counts_source}\n")
        f.write("# split allocation: test=ceil, val=ceil, train=remainder\n")
        if table.excluded:
            f.write(f"# excluded zero-count classes: {','.join(map(str, table.excluded))}\n")
        for class_id, entry in sorted(table.entries.items()):
            f.write(f"{class_id}\t{entry.count}\t{entry.weight!r}\n")


def read_weight_table(path: Path | str) -> WeightTable:
    path = Path(path)
    entries: dict[int, WeightEntry] = {}
    excluded: list[int] = []
    rescaled = False
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "rescaled to mean 1" in line:
                    rescaled = True
                if line.startswith("# excluded zero-count classes:"):
                    listed = line.split(":", 1)[1].strip()
                    if listed:
                        excluded = [int(x) for x in listed.split(",")]
                continue
            class_id, n, w = line.split("\t")
            entries[int(class_id)] = WeightEntry(int(n), float(w))
    return WeightTable(entries=entries, excluded=excluded, rescaled_mean_one=rescaled)


@dataclass(frozen=True)
class LossSample:
    scores: tuple[float, ...]
    true_class: int

    def validate(self, tolerance: float = 1e-6) -> None:
        if any(not (0.0 <= s <= 1.0) for s in self.scores):
            raise WeightError("score outside [0, 1]")
        if abs(sum(self.scores) - 1.0) > tolerance:
            raise WeightError(f"scores sum to {sum(self.scores)!r}, not 1")
        if not (0 <= self.true_class < len(self.scores)):
            raise WeightError(f"true_class {self.true_class} outside score vector")


class CELoss(NamedTuple):
    value: float
    clamped: bool


def weighted_ce(sample: LossSample, weights: WeightTable) -> CELoss:
    """-w_c * log(p_c) for the true class c; zero probabilities clamp to 1e-12, flagged."""
    sample.validate()
    if sample.true_class not in weights.entries:
        raise WeightError(f"true class {sample.true_class} not in weight table")
    p = sample.scores[sample.true_class]
    clamped = p < LOG_CLAMP_EPS
    p = max(p, LOG_CLAMP_EPS)
    return CELoss(-weights.weight(sample.true_class) * math.log(p), clamped)


def batch_weighted_ce(samples: Iterable[LossSample], weights: WeightTable) -> CELoss:
    """Batch loss is the plain sum of per-sample terms."""
    total = 0.0
    any_clamped = False
    for sample in samples:
        loss = weighted_ce(sample, weights)
        total += loss.value
        any_clamped = any_clamped or loss.clamped
    return CELoss(total, any_clamped)
