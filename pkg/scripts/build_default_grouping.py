#!/usr/bin/env python3
"""Build data/grouping_61.txt from the country statistics table.

Runs the greedy count/proximity merge over data/country_stats.tsv down to 61
classes, with the externally confirmed memberships enforced up front:
Vatican City groups with Italy, Egypt with Sudan, and the United States
stays a singleton class. Everything else falls out of the merge rule.

Usage: python scripts/build_default_grouping.py
"""

from __future__ import annotations

import sys
from pathlib import Path

from countrykit.grouping import CountryStat, compute_grouping, write_grouping

ROOT = Path(__file__).resolve().parents[1]
STATS_PATH = ROOT / "data" / "country_stats.tsv"
OUT_PATH = ROOT / "data" / "grouping_61.txt"

K = 61
MUST_LINK = (("IT", "VA"), ("EG", "SD"))
PINNED = ("US",)


def load_stats(path: Path) -> list[CountryStat]:
    stats = []
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            code, _name, lat, lon, count = line.split("\t")
            stats.append(CountryStat(code=code, count=int(count), centroid=(float(lat), float(lon))))
    return stats


def main() -> int:
    stats = load_stats(STATS_PATH)
    print(f"countries: {len(stats)}", file=sys.stderr)
    grouping = compute_grouping(stats, K, min_images=1000, must_link=MUST_LINK, pinned=PINNED)

    assert grouping.assignment["VA"] == grouping.assignment["IT"]
    assert grouping.assignment["EG"] == grouping.assignment["SD"]
    us_class = grouping.assignment["US"]
    us_members = [c for c, g in grouping.assignment.items() if g == us_class]
    assert us_members == ["US"], us_members

    write_grouping(OUT_PATH, grouping)
    sizes = sorted(len(m) for m in grouping.members().values())
    print(f"wrote {OUT_PATH}: K={grouping.k}, class sizes min={sizes[0]} max={sizes[-1]}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
