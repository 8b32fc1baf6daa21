"""Percentile ranks within (SDS, academic rank) strata and performance bands."""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .ingest import Rank, Researcher
from .metrics import ScoreCard


class Indicator(str, Enum):
    O = "O"
    FSS_IF = "FSS_IF"

    def value_of(self, card: ScoreCard) -> float:
        return card.O if self is Indicator.O else card.fss_if


class Band(str, Enum):
    NO_PUBLICATIONS = "no_publications"
    NO_IMPACT = "no_impact"
    BOTTOM20 = "bottom20"
    BELOW_MEDIAN = "below_median"
    TOP20 = "top20"
    TOP10 = "top10"


BAND_ORDER = tuple(Band)


@dataclass(frozen=True)
class Stratum:
    sds: str
    rank: Rank
    member_ids: tuple[str, ...]


@dataclass(frozen=True)
class PercentileTable:
    indicator: Indicator
    percentiles: dict[str, float]

    def __getitem__(self, researcher_id: str) -> float:
        return self.percentiles[researcher_id]

    def __contains__(self, researcher_id: str) -> bool:
        return researcher_id in self.percentiles

    def __len__(self) -> int:
        return len(self.percentiles)


def percentile_rank(values: Sequence[float], subject_index: int) -> float:
    """Midrank percentile of ``values[subject_index]`` on a 0-100 scale.

    Counts values strictly below the subject plus half the other values equal
    to it, over ``n - 1``. A list of one scores 50.
    """
    n = len(values)
    if n == 0:
        raise ValueError("percentile of an empty list")
    if not 0 <= subject_index < n:
        raise IndexError(f"subject_index {subject_index} out of range for {n} values")
    if n == 1:
        return 50.0
    x = values[subject_index]
    below = sum(1 for v in values if v < x)
    equal = sum(1 for v in values if v == x) - 1
    return 100.0 * (below + equal / 2) / (n - 1)


def _stratum_percentiles(values: Sequence[float]) -> list[float]:
    """percentile_rank for every member at once, O(n log n)."""
    n = len(values)
    if n == 1:
        return [50.0]
    ordered = sorted(values)
    out = []
    for x in values:
        lo = bisect_left(ordered, x)
        hi = bisect_right(ordered, x)
        out.append(100.0 * (lo + (hi - lo - 1) / 2) / (n - 1))
    return out


def strata(scorecards: Mapping[str, ScoreCard], roster: Mapping[str, Researcher]) -> list[Stratum]:
    groups: dict[tuple[str, Rank], list[str]] = defaultdict(list)
    for rid in sorted(scorecards):
        r = roster[rid]
        if r.rank is Rank.EXTERNAL:
            continue
        groups[(r.sds, r.rank)].append(rid)
    return [Stratum(sds, rank, tuple(ids))
            for (sds, rank), ids in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value))]


def rank_all(scorecards: Mapping[str, ScoreCard], roster: Mapping[str, Researcher],
             run_log: list[str] | None = None) -> tuple[PercentileTable, PercentileTable]:
    """Percentile tables for O and FSS_IF; external candidates are not ranked."""
    tables = {Indicator.O: {}, Indicator.FSS_IF: {}}
    for stratum in strata(scorecards, roster):
        if len(stratum.member_ids) == 1 and run_log is not None:
            run_log.append(f"rank: singleton stratum {stratum.sds}/{stratum.rank.value} "
                           f"({stratum.member_ids[0]}) scored 50")
        for indicator, table in tables.items():
            values = [indicator.value_of(scorecards[rid]) for rid in stratum.member_ids]
            table.update(zip(stratum.member_ids, _stratum_percentiles(values)))
    return (PercentileTable(Indicator.O, dict(sorted(tables[Indicator.O].items()))),
            PercentileTable(Indicator.FSS_IF, dict(sorted(tables[Indicator.FSS_IF].items()))))


def percentile_bands(percentile: float) -> set[Band]:
    bands = set()
    if percentile < 20:
        bands.add(Band.BOTTOM20)
    if percentile < 50:
        bands.add(Band.BELOW_MEDIAN)
    if percentile >= 80:
        bands.add(Band.TOP20)
    if percentile >= 90:
        bands.add(Band.TOP10)
    return bands


def score_bands(card: ScoreCard) -> set[Band]:
    bands = set()
    if card.N == 0:
        bands.add(Band.NO_PUBLICATIONS)
    if card.fss_if == 0:
        bands.add(Band.NO_IMPACT)
    return bands


def classify(card: ScoreCard, percentile_fss: float, percentile_o: float) -> dict[Indicator, frozenset[Band]]:
    """Bands per indicator.

    ``no_publications`` and ``no_impact`` depend on the scorecard only and appear
    under both indicators; the percentile bands are read per indicator.
    """
    base = score_bands(card)
    return {
        Indicator.O: frozenset(base | percentile_bands(percentile_o)),
        Indicator.FSS_IF: frozenset(base | percentile_bands(percentile_fss)),
    }


def band_names(bands) -> str:
    return ";".join(b.value for b in BAND_ORDER if b in bands)
