"""Per-researcher output (O) and IF-based fractional scientific strength (FSS_IF).

    FSS_IF = (1/t) * sum_i (IF_i / mean_IF_i) * f_i

where ``mean_IF_i`` is the mean impact factor of the journals sharing the
subject category and year of publication ``i`` and ``f_i`` is the researcher's
fractional share of the byline.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

from .ingest import Authorship, Corpus, JournalYearMetric, Publication, Rank, Researcher, Scheme

log = logging.getLogger(__name__)

# byline-position weights for the position-weighted scheme
SAME_INSTITUTION = (0.40, 0.20)  # first and last each, shared by the middle
DIFFERENT_INSTITUTION = (0.30, 0.15, 0.10)  # first/last, second/second-to-last, rest


class ScoringError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ScoreCard:
    researcher_id: str
    N: int
    t: float
    O: float
    fss_if: float


def category_mean_if(journal_metrics: Mapping[tuple[str, int], JournalYearMetric],
                     category: str, year: int) -> float:
    values = [m.impact_factor for _, m in sorted(journal_metrics.items())
              if m.year == year and m.impact_factor is not None and category in m.categories]
    if not values:
        raise ScoringError(f"no IF data for category/year {category}/{year}")
    return sum(values) / len(values)


def category_means(journal_metrics: Mapping[tuple[str, int], JournalYearMetric]) -> dict[tuple[str, int], float]:
    """All category-year mean impact factors in one pass."""
    sums: dict[tuple[str, int], list[float]] = defaultdict(list)
    for _, m in sorted(journal_metrics.items()):
        if m.impact_factor is None:
            continue
        for c in m.categories:
            sums[(c, m.year)].append(m.impact_factor)
    return {key: sum(v) / len(v) for key, v in sums.items()}


def normalized_impact(pub: Publication, journal_metrics: Mapping[tuple[str, int], JournalYearMetric],
                      means: Mapping[tuple[str, int], float] | None = None) -> float:
    """IF over the category mean IF, averaged over the journal's categories.

    An absent or zero IF, or an unknown journal-year, gives 0.
    """
    metric = journal_metrics.get(pub.journal_ref)
    if metric is None or not metric.impact_factor:
        return 0.0
    ratios = []
    for c in metric.categories:
        mean = means[(c, metric.year)] if means is not None else category_mean_if(journal_metrics, c, metric.year)
        ratios.append(metric.impact_factor / mean)
    return sum(ratios) / len(ratios)


def byline_weights(byline: Sequence[Authorship], scheme: Scheme) -> list[float]:
    """Fractional contribution of every byline position under ``scheme``."""
    n = len(byline)
    if n == 0:
        return []
    if scheme is Scheme.ALPHABETICAL or n == 1:
        return [1.0 / n] * n
    if n == 2:
        return [0.5, 0.5]
    if n >= 5 and _different_institution_rule(byline):
        ends, seconds, rest = DIFFERENT_INSTITUTION
        middle = rest / (n - 4)
        return [ends, seconds] + [middle] * (n - 4) + [seconds, ends]
    ends, rest = SAME_INSTITUTION
    middle = rest / (n - 2)
    return [ends] + [middle] * (n - 2) + [ends]


def _different_institution_rule(byline: Sequence[Authorship]) -> bool:
    # first and last differ, and the leading and trailing pairs are either both
    # internally shared or both mixed; a lone shared pair keeps the 40/40 split
    first, second, penult, last = (byline[i].institution_id for i in (0, 1, -2, -1))
    if first == last:
        return False
    return (first == second) == (penult == last)


def fractional_contribution(pub: Publication, researcher_id: str, scheme: Scheme) -> float:
    for authorship, weight in zip(pub.byline, byline_weights(pub.byline, scheme)):
        if authorship.researcher_id == researcher_id:
            return weight
    raise ScoringError(f"researcher {researcher_id} not on byline of {pub.pub_id}")


class _Index:
    """Per-corpus totals built in one pass over every byline."""

    def __init__(self, corpus: Corpus):
        self.window = corpus.window
        means = category_means(corpus.journal_metrics)
        schemes = {rid: r.scheme for rid, r in corpus.roster.items()}
        self.counts: dict[str, int] = defaultdict(int)
        self.totals: dict[str, float] = defaultdict(float)
        weights_cache: dict[tuple[str, Scheme], list[float]] = {}
        # pub_id order fixes the summation order per researcher
        for pub in sorted(corpus.publications, key=lambda p: p.pub_id):
            if pub.year not in self.window:
                continue
            impact = normalized_impact(pub, corpus.journal_metrics, means)
            seen = set()
            for i, a in enumerate(pub.byline):
                rid = a.researcher_id
                if rid is None or rid in seen:
                    continue
                seen.add(rid)
                self.counts[rid] += 1
                scheme = schemes.get(rid, Scheme.ALPHABETICAL)
                key = (pub.pub_id, scheme)
                weights = weights_cache.get(key)
                if weights is None:
                    weights = weights_cache[key] = byline_weights(pub.byline, scheme)
                self.totals[rid] += impact * weights[i]

    def score(self, researcher: Researcher) -> ScoreCard:
        t = researcher.staff_years(self.window)
        if t <= 0:
            raise ScoringError(f"{researcher.researcher_id} not on staff in window {self.window}")
        rid = researcher.researcher_id
        n = self.counts.get(rid, 0)
        return ScoreCard(rid, n, t, n / t, self.totals.get(rid, 0.0) / t)


def score_researcher(researcher: Researcher, corpus: Corpus) -> ScoreCard:
    return _Index(corpus).score(researcher)


def score_all(corpus: Corpus, run_log: list[str] | None = None) -> dict[str, ScoreCard]:
    """Score every roster researcher with staff presence in the window.

    Researchers with no presence are skipped and reported to ``run_log``.
    """
    index = _Index(corpus)
    cards = {}
    for rid in sorted(corpus.roster):
        researcher = corpus.roster[rid]
        if researcher.staff_days(corpus.window) <= 0:
            if run_log is not None:
                why = "external candidate" if researcher.rank is Rank.EXTERNAL else "not on staff in window"
                run_log.append(f"score: skipped {rid} ({why})")
            continue
        cards[rid] = index.score(researcher)
    log.debug("scored %d of %d researchers", len(cards), len(corpus.roster))
    return cards
