"""Recruitment audits over scored and ranked researchers.

Covers SDS and staff eligibility filters, the two-sample t-test, winners
against incumbents (overall and per UDA), per-competition winner flags and
counts of eligible non-winners who outperformed the winners.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from scipy.special import betainc

from .ingest import Competition, Corpus, Rank
from .metrics import ScoreCard
from .ranking import Band, Indicator, PercentileTable, percentile_bands, score_bands

COHORT_BANDS = (Band.NO_PUBLICATIONS, Band.NO_IMPACT, Band.BOTTOM20,
                Band.BELOW_MEDIAN, Band.TOP20, Band.TOP10)


@dataclass(frozen=True)
class EligibilityConfig:
    min_publishing_share: float = 0.5
    require_continuous_staff: bool = True
    # cohort the winners are compared against
    incumbent_rank: Rank = Rank.ASSOCIATE
    # non-winners must hold assistant rank at least this long inside the window
    min_assistant_days: int = 365

    def __post_init__(self):
        if not 0.0 <= self.min_publishing_share <= 1.0:
            raise ValueError("min_publishing_share must lie in [0, 1]")


# --- filters ---------------------------------------------------------------


def filter_eligible_sds(corpus: Corpus, scorecards: Mapping[str, ScoreCard],
                        config: EligibilityConfig = EligibilityConfig(),
                        run_log: list[str] | None = None) -> set[str]:
    """SDSs where the share of professors with at least one publication reaches the threshold."""
    professors: dict[str, int] = Counter()
    publishing: dict[str, int] = Counter()
    for rid, card in scorecards.items():
        r = corpus.roster[rid]
        if r.rank is Rank.EXTERNAL:
            continue
        professors[r.sds] += 1
        publishing[r.sds] += card.N >= 1
    known = {r.sds for r in corpus.roster.values()} | {c.sds for c in corpus.competitions}
    eligible = set()
    for sds in sorted(known):
        if professors[sds] == 0:
            _note(run_log, f"eligibility: excluded sds {sds} (no scored professors)")
            continue
        share = publishing[sds] / professors[sds]
        if share >= config.min_publishing_share:
            eligible.add(sds)
        else:
            _note(run_log, f"eligibility: excluded sds {sds} "
                           f"({publishing[sds]}/{professors[sds]} publishing < {config.min_publishing_share:g})")
    return eligible


def filter_continuous_staff(ids: Iterable[str], corpus: Corpus) -> set[str]:
    return {rid for rid in ids if rid in corpus.roster and corpus.roster[rid].covers(corpus.window)}


def _note(run_log, message):
    if run_log is not None:
        run_log.append(message)


# --- t-test ----------------------------------------------------------------


class TTestResult(NamedTuple):
    t: float
    p: float
    df: float


class ZeroVarianceError(ValueError):
    pass


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = math.fsum(xs) / n
    return mean, math.fsum((x - mean) ** 2 for x in xs) / (n - 1)


def t_test_two_sample(a: Sequence[float], b: Sequence[float], variant: str = "pooled") -> TTestResult:
    """Two-sample t-test with a two-tailed p-value.

    ``pooled`` is Student's equal-variance test with ``n_a + n_b - 2`` degrees
    of freedom; ``welch`` uses the Welch-Satterthwaite approximation. Samples
    with no spread and equal means give ``t = 0, p = 1``; unequal means with no
    spread raise :class:`ZeroVarianceError`.
    """
    if variant not in ("pooled", "welch"):
        raise ValueError(f"unknown t-test variant {variant!r}")
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two observations")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    diff = ma - mb
    if variant == "pooled":
        df = na + nb - 2
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(pooled * (1 / na + 1 / nb))
    else:
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        df = (qa + qb) ** 2 / (qa ** 2 / (na - 1) + qb ** 2 / (nb - 1)) if se > 0 else float(na + nb - 2)
    if se == 0:
        if diff == 0:
            return TTestResult(0.0, 1.0, float(df))
        raise ZeroVarianceError("zero variance")
    t = diff / se
    # P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    p = float(betainc(df / 2, 0.5, df / (df + t * t)))
    return TTestResult(t, min(p, 1.0), float(df))


# --- winners vs incumbents -------------------------------------------------


@dataclass
class CohortStats:
    observations: int
    mean_percentile: dict[Indicator, float | None]
    shares: dict[Band, float | None]  # percent of observations, FSS_IF bands


@dataclass
class TTestOutcome:
    indicator: Indicator
    result: TTestResult | None
    note: str = ""

    @property
    def applicable(self) -> bool:
        return self.result is not None


@dataclass
class CohortComparison:
    winners: CohortStats
    incumbents: CohortStats
    ttests: dict[Indicator, TTestOutcome]
    variant: str


@dataclass
class CohortReport:
    overall: CohortComparison
    per_uda: dict[str, CohortComparison]
    winner_ids: tuple[str, ...]
    incumbent_ids: tuple[str, ...]


def cohort_stats(ids: Sequence[str], scorecards: Mapping[str, ScoreCard],
                 percentiles: tuple[PercentileTable, PercentileTable]) -> CohortStats:
    pct_o, pct_fss = percentiles
    n = len(ids)
    means: dict[Indicator, float | None] = {}
    for table in (pct_o, pct_fss):
        means[table.indicator] = math.fsum(table[r] for r in ids) / n if n else None
    counts: Counter = Counter()
    for rid in ids:
        counts.update(score_bands(scorecards[rid]) | percentile_bands(pct_fss[rid]))
    shares = {b: (100.0 * counts[b] / n if n else None) for b in COHORT_BANDS}
    return CohortStats(n, means, shares)


def _compare(winners: Sequence[str], incumbents: Sequence[str], scorecards, percentiles,
             variant: str) -> CohortComparison:
    ttests = {}
    for table in percentiles:
        a = [table[r] for r in winners]
        b = [table[r] for r in incumbents]
        if len(a) < 2 or len(b) < 2:
            ttests[table.indicator] = TTestOutcome(table.indicator, None, "not applicable: cohort smaller than 2")
            continue
        try:
            ttests[table.indicator] = TTestOutcome(table.indicator, t_test_two_sample(a, b, variant))
        except ZeroVarianceError:
            ttests[table.indicator] = TTestOutcome(table.indicator, None, "not applicable: zero variance")
    return CohortComparison(cohort_stats(winners, scorecards, percentiles),
                            cohort_stats(incumbents, scorecards, percentiles), ttests, variant)


def _rankable(rid, corpus, scorecards, percentiles) -> bool:
    r = corpus.roster.get(rid)
    return (r is not None and r.rank is not Rank.EXTERNAL and rid in scorecards
            and rid in percentiles[0] and rid in percentiles[1])


def compare_winners_vs_incumbents(corpus: Corpus, scorecards: Mapping[str, ScoreCard],
                                  percentiles: tuple[PercentileTable, PercentileTable],
                                  config: EligibilityConfig = EligibilityConfig(),
                                  variant: str = "pooled",
                                  eligible_sds: set[str] | None = None,
                                  run_log: list[str] | None = None) -> CohortReport:
    """Winners (each counted once) against incumbents, overall and per UDA."""
    if eligible_sds is None:
        eligible_sds = filter_eligible_sds(corpus, scorecards, config)
    all_winners = set().union(*(c.winner_ids for c in corpus.competitions)) if corpus.competitions else set()
    winners = set()
    for comp in corpus.competitions:
        if comp.sds in eligible_sds:
            winners |= comp.winner_ids
    incumbents = {rid for rid, r in corpus.roster.items()
                  if r.rank is config.incumbent_rank and r.sds in eligible_sds and rid not in all_winners}

    def keep(ids, label):
        kept = {rid for rid in ids if _rankable(rid, corpus, scorecards, percentiles)}
        for rid in sorted(ids - kept):
            _note(run_log, f"cohort: dropped {label} {rid} (external or not scored)")
        if config.require_continuous_staff:
            continuous = filter_continuous_staff(kept, corpus)
            for rid in sorted(kept - continuous):
                _note(run_log, f"cohort: dropped {label} {rid} (not on staff for the whole window)")
            kept = continuous
        return sorted(kept)

    w_ids, i_ids = keep(winners, "winner"), keep(incumbents, "incumbent")
    overall = _compare(w_ids, i_ids, scorecards, percentiles, variant)

    by_uda: dict[str, tuple[list, list]] = defaultdict(lambda: ([], []))
    for rid in w_ids:
        by_uda[corpus.roster[rid].uda][0].append(rid)
    for rid in i_ids:
        by_uda[corpus.roster[rid].uda][1].append(rid)
    per_uda = {uda: _compare(w, i, scorecards, percentiles, variant) for uda, (w, i) in sorted(by_uda.items())}
    return CohortReport(overall, per_uda, tuple(w_ids), tuple(i_ids))


# --- per-competition winner audit ------------------------------------------

WINNER_FLAGS = ("unproductive", "bottom20", "below_median")
PAIR_FLAGS = ("avg_below_median", "one_bottom20_one_top20", "one_below_median_one_top20")
AUDIT_COUNTERS = tuple(f"{q}_{f}" for f in WINNER_FLAGS for q in ("at_least_one", "both")) + PAIR_FLAGS


@dataclass
class WinnerSummary:
    researcher_id: str
    N: int
    O: float
    fss_if: float
    percentile_o: float
    percentile_fss: float


@dataclass
class CompetitionAudit:
    competition_id: str
    sds: str
    university_id: str
    winners: list[WinnerSummary]
    # indicator -> flag name -> value; pair flags are None for single-winner competitions
    flags: dict[Indicator, dict[str, bool | None]]


@dataclass
class AuditSummary:
    audits: list[CompetitionAudit]
    counts: dict[Indicator, dict[str, int]]
    competitions: int
    two_winner_competitions: int
    excluded: list[str] = field(default_factory=list)


def _winner_flags(indicator: Indicator, winners: Sequence[WinnerSummary]) -> dict[str, bool | None]:
    if indicator is Indicator.O:
        unproductive = [w.N == 0 for w in winners]
        pct = [w.percentile_o for w in winners]
    else:
        unproductive = [w.fss_if == 0 for w in winners]
        pct = [w.percentile_fss for w in winners]
    per_flag = {
        "unproductive": unproductive,
        "bottom20": [p < 20 for p in pct],
        "below_median": [p < 50 for p in pct],
    }
    pair = len(winners) == 2
    flags: dict[str, bool | None] = {}
    for name, values in per_flag.items():
        flags[f"at_least_one_{name}"] = any(values)
        flags[f"both_{name}"] = pair and all(values)
    if pair:
        lo, hi = sorted(pct)
        flags["avg_below_median"] = (pct[0] + pct[1]) / 2 < 50
        flags["one_bottom20_one_top20"] = lo < 20 and hi >= 80
        flags["one_below_median_one_top20"] = lo < 50 and hi >= 80
    else:
        flags.update(dict.fromkeys(PAIR_FLAGS))
    return flags


def audit_competitions(corpus: Corpus, scorecards: Mapping[str, ScoreCard],
                       percentiles: tuple[PercentileTable, PercentileTable],
                       config: EligibilityConfig = EligibilityConfig(),
                       eligible_sds: set[str] | None = None,
                       run_log: list[str] | None = None) -> AuditSummary:
    """Winner-quality flags per competition and their aggregate counts.

    Only competitions whose winners are all scored, ranked and (by default) on
    staff for the whole window are audited.
    """
    pct_o, pct_fss = percentiles
    audits = []
    excluded = []
    for comp in sorted(corpus.competitions, key=lambda c: c.competition_id):
        reason = None
        if eligible_sds is not None and comp.sds not in eligible_sds:
            reason = f"sds {comp.sds} not eligible"
        elif not comp.winner_ids or len(comp.winner_ids) > 2:
            reason = f"{len(comp.winner_ids)} winners"
        elif not all(_rankable(w, corpus, scorecards, percentiles) for w in comp.winner_ids):
            reason = "winner external or not scored"
        elif config.require_continuous_staff and len(filter_continuous_staff(comp.winner_ids, corpus)) \
                != len(comp.winner_ids):
            reason = "winner not on staff for the whole window"
        if reason:
            excluded.append(comp.competition_id)
            _note(run_log, f"audit: excluded competition {comp.competition_id} ({reason})")
            continue
        winners = [WinnerSummary(w, scorecards[w].N, scorecards[w].O, scorecards[w].fss_if, pct_o[w], pct_fss[w])
                   for w in sorted(comp.winner_ids)]
        flags = {ind: _winner_flags(ind, winners) for ind in Indicator}
        audits.append(CompetitionAudit(comp.competition_id, comp.sds, comp.university_id, winners, flags))
    counts = {ind: {name: sum(1 for a in audits if a.flags[ind][name]) for name in AUDIT_COUNTERS}
              for ind in Indicator}
    return AuditSummary(audits, counts, len(audits), sum(1 for a in audits if len(a.winners) == 2), excluded)


# --- winners vs non-winners ------------------------------------------------

BOTH = "both"  # column for strict dominance on O and FSS_IF together
OUTPERFORMANCE_COLUMNS = (Indicator.O.value, Indicator.FSS_IF.value, BOTH)
OUTPERFORMANCE_COUNTERS = ("at_least_one_over_one", "at_least_two_over_one",
                           "at_least_one_over_both", "at_least_two_over_both")


@dataclass
class CompetitionOutperformance:
    competition_id: str
    eligible_non_winners: tuple[str, ...]
    # column -> (non-winners above at least one winner, non-winners above every winner)
    counts: dict[str, tuple[int, int]]


@dataclass
class OutperformanceResult:
    competitions: list[CompetitionOutperformance]
    denominators: dict[str, int]  # "at_least_one" / "at_least_two" eligible non-winners
    counters: dict[str, dict[str, int]]  # column -> counter -> competitions
    histograms: dict[str, dict[str, dict[int, int]]]  # column -> above_one|above_both -> k -> competitions
    excluded: list[str] = field(default_factory=list)


def eligible_non_winners(comp: Competition, corpus: Corpus, scorecards: Mapping[str, ScoreCard],
                         config: EligibilityConfig = EligibilityConfig()) -> tuple[str, ...]:
    """Non-winners who were assistant professors for at least a year of the window."""
    out = []
    for rid in sorted(comp.non_winner_ids):
        r = corpus.roster.get(rid)
        if r is None or r.rank is not Rank.ASSISTANT or rid not in scorecards:
            continue
        if r.staff_days(corpus.window) >= config.min_assistant_days:
            out.append(rid)
    return tuple(out)


def _beats(challenger: ScoreCard, winner: ScoreCard, column: str) -> bool:
    if column == Indicator.O.value:
        return challenger.O > winner.O
    if column == Indicator.FSS_IF.value:
        return challenger.fss_if > winner.fss_if
    return challenger.O > winner.O and challenger.fss_if > winner.fss_if


def outperformance_analysis(corpus: Corpus, scorecards: Mapping[str, ScoreCard],
                            config: EligibilityConfig = EligibilityConfig(),
                            eligible_sds: set[str] | None = None,
                            run_log: list[str] | None = None) -> OutperformanceResult:
    """Count eligible non-winners with strictly higher raw indicator values than the winners."""
    per_comp = []
    excluded = []
    for comp in sorted(corpus.competitions, key=lambda c: c.competition_id):
        reason = None
        if eligible_sds is not None and comp.sds not in eligible_sds:
            reason = f"sds {comp.sds} not eligible"
        elif not comp.winner_ids or not all(w in scorecards for w in comp.winner_ids):
            reason = "winner not scored"
        else:
            challengers = eligible_non_winners(comp, corpus, scorecards, config)
            if not challengers:
                reason = "no eligible non-winner"
        if reason:
            excluded.append(comp.competition_id)
            _note(run_log, f"outperformance: excluded competition {comp.competition_id} ({reason})")
            continue
        winners = [scorecards[w] for w in sorted(comp.winner_ids)]
        counts = {}
        for column in OUTPERFORMANCE_COLUMNS:
            over_one = over_all = 0
            for rid in challengers:
                wins = [_beats(scorecards[rid], w, column) for w in winners]
                over_one += any(wins)
                over_all += all(wins)
            counts[column] = (over_one, over_all)
        per_comp.append(CompetitionOutperformance(comp.competition_id, challengers, counts))

    denominators = {
        "at_least_one": len(per_comp),
        "at_least_two": sum(1 for c in per_comp if len(c.eligible_non_winners) >= 2),
    }
    counters = {}
    histograms = {}
    for column in OUTPERFORMANCE_COLUMNS:
        ones = [c.counts[column][0] for c in per_comp]
        alls = [c.counts[column][1] for c in per_comp]
        counters[column] = {
            "at_least_one_over_one": sum(k >= 1 for k in ones),
            "at_least_two_over_one": sum(k >= 2 for k in ones),
            "at_least_one_over_both": sum(k >= 1 for k in alls),
            "at_least_two_over_both": sum(k >= 2 for k in alls),
        }
        histograms[column] = {
            "above_one": dict(sorted(Counter(k for k in ones if k >= 1).items())),
            "above_both": dict(sorted(Counter(k for k in alls if k >= 1).items())),
        }
    return OutperformanceResult(per_comp, denominators, counters, histograms, excluded)
