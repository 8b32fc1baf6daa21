import dataclasses
import datetime as dt
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

import oracle
from recruitaudit.ingest import (Authorship, Corpus, DocType, JournalYearMetric, Publication, Rank, Researcher,
                                 Scheme, Window)
from recruitaudit.metrics import (ScoringError, byline_weights, category_mean_if, category_means,
                                  fractional_contribution, normalized_impact, score_all, score_researcher)
from recruitaudit.synthetic import generate_corpus

WINDOW = Window(2009, 2011)
FULL = ((dt.date(2000, 1, 1), None),)


def metric(jid, impact, cats, year=2010):
    return JournalYearMetric(jid, year, impact, tuple(cats))


def journals(*metrics):
    return {(m.journal_id, m.year): m for m in metrics}


def pub(pid, jid, insts, authors=None, year=2010):
    authors = authors or [None] * len(insts)
    return Publication(pid, year, DocType.ARTICLE, jid,
                       tuple(Authorship(i + 1, a, inst) for i, (a, inst) in enumerate(zip(authors, insts))))


# --- category means and normalized impact ------------------------------------


def test_category_mean_of_two():
    jm = journals(metric("J1", 1.0, ["C"]), metric("J2", 3.0, ["C"]), metric("J3", 9.0, ["D"]))
    assert category_mean_if(jm, "C", 2010) == 2.0


def test_category_mean_singleton():
    assert category_mean_if(journals(metric("J1", 2.5, ["C"])), "C", 2010) == 2.5


def test_category_mean_absent_only():
    jm = journals(metric("J1", None, ["C"]))
    with pytest.raises(ScoringError, match="no IF data for category/year"):
        category_mean_if(jm, "C", 2010)


def test_category_mean_is_per_year():
    jm = journals(metric("J1", 1.0, ["C"], 2009), metric("J1", 5.0, ["C"], 2010))
    assert category_mean_if(jm, "C", 2009) == 1.0
    assert category_mean_if(jm, "C", 2010) == 5.0


def test_self_normalization():
    jm = journals(metric("J1", 2.0, ["C"]))
    assert normalized_impact(pub("P", "J1", ["U"]), jm) == 1.0


def test_multi_category_mean_rule():
    # category A mean 1.5 (J1 3.0, J2 0.0), category B mean 3.0 (J1 alone)
    jm = journals(metric("J1", 3.0, ["A", "B"]), metric("J2", 0.0, ["A"]))
    assert normalized_impact(pub("P", "J1", ["U"]), jm) == pytest.approx((2.0 + 1.0) / 2, abs=1e-15)


def test_absent_zero_and_unknown_give_zero():
    jm = journals(metric("J1", None, ["C"]), metric("J2", 0.0, ["C"]), metric("J3", 4.0, ["C"]))
    assert normalized_impact(pub("P", "J1", ["U"]), jm) == 0.0
    assert normalized_impact(pub("P", "J2", ["U"]), jm) == 0.0
    assert normalized_impact(pub("P", "J9", ["U"]), jm) == 0.0


# --- fractional contribution -------------------------------------------------


def test_alphabetical_four_authors():
    p = pub("P", "J", ["A", "B", "C", "D"], ["r1", "r2", "r3", "r4"])
    assert fractional_contribution(p, "r3", Scheme.ALPHABETICAL) == 0.25


def test_same_institution_ends():
    p = pub("P", "J", ["U", "X", "Y", "Z", "U"], ["a", "b", "c", "d", "e"])
    assert fractional_contribution(p, "e", Scheme.POSITION_WEIGHTED) == 0.40
    assert fractional_contribution(p, "a", Scheme.POSITION_WEIGHTED) == 0.40
    assert fractional_contribution(p, "c", Scheme.POSITION_WEIGHTED) == pytest.approx(0.066667, abs=1e-6)


def test_different_institutions_six_authors():
    p = pub("P", "J", ["A", "B", "C", "D", "E", "F"], list("abcdef"))
    w = [fractional_contribution(p, r, Scheme.POSITION_WEIGHTED) for r in "abcdef"]
    assert w[1] == 0.15
    assert w == pytest.approx([0.30, 0.15, 0.05, 0.05, 0.15, 0.30], abs=1e-15)


def test_both_pairs_shared_uses_second_rule():
    p = pub("P", "J", ["A", "A", "X", "B", "B"], list("abcde"))
    assert byline_weights(p.byline, Scheme.POSITION_WEIGHTED) == pytest.approx([0.30, 0.15, 0.10, 0.15, 0.30])


def test_one_shared_pair_falls_back_to_first_rule():
    p = pub("P", "J", ["A", "A", "X", "Y", "B"], list("abcde"))
    assert byline_weights(p.byline, Scheme.POSITION_WEIGHTED) == pytest.approx([0.40, 0.2 / 3, 0.2 / 3, 0.2 / 3, 0.40])


@pytest.mark.parametrize("insts, expected", [
    (["A"], [1.0]),
    (["A", "B"], [0.5, 0.5]),
    (["A", "A"], [0.5, 0.5]),
    (["A", "B", "C"], [0.4, 0.2, 0.4]),
    (["A", "B", "A"], [0.4, 0.2, 0.4]),
    (["A", "B", "C", "D"], [0.4, 0.1, 0.1, 0.4]),
])
def test_short_bylines(insts, expected):
    assert byline_weights(pub("P", "J", insts).byline, Scheme.POSITION_WEIGHTED) == pytest.approx(expected)


def test_not_on_byline():
    with pytest.raises(ScoringError):
        fractional_contribution(pub("P", "J", ["A"], ["x"]), "y", Scheme.ALPHABETICAL)


@settings(max_examples=300)
@given(st.lists(st.sampled_from("ABCD"), min_size=1, max_size=30), st.sampled_from(list(Scheme)))
def test_weights_partition_unity(insts, scheme):
    weights = byline_weights(pub("P", "J", insts).byline, scheme)
    assert abs(math.fsum(weights) - 1.0) <= 1e-12
    assert all(0 < w <= 1 for w in weights)
    for pos, w in enumerate(weights, start=1):
        assert w == pytest.approx(oracle.share(insts, pos, scheme.value), abs=1e-15)


# --- scoring ------------------------------------------------------------------


def corpus_of(researchers, pubs, jm, window=WINDOW):
    return Corpus({r.researcher_id: r for r in researchers}, list(pubs), jm, [], window)


def researcher(rid, intervals=FULL, scheme=Scheme.ALPHABETICAL):
    return Researcher(rid, "S", "U", Rank.ASSOCIATE, intervals, scheme)


def test_no_publications():
    r = researcher("r", ((dt.date(2009, 1, 1), dt.date(2012, 1, 1)),))
    card = score_researcher(r, corpus_of([r], [], {}))
    assert (card.N, card.O, card.fss_if) == (0, 0.0, 0.0)
    assert card.t == pytest.approx(1095 / 365.25)


def test_identity_case():
    r = researcher("r", ((dt.date(2010, 1, 1), dt.date(2011, 1, 1)),))
    window = Window(2010, 2010)
    jm = journals(metric("J1", 2.0, ["C"]))
    card = score_researcher(r, corpus_of([r], [pub("P", "J1", ["U"], ["r"])], jm, window))
    assert card.t == 365 / 365.25
    assert card.fss_if == pytest.approx(1.0 / (365 / 365.25), rel=1e-15)


def test_two_publication_formula():
    # ratios 1.0 (share 0.5) and 2.0 (share 0.25)
    jm = journals(metric("J1", 1.0, ["C"]), metric("J2", 2.0, ["D"]), metric("J3", 0.0, ["D"]))
    r = researcher("r")
    pubs = [pub("P1", "J1", ["U", "V"], ["r", None]), pub("P2", "J2", ["U"] * 4, ["r", None, None, None])]
    card = score_researcher(r, corpus_of([r], pubs, jm))
    t = 1095 / 365.25
    assert card.fss_if * t == pytest.approx(0.5 + 0.5, rel=1e-15)
    assert card.fss_if == pytest.approx(0.333562, abs=1e-6)
    # the same sum over exactly three years
    assert round(card.fss_if * card.t / 3, 6) == 0.333333


def test_absent_if_counts_in_output_only():
    jm = journals(metric("J1", None, ["C"]))
    r = researcher("r")
    card = score_researcher(r, corpus_of([r], [pub("P", "J1", ["U"], ["r"])], jm))
    assert card.N == 1 and card.O > 0 and card.fss_if == 0.0


def test_out_of_window_publications_ignored():
    jm = journals(metric("J1", 2.0, ["C"], 2008))
    r = researcher("r")
    card = score_researcher(r, corpus_of([r], [pub("P", "J1", ["U"], ["r"], year=2008)], jm))
    assert card.N == 0


def test_not_on_staff_raises():
    r = researcher("r", ((dt.date(2000, 1, 1), dt.date(2005, 1, 1)),))
    with pytest.raises(ScoringError, match="not on staff"):
        score_researcher(r, corpus_of([r], [], {}))


def test_score_all_skips_and_logs(golden_corpus):
    log = []
    cards = score_all(golden_corpus, log)
    assert "A09" not in cards and "E01" not in cards
    assert len(cards) == 30
    assert "score: skipped A09 (not on staff in window)" in log


def test_golden_hand_values(golden_corpus):
    cards = score_all(golden_corpus)
    t = 1095 / 365.25
    # W01: J1 (2/3) shared by two, J2 (4/3) alone
    assert cards["W01"].fss_if == pytest.approx((2 / 3 * 0.5 + 4 / 3) / t, rel=1e-14)
    # W05: J4 (1.625) first of five with shared ends; J1 first of four; J4 one of two
    assert cards["W05"].fss_if == pytest.approx((1.625 * 0.4 + 2 / 3 * 0.4 + 1.625 * 0.5) / t, rel=1e-14)
    # A11: fourth of six (second rule, 0.05) and second of five (second rule, 0.15)
    assert cards["A11"].fss_if == pytest.approx((4 / 3 * 0.05 + 0.75 * 0.15) / t, rel=1e-14)
    # A05 left mid-2010: 546 days
    assert cards["A05"].t == 546 / 365.25
    assert cards["A05"].O == pytest.approx(1 / (546 / 365.25))
    # A04: one pub out of window, one in an unknown journal
    assert (cards["A04"].N, cards["A04"].fss_if) == (1, 0.0)
    assert cards["S04"].N == 0


def test_score_all_matches_oracle_50_researchers():
    corpus = generate_corpus(7, n_researchers=50, n_publications=200)
    cards = score_all(corpus)
    expected = oracle.scores(corpus)
    assert set(cards) == set(expected)
    for rid, (n, t, o, fss) in expected.items():
        c = cards[rid]
        assert c.N == n
        assert c.t == t
        assert math.isclose(c.O, o, rel_tol=1e-12)
        assert math.isclose(c.fss_if, fss, rel_tol=1e-12, abs_tol=1e-300)


def test_permuted_publications_identical():
    corpus = generate_corpus(3)
    shuffled = list(corpus.publications)
    random.Random(1).shuffle(shuffled)
    other = dataclasses.replace(corpus, publications=shuffled)
    assert score_all(corpus) == score_all(other)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_fss_additive_over_publications(seed):
    corpus = generate_corpus(seed, n_researchers=15, n_publications=30)
    full = score_all(corpus)
    parts = [score_all(dataclasses.replace(corpus, publications=[p])) for p in corpus.publications]
    for rid, card in full.items():
        assert card.fss_if == pytest.approx(sum(part[rid].fss_if for part in parts), rel=1e-12, abs=1e-15)
        assert card.N == sum(part[rid].N for part in parts)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.01, 100))
def test_category_scaling_cancels(seed, k):
    corpus = generate_corpus(seed, n_researchers=15, n_publications=40)
    cat = "C0"
    scaled = {key: (dataclasses.replace(m, impact_factor=m.impact_factor * k)
                    if cat in m.categories and m.impact_factor is not None else m)
              for key, m in corpus.journal_metrics.items()}
    for p in corpus.publications:
        m = corpus.journal_metrics.get(p.journal_ref)
        if m is None or m.categories != (cat,):
            continue
        assert normalized_impact(p, scaled) == pytest.approx(normalized_impact(p, corpus.journal_metrics),
                                                             rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 50.0))
def test_fss_monotone_in_single_if(seed, bump):
    # raising one journal's IF also raises its category means, yet its ratio cannot fall
    corpus = generate_corpus(seed, n_researchers=15, n_publications=40)
    target = corpus.publications[0]
    m = corpus.journal_metrics.get(target.journal_ref)
    if m is None or m.impact_factor is None:
        return
    bumped = dict(corpus.journal_metrics)
    bumped[target.journal_ref] = dataclasses.replace(m, impact_factor=m.impact_factor + bump)
    before = normalized_impact(target, corpus.journal_metrics, category_means(corpus.journal_metrics))
    after = normalized_impact(target, bumped, category_means(bumped))
    assert after >= before - 1e-15
