"""Random corpora that pass validation, for demos, property tests and load checks."""

from __future__ import annotations

import datetime as dt
import random

from .ingest import (Authorship, Competition, Corpus, DocType, JournalYearMetric, Publication, Rank,
                     Researcher, Scheme, Window)


def _date_in(rng: random.Random, window: Window) -> dt.date:
    span = (window.end_date - window.start_date).days
    return window.start_date + dt.timedelta(days=rng.randrange(1, span))


def _intervals(rng: random.Random, window: Window) -> tuple:
    roll = rng.random()
    before = dt.date(window.start_year - rng.randint(1, 10), rng.randint(1, 12), 1)
    if roll < 0.70:
        end = None if rng.random() < 0.5 else dt.date(window.end_year + rng.randint(1, 3), 1, 1)
        return ((before, end),)
    if roll < 0.80:
        cut = _date_in(rng, window)
        return ((before, cut), (cut, None))
    if roll < 0.90:
        return ((_date_in(rng, window), None),)
    if roll < 0.97:
        return ((before, _date_in(rng, window)),)
    return ((before, dt.date(window.start_year, 1, 1)),)  # left before the window


def generate_corpus(seed: int = 0, n_researchers: int = 50, n_publications: int = 200, n_sds: int = 5,
                    n_competitions: int = 10, window: Window = Window(2009, 2011),
                    max_authors: int = 8) -> Corpus:
    rng = random.Random(seed)
    sds_codes = [f"SDS/{i + 1:02d}" for i in range(n_sds)]
    uda_of = {code: f"UDA-{i // 2 + 1}" for i, code in enumerate(sds_codes)}
    institutions = [f"U{i}" for i in range(max(3, n_researchers // 40))]

    roster: dict[str, Researcher] = {}
    for i in range(n_researchers):
        rid = f"R{i:05d}"
        sds = rng.choice(sds_codes)
        rank = rng.choices([Rank.ASSISTANT, Rank.ASSOCIATE, Rank.FULL], weights=[4, 4, 2])[0]
        scheme = Scheme.POSITION_WEIGHTED if rng.random() < 0.3 else Scheme.ALPHABETICAL
        roster[rid] = Researcher(rid, sds, uda_of[sds], rank, _intervals(rng, window), scheme)
    home = {rid: rng.choice(institutions) for rid in roster}

    categories = [f"C{i}" for i in range(max(2, n_sds + 1))]
    years = list(range(window.start_year - 1, window.end_year + 2))
    n_journals = max(4, n_publications // 25)
    journal_metrics = {}
    for j in range(n_journals):
        jid = f"J{j:04d}"
        cats = tuple(sorted(rng.sample(categories, rng.choice([1, 1, 1, 2]))))
        for year in years:
            roll = rng.random()
            impact = None if roll < 0.08 else 0.0 if roll < 0.12 else round(rng.uniform(0.1, 12.0), 3)
            journal_metrics[(jid, year)] = JournalYearMetric(jid, year, impact, cats)
    journal_ids = [f"J{j:04d}" for j in range(n_journals)]

    ids = sorted(roster)
    publications = []
    for p in range(n_publications):
        year = rng.randint(window.start_year, window.end_year)
        if rng.random() < 0.03:
            year = rng.choice([window.start_year - 1, window.end_year + 1])
        jid = rng.choice(journal_ids)
        if rng.random() < 0.02:
            jid = "J-UNKNOWN"
        size = rng.randint(1, max_authors)
        internal = rng.sample(ids, min(len(ids), rng.randint(1, min(size, 4))))
        slots = internal + [None] * (size - len(internal))
        rng.shuffle(slots)
        byline = tuple(Authorship(k + 1, rid, home[rid] if rid else rng.choice(institutions + ["EXT"]))
                       for k, rid in enumerate(slots))
        publications.append(Publication(f"P{p:06d}", year, rng.choice(list(DocType)), jid, byline))

    by_sds: dict[str, list[str]] = {s: [] for s in sds_codes}
    for rid in ids:
        by_sds[roster[rid].sds].append(rid)
    competitions = []
    n_external = 0
    for c in range(n_competitions):
        sds = rng.choice(sds_codes)
        pool = by_sds[sds]
        associates = [r for r in pool if roster[r].rank is Rank.ASSOCIATE]
        assistants = [r for r in pool if roster[r].rank is Rank.ASSISTANT]
        n_winners = 1 if rng.random() < 0.1 else 2
        winners = set(rng.sample(associates, min(n_winners, len(associates))))
        candidates = set(winners)
        candidates |= set(rng.sample(assistants, min(len(assistants), rng.randint(0, 12))))
        for _ in range(rng.choice([0, 0, 1, 2])):
            rid = f"X{n_external:05d}"
            n_external += 1
            roster[rid] = Researcher(rid, sds, uda_of[sds], Rank.EXTERNAL, (), Scheme.ALPHABETICAL)
            candidates.add(rid)
        if not winners:
            winners = {sorted(candidates)[0]} if candidates else set()
        if not winners:
            continue
        competitions.append(Competition(f"C{c:04d}", sds, rng.choice(institutions),
                                        frozenset(candidates), frozenset(winners)))
    return Corpus(roster, publications, journal_metrics, competitions, window)
