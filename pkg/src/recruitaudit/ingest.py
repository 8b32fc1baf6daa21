"""Loading, validation and serialization of the input corpus.

The corpus is made of five tables: roster, publications, authorships, journal
metrics and competitions. Each may be a CSV file (header row, RFC-4180 quoting)
or a JSON array of records carrying the same field names; the format is chosen
by file extension.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from operator import itemgetter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

ROSTER_FIELDS = ("researcher_id", "sds", "uda", "rank", "scheme", "staff_start", "staff_end")
PUBLICATION_FIELDS = ("pub_id", "year", "doc_type", "journal_id")
AUTHORSHIP_FIELDS = ("pub_id", "position", "researcher_id", "institution_id")
JOURNAL_FIELDS = ("journal_id", "year", "impact_factor", "categories")
COMPETITION_FIELDS = ("competition_id", "sds", "university_id", "candidate_id", "is_winner")

DAYS_PER_YEAR = 365.25


class Rank(str, Enum):
    ASSISTANT = "assistant"
    ASSOCIATE = "associate"
    FULL = "full"
    EXTERNAL = "external"


class Scheme(str, Enum):
    ALPHABETICAL = "alphabetical"
    POSITION_WEIGHTED = "position_weighted"


class DocType(str, Enum):
    ARTICLE = "article"
    REVIEW = "review"
    PROCEEDINGS = "proceedings"


class CorpusError(ValueError):
    """A table could not be parsed into the corpus."""

    def __init__(self, message: str, path: str | Path | None = None,
                 line: int | None = None, column: str | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.column = column
        where = []
        if self.path:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if column:
            where.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True, slots=True)
class Window:
    """Inclusive range of calendar years."""

    start_year: int
    end_year: int

    def __post_init__(self):
        if self.start_year > self.end_year:
            raise ValueError(f"window start {self.start_year} after end {self.end_year}")

    @classmethod
    def parse(cls, text: str) -> "Window":
        try:
            start, end = text.split(":")
            return cls(int(start), int(end))
        except ValueError as exc:
            raise ValueError(f"invalid window {text!r}, expected START:END") from exc

    @property
    def start_date(self) -> dt.date:
        return dt.date(self.start_year, 1, 1)

    @property
    def end_date(self) -> dt.date:
        """Exclusive end: January 1st of the year after the last one."""
        return dt.date(self.end_year + 1, 1, 1)

    def __contains__(self, year: int) -> bool:
        return self.start_year <= year <= self.end_year

    def __str__(self) -> str:
        return f"{self.start_year}:{self.end_year}"


# (start, end) half-open; end None means still on staff
Interval = tuple[dt.date, "dt.date | None"]


@dataclass(frozen=True, slots=True)
class Researcher:
    researcher_id: str
    sds: str
    uda: str
    rank: Rank
    staff_intervals: tuple[Interval, ...]
    scheme: Scheme

    def staff_days(self, window: Window) -> int:
        """Days on staff inside the window, counting overlapping intervals once."""
        total = 0
        for start, end in merge_intervals(self.staff_intervals):
            lo = max(start, window.start_date)
            hi = min(end or window.end_date, window.end_date)
            if hi > lo:
                total += (hi - lo).days
        return total

    def staff_years(self, window: Window) -> float:
        return self.staff_days(window) / DAYS_PER_YEAR

    def covers(self, window: Window) -> bool:
        """True when the union of staff intervals spans the whole window."""
        return self.staff_days(window) == (window.end_date - window.start_date).days


@dataclass(frozen=True, slots=True)
class Authorship:
    position: int
    researcher_id: str | None
    institution_id: str


@dataclass(frozen=True, slots=True)
class Publication:
    pub_id: str
    year: int
    doc_type: DocType
    journal_id: str
    byline: tuple[Authorship, ...]

    @property
    def journal_ref(self) -> tuple[str, int]:
        return (self.journal_id, self.year)


@dataclass(frozen=True, slots=True)
class JournalYearMetric:
    journal_id: str
    year: int
    impact_factor: float | None
    categories: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class Competition:
    competition_id: str
    sds: str
    university_id: str
    candidate_ids: frozenset[str]
    winner_ids: frozenset[str]

    @property
    def non_winner_ids(self) -> frozenset[str]:
        return self.candidate_ids - self.winner_ids


@dataclass(frozen=True)
class Corpus:
    roster: dict[str, Researcher]
    publications: list[Publication]
    journal_metrics: dict[tuple[str, int], JournalYearMetric]
    competitions: list[Competition]
    window: Window


def merge_intervals(intervals: Iterable[Interval]) -> list[Interval]:
    """Union of half-open date intervals, sorted by start."""
    merged: list[list] = []
    for start, end in sorted(intervals, key=lambda iv: (iv[0], iv[1] or dt.date.max)):
        if merged and (merged[-1][1] is None or start <= merged[-1][1]):
            last_end = merged[-1][1]
            if last_end is not None and (end is None or end > last_end):
                merged[-1][1] = end
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


# --- parsing ---------------------------------------------------------------


def _read_rows(path: Path, fields: tuple[str, ...]) -> Iterator[tuple[int, tuple[str, ...]]]:
    """Yield (line, values) with ``values`` stripped strings in ``fields`` order."""
    suffix = path.suffix.lower()
    if suffix == ".json":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON: {exc.msg}", path, exc.lineno) from exc
        if not isinstance(data, list):
            raise CorpusError("expected a JSON array of records", path)
        for index, record in enumerate(data, start=1):
            if not isinstance(record, dict):
                raise CorpusError("record is not an object", path, index)
            yield index, tuple(_json_scalar(record.get(name)) for name in fields)
    elif suffix == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CorpusError("empty file, header row expected", path, 1) from None
            header = [h.strip() for h in header]
            for name in fields:
                if name not in header:
                    raise CorpusError(f"missing column {name}", path, 1, name)
            pick = itemgetter(*(header.index(name) for name in fields))
            if len(fields) == 1:
                pick = (lambda get: lambda row: (get(row),))(pick)
            width = len(header)
            line = reader.line_num
            for row in reader:
                start_line, line = line + 1, reader.line_num
                if not row:
                    continue
                if len(row) != width:
                    raise CorpusError(f"expected {width} fields, got {len(row)}", path, start_line)
                yield start_line, tuple(map(str.strip, pick(row)))
    else:
        raise CorpusError(f"unsupported file extension {path.suffix!r}", path)


def _read_records(path: Path, fields: tuple[str, ...]) -> Iterator[tuple[int, dict]]:
    for line, values in _read_rows(path, fields):
        yield line, dict(zip(fields, values))


def _json_scalar(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ";".join(str(v) for v in value)
    return str(value).strip()


class _Rows:
    """Field accessors that raise CorpusError pointing at the offending cell."""

    def __init__(self, path: Path):
        self.path = path

    def text(self, rec: dict, line: int, name: str, required: bool = True) -> str:
        value = rec.get(name, "")
        if required and not value:
            raise CorpusError(f"missing {name} at line {line}", self.path, line, name)
        return value

    def integer(self, rec: dict, line: int, name: str) -> int:
        value = self.text(rec, line, name)
        try:
            return int(value)
        except ValueError:
            raise CorpusError(f"invalid integer {value!r}", self.path, line, name) from None

    def date(self, rec: dict, line: int, name: str) -> dt.date | None:
        value = self.text(rec, line, name, required=False)
        if not value:
            return None
        try:
            return dt.date.fromisoformat(value)
        except ValueError:
            raise CorpusError(f"invalid ISO date {value!r}", self.path, line, name) from None

    def choice(self, rec: dict, line: int, name: str, enum: type[Enum], default=None):
        value = self.text(rec, line, name, required=default is None)
        if not value:
            return default
        try:
            return enum(value)
        except ValueError:
            allowed = "|".join(m.value for m in enum)
            raise CorpusError(f"invalid {name} {value!r}, expected {allowed}",
                              self.path, line, name) from None


def load_roster(path: str | Path, default_scheme: Scheme = Scheme.ALPHABETICAL) -> dict[str, Researcher]:
    path = Path(path)
    rows = _Rows(path)
    acc: dict[str, dict] = {}
    for line, rec in _read_records(path, ROSTER_FIELDS):
        rid = rows.text(rec, line, "researcher_id")
        sds = rows.text(rec, line, "sds")
        uda = rows.text(rec, line, "uda")
        rank = rows.choice(rec, line, "rank", Rank)
        scheme = rows.choice(rec, line, "scheme", Scheme, default=default_scheme)
        start = rows.date(rec, line, "staff_start")
        end = rows.date(rec, line, "staff_end")
        if start is None and end is not None:
            raise CorpusError("staff_end given without staff_start", path, line, "staff_start")
        if start is not None and end is not None and end <= start:
            raise CorpusError("staff_end must be after staff_start", path, line, "staff_end")
        key = (sds, uda, rank, scheme)
        entry = acc.get(rid)
        if entry is None:
            entry = acc[rid] = {"key": key, "intervals": [], "line": line}
        elif entry["key"] != key:
            raise CorpusError(
                f"duplicate key researcher_id={rid} with conflicting sds/uda/rank/scheme "
                f"(first seen at line {entry['line']})", path, line, "researcher_id")
        elif (start is None or None in entry["intervals"]
              or (start, end) in entry["intervals"]):
            raise CorpusError(f"duplicate key researcher_id={rid}", path, line, "researcher_id")
        entry["intervals"].append(None if start is None else (start, end))
    roster = {}
    for rid, entry in acc.items():
        sds, uda, rank, scheme = entry["key"]
        intervals = tuple(sorted((iv for iv in entry["intervals"] if iv is not None),
                                 key=lambda iv: (iv[0], iv[1] or dt.date.max)))
        roster[rid] = Researcher(rid, sds, uda, rank, intervals, scheme)
    return roster


def load_publications(pubs_path: str | Path, authorships_path: str | Path) -> list[Publication]:
    pubs_path, authorships_path = Path(pubs_path), Path(authorships_path)
    rows = _Rows(pubs_path)
    heads: dict[str, tuple[int, DocType, str]] = {}
    for line, values in _read_rows(pubs_path, PUBLICATION_FIELDS):
        rec = dict(zip(PUBLICATION_FIELDS, values))
        pid = rows.text(rec, line, "pub_id")
        if pid in heads:
            raise CorpusError(f"duplicate key pub_id={pid}", pubs_path, line, "pub_id")
        heads[pid] = (rows.integer(rec, line, "year"),
                      rows.choice(rec, line, "doc_type", DocType),
                      rows.text(rec, line, "journal_id"))

    # hot loop: cells are checked inline, _Rows only builds the error
    rows = _Rows(authorships_path)
    bylines: dict[str, dict[int, Authorship]] = {pid: {} for pid in heads}
    for line, values in _read_rows(authorships_path, AUTHORSHIP_FIELDS):
        pid, position_text, rid, institution = values
        byline = bylines.get(pid)
        if byline is None:
            rows.text({"pub_id": pid}, line, "pub_id")
            raise CorpusError(f"authorship for unknown publication {pid}", authorships_path, line, "pub_id")
        try:
            position = int(position_text)
        except ValueError:
            position = rows.integer({"position": position_text}, line, "position")
        if position < 1:
            raise CorpusError(f"position must be >= 1, got {position}", authorships_path, line, "position")
        if position in byline:
            raise CorpusError(f"duplicate key pub_id={pid} position={position}",
                              authorships_path, line, "position")
        if not institution:
            rows.text({}, line, "institution_id")
        byline[position] = Authorship(position, rid or None, institution)

    out = []
    for pid, (year, doc_type, journal_id) in heads.items():
        byline = bylines[pid]
        out.append(Publication(pid, year, doc_type, journal_id, tuple(byline[k] for k in sorted(byline))))
    return out


def load_journals(path: str | Path) -> dict[tuple[str, int], JournalYearMetric]:
    path = Path(path)
    rows = _Rows(path)
    metrics: dict[tuple[str, int], JournalYearMetric] = {}
    for line, rec in _read_records(path, JOURNAL_FIELDS):
        jid = rows.text(rec, line, "journal_id")
        year = rows.integer(rec, line, "year")
        raw_if = rows.text(rec, line, "impact_factor", required=False)
        impact = None
        if raw_if:
            try:
                impact = float(raw_if)
            except ValueError:
                raise CorpusError(f"invalid impact_factor {raw_if!r}", path, line, "impact_factor") from None
            if not impact >= 0 or impact == float("inf"):
                raise CorpusError(f"impact_factor must be finite and >= 0, got {raw_if}",
                                  path, line, "impact_factor")
        categories = tuple(c.strip() for c in rows.text(rec, line, "categories", required=False).split(";")
                           if c.strip())
        if impact is not None and not categories:
            raise CorpusError(f"missing categories at line {line}", path, line, "categories")
        if (jid, year) in metrics:
            raise CorpusError(f"duplicate key journal_id={jid} year={year}", path, line, "journal_id")
        metrics[(jid, year)] = JournalYearMetric(jid, year, impact, categories)
    return metrics


_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


def load_competitions(path: str | Path) -> list[Competition]:
    path = Path(path)
    rows = _Rows(path)
    acc: dict[str, dict] = {}
    for line, rec in _read_records(path, COMPETITION_FIELDS):
        cid = rows.text(rec, line, "competition_id")
        sds = rows.text(rec, line, "sds")
        uni = rows.text(rec, line, "university_id")
        candidate = rows.text(rec, line, "candidate_id")
        flag = rec.get("is_winner", "").lower()
        if flag not in _TRUE | _FALSE:
            raise CorpusError(f"invalid is_winner {flag!r}", path, line, "is_winner")
        entry = acc.setdefault(cid, {"head": (sds, uni), "line": line, "candidates": set(), "winners": set()})
        if entry["head"] != (sds, uni):
            raise CorpusError(f"competition {cid} has conflicting sds/university with line {entry['line']}",
                              path, line)
        if candidate in entry["candidates"]:
            raise CorpusError(f"duplicate key competition_id={cid} candidate_id={candidate}",
                              path, line, "candidate_id")
        entry["candidates"].add(candidate)
        if flag in _TRUE:
            entry["winners"].add(candidate)
    return [
        Competition(cid, e["head"][0], e["head"][1], frozenset(e["candidates"]), frozenset(e["winners"]))
        for cid, e in acc.items()
    ]


def _sibling(path: Path, stem: str) -> Path:
    return path.with_name(stem + path.suffix)


def load_corpus(roster_path, pubs_path, journals_path, competitions_path, window: Window,
                authorships_path=None, default_scheme: Scheme = Scheme.ALPHABETICAL) -> Corpus:
    """Parse the input tables without checking cross references.

    ``authorships_path`` defaults to ``authorships.<ext>`` beside the
    publications file.
    """
    pubs_path = Path(pubs_path)
    if authorships_path is None:
        authorships_path = _sibling(pubs_path, "authorships")
    for p in (roster_path, pubs_path, authorships_path, journals_path, competitions_path):
        if not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")
    return Corpus(
        roster=load_roster(roster_path, default_scheme),
        publications=load_publications(pubs_path, authorships_path),
        journal_metrics=load_journals(journals_path),
        competitions=load_competitions(competitions_path),
        window=window,
    )


# --- validation ------------------------------------------------------------


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True, order=True)
class Finding:
    severity: Severity
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity.value}: {self.code}: {self.subject}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.WARNING]

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Check referential integrity and domain invariants.

    The corpus is acceptable iff the report holds no errors. Findings are
    sorted, so the result does not depend on input row order.
    """
    out: list[Finding] = []

    def error(code, subject, message):
        out.append(Finding(Severity.ERROR, code, subject, message))

    def warn(code, subject, message):
        out.append(Finding(Severity.WARNING, code, subject, message))

    roster = corpus.roster
    window = corpus.window
    candidates: set[str] = set()
    for comp in corpus.competitions:
        candidates |= comp.candidate_ids

    for rid, r in roster.items():
        ivs = r.staff_intervals
        for (s1, e1), (s2, _) in zip(ivs, ivs[1:]):
            if e1 is None or s2 < e1:
                error("overlapping_staff_intervals", rid, f"interval starting {s2} overlaps the previous one")
        if r.rank is Rank.EXTERNAL:
            if ivs:
                error("external_on_staff", rid, "rank external but staff intervals present")
            if rid not in candidates:
                error("external_not_candidate", rid, "rank external permitted only for competition candidates")
        elif r.staff_days(window) == 0:
            warn("no_staff_in_window", rid, f"no staff presence in window {window}")

    for pub in corpus.publications:
        if not pub.byline:
            error("empty_byline", pub.pub_id, "publication has no authors")
        positions = [a.position for a in pub.byline]
        if positions != list(range(1, len(positions) + 1)):
            error("byline_positions", pub.pub_id, f"positions {positions} are not contiguous from 1")
        seen: set[str] = set()
        for a in pub.byline:
            if a.researcher_id is None:
                continue
            if a.researcher_id in seen:
                error("duplicate_author", pub.pub_id, f"researcher {a.researcher_id} appears twice on byline")
            seen.add(a.researcher_id)
            if a.researcher_id not in roster:
                error("unknown_researcher", pub.pub_id, f"author {a.researcher_id} not in roster")
        if pub.journal_ref not in corpus.journal_metrics:
            warn("dangling_journal_ref", pub.pub_id,
                 f"journal-year {pub.journal_id}/{pub.year} unknown; scored as no impact")
        if pub.year not in window:
            warn("publication_outside_window", pub.pub_id, f"year {pub.year} outside window {window}")

    roster_sds = {r.sds for r in roster.values()}
    for comp in corpus.competitions:
        cid = comp.competition_id
        if not comp.winner_ids <= comp.candidate_ids:
            error("winner_outside_candidates", cid, "winner outside candidate set")
        if len(comp.winner_ids) not in (1, 2):
            error("winner_count", cid, f"expected 1 or 2 winners, got {len(comp.winner_ids)}")
        for rid in sorted(comp.candidate_ids | comp.winner_ids):
            if rid not in roster:
                error("unknown_candidate", cid, f"candidate {rid} not in roster")
        if comp.sds not in roster_sds:
            warn("unknown_sds", cid, f"sds {comp.sds} has no rostered researcher")

    return ValidationReport(sorted(out))


# --- serialization ---------------------------------------------------------


def _interval_rows(r: Researcher):
    if not r.staff_intervals:
        yield "", ""
    for start, end in r.staff_intervals:
        yield start.isoformat(), end.isoformat() if end else ""


def _format_if(value: float | None) -> str:
    return "" if value is None else repr(value)


def corpus_tables(corpus: Corpus) -> dict[str, tuple[tuple[str, ...], list[list[str]]]]:
    """Flatten the corpus into the five external tables (all values as strings)."""
    roster_rows = [
        [r.researcher_id, r.sds, r.uda, r.rank.value, r.scheme.value, s, e]
        for r in sorted(corpus.roster.values(), key=lambda r: r.researcher_id)
        for s, e in _interval_rows(r)
    ]
    pubs = sorted(corpus.publications, key=lambda p: p.pub_id)
    pub_rows = [[p.pub_id, str(p.year), p.doc_type.value, p.journal_id] for p in pubs]
    auth_rows = [[p.pub_id, str(a.position), a.researcher_id or "", a.institution_id]
                 for p in pubs for a in p.byline]
    journal_rows = [[m.journal_id, str(m.year), _format_if(m.impact_factor), ";".join(m.categories)]
                    for _, m in sorted(corpus.journal_metrics.items())]
    comp_rows = [[c.competition_id, c.sds, c.university_id, rid, "1" if rid in c.winner_ids else "0"]
                 for c in sorted(corpus.competitions, key=lambda c: c.competition_id)
                 for rid in sorted(c.candidate_ids)]
    return {
        "roster": (ROSTER_FIELDS, roster_rows),
        "publications": (PUBLICATION_FIELDS, pub_rows),
        "authorships": (AUTHORSHIP_FIELDS, auth_rows),
        "journals": (JOURNAL_FIELDS, journal_rows),
        "competitions": (COMPETITION_FIELDS, comp_rows),
    }


def write_corpus(corpus: Corpus, directory: str | Path, fmt: str = "csv") -> dict[str, Path]:
    """Write the corpus as the five input tables; returns paths keyed by table name."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, (header, rows) in corpus_tables(corpus).items():
        path = directory / f"{name}.{fmt}"
        if fmt == "csv":
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
        elif fmt == "json":
            records = [dict(zip(header, row)) for row in rows]
            path.write_text(json.dumps(records, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
        else:
            raise ValueError(f"unsupported corpus format {fmt!r}")
        paths[name] = path
    return paths


def load_corpus_dir(directory: str | Path, window: Window, fmt: str = "csv",
                    default_scheme: Scheme = Scheme.ALPHABETICAL) -> Corpus:
    d = Path(directory)
    return load_corpus(d / f"roster.{fmt}", d / f"publications.{fmt}", d / f"journals.{fmt}",
                       d / f"competitions.{fmt}", window,
                       authorships_path=d / f"authorships.{fmt}", default_scheme=default_scheme)
