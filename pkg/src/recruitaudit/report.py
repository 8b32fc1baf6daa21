"""Pipeline orchestration and output files.

Every output is a pure function of the inputs and the run configuration: no
timestamps, stable row ordering, fixed float formatting. Rerunning on the same
inputs reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import gc
import io
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .cohort import (AUDIT_COUNTERS, COHORT_BANDS, OUTPERFORMANCE_COLUMNS, OUTPERFORMANCE_COUNTERS,
                     AuditSummary, CohortComparison, CohortReport, CohortStats, EligibilityConfig,
                     OutperformanceResult, audit_competitions, compare_winners_vs_incumbents,
                     filter_eligible_sds, outperformance_analysis)
from .ingest import Corpus, CorpusError, Scheme, ValidationReport, Window, load_corpus, validate_corpus
from .metrics import ScoreCard, score_all
from .ranking import Band, Indicator, PercentileTable, band_names, classify, rank_all

log = logging.getLogger(__name__)

STAGES = ("validate", "score", "rank", "audit", "report")
FORMATS = ("csv", "json", "markdown")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

SHARE_KEYS = {
    Band.NO_PUBLICATIONS: "no_publications_pct",
    Band.NO_IMPACT: "no_impact_pct",
    Band.BOTTOM20: "bottom20_FSS_IF_pct",
    Band.BELOW_MEDIAN: "below_median_FSS_IF_pct",
    Band.TOP20: "top20_FSS_IF_pct",
    Band.TOP10: "top10_FSS_IF_pct",
}
SHARE_LABELS = {
    Band.NO_PUBLICATIONS: "No publications (%)",
    Band.NO_IMPACT: "Zero FSS_IF (%)",
    Band.BOTTOM20: "FSS_IF percentile below 20 (%)",
    Band.BELOW_MEDIAN: "FSS_IF percentile below 50 (%)",
    Band.TOP20: "FSS_IF percentile 80 or above (%)",
    Band.TOP10: "FSS_IF percentile 90 or above (%)",
}
AUDIT_LABELS = {
    "unproductive": "Unproductive winner",
    "bottom20": "Winner below percentile 20",
    "below_median": "Winner below percentile 50",
    "avg_below_median": "Mean winner percentile below 50",
    "one_bottom20_one_top20": "One winner below 20, other at 80 or above",
    "one_below_median_one_top20": "One winner below 50, other at 80 or above",
}
OUTPERFORMANCE_LABELS = {
    "at_least_one_over_one": "1+ non-winners above some winner",
    "at_least_two_over_one": "2+ non-winners above some winner",
    "at_least_one_over_both": "1+ non-winners above every winner",
    "at_least_two_over_both": "2+ non-winners above every winner",
}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, exit_code: int):
        self.stage = stage
        self.exit_code = exit_code
        super().__init__(f"[{stage}] {message}")


@dataclass
class RunConfig:
    roster: Path
    pubs: Path
    journals: Path
    competitions: Path
    out: Path
    window: Window = Window(2009, 2011)
    authorships: Path | None = None
    scheme_default: Scheme = Scheme.ALPHABETICAL
    eligibility: EligibilityConfig = field(default_factory=EligibilityConfig)
    ttest: str = "pooled"
    formats: tuple[str, ...] = FORMATS
    alpha: float = 0.01

    def __post_init__(self):
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ValueError(f"unknown output format(s): {', '.join(bad)}")
        if self.ttest not in ("pooled", "welch"):
            raise ValueError(f"unknown t-test variant {self.ttest!r}")


@dataclass
class ReportBundle:
    validation: ValidationReport
    corpus: Corpus | None = None
    scorecards: dict[str, ScoreCard] | None = None
    percentiles: tuple[PercentileTable, PercentileTable] | None = None
    eligible_sds: set[str] | None = None
    cohort: CohortReport | None = None
    audit: AuditSummary | None = None
    outperformance: OutperformanceResult | None = None
    run_log: list[str] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)


# --- number formatting -----------------------------------------------------


class Fixed:
    """A float rendered with a fixed number of decimals in every output format."""

    __slots__ = ("value", "places")

    def __init__(self, value: float, places: int = 6):
        self.value = value
        self.places = places

    def __str__(self) -> str:
        text = f"{self.value:.{self.places}f}"
        return text[1:] if text.startswith("-") and not text.strip("-0.") else text


def f6(x: float | None):
    return None if x is None else Fixed(x, 6)


def pct(x: float | None):
    return None if x is None else Fixed(x, 1)


def cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_encode_str = json.encoder.encode_basestring


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with Fixed floats emitted as plain fixed-notation numbers."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, Fixed):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_encode_str(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, str):
        return _encode_str(obj)
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return str(Fixed(obj))
    return json.dumps(obj, ensure_ascii=False)


# --- record builders (single source for every output format) ---------------


def scorecard_rows(bundle: ReportBundle) -> list[dict]:
    roster = bundle.corpus.roster
    return [{"researcher_id": rid, "sds": roster[rid].sds, "rank": roster[rid].rank.value,
             "N": c.N, "t": f6(c.t), "O": f6(c.O), "fss_if": f6(c.fss_if)}
            for rid, c in sorted(bundle.scorecards.items())]


def percentile_rows(bundle: ReportBundle) -> list[dict]:
    roster = bundle.corpus.roster
    pct_o, pct_fss = bundle.percentiles
    rows = []
    for rid in sorted(pct_o.percentiles):
        bands = classify(bundle.scorecards[rid], pct_fss[rid], pct_o[rid])
        for table in (pct_o, pct_fss):
            rows.append({"researcher_id": rid, "sds": roster[rid].sds, "rank": roster[rid].rank.value,
                         "indicator": table.indicator.value, "percentile": f6(table[rid]),
                         "bands": band_names(bands[table.indicator])})
    return rows


def cohort_stats_record(stats: CohortStats) -> dict:
    rec = {"observations": stats.observations,
           "average_percentile_rank_O": pct(stats.mean_percentile[Indicator.O]),
           "average_percentile_rank_FSS_IF": pct(stats.mean_percentile[Indicator.FSS_IF])}
    for band in COHORT_BANDS:
        rec[SHARE_KEYS[band]] = pct(stats.shares[band])
    return rec


def comparison_record(cmp: CohortComparison, alpha: float) -> dict:
    tests = {}
    for ind in Indicator:
        outcome = cmp.ttests[ind]
        if outcome.result is None:
            tests[ind.value] = {"applicable": False, "note": outcome.note}
        else:
            r = outcome.result
            tests[ind.value] = {"applicable": True, "t": f6(r.t), "df": f6(r.df),
                                "p_two_tailed": Fixed(r.p, 4), "significant": r.p < alpha}
    return {"variant": cmp.variant, "alpha": Fixed(alpha, 4),
            "winners": cohort_stats_record(cmp.winners),
            "incumbents": cohort_stats_record(cmp.incumbents),
            "ttest": tests}


def _histogram_list(hist: Mapping[int, int]) -> list[dict]:
    return [{"k": k, "competitions": n} for k, n in sorted(hist.items())]


def audit_record(bundle: ReportBundle, alpha: float) -> dict:
    cohort, audit, outp = bundle.cohort, bundle.audit, bundle.outperformance
    return {
        "window": str(bundle.corpus.window),
        "eligible_sds": sorted(bundle.eligible_sds),
        "cohort_comparison": comparison_record(cohort.overall, alpha),
        "per_uda": [{"uda": uda, **comparison_record(cmp, alpha)} for uda, cmp in cohort.per_uda.items()],
        "competition_audits": {
            "competitions": audit.competitions,
            "two_winner_competitions": audit.two_winner_competitions,
            "counts": {ind.value: dict(audit.counts[ind]) for ind in Indicator},
            "audits": [{
                "competition_id": a.competition_id, "sds": a.sds, "university_id": a.university_id,
                "winners": [{"researcher_id": w.researcher_id, "N": w.N, "O": f6(w.O), "fss_if": f6(w.fss_if),
                             "percentile_O": f6(w.percentile_o), "percentile_FSS_IF": f6(w.percentile_fss)}
                            for w in a.winners],
                "flags": {ind.value: dict(a.flags[ind]) for ind in Indicator},
            } for a in audit.audits],
            "excluded": list(audit.excluded),
        },
        "outperformance": {
            "denominators": dict(outp.denominators),
            "counters": {col: dict(outp.counters[col]) for col in OUTPERFORMANCE_COLUMNS},
            "histogram": {col: {series: _histogram_list(h) for series, h in outp.histograms[col].items()}
                          for col in OUTPERFORMANCE_COLUMNS},
            "competitions": [{
                "competition_id": c.competition_id,
                "eligible_non_winners": len(c.eligible_non_winners),
                "above_one": {col: c.counts[col][0] for col in OUTPERFORMANCE_COLUMNS},
                "above_both": {col: c.counts[col][1] for col in OUTPERFORMANCE_COLUMNS},
            } for c in outp.competitions],
            "excluded": list(outp.excluded),
        },
    }


def histogram_rows(outp: OutperformanceResult, column: str = Indicator.FSS_IF.value) -> list[dict]:
    """Rows k, above_one, above_both for k = 1..max; no rows when nothing outperformed."""
    above_one = outp.histograms[column]["above_one"]
    above_both = outp.histograms[column]["above_both"]
    top = max([*above_one, *above_both], default=0)
    return [{"k": k, "above_one": above_one.get(k, 0), "above_both": above_both.get(k, 0)}
            for k in range(1, top + 1)]


# --- writers ---------------------------------------------------------------


def _csv_text(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([cell(row[h]) for h in header])
    return buf.getvalue()


def _write(bundle: ReportBundle, out: Path, name: str, text: str) -> None:
    path = out / name
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    bundle.files.append(path)


def emit_histogram(outp: OutperformanceResult, path: str | Path, column: str = Indicator.FSS_IF.value) -> Path:
    path = Path(path)
    path.write_text(_csv_text(["k", "above_one", "above_both"], histogram_rows(outp, column)), encoding="utf-8")
    return path


def _flat_audit_tables(bundle: ReportBundle, alpha: float) -> dict[str, tuple[list[str], list[dict]]]:
    rec = audit_record(bundle, alpha)
    cmp = rec["cohort_comparison"]
    stat_keys = list(cmp["winners"])
    cohort_rows = [{"statistic": k, "winners": cmp["winners"][k], "incumbents": cmp["incumbents"][k]}
                   for k in stat_keys]
    for ind, test in cmp["ttest"].items():
        for key in ("t", "df", "p_two_tailed"):
            cohort_rows.append({"statistic": f"ttest_{ind}_{key}", "winners": test.get(key), "incumbents": None})
    uda_rows = []
    for entry in rec["per_uda"]:
        row = {"uda": entry["uda"]}
        for cohort in ("winners", "incumbents"):
            for k in stat_keys:
                row[f"{cohort}_{k}"] = entry[cohort][k]
        test = entry["ttest"][Indicator.FSS_IF.value]
        row["ttest_FSS_IF_t"] = test.get("t")
        row["ttest_FSS_IF_p_two_tailed"] = test.get("p_two_tailed")
        uda_rows.append(row)
    uda_header = ["uda"] + [f"{c}_{k}" for c in ("winners", "incumbents") for k in stat_keys] + \
        ["ttest_FSS_IF_t", "ttest_FSS_IF_p_two_tailed"]

    audit = bundle.audit
    comp_header = ["competition_id", "sds", "winners"] + [f"{ind.value}_{n}" for ind in Indicator
                                                         for n in AUDIT_COUNTERS]
    comp_rows = []
    for a in audit.audits:
        row = {"competition_id": a.competition_id, "sds": a.sds,
               "winners": ";".join(w.researcher_id for w in a.winners)}
        for ind in Indicator:
            for n in AUDIT_COUNTERS:
                row[f"{ind.value}_{n}"] = a.flags[ind][n]
        comp_rows.append(row)
    count_rows = []
    for ind in Indicator:
        for n in AUDIT_COUNTERS:
            denom = audit.two_winner_competitions if n.startswith(("both_", "avg_", "one_")) else audit.competitions
            count_rows.append({"indicator": ind.value, "counter": n, "competitions": audit.counts[ind][n],
                               "of": denom})
    outp = bundle.outperformance
    outp_rows = [{"column": col, "counter": n, "competitions": outp.counters[col][n],
                  "of": outp.denominators["at_least_two" if "two" in n else "at_least_one"]}
                 for col in OUTPERFORMANCE_COLUMNS for n in OUTPERFORMANCE_COUNTERS]
    return {
        "cohort_comparison.csv": (["statistic", "winners", "incumbents"], cohort_rows),
        "per_uda.csv": (uda_header, uda_rows),
        "competition_audit.csv": (comp_header, comp_rows),
        "audit_counts.csv": (["indicator", "counter", "competitions", "of"], count_rows),
        "outperformance.csv": (["column", "counter", "competitions", "of"], outp_rows),
    }


def _of(count: int, denom: int) -> str:
    share = f"{100.0 * count / denom:.1f}%" if denom else "n/a"
    return f"{count} of {denom} ({share})"


def markdown_report(bundle: ReportBundle, alpha: float) -> str:
    rec = audit_record(bundle, alpha)
    lines = [f"# Recruitment audit, window {rec['window']}", ""]
    n_scored = len(bundle.scorecards)
    lines += [f"Scored researchers: {n_scored}. Eligible SDSs: {len(rec['eligible_sds'])}.", ""]

    cmp = rec["cohort_comparison"]
    lines += ["## Winners vs incumbents", "", "| | Winners | Incumbents |", "|---|---|---|"]
    labels = {"observations": "Observations",
              "average_percentile_rank_O": "Mean percentile, O",
              "average_percentile_rank_FSS_IF": "Mean percentile, FSS_IF"}
    labels.update({SHARE_KEYS[b]: SHARE_LABELS[b] for b in COHORT_BANDS})
    for key, label in labels.items():
        lines.append(f"| {label} | {cell(cmp['winners'][key])} | {cell(cmp['incumbents'][key])} |")
    lines.append("")
    for ind, test in cmp["ttest"].items():
        if test["applicable"]:
            mark = f"significant at {alpha:g}" if test["significant"] else f"not significant at {alpha:g}"
            lines.append(f"- {cmp['variant']} t-test on {ind} percentiles: t = {test['t']}, "
                         f"df = {test['df']}, two-tailed p = {test['p_two_tailed']} ({mark})")
        else:
            lines.append(f"- t-test on {ind} percentiles: {test['note']}")
    lines.append("")

    lines += ["## Winners vs incumbents by UDA (FSS_IF)", "",
              "| UDA | Obs. W | Obs. I | Avg pct W | Avg pct I | No pubs W | No pubs I | No impact W | "
              "No impact I | Below median W | Below median I | Top 20% W | Top 20% I | p |",
              "|---|" + "---|" * 13]
    for entry in rec["per_uda"]:
        w, i = entry["winners"], entry["incumbents"]
        test = entry["ttest"][Indicator.FSS_IF.value]
        p = cell(test.get("p_two_tailed")) if test["applicable"] else "n/a"
        cols = [w["observations"], i["observations"]]
        for key in ("average_percentile_rank_FSS_IF", "no_publications_pct", "no_impact_pct",
                    "below_median_FSS_IF_pct", "top20_FSS_IF_pct"):
            cols += [w[key], i[key]]
        lines.append(f"| {entry['uda']} | " + " | ".join(cell(c) for c in cols) + f" | {p} |")
    lines.append("")

    audit = rec["competition_audits"]
    total, pairs = audit["competitions"], audit["two_winner_competitions"]
    lines += ["## Competition winners", "",
              "| Competitions | O, any | O, both | FSS_IF, any | FSS_IF, both |",
              "|---|---|---|---|---|"]
    for flag in ("unproductive", "bottom20", "below_median"):
        cols = []
        for ind in Indicator:
            counts = audit["counts"][ind.value]
            cols += [_of(counts[f"at_least_one_{flag}"], total), _of(counts[f"both_{flag}"], pairs)]
        lines.append(f"| {AUDIT_LABELS[flag]} | " + " | ".join(cols) + " |")
    lines += ["", "| Competitions | O | FSS_IF |", "|---|---|---|"]
    for flag in ("avg_below_median", "one_bottom20_one_top20", "one_below_median_one_top20"):
        cols = [_of(audit["counts"][ind.value][flag], pairs) for ind in Indicator]
        lines.append(f"| {AUDIT_LABELS[flag]} | " + " | ".join(cols) + " |")
    lines.append("")

    outp = rec["outperformance"]
    lines += ["## Non-winners outperforming winners", "",
              "| Competitions | O | FSS_IF | O and FSS_IF |", "|---|---|---|---|"]
    for counter in OUTPERFORMANCE_COUNTERS:
        denom = outp["denominators"]["at_least_two" if "two" in counter else "at_least_one"]
        cols = [_of(outp["counters"][col][counter], denom) for col in OUTPERFORMANCE_COLUMNS]
        lines.append(f"| {OUTPERFORMANCE_LABELS[counter]} | " + " | ".join(cols) + " |")
    lines += ["", "Competitions by number k of non-winners with higher FSS_IF:", "",
              "| k | above some winner | above every winner |", "|---|---|---|"]
    for row in histogram_rows(bundle.outperformance):
        lines.append(f"| {row['k']} | {row['above_one']} | {row['above_both']} |")
    lines.append("")
    return "\n".join(lines)


# --- orchestration ---------------------------------------------------------


def _prepare_out(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise PipelineError("output", f"output directory {out} not writable: {exc}", EXIT_CONFIG) from exc


@contextmanager
def _gc_paused():
    # bulk loads allocate millions of acyclic objects; generational scans only cost time
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def run_pipeline(config: RunConfig, until: str = "report") -> ReportBundle:
    """Run ingest, validation, scoring, ranking and audits up to ``until`` and write outputs.

    Raises PipelineError naming the failing stage.
    """
    with _gc_paused():
        return _run(config, until)


def _run(config: RunConfig, until: str) -> ReportBundle:
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}")
    stop = STAGES.index(until)
    out = Path(config.out)
    _prepare_out(out)

    try:
        corpus = load_corpus(config.roster, config.pubs, config.journals, config.competitions, config.window,
                             authorships_path=config.authorships, default_scheme=config.scheme_default)
    except FileNotFoundError as exc:
        raise PipelineError("ingest", str(exc), EXIT_CONFIG) from exc
    except CorpusError as exc:
        raise PipelineError("ingest", str(exc), EXIT_VALIDATION) from exc

    bundle = ReportBundle(validation=validate_corpus(corpus), corpus=corpus)
    bundle.run_log.extend(f"validate: {f}" for f in bundle.validation.findings)
    bundle.run_log.append(f"validate: {len(bundle.validation.errors)} error(s), "
                          f"{len(bundle.validation.warnings)} warning(s)")
    if not bundle.validation.ok:
        _write(bundle, out, "run_log.txt", "\n".join(bundle.run_log) + "\n")
        raise PipelineError("validate", f"{len(bundle.validation.errors)} validation error(s); "
                                        f"see {out / 'run_log.txt'}", EXIT_VALIDATION)

    stage = "score"
    try:
        if stop >= 1:
            bundle.scorecards = score_all(corpus, bundle.run_log)
        if stop >= 2:
            stage = "rank"
            bundle.percentiles = rank_all(bundle.scorecards, corpus.roster, bundle.run_log)
        if stop >= 3:
            stage = "audit"
            eligible = filter_eligible_sds(corpus, bundle.scorecards, config.eligibility, bundle.run_log)
            bundle.eligible_sds = eligible
            bundle.cohort = compare_winners_vs_incumbents(corpus, bundle.scorecards, bundle.percentiles,
                                                          config.eligibility, config.ttest, eligible, bundle.run_log)
            bundle.audit = audit_competitions(corpus, bundle.scorecards, bundle.percentiles,
                                              config.eligibility, eligible, bundle.run_log)
            bundle.outperformance = outperformance_analysis(corpus, bundle.scorecards, config.eligibility,
                                                            eligible, bundle.run_log)
    except Exception as exc:
        raise PipelineError(stage, f"{type(exc).__name__}: {exc}", EXIT_INTERNAL) from exc

    _emit(bundle, config, out, stop)
    return bundle


def _emit(bundle: ReportBundle, config: RunConfig, out: Path, stop: int) -> None:
    formats = set(config.formats)
    if bundle.scorecards is not None:
        header = ["researcher_id", "sds", "rank", "N", "t", "O", "fss_if"]
        rows = scorecard_rows(bundle)
        if "csv" in formats:
            _write(bundle, out, "scorecards.csv", _csv_text(header, rows))
        if "json" in formats:
            _write(bundle, out, "scorecards.json", dumps(rows) + "\n")
    if bundle.percentiles is not None:
        header = ["researcher_id", "sds", "rank", "indicator", "percentile", "bands"]
        rows = percentile_rows(bundle)
        if "csv" in formats:
            _write(bundle, out, "percentiles.csv", _csv_text(header, rows))
        if "json" in formats:
            _write(bundle, out, "percentiles.json", dumps(rows) + "\n")
    if bundle.outperformance is not None:
        if "csv" in formats:
            for name, (header, rows) in _flat_audit_tables(bundle, config.alpha).items():
                _write(bundle, out, name, _csv_text(header, rows))
        if "json" in formats:
            _write(bundle, out, "audit.json", dumps(audit_record(bundle, config.alpha)) + "\n")
        if stop >= 4:
            emit_histogram(bundle.outperformance, out / "histogram.csv")
            bundle.files.append(out / "histogram.csv")
            if "markdown" in formats:
                _write(bundle, out, "report.md", markdown_report(bundle, config.alpha))
    _write(bundle, out, "run_log.txt", "\n".join(bundle.run_log) + "\n")
    log.info("wrote %d files to %s", len(bundle.files), out)
