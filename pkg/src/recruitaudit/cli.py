"""Command line entry point.

    recruitaudit report --roster roster.csv --pubs publications.csv \\
        --journals journals.csv --competitions competitions.csv --out results/

Exit codes: 0 success, 1 validation errors, 2 configuration errors,
3 internal errors.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import __version__
from .cohort import EligibilityConfig
from .ingest import Scheme, Window, write_corpus
from .report import EXIT_CONFIG, EXIT_INTERNAL, FORMATS, PipelineError, RunConfig, run_pipeline
from .synthetic import generate_corpus


def _window(ctx, param, value):
    try:
        return Window.parse(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _formats(ctx, param, value):
    chosen = tuple(dict.fromkeys(v.strip() for v in value.split(",") if v.strip()))
    bad = [v for v in chosen if v not in FORMATS]
    if bad or not chosen:
        raise click.BadParameter(f"expected a comma list of {','.join(FORMATS)}")
    return chosen


_input = dict(type=click.Path(path_type=Path), required=True)

_OPTIONS = [
    click.option("--roster", **_input, help="Roster table (.csv or .json)."),
    click.option("--pubs", **_input, help="Publications table."),
    click.option("--authorships", type=click.Path(path_type=Path), default=None,
                 help="Authorships table [default: authorships.<ext> beside --pubs]."),
    click.option("--journals", **_input, help="Journal-year impact factors."),
    click.option("--competitions", **_input, help="Competition candidates, one row per candidate."),
    click.option("--window", default="2009:2011", show_default=True, callback=_window,
                 help="Observation window START:END, both years inclusive."),
    click.option("--scheme-default", type=click.Choice([s.value for s in Scheme]),
                 default=Scheme.ALPHABETICAL.value, show_default=True,
                 help="Counting scheme for roster rows with a blank scheme."),
    click.option("--ttest", type=click.Choice(["pooled", "welch"]), default="pooled", show_default=True),
    click.option("--min-publishing-share", type=click.FloatRange(0, 1), default=0.5, show_default=True,
                 help="SDS eligibility: minimum share of professors with a publication."),
    click.option("--alpha", type=click.FloatRange(0, 1), default=0.01, show_default=True,
                 help="Significance level used to annotate t-tests."),
    click.option("--out", type=click.Path(path_type=Path), required=True, help="Output directory."),
    click.option("--format", "formats", default=",".join(FORMATS), show_default=True, callback=_formats,
                 help="Comma list of output formats."),
    click.option("-v", "--verbose", is_flag=True),
]


def pipeline_options(fn):
    for option in reversed(_OPTIONS):
        fn = option(fn)
    return fn


def _run(stage: str, **kw) -> None:
    logging.basicConfig(level=logging.INFO if kw.pop("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = RunConfig(
        roster=kw["roster"], pubs=kw["pubs"], journals=kw["journals"], competitions=kw["competitions"],
        out=kw["out"], window=kw["window"], authorships=kw["authorships"],
        scheme_default=Scheme(kw["scheme_default"]),
        eligibility=EligibilityConfig(min_publishing_share=kw["min_publishing_share"]),
        ttest=kw["ttest"], formats=kw["formats"], alpha=kw["alpha"],
    )
    try:
        bundle = run_pipeline(config, until=stage)
    except PipelineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    except Exception as exc:  # pragma: no cover - last-resort guard
        click.echo(f"error: [internal] {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)
    v = bundle.validation
    click.echo(f"{stage}: {len(v.errors)} error(s), {len(v.warnings)} warning(s)")
    if bundle.scorecards is not None:
        click.echo(f"scored {len(bundle.scorecards)} researcher(s)")
    if bundle.audit is not None:
        click.echo(f"audited {bundle.audit.competitions} competition(s); "
                   f"{bundle.outperformance.denominators['at_least_one']} with eligible non-winners")
    for path in bundle.files:
        click.echo(f"wrote {path}")


@click.group()
@click.version_option(__version__)
def cli():
    """Score research productivity and audit recruitment competitions."""


@cli.command()
@pipeline_options
def validate(**kw):
    """Load and cross-check the inputs."""
    _run("validate", **kw)


@cli.command()
@pipeline_options
def score(**kw):
    """Compute O and FSS_IF scorecards."""
    _run("score", **kw)


@cli.command()
@pipeline_options
def rank(**kw):
    """Scorecards plus percentile ranks within (SDS, rank) strata."""
    _run("rank", **kw)


@cli.command()
@pipeline_options
def audit(**kw):
    """Scorecards, percentiles and the recruitment audits."""
    _run("audit", **kw)


@cli.command()
@pipeline_options
def report(**kw):
    """Full pipeline, including the markdown report and histogram data."""
    _run("report", **kw)


@cli.command()
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--researchers", type=int, default=50, show_default=True)
@click.option("--publications", type=int, default=200, show_default=True)
@click.option("--sds", "n_sds", type=int, default=5, show_default=True)
@click.option("--competitions", type=int, default=10, show_default=True)
@click.option("--window", default="2009:2011", show_default=True, callback=_window)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
def synth(out, seed, researchers, publications, n_sds, competitions, window, fmt):
    """Write a random, valid input corpus."""
    corpus = generate_corpus(seed, researchers, publications, n_sds, competitions, window)
    try:
        paths = write_corpus(corpus, out, fmt)
    except OSError as exc:
        click.echo(f"error: [output] {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for path in paths.values():
        click.echo(f"wrote {path}")


def main():
    cli(prog_name="recruitaudit")


if __name__ == "__main__":
    main()
