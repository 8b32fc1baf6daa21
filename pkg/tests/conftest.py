from pathlib import Path

import pytest

from recruitaudit.ingest import Window, load_corpus_dir
from recruitaudit.report import RunConfig

GOLDEN = Path(__file__).parent / "data" / "golden"

_acceptance: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): exit criterion, reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append((marker.args[0], "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in _acceptance:
        terminalreporter.write_line(f"{status}  {label}")


@pytest.fixture
def golden_corpus():
    return load_corpus_dir(GOLDEN / "input", Window(2009, 2011))


def golden_config(out, **kw) -> RunConfig:
    d = GOLDEN / "input"
    return RunConfig(roster=d / "roster.csv", pubs=d / "publications.csv", journals=d / "journals.csv",
                     competitions=d / "competitions.csv", out=out, **kw)
