"""Shared fixtures: the rendered digit corpus, the two trained nets, and
a small recorder that prints one summary line per experiment criterion
at the end of the run."""

import pathlib

import pytest

import datagen
import trainers

CACHE_DIR = pathlib.Path(__file__).resolve().parent / "_cache"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def digit_corpus() -> dict:
    """Paths of the cached rendered-digit IDX files."""
    CACHE_DIR.mkdir(exist_ok=True)
    return datagen.ensure_digit_corpus(str(CACHE_DIR))


@pytest.fixture(scope="session")
def lenet_model(digit_corpus) -> tuple[str, float]:
    """(model path, held-out accuracy) of the trained Lenet variant."""
    return trainers.ensure_lenet(str(CACHE_DIR))


@pytest.fixture(scope="session")
def dense_model(digit_corpus) -> tuple[str, float]:
    """(model path, held-out accuracy) of the trained 81-128-64-24-10 net."""
    return trainers.ensure_dense(str(CACHE_DIR))


class CriterionRecorder:
    """Collects a label and free-form notes for one criterion test; the
    pass/fail verdict is read from the test outcome afterwards."""

    def __init__(self) -> None:
        self.label: str | None = None
        self.notes: list[str] = []

    def start(self, label: str) -> None:
        self.label = label

    def note(self, text: str) -> None:
        self.notes.append(text)


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)


@pytest.fixture
def criterion(request):
    rec = CriterionRecorder()
    yield rec
    if rec.label is None:
        return
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    detail = f"  [{'; '.join(rec.notes)}]" if rec.notes else ""
    ACCEPTANCE_LINES.append(f"{status}  {rec.label}{detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
