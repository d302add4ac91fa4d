"""Shared pytest setup: a collector that prints one line per acceptance criterion."""

import pytest

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, list[str]]] = {}


class CriterionRecorder:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.checks: list[tuple[str, bool]] = []
        self.notes: list[str] = []

    def check(self, label: str, ok: bool) -> bool:
        self.checks.append((label, bool(ok)))
        return bool(ok)

    def note(self, text: str) -> None:
        self.notes.append(text)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(ok for _, ok in self.checks)

    def failures(self) -> list[str]:
        return [label for label, ok in self.checks if not ok]


@pytest.fixture
def criterion(request):
    """Yields a recorder factory; the outcome is stored even if the test raises."""
    made = []

    def factory(number: int, title: str) -> CriterionRecorder:
        rec = CriterionRecorder(number, title)
        made.append(rec)
        return rec

    yield factory
    for rec in made:
        details = rec.notes + [f"failed: {f}" for f in rec.failures()]
        if not rec.checks:
            details.append("did not complete")
        ACCEPTANCE_RESULTS[rec.number] = (rec.title, rec.passed, details)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, ok, details = ACCEPTANCE_RESULTS[number]
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}"
        if details:
            line += " | " + "; ".join(details)
        terminalreporter.write_line(line)
