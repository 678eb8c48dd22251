import pytest

ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def record():
    """Store the outcome of an acceptance criterion for the summary lines."""

    def _record(number: int, title: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(passed), title, detail)
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  [{number}] {title}: {detail}")
