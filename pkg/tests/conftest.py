import pytest

# criterion number -> list of (passed, detail) from the acceptance tests
CRITERIA: dict = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        CRITERIA.setdefault(number, []).append((bool(passed), detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
