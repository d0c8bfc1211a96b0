import pytest

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {num}: {detail}")


@pytest.fixture
def record():
    def _record(num: int, passed: bool, detail: str):
        ACCEPTANCE[num] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} criterion {num}: {detail}")

    return _record
