import pytest

# criterion label -> (passed, detail), filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    def record(label, passed, detail=""):
        ACCEPTANCE[label] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
