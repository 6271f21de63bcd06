import pytest

_RESULTS = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion and fail the test if needed."""

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _RESULTS.append((number, line))
        print(line)
        if not ok:
            pytest.fail(line, pytrace=False)

    return report


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
