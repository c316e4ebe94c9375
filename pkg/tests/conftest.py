import pytest

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one pass/fail line per acceptance criterion (``info`` lines are not asserted)."""
    lines = request.config.stash[_VERDICTS]

    def record(num, ok, detail, info=False):
        tag = "INFO" if info else ("PASS" if ok else "FAIL")
        line = f"criterion {num:>2}: {tag}  {detail}"
        lines.append((num, info, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(lines, key=lambda r: (r[0], r[1])):
        terminalreporter.write_line(line)
