import pytest

_LINES = []


class _Recorder:
    def check(self, name, ok, detail=""):
        _LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
        assert ok, f"{name}: {detail}"


@pytest.fixture
def acceptance():
    """Records one pass/fail line per acceptance criterion and asserts it."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
