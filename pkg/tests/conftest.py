import pytest

_LINES: list[str] = []


@pytest.fixture
def acceptance_record():
    return _LINES.append


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
