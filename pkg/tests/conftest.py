import pytest

from froglab import tree as tm


@pytest.fixture(scope="session")
def reg3_8():
    return tm.build_tree(tm.spec("regular", 8, d=3))


@pytest.fixture(scope="session")
def tw_tree():
    return tm.random_tw_tree(3, 6, 3, 6, 11)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; call it before asserting so failures are listed too."""
    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
