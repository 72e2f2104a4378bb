import time

import pytest

from tcell_sd.analysis import run_scenario
from tcell_sd.model import builtin_scenarios


@pytest.fixture(scope="session")
def preset_runs():
    """Every builtin preset integrated once, keyed by name."""
    return {s.name: run_scenario(s) for s in builtin_scenarios()}


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Time a block, record a PASS/FAIL line for the terminal summary, and re-raise on failure."""
    log = request.config.stash.setdefault(_ACCEPTANCE, [])

    class _Criterion:
        def __init__(self, label):
            self.label = label

        def __enter__(self):
            self.start = time.perf_counter()
            return self

        def __exit__(self, kind, exc, tb):
            elapsed = time.perf_counter() - self.start
            status = "PASS" if kind is None else "FAIL"
            line = f"{status}  {self.label}  ({elapsed * 1000:.1f} ms)"
            if exc is not None:
                line += f"  {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            log.append(line)
            print(line)
            return False

    return _Criterion


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
