import numpy as np
import pytest

from mpamp.model import SignalPrior


@pytest.fixture
def bg_prior():
    return SignalPrior(0.2)


def zscore(samples, target):
    """(mean - target) / stderr along the first axis."""
    a = np.asarray(samples, dtype=float)
    return (a.mean(axis=0) - target) / (a.std(axis=0, ddof=1) / np.sqrt(a.shape[0]))


_REPORT_KEY = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_REPORT_KEY, [])

    def _report(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        lines.append(line)
        print(line, flush=True)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
