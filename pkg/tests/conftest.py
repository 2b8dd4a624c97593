import pytest

from hypercube_mixer.analysis import R_VALUES, run_size_experiment
from hypercube_mixer.mixers import METHOD_ALIASES
from hypercube_mixer.problem import load_fixtures


@pytest.fixture(scope="session")
def size_records():
    """Basis-gate metrics for every fixture, method and r (built once per session)."""
    return run_size_experiment(load_fixtures(), list(METHOD_ALIASES), R_VALUES)


@pytest.fixture(scope="session")
def sizes(size_records):
    return {(rec.problem, rec.method, rec.r): rec.size for rec in size_records}


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def report_criterion(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def report(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        request.config.stash.setdefault(_ACCEPTANCE, {})[number] = line
        print(line)
    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
