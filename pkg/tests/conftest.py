import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dilute_bose.potentials import RadialPotential  # noqa: E402
from dilute_bose.trial_state import build_trial  # noqa: E402


@pytest.fixture(scope="session")
def barrier():
    return RadialPotential.square(50.0, 1.0)


@pytest.fixture(scope="session")
def shelled():
    """Repulsive core, attractive shell, repulsive rim: its f overshoots 1 and is not monotone."""
    return RadialPotential(((0.0, 0.2, 20.0), (0.2, 0.8, -10.0), (0.8, 1.0, 20.0)),
                           R0=1.0, r1=0.2, lambda_plus=20.0)


@pytest.fixture(scope="session")
def shelled_trial(shelled):
    return build_trial(shelled, None, 2e-3, 8)


@pytest.fixture(scope="session")
def barrier_trial(barrier):
    # (4 pi / 3) a^3 rho = 1e-3 for N = 16
    a = 1 - __import__("math").tanh(5) / 5
    rho = 1e-3 * 3 / (4 * 3.141592653589793 * a**3)
    return build_trial(barrier, None, rho, 16)


# acceptance criteria: one PASS/FAIL line per criterion in the terminal summary

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    n = mark.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    prev = item.config._acceptance.get(n)
    ok = rep.passed and (prev is None or prev[0])
    item.config._acceptance[n] = (ok, detail or (prev[1] if prev else ""))


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
