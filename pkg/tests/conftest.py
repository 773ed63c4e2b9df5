import re

import pytest

from sisverify.controller import ControllerConfig, build_lts
from sisverify.domain import SetSpeed, default_requirements
from sisverify.speclang import compile_spec


@pytest.fixture(scope="session")
def default_cfg():
    return ControllerConfig()


@pytest.fixture(scope="session")
def default_lts(default_cfg):
    return build_lts(default_cfg, 4)


@pytest.fixture(scope="session")
def default_spec(default_cfg):
    return compile_spec(default_requirements(), [SetSpeed(default_cfg.nominal_speed)])


CRITERIA = {
    1: "verify passes refinement, deadlock freedom and determinism in < 10 s",
    2: "5/5 single-requirement mutants caught",
    3: "depth <= 8 enumeration agrees with refinement (default + 5 mutants)",
    4: "all required actions within 2 tocks; 3-tick latency rejected",
    5: "monitors agree with spec_accepts on the reduced alphabet, length <= 8",
    6: "stochastic engine: row sums, 3-state chain, Monte Carlo, exact zero",
    7: "SIL decade boundaries and sensor threshold",
    8: "byte-identical reports on repeated runs",
}
_acceptance: dict = {}


def _criterion(nodeid):
    m = re.match(r"test_criterion_(\d+)", nodeid.split("::", 1)[1])
    return int(m.group(1)) if m else None


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    n = _criterion(report.nodeid)
    if n is None:
        return
    failed = report.failed or (report.when == "call" and hasattr(report, "wasxfail"))
    if report.when == "call" or failed:
        rows = _acceptance.setdefault(n, [])
        rows.append((report.nodeid.split("::", 1)[1], not failed))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        rows = _acceptance[n]
        ok = all(passed for _, passed in rows)
        bad = [name for name, passed in rows if not passed]
        line = f"{'PASS' if ok else 'FAIL'}  criterion {n}: {CRITERIA[n]}"
        if bad:
            line += "  (failing: " + ", ".join(bad) + ")"
        terminalreporter.write_line(line)
