from __future__ import annotations

import pytest

from karlsim import sensors, topology


@pytest.fixture(scope="session")
def ref_topo() -> topology.Topology:
    return topology.build_reference_topology()


@pytest.fixture(scope="session")
def ref_rig() -> list[sensors.SensorSpec]:
    return sensors.reference_rig()


def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import VERDICTS

    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        name, ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2} {name}: {detail}")
