import numpy as np
import pytest

from tripod import drive, propagate
from tripod import open_system as osy


@pytest.fixture(scope="session")
def reference():
    return drive.PulseSchedule.reference()


@pytest.fixture(scope="session")
def calibrated(reference):
    return reference.with_gap(drive.calibrate_gap(reference, -np.pi))


@pytest.fixture(scope="session")
def nojump_runs(calibrated):
    """No-jump runs from |0> at the rates used for the phase traces."""
    return {g: osy.nojump_run([1, 0], calibrated, g) for g in (1e-5, 1e-3, 1e-1)}


@pytest.fixture(scope="session")
def table_1e3(reference):
    return osy.NoJumpTable(reference, 1e-3)


@pytest.fixture(scope="session")
def density_1e3(reference):
    psi = np.array([1, 0, 0, 0], dtype=complex)
    ctl = propagate.StepControl.for_schedule(reference, cadence=200)
    return propagate.evolve_density(np.outer(psi, psi.conj()), 1e-3, reference, ctl)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance check; shown in the terminal summary."""

    def record(label, ok, detail):
        _VERDICTS.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
