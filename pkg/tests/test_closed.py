import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripod import closed, drive, model
from tripod.fidelity import AXIAL_STATES

HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


@settings(max_examples=20)
@given(st.floats(0, math.pi / 2), st.floats(0, 2 * math.pi), st.floats(-10, 10))
def test_gate_unitary_and_identity(theta01, phi01, gamma):
    U = closed.gate_matrix(theta01, phi01, gamma)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-13)
    np.testing.assert_allclose(closed.gate_matrix(theta01, phi01, 0.0), np.eye(2), atol=1e-15)


def test_hadamard_parameters():
    U = closed.gate_matrix(math.pi / 8, math.pi, -math.pi)
    U = closed.match_global_phase(U.reshape(-1), HADAMARD.reshape(-1)).reshape(2, 2)
    np.testing.assert_allclose(U, HADAMARD, atol=1e-14)


def test_phase_trace(reference):
    t = np.linspace(0, reference.t_f, 50)
    tr = closed.phase_trace(reference, t)
    assert tr[0] == 0.0
    assert tr[-1] == pytest.approx(closed.geometric_phase(reference), abs=1e-13)
    assert np.all(np.diff(tr) <= 0)


@pytest.fixture(scope="module")
def axial_runs(reference):
    return {k: closed.run_closed(q, reference) for k, q in AXIAL_STATES.items()}


def test_hadamard_run(axial_runs):
    run = axial_runs["+z"]
    p = np.abs(run.final_state) ** 2
    assert abs(p[0] - 0.5) < 1e-3 and abs(p[1] - 0.5) < 1e-3
    assert np.max(run.populations[:, model.E]) < 1e-3


def test_plus_x_goes_to_zero(axial_runs):
    fin = axial_runs["+x"].final_state
    ref = np.array([1, 0, 0, 0], dtype=complex)
    assert np.linalg.norm(closed.match_global_phase(fin, ref) - ref) < 1e-3


def test_axial_states_match_gate(axial_runs):
    for run in axial_runs.values():
        assert run.qubit_error() < 1e-3


def test_dark_confinement(reference):
    tr = closed.propagate_dark(np.array([1, 0, 0, 0], complex), reference)
    assert np.max(tr.bright + np.abs(tr.states[:, model.E]) ** 2) < 1e-3


def test_adiabaticity_violation():
    fast = drive.PulseSchedule.double_stirap(2 * math.pi * 1.0, 2 * math.pi * 2.0, gap=3.0)
    with pytest.raises(closed.AdiabaticityError):
        closed.run_closed([1, 0], fast)


def test_rejects_bad_initial_state(reference):
    with pytest.raises(ValueError):
        closed.run_closed([1, 1], reference)
    with pytest.raises(ValueError):
        closed.run_closed(np.array([0, 0, 1, 0]), reference)
