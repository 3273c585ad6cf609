import math

import numpy as np
import pytest

from tripod import drive, model, propagate as pr
from tripod import open_system as osy


def const(H):
    H = np.asarray(H, dtype=complex)
    return lambda t: np.broadcast_to(H, np.shape(t) + H.shape).copy()


def test_time_grid_hits_breakpoints():
    g = pr.time_grid(0.0, 2.0, 0.3, breakpoints=(0.5, 1.7, 5.0))
    for b in (0.0, 0.5, 1.7, 2.0):
        assert np.min(np.abs(g - b)) == 0.0
    assert np.max(np.diff(g)) <= 0.3 + 1e-15
    assert np.all(np.diff(g) > 0)


def test_step_control_validation():
    with pytest.raises(ValueError):
        pr.StepControl(0.0, 1.0, dt=0.0)
    with pytest.raises(ValueError):
        pr.StepControl(1.0, 0.0)
    with pytest.raises(ValueError):
        pr.StepControl(0.0, 1.0, cadence=0)


def test_zero_hamiltonian_identity():
    psi = np.array([0.6, 0.8j, 0, 0])
    tr = pr.evolve_state(psi, const(np.zeros((4, 4))), pr.StepControl(0.0, 1.0, 0.01))
    np.testing.assert_array_equal(tr.final, psi)


def test_exponential_decay_oracle():
    g, T = 0.7, 2.0
    psi = np.array([1, 0, 0, 0], dtype=complex)
    tr = pr.evolve_state(psi, const(np.diag([-1j * g, 0, 0, 0])), pr.StepControl(0.0, T, 1e-3, cadence=100))
    assert abs(tr.norm_sq[-1] - math.exp(-2 * g * T)) < 1e-8
    assert np.all(np.diff(tr.norm_sq) <= 0)


def test_closed_norm_conserved(reference):
    psi = np.array([0.6, 0.8, 0, 0], dtype=complex)
    ctl = pr.StepControl.for_schedule(reference, cadence=5000)
    tr = pr.evolve_state(psi, pr.hamiltonian_source(reference), ctl)
    assert np.max(np.abs(tr.norm_sq - 1)) < 1e-10


def test_nonhermitian_norm_monotone(reference):
    psi = np.array([1, 0, 0, 0], dtype=complex)
    ctl = pr.StepControl.for_schedule(reference, cadence=50)
    tr = pr.evolve_state(psi, pr.hamiltonian_source(reference, 1e-2), ctl)
    assert np.all(np.diff(tr.norm_sq) <= 1e-15)
    assert 0 < tr.norm_sq[-1] <= 1


def test_step_size_error(reference):
    ctl = pr.StepControl.for_schedule(reference, dt=1 / 20000)
    with pytest.raises(pr.StepSizeError):
        pr.evolve_state(np.array([1, 0, 0, 0], complex), pr.hamiltonian_source(reference), ctl)


def test_observer_called_at_samples():
    seen = []
    ctl = pr.StepControl(0.0, 1.0, 0.01, cadence=30)
    tr = pr.evolve_state(np.array([1, 0, 0, 0], complex), const(np.zeros((4, 4))), ctl,
                         observer=lambda t, y: seen.append(t))
    np.testing.assert_array_equal(seen, tr.t)
    assert tr.t[-1] == 1.0


def test_fourth_order_convergence(reference):
    psi = np.array([1, 0, 0, 0], dtype=complex)
    H = pr.hamiltonian_source(reference)

    def final(dt):
        ctl = pr.StepControl(reference.t_i, reference.t_f, dt, 10**9, tuple(reference.breakpoints()), max_phase_step=10.0)
        return pr.evolve_state(psi, H, ctl).final

    ref = final(1 / 80000)
    e1 = np.linalg.norm(final(1 / 5000) - ref)
    e2 = np.linalg.norm(final(1 / 10000) - ref)
    assert e1 / e2 >= 8


def test_propagator_table_matches_evolution(reference):
    ctl = pr.StepControl.for_schedule(reference, cadence=1)
    tab = pr.propagator_table(pr.hamiltonian_source(reference, 1e-3), ctl)
    psi = np.array([0.6, 0.8, 0, 0], dtype=complex)
    tr = pr.evolve_state(psi, pr.hamiltonian_source(reference, 1e-3), pr.StepControl.for_schedule(reference, cadence=10**9))
    np.testing.assert_allclose(tab.states[-1] @ psi, tr.final, atol=1e-12)
    g = pr.StepControl.for_schedule(reference).grid()
    Kf = pr.final_propagator(lambda t: -1j * pr.hamiltonian_source(reference, 1e-3)(t), g)
    np.testing.assert_allclose(Kf, tab.states[-1], atol=1e-11)


def test_dephasing_only_oracle():
    g, T = 0.4, 1.5
    rho0 = np.full((4, 4), 0.25, dtype=complex)
    ctl = pr.StepControl(0.0, T, 1e-3, cadence=10**9)
    tr = pr.evolve_density(rho0, g, const(np.zeros((4, 4))), ctl)
    assert tr.final[0, 1] == pytest.approx(0.25 * math.exp(-g * T), abs=1e-12)
    assert tr.final[0, 0] == pytest.approx(0.25, abs=1e-15)
    assert tr.final[2, 3] == pytest.approx(0.25, abs=1e-15)


def test_density_matches_pure_state(reference):
    psi = np.array([0.6, 0.8j, 0, 0], dtype=complex)
    ctl = pr.StepControl.for_schedule(reference, cadence=4000)
    st = pr.evolve_state(psi, pr.hamiltonian_source(reference), ctl)
    dm = pr.evolve_density(np.outer(psi, psi.conj()), 0.0, reference, ctl)
    outer = np.einsum("ni,nj->nij", st.states, st.states.conj())
    assert np.max(np.abs(outer - dm.rho)) < 1e-8


def test_lindblad_trace_and_positivity(density_1e3):
    rho = density_1e3.rho
    assert np.max(np.abs(np.einsum("nii->n", rho) - 1)) < 1e-8
    assert np.max(np.abs(rho - np.conj(np.swapaxes(rho, 1, 2)))) < 1e-10
    assert np.min(np.linalg.eigvalsh(rho)) >= -1e-8


def test_density_validation():
    with pytest.raises(ValueError):
        pr.evolve_density(np.array([[1, 1], [0, 0]]), 0.1, const(np.zeros((2, 2))), pr.StepControl(0, 1, 0.1))
    with pytest.raises(ValueError):
        pr.evolve_density(np.eye(2) / 2, -0.1, const(np.zeros((2, 2))), pr.StepControl(0, 1, 0.1))


def test_two_level_unraveling():
    # only channel 0 driven: |0> <-> |e> with dephasing on |0>
    s = drive.PulseSchedule.double_stirap(2 * np.pi * 1.0, 0.0, 0.0, intra_delay=0.0, gap=2.0)
    g = 0.2
    psi = np.array([1, 0, 0, 0], dtype=complex)
    ctl = pr.StepControl.for_schedule(s, dt=1e-3, cadence=10**9)
    rho = pr.evolve_density(np.outer(psi, psi.conj()), g, s, ctl).final
    mc = osy.average_trajectories(psi, s, g, 10000, seed=3, dt=1e-3)
    assert np.max(np.abs(mc - rho)) < 3e-2
    assert rho[model.E, model.E].real > 0.05  # the comparison is not trivial
