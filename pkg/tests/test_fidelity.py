import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripod import fidelity as fd
from tripod import open_system as osy


def random_density(rng, d=4):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = m @ m.conj().T
    return r / np.trace(r).real


def test_uhlmann_examples():
    e0 = np.zeros((4, 4))
    e0[0, 0] = 1
    assert fd.uhlmann(e0, e0) == pytest.approx(1.0, abs=1e-12)
    assert fd.uhlmann(e0, np.eye(4) / 4) == pytest.approx(0.25, abs=1e-12)
    v = np.array([1, 1, 0, 0]) / math.sqrt(2)
    assert fd.uhlmann(e0, np.outer(v, v)) == pytest.approx(0.5, abs=1e-12)


def test_uhlmann_pure_target_reduction():
    rng = np.random.default_rng(0)
    for _ in range(50):
        rho = random_density(rng)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        direct = np.vdot(psi, rho @ psi).real
        assert abs(fd.uhlmann(np.outer(psi, psi.conj()), rho) - direct) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_uhlmann_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = random_density(rng), random_density(rng)
    f = fd.uhlmann(a, b)
    assert -1e-12 <= f <= 1 + 1e-12
    assert f == pytest.approx(fd.uhlmann(b, a), abs=1e-9)


def test_uhlmann_rejects_negative():
    bad = np.diag([1.1, -0.1, 0, 0])
    with pytest.raises(ValueError):
        fd.uhlmann(bad, np.eye(4) / 4)


def test_zero_rate_all_modes_one(reference):
    rep = fd.average_fidelity(reference, 0.0, n_traj=200)
    for f in (rep.f_nojump, rep.f_one_jump, rep.f_total_mc, rep.f_uhlmann):
        assert abs(f - 1) < 1e-6
    assert len(rep.per_state) == 6


def test_nojump_closed_form_agrees(reference, nojump_runs, calibrated):
    run = nojump_runs[1e-3]
    closed_form = fd.nojump_closed_form([1, 0], calibrated, 1e-3, run.ledger.final())
    assert abs(closed_form - fd.fidelity_nojump([1, 0], calibrated, 1e-3)) < 1e-6


def test_nojump_d2_aligned_state(reference, table_1e3):
    # C_D1(t_i) = 0 when the qubit state is orthogonal to the D1 combination
    c, s = math.cos(reference.theta01_configured), math.sin(reference.theta01_configured)
    q = np.array([c, -s * np.exp(1j * reference.phi01)])
    f = fd.fidelity_nojump(q, reference, 1e-3, table=table_1e3)
    run = osy.nojump_run(q, reference, 1e-3)
    beta = run.ledger.final()["beta"]
    assert math.isnan(run.ledger.final()["alpha"])
    assert f == pytest.approx(math.exp(-2e-3 * beta), abs=1e-6)


def test_one_jump_zero_rate(reference):
    tab = osy.NoJumpTable(reference, 0.0)
    assert fd.fidelity_one_jump([1, 0], reference, 0.0, table=tab) == fd.fidelity_nojump([1, 0], reference, 0.0, table=tab)


def test_one_jump_node_doubling(reference):
    a = fd.fidelity_one_jump([1, 0], reference, 1e-3, 200)
    b = fd.fidelity_one_jump([1, 0], reference, 1e-3, 400)
    assert abs(a - b) < 1e-7


def test_one_jump_needs_nodes(reference):
    with pytest.raises(ValueError):
        fd.fidelity_one_jump([1, 0], reference, 1e-3, 10)


def test_one_jump_requires_nodes_on_grid(reference, table_1e3):
    with pytest.raises(ValueError):
        fd.fidelity_one_jump([1, 0], reference, 1e-3, 201, table=table_1e3)


def test_mc_consistent_with_one_jump(reference):
    for g in (1e-4, 1e-3):
        rep = fd.average_fidelity(reference, g, ("one_jump", "mc"), n_traj=10000, seed=1)
        assert abs(rep.f_total_mc - rep.f_one_jump) < 3 * rep.f_mc_stderr


def test_bloch_average_matches_axial(reference):
    prop = fd.lindblad_propagator(reference, 1e-3)
    axial = np.mean([fd.fidelity_uhlmann(q, reference, 1e-3, propagator=prop) for q in fd.AXIAL_STATES.values()])
    assert abs(fd.bloch_average_uhlmann(reference, 1e-3, 200, propagator=prop) - axial) < 1e-3


def test_nojump_gap_linear_in_rate(reference):
    gs = np.array([1e-4, 3e-4, 1e-3])
    gaps = [r.f_uhlmann - r.f_nojump for r in fd.fidelity_sweep(reference, gs, ("nojump", "uhlmann"))]
    slope = np.polyfit(np.log(gs), np.log(gaps), 1)[0]
    assert abs(slope - 1) < 0.05


def test_bad_inputs(reference):
    with pytest.raises(ValueError):
        fd.average_fidelity(reference, 1e-3, "bogus")
    with pytest.raises(ValueError):
        fd.target_state([1, 1], reference)
