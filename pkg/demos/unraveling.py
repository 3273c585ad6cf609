"""Quantum trajectories against the dephasing master equation.

The no-jump state alone misses the populations by a few 1e-3. Averaging
trajectories closes the gap roughly as one over the square root of
their number.
"""

import numpy as np

from tripod import drive, propagate
from tripod import open_system as osy

gamma0 = 1e-3
schedule = drive.PulseSchedule.reference()
psi = np.array([1, 0, 0, 0], dtype=complex)

ctl = propagate.StepControl.for_schedule(schedule, cadence=200)
density = propagate.evolve_density(np.outer(psi, psi.conj()), gamma0, schedule, ctl)
table = osy.NoJumpTable(schedule, gamma0)
idx = np.searchsorted(table.t, density.t)


def deviation(p):
    return np.max(np.abs(p[:, :2] - density.populations[:, :2]))


v = table.states_from(psi, 0, idx)
p_nj = np.abs(v) ** 2 / np.sum(np.abs(v) ** 2, axis=1, keepdims=True)
print(f"no-jump only      : {deviation(p_nj):.2e}")
for n in (1_000, 10_000, 100_000):
    jumps = osy.sample_many(table, psi, n, seed=0)
    share = np.mean([len(j) > 0 for j in jumps])
    p_mc = osy.ensemble_populations(table, psi, jumps, idx)
    print(f"{n:>7d} trajectories: {deviation(p_mc):.2e}  (jumped: {share:.4f})")
