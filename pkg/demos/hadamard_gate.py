"""Closed-system Hadamard gate from two STIRAP passes.

Drives |0> through both processes, prints the final qubit populations,
the peak excited-state population and the distance to the ideal gate.
"""

import numpy as np

from tripod import closed, drive, model

schedule = drive.PulseSchedule.reference()
print(f"theta01 = {schedule.theta01_configured:.6f} (pi/8 = {np.pi / 8:.6f}), t_f = {schedule.t_f:.4f}")

run = closed.run_closed([1, 0], schedule)
p = np.abs(run.final_state) ** 2
print(f"P0 = {p[model.G0]:.6f}  P1 = {p[model.G1]:.6f}")
print(f"max P_e over the run = {run.populations[:, model.E].max():.2e}")
print(f"distance to U psi_i  = {run.qubit_error():.2e}")

U = closed.gate_matrix(schedule.theta01_configured, schedule.phi01, closed.geometric_phase(schedule))
print("gate matrix up to a global phase:")
print(np.round(U * np.exp(-1j * np.angle(U[0, 0])), 6))
