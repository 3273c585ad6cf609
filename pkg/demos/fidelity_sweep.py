"""Average gate fidelity against the dephasing rate.

Compares the no-jump estimate, the one-jump correction, the trajectory
average and the master-equation value over the six axial input states.
Takes about a minute.
"""

from tripod import drive, fidelity

schedule = drive.PulseSchedule.reference()
rates = [0.0, 1e-5, 1e-4, 1e-3, 1e-2]
print("rate      no-jump     one-jump    trajectories  master-eq")
for r in fidelity.fidelity_sweep(schedule, rates, "all", n_traj=10_000, seed=0):
    print(f"{r.gamma0:<8g}  {r.f_nojump:.8f}  {r.f_one_jump:.8f}  {r.f_total_mc:.8f}    {r.f_uhlmann:.8f}")
