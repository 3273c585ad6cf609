"""Batch command line: run configured experiments and write CSV files.

Config files are flat ``key = value`` text, one pair per line, values as
Python literals; ``#`` starts a comment.  A ``[derived]`` table (written
into every run manifest) is ignored on input, so a manifest can be fed
back with ``--config`` to reproduce a run.

    tripod closed --paper-defaults --out-dir out
    tripod phases --paper-defaults --config rates.cfg
"""

from __future__ import annotations

import argparse
import ast
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import closed, drive, fidelity, propagate
from . import open_system as osy

COMMANDS = ("closed", "lindblad", "mcwf", "phases", "fidelity")
NEEDS_RATE = {"lindblad", "mcwf", "phases", "fidelity"}
MANIFEST = "manifest.toml"


class ConfigError(ValueError):
    """Invalid configuration text or values."""


@dataclass
class RunConfig:
    a_max_0_over_2pi: float
    amplitude_rule: str
    intra_delay: float
    phi01: float
    phi2_rate: float
    initial_state: object
    gamma0_tau: list
    gap: float | None = None
    gap_calibrate_to: float | None = None
    a_max_1_over_2pi: float | None = None
    a_max_2_over_2pi: float | None = None
    n_trajectories: int = 10000
    seed: int = 0
    dt: float = propagate.DEFAULT_DT
    observer_cadence: int = 200
    adiabaticity_threshold: float = closed.BRIGHT_THRESHOLD
    fidelity_nodes: int = fidelity.DEFAULT_NODES

    def schedule(self) -> drive.PulseSchedule:
        a0 = 2.0 * math.pi * self.a_max_0_over_2pi
        if self.amplitude_rule == "derived":
            a1 = a0 / (math.sqrt(2.0) - 1.0)
            a2 = math.hypot(a0, a1)
        else:
            a1 = 2.0 * math.pi * self.a_max_1_over_2pi
            a2 = 2.0 * math.pi * self.a_max_2_over_2pi
        # with calibration the placeholder gap is replaced below
        gap = self.gap if self.gap is not None else 2.0 * (1.0 + self.intra_delay)
        sched = drive.PulseSchedule.double_stirap(a0, a1, a2, intra_delay=self.intra_delay, gap=gap,
                                                  phi01=self.phi01, phi2_rate=self.phi2_rate)
        if self.gap_calibrate_to is not None:
            sched = sched.with_gap(drive.calibrate_gap(sched, self.gap_calibrate_to))
        return sched

    def qubit_state(self) -> np.ndarray:
        if isinstance(self.initial_state, str):
            return fidelity.AXIAL_STATES[self.initial_state]
        q = np.asarray(self.initial_state, dtype=complex)
        return q / np.linalg.norm(q)


REFERENCE_DEFAULTS = {
    "a_max_0_over_2pi": 300.0,
    "amplitude_rule": "derived",
    "intra_delay": 1.0,
    "gap": math.pi,
    "phi01": math.pi,
    "phi2_rate": 1.0,
    "initial_state": "+z",
}
_FIELDS = {f.name for f in fields(RunConfig)}
_REQUIRED = ("a_max_0_over_2pi", "amplitude_rule", "intra_delay", "phi01", "phi2_rate", "initial_state")


def read_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = literal`` lines; stops reading keys inside ``[derived]``."""
    out = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section != "derived":
                raise ConfigError(f"{source}:{lineno}: unknown table [{section}]")
            continue
        if section == "derived":
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"{source}:{lineno}: cannot parse value of {key!r}: {value!r}") from exc
    return out


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def build_config(values: dict, command: str = "closed") -> RunConfig:
    """Validate merged key/value pairs; every problem is reported at once."""
    v = dict(values)
    problems = []
    required = list(_REQUIRED) + (["gamma0_tau"] if command in NEEDS_RATE else [])
    for key in required:
        if key not in v:
            problems.append(f"missing key {key!r}")
    if ("gap" in v) == ("gap_calibrate_to" in v):
        problems.append("exactly one of 'gap' and 'gap_calibrate_to' must be given")
    for key in ("a_max_0_over_2pi", "intra_delay", "phi01", "phi2_rate", "gap", "gap_calibrate_to", "dt",
                "adiabaticity_threshold", "a_max_1_over_2pi", "a_max_2_over_2pi"):
        if key in v and not _is_real(v[key]):
            problems.append(f"{key!r} must be a finite real number, got {v[key]!r}")
    for key, lo in (("a_max_0_over_2pi", 0.0), ("intra_delay", 0.0), ("dt", 0.0), ("adiabaticity_threshold", 0.0)):
        if _is_real(v.get(key)) and v[key] <= lo:
            problems.append(f"{key!r} must be > {lo}, got {v[key]!r}")
    if _is_real(v.get("gap")) and v["gap"] < 0:
        problems.append(f"'gap' must be >= 0, got {v['gap']!r}")
    if _is_real(v.get("gap_calibrate_to")) and v["gap_calibrate_to"] >= 0:
        problems.append("'gap_calibrate_to' must be negative")
    rule = v.get("amplitude_rule")
    if rule is not None and rule not in ("derived", "explicit"):
        problems.append(f"'amplitude_rule' must be 'derived' or 'explicit', got {rule!r}")
    explicit = [k for k in ("a_max_1_over_2pi", "a_max_2_over_2pi") if k in v]
    if rule == "explicit" and len(explicit) != 2:
        problems.append("amplitude_rule 'explicit' needs a_max_1_over_2pi and a_max_2_over_2pi")
    if rule == "derived" and explicit:
        problems.append(f"amplitude_rule 'derived' computes {', '.join(explicit)}; remove them")
    for key in explicit:
        if _is_real(v[key]) and v[key] < 0:
            problems.append(f"{key!r} must be >= 0")
    if "gamma0_tau" in v:
        g = v["gamma0_tau"]
        g = list(g) if isinstance(g, (list, tuple)) else [g]
        if not g:
            problems.append("'gamma0_tau' must not be empty")
        for x in g:
            if not _is_real(x) or x < 0:
                problems.append(f"'gamma0_tau' entries must be reals >= 0, got {x!r}")
        v["gamma0_tau"] = [float(x) if _is_real(x) else x for x in g]
    else:
        v["gamma0_tau"] = []
    for key, lo in (("n_trajectories", 1), ("observer_cadence", 1), ("fidelity_nodes", 50), ("seed", 0)):
        if key in v and (not isinstance(v[key], int) or isinstance(v[key], bool) or v[key] < lo):
            problems.append(f"{key!r} must be an integer >= {lo}, got {v[key]!r}")
    if isinstance(v.get("seed"), int) and v["seed"] >= 2**64:
        problems.append("'seed' must fit in 64 bits")
    state = v.get("initial_state")
    if isinstance(state, str):
        if state not in fidelity.AXIAL_STATES:
            problems.append(f"'initial_state' label must be one of {sorted(fidelity.AXIAL_STATES)}, got {state!r}")
    elif state is not None:
        ok = isinstance(state, (list, tuple)) and len(state) == 2 and all(
            isinstance(x, (int, float, complex)) and not isinstance(x, bool) for x in state)
        if not ok or np.linalg.norm(np.asarray(state, dtype=complex)) == 0:
            problems.append("'initial_state' must be an axial label or two nonzero complex amplitudes")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    for key in ("a_max_0_over_2pi", "intra_delay", "phi01", "phi2_rate", "gap", "gap_calibrate_to", "dt",
                "adiabaticity_threshold", "a_max_1_over_2pi", "a_max_2_over_2pi"):
        if key in v:
            v[key] = float(v[key])
    if isinstance(state, (list, tuple)):
        v["initial_state"] = [complex(x) for x in state]
    return RunConfig(**v)


def parse_config(path: str | None, *, paper_defaults: bool = False, command: str = "closed",
                 overrides: dict | None = None) -> RunConfig:
    """Merge the --paper-defaults values, the config file and flag overrides, then validate."""
    values = dict(REFERENCE_DEFAULTS) if paper_defaults else {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            given = read_config_text(fh.read(), path)
        if "gap_calibrate_to" in given:
            values.pop("gap", None)
        if "gap" in given:
            values.pop("gap_calibrate_to", None)
        values.update(given)
    values.update(overrides or {})
    return build_config(values, command)


# --------------------------------------------------------------------------
# Output helpers


def _fmt(x) -> str:
    return format(float(x), ".12g")


def _literal(x) -> str:
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_literal(y) for y in x) + "]"
    return repr(x)


class _Outputs:
    """Tracks written files so a failed run can remove them."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.paths = []

    def path(self, name: str) -> str:
        p = os.path.join(self.out_dir, name)
        self.paths.append(p)
        return p

    def csv(self, name: str, header: tuple, rows) -> str:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        return p

    def cleanup(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def _rate_tag(g: float) -> str:
    return "g" + format(g, ".6g")


def write_manifest(out: _Outputs, cfg: RunConfig, command: str, schedule: drive.PulseSchedule) -> str:
    lines = ["# resolved parameters; re-run with --config " + MANIFEST]
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        if val is None or (f.name == "gamma0_tau" and not val):
            continue
        lines.append(f"{f.name} = {_literal(val)}")
    lines += [
        "",
        "[derived]",
        f"command = {command!r}",
        f"gap_resolved = {schedule.gap!r}",
        f"theta01 = {schedule.theta01_configured!r}",
        f"t_i = {schedule.t_i!r}",
        f"t_f = {schedule.t_f!r}",
        f"dt = {cfg.dt!r}",
        f"seed = {cfg.seed!r}",
    ]
    p = out.path(MANIFEST)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return p


# --------------------------------------------------------------------------
# Commands


def command_closed(cfg: RunConfig, out: _Outputs, workers: int = 1):
    sched = cfg.schedule()
    run = closed.run_closed(cfg.qubit_state(), sched, dt=cfg.dt, cadence=cfg.observer_cadence,
                            threshold=cfg.adiabaticity_threshold)
    rows = np.column_stack([run.t, run.populations])
    out.csv("closed_populations.csv", ("t_over_tau", "p0", "p1", "pe", "p2"), rows)
    return sched


def _density(cfg, sched, g):
    v = np.zeros(4, dtype=complex)
    v[:2] = cfg.qubit_state()
    ctl = propagate.StepControl.for_schedule(sched, dt=cfg.dt, cadence=cfg.observer_cadence)
    return propagate.evolve_density(np.outer(v, v.conj()), g, sched, ctl)


def command_lindblad(cfg: RunConfig, out: _Outputs, workers: int = 1):
    sched = cfg.schedule()
    for g in cfg.gamma0_tau:
        tr = _density(cfg, sched, g)
        rows = np.column_stack([tr.t, tr.populations])
        out.csv(f"lindblad_{_rate_tag(g)}.csv", ("t_over_tau", "p0", "p1", "pe", "p2"), rows)
    return sched


MCWF_HEADER = ("t_over_tau", "p0_rho", "p1_rho", "p0_nj", "p1_nj", "p0_mc", "p1_mc", "dev_nj", "dev_mc")


def command_mcwf(cfg: RunConfig, out: _Outputs, workers: int = 1):
    sched = cfg.schedule()
    v = np.zeros(4, dtype=complex)
    v[:2] = cfg.qubit_state()
    for g in cfg.gamma0_tau:
        rho = _density(cfg, sched, g)
        table = osy.NoJumpTable(sched, g, cfg.dt)
        idx = np.searchsorted(table.t, rho.t)
        nj = table.states_from(v, 0, idx)
        p_nj = np.abs(nj) ** 2 / np.sum(np.abs(nj) ** 2, axis=1, keepdims=True)
        jumps = osy.sample_many(table, v, cfg.n_trajectories, cfg.seed, workers=workers)
        p_mc = osy.ensemble_populations(table, v, jumps, idx)
        p_rho = rho.populations
        dev_nj = np.max(np.abs(p_nj[:, :2] - p_rho[:, :2]), axis=1)
        dev_mc = np.max(np.abs(p_mc[:, :2] - p_rho[:, :2]), axis=1)
        rows = np.column_stack([rho.t, p_rho[:, :2], p_nj[:, :2], p_mc[:, :2], dev_nj, dev_mc])
        out.csv(f"mcwf_{_rate_tag(g)}.csv", MCWF_HEADER, rows)
    return sched


def command_phases(cfg: RunConfig, out: _Outputs, workers: int = 1):
    sched = cfg.schedule()
    for g in cfg.gamma0_tau:
        led = osy.nojump_run(cfg.qubit_state(), sched, g, dt=cfg.dt, cadence=cfg.observer_cadence,
                             threshold=cfg.adiabaticity_threshold).ledger
        rows = np.column_stack([led.t, led.gamma1, led.gamma2, led.alpha, led.beta])
        out.csv(f"phases_{_rate_tag(g)}.csv", ("t_over_tau", "gamma1", "gamma2", "alpha", "beta"), rows)
    return sched


def command_fidelity(cfg: RunConfig, out: _Outputs, workers: int = 1):
    sched = cfg.schedule()
    reports = fidelity.fidelity_sweep(sched, cfg.gamma0_tau, "all", nodes=cfg.fidelity_nodes,
                                      n_traj=cfg.n_trajectories, seed=cfg.seed, dt=cfg.dt, workers=workers)
    out.csv("fidelity.csv", ("gamma0_tau", "f_nojump", "f_one_jump", "f_mc", "f_uhlmann"),
            [r.as_row() for r in reports])
    return sched


_DISPATCH = {
    "closed": command_closed,
    "lindblad": command_lindblad,
    "mcwf": command_mcwf,
    "phases": command_phases,
    "fidelity": command_fidelity,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tripod", description="Tripod double-STIRAP simulations to CSV.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--paper-defaults", action="store_true",
                   help="start from the reference Hadamard schedule (gamma0_tau still required)")
    p.add_argument("--seed", type=int, help="master seed; overrides the config")
    p.add_argument("--out-dir", default=".", help="directory for CSV files and the manifest")
    p.add_argument("--threads", type=int, default=1, help="worker processes for trajectories")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {} if args.seed is None else {"seed": args.seed}
    try:
        cfg = parse_config(args.config, paper_defaults=args.paper_defaults, command=args.command,
                           overrides=overrides)
    except (ConfigError, OSError) as exc:
        print(f"tripod: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("tripod: --threads must be >= 1", file=sys.stderr)
        return 2
    os.makedirs(args.out_dir, exist_ok=True)
    out = _Outputs(args.out_dir)
    try:
        sched = _DISPATCH[args.command](cfg, out, args.threads)
        write_manifest(out, cfg, args.command, sched)
    except Exception as exc:  # any module error aborts the run
        out.cleanup()
        print(f"tripod: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
