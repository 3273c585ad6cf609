import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripod import drive
from tripod.closed import geometric_phase


def test_envelope_values():
    p = drive.Pulse(2.0, 1.0, 1.0)
    assert drive.envelope(p, 0.5) == 0.0
    assert drive.envelope(p, 2.0) == pytest.approx(2.0, abs=1e-15)
    assert drive.envelope(p, 1.5) == pytest.approx(1.0, abs=1e-15)
    assert drive.envelope(p, 3.0) == 0.0


def test_pulse_validation():
    with pytest.raises(ValueError):
        drive.Pulse(-1.0, 0.0)
    with pytest.raises(ValueError):
        drive.Pulse(1.0, 0.0, width=0.0)


@given(st.floats(0.0, 5.0), st.floats(-1.0, 4.0))
def test_envelope_continuity(a_max, t):
    p = drive.Pulse(a_max, 0.0, 1.0)
    eps = 1e-9
    assert abs(drive.envelope(p, t + eps) - drive.envelope(p, t)) < 1e-7 * (1 + a_max)


def test_reference_schedule_layout(reference):
    assert reference.theta01_configured == pytest.approx(math.pi / 8, abs=1e-14)
    bp = reference.breakpoints()
    np.testing.assert_allclose(bp, [0, 1, 2, 3, math.pi, math.pi + 1, math.pi + 2, math.pi + 3], atol=1e-14)
    a2 = reference.pulses[2].a_max
    assert a2 == pytest.approx(math.hypot(reference.pulses[0].a_max, reference.pulses[1].a_max))
    # counterintuitive order in process 1, mirrored in process 2
    assert reference.pulses[2].t_start < reference.pulses[0].t_start
    assert reference.pulses[5].t_start > reference.pulses[3].t_start


def test_sample_before_and_between(reference):
    s = drive.sample(reference, -0.0)
    assert (s.a0, s.a1, s.a2) == (0.0, 0.0, 0.0)
    assert s.theta_h == 0.0
    assert s.theta01 == pytest.approx(math.pi / 8)
    gap = drive.sample(reference, 3.05)
    assert gap.theta_h == pytest.approx(math.pi / 2, abs=1e-14)
    assert drive.sin2_theta_h(reference, reference.t_f) == pytest.approx(0.0, abs=1e-14)


def test_held_limit_matches_approach(reference):
    # sin^2 theta_H just before the end of process 1 tends to the held value
    assert drive.sin2_theta_h(reference, 3.0 - 1e-6) == pytest.approx(1.0, abs=1e-9)


def test_theta01_constant_where_defined(reference):
    t = np.linspace(0, reference.t_f, 20001)
    s = drive.sample(reference, t)
    on = s.a1 > 0
    assert np.max(np.abs(np.arctan(s.a0[on] / s.a1[on]) - reference.theta01_configured)) < 1e-12
    assert np.all((s.theta_h >= 0) & (s.theta_h <= math.pi / 2 + 1e-15))


def test_peak_overlap_theta01(reference):
    s = drive.sample(reference, 2.0)
    assert s.theta01 == pytest.approx(math.pi / 8, abs=1e-14)


def test_schedule_rejects_unequal_timing(reference):
    p = list(reference.pulses)
    p[1] = drive.Pulse(p[1].a_max, p[1].t_start + 0.1)
    with pytest.raises(ValueError):
        drive.PulseSchedule(tuple(p), reference.phi01, 1.0, 1.0, reference.gap, 0.0, reference.t_f)


def test_calibrate_gap_pi(reference):
    gap = drive.calibrate_gap(reference, -math.pi)
    assert abs(gap - math.pi) < 0.25 * math.pi
    assert geometric_phase(reference.with_gap(gap)) == pytest.approx(-math.pi, abs=1e-6)
    again = drive.calibrate_gap(reference.with_gap(gap), -math.pi)
    assert abs(again - gap) < 1e-9


def test_calibrate_gap_monotone(reference):
    assert drive.calibrate_gap(reference, -2 * math.pi) > drive.calibrate_gap(reference, -math.pi)


def test_calibrate_gap_constant_window():
    # only A0/A1 pulses: sin^2 theta_H = 1 wherever the drive is on
    s = drive.PulseSchedule.double_stirap(10.0, 10.0, 0.0, intra_delay=0.0, gap=5.0)
    # with no channel-2 drive the phase grows by phi2_rate per unit time from t = 0
    g = geometric_phase(s)
    assert g == pytest.approx(-s.t_f, abs=1e-12)


def test_calibrate_gap_rejects_bad_targets(reference):
    with pytest.raises(ValueError):
        drive.calibrate_gap(reference, 0.5)
    with pytest.raises(ValueError):
        drive.calibrate_gap(reference, -0.1)  # needs overlapping processes


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 6.0))
def test_phase_additivity(split):
    s = drive.PulseSchedule.reference()
    whole = geometric_phase(s)
    parts = geometric_phase(s, 0.0, split) + geometric_phase(s, split, s.t_f)
    assert abs(whole - parts) < 1e-12


def test_cumulative_integral_matches_integrate(reference):
    t = np.array([0.0, 0.7, 1.0, 2.5, reference.t_f])
    run = drive.cumulative_integral(reference, lambda s: s.rms, t)
    direct = [drive.integrate(reference, lambda s: s.rms, 0.0, x) for x in t]
    np.testing.assert_allclose(run, direct, rtol=1e-13, atol=1e-10)
