"""Mirror actuation model and switch trajectory."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ionsim.exceptions import ConfigError, UnreachableTargetError, VoltageRangeError
from ionsim.mems import (
    DEFAULT_V_MAX,
    MirrorTrajectory,
    SwitchTiming,
    VoltageSet,
    calibrate_voltage_sets,
    effective_switch_time,
    tilt_from_voltage,
    voltage_for_tilt,
)
from ionsim.optics import IonChain, SteeringGeometry

GEOM = SteeringGeometry()


def test_quadratic_voltage_response():
    assert tilt_from_voltage(0.0, GEOM) == 0.0
    assert tilt_from_voltage(200.0, GEOM) == pytest.approx(1.0e-3, rel=1e-12)
    assert tilt_from_voltage(100.0, GEOM) == pytest.approx(0.25e-3, rel=1e-12)


def test_voltage_bounds():
    with pytest.raises(VoltageRangeError):
        tilt_from_voltage(-1.0, GEOM)
    with pytest.raises(VoltageRangeError):
        tilt_from_voltage(200.5, GEOM)
    with pytest.raises(VoltageRangeError):
        VoltageSet(-0.1, 0.0)


@given(st.floats(min_value=0.0, max_value=DEFAULT_V_MAX))
def test_voltage_tilt_round_trip(v):
    assert voltage_for_tilt(tilt_from_voltage(v, GEOM), GEOM) == pytest.approx(
        v, abs=1e-9
    )


def test_single_sided_actuation():
    with pytest.raises(UnreachableTargetError):
        voltage_for_tilt(-1.0e-6, GEOM)


def test_tilt_above_range_rejected():
    with pytest.raises(UnreachableTargetError):
        voltage_for_tilt(1.1e-3, GEOM)


def test_calibration_lands_on_each_ion():
    chain = IonChain.linear(2, 7.4)
    sets = calibrate_voltage_sets(chain, GEOM)
    assert len(sets) == 2
    # first ion is at the origin: zero drive
    assert sets[0].v_x == 0.0 and sets[0].v_y == 0.0
    # second needs a real but in-range x drive
    assert 0.0 < sets[1].v_x <= DEFAULT_V_MAX
    assert sets[1].v_y == 0.0


def test_calibration_rejects_unreachable_chain():
    chain = IonChain.linear(3, 7.4)  # 14.8 um exceeds the 7.407 um throw
    with pytest.raises(UnreachableTargetError):
        calibrate_voltage_sets(chain, GEOM)


def test_switch_timing_validation():
    with pytest.raises(ConfigError):
        SwitchTiming(2.0, 0.9)
    with pytest.raises(ConfigError):
        SwitchTiming(-0.1, 2.0)
    assert effective_switch_time(SwitchTiming(0.9, 2.0)) == pytest.approx(1.1)


class TestTrajectory:
    timing = SwitchTiming(0.9, 2.0)

    def make(self, t0=5.0):
        return MirrorTrajectory((0.0, 0.0), (7.4, 0.0), t0, self.timing)

    def test_flat_before_and_after(self):
        traj = self.make()
        assert traj.position_at(0.0) == pytest.approx([0.0, 0.0])
        assert traj.position_at(5.9) == pytest.approx([0.0, 0.0])
        assert traj.position_at(7.0) == pytest.approx([7.4, 0.0])
        assert traj.position_at(100.0) == pytest.approx([7.4, 0.0])

    def test_midpoint_halfway(self):
        traj = self.make()
        mid = 5.0 + 0.5 * (0.9 + 2.0)
        assert traj.position_at(mid)[0] == pytest.approx(3.7, abs=1e-12)

    def test_monotone_and_continuous(self):
        traj = self.make()
        t = np.linspace(4.5, 7.5, 4001)
        x = traj.position_at(t)[:, 0]
        assert np.all(np.diff(x) >= -1e-12)
        assert np.max(np.abs(np.diff(x))) < 0.02  # no jumps at the seams

    def test_raised_cosine_shape(self):
        traj = self.make(0.0)
        for u in (0.25, 0.5, 0.75):
            t = 0.9 + u * 1.1
            expected = 7.4 * 0.5 * (1.0 - math.cos(math.pi * u))
            assert traj.position_at(t)[0] == pytest.approx(expected, abs=1e-12)

    def test_transition_window(self):
        assert self.make(5.0).transition_window() == (5.9, 7.0)

    def test_vectorised_matches_scalar(self):
        traj = self.make()
        t = np.array([4.0, 6.0, 6.5, 8.0])
        batch = traj.position_at(t)
        for i, ti in enumerate(t):
            assert batch[i] == pytest.approx(traj.position_at(float(ti)))
