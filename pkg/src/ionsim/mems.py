"""MEMS mirror actuation: voltage-to-tilt, calibration, switch trajectory.

The mirror pair is driven open loop between precomputed voltage sets.
A switch command issued at t0 leaves the beam in place until t0 + t_m
(mechanical response delay), moves it along the straight line between
the two targets, and has it fully settled from t0 + t_s on.  The shape
in between is a raised cosine: continuous, monotone, symmetric about
the midpoint, and flat at both ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, UnreachableTargetError, VoltageRangeError
from .optics import IonChain, SteeringGeometry, displacement_from_tilts, tilts_for_target

#: default full-scale drive voltage (V)
DEFAULT_V_MAX = 200.0


@dataclass(frozen=True)
class VoltageSet:
    """Per-axis drive voltages (V) for one beam target."""

    v_x: float
    v_y: float

    def __post_init__(self):
        for v in (self.v_x, self.v_y):
            if not 0.0 <= v:
                raise VoltageRangeError(f"voltage {v!r} is negative")


@dataclass(frozen=True)
class SwitchTiming:
    """Mechanical response delay t_m and settle time t_s, both from t0 (us)."""

    t_m_us: float = 0.9
    t_s_us: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.t_m_us < self.t_s_us:
            raise ConfigError(
                f"need 0 <= t_m < t_s, got t_m={self.t_m_us!r} t_s={self.t_s_us!r}"
            )


def tilt_from_voltage(
    voltage: float, geometry: SteeringGeometry, v_max: float = DEFAULT_V_MAX
) -> float:
    """Quadratic electrostatic response theta = tilt_gain * v^2 (rad)."""
    if not 0.0 <= voltage <= v_max:
        raise VoltageRangeError(f"voltage {voltage!r} outside [0, {v_max}]")
    return geometry.tilt_gain_rad_per_v2 * voltage * voltage


def voltage_for_tilt(
    tilt_rad: float, geometry: SteeringGeometry, v_max: float = DEFAULT_V_MAX
) -> float:
    """Drive voltage producing a requested tilt; single-sided actuation."""
    if tilt_rad < 0.0:
        raise UnreachableTargetError(
            f"tilt {tilt_rad!r} rad needs a negative drive; actuation is single sided"
        )
    v = math.sqrt(tilt_rad / geometry.tilt_gain_rad_per_v2)
    if v > v_max * (1.0 + 1e-12):
        raise UnreachableTargetError(
            f"tilt {tilt_rad!r} rad needs {v:.1f} V, above v_max {v_max} V"
        )
    return min(v, v_max)


def calibrate_voltage_sets(
    chain: IonChain, geometry: SteeringGeometry, v_max: float = DEFAULT_V_MAX
) -> list:
    """One VoltageSet per ion, steering the beam onto that ion.

    Round-trips each set through the forward model and insists the beam
    lands within 1e-6 um of the ion; anything else is a calibration bug.
    """
    sets = []
    for site in range(chain.count):
        target = chain.position(site)
        theta_x, theta_y = tilts_for_target(target, geometry)
        vset = VoltageSet(
            voltage_for_tilt(theta_x, geometry, v_max),
            voltage_for_tilt(theta_y, geometry, v_max),
        )
        back = displacement_from_tilts(
            tilt_from_voltage(vset.v_x, geometry, v_max),
            tilt_from_voltage(vset.v_y, geometry, v_max),
            geometry,
        )
        err = float(np.linalg.norm(back - target))
        if err > 1e-6:
            raise UnreachableTargetError(
                f"calibration for site {site} misses by {err:.3e} um"
            )
        sets.append(vset)
    return sets


def effective_switch_time(timing: SwitchTiming) -> float:
    """t_s - t_m: the dead time a pulse sequence pays per beam move (us).

    This is the analytic value the switching-scan extraction recovers
    under the trajectory model in this module (plateau-edge spacing of
    the two scan curves minus the probe pi time).
    """
    return timing.t_s_us - timing.t_m_us


@dataclass(frozen=True)
class MirrorTrajectory:
    """Beam-centre path for one switch command issued at switch_time_us."""

    start: tuple
    end: tuple
    switch_time_us: float
    timing: SwitchTiming

    def __post_init__(self):
        s = np.asarray(self.start, dtype=float)
        e = np.asarray(self.end, dtype=float)
        if s.shape != (2,) or e.shape != (2,):
            raise ConfigError("trajectory endpoints must be 2-vectors (um)")
        object.__setattr__(self, "start", (float(s[0]), float(s[1])))
        object.__setattr__(self, "end", (float(e[0]), float(e[1])))

    def position_at(self, t_us):
        """Beam centre at time t (vectorised): start for t <= t0 + t_m,
        end for t >= t0 + t_s, raised cosine in between."""
        t = np.asarray(t_us, dtype=float)
        p1 = np.asarray(self.start)
        p2 = np.asarray(self.end)
        u = (t - self.switch_time_us - self.timing.t_m_us) / (
            self.timing.t_s_us - self.timing.t_m_us
        )
        u = np.clip(u, 0.0, 1.0)
        frac = 0.5 * (1.0 - np.cos(np.pi * u))
        pos = p1[..., :] + np.multiply.outer(frac, p2 - p1)
        return pos

    def transition_window(self) -> tuple:
        """(t_lo, t_hi) outside which the position is constant."""
        return (
            self.switch_time_us + self.timing.t_m_us,
            self.switch_time_us + self.timing.t_s_us,
        )
