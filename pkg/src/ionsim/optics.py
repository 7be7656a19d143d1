"""Gaussian addressing beam, steering geometry, and closed-form estimators.

Distances are micrometres in the ion plane, tilts are radians at the
mirror, times are microseconds.  The beam intensity profile is a
fundamental Gaussian with 1/e^2 radius ``waist_um``; a constant scatter
floor models light delivered far from the beam centre by optical
imperfections, and the two never add: the profile is
max(exp(-2 d^2 / w0^2), scatter_floor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    ConfigError,
    InversionBranchError,
    SmallAngleError,
    WaistEstimateError,
)

#: largest mirror tilt (rad) the linearised steering model accepts
SMALL_ANGLE_MAX_RAD = 0.05


@dataclass(frozen=True)
class IonChain:
    """Static ion positions in the plane addressed by the beam (um)."""

    positions: tuple

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ConfigError("chain positions must be an (n, 2) array")
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if np.linalg.norm(pos[i] - pos[j]) == 0.0:
                    raise ConfigError(f"ions {i} and {j} share a position")
        object.__setattr__(self, "positions", tuple(map(tuple, pos.tolist())))

    @classmethod
    def linear(cls, count: int, spacing_um: float, origin=(0.0, 0.0)) -> "IonChain":
        if count < 1 or spacing_um <= 0.0:
            raise ConfigError("need count >= 1 and positive spacing")
        x0, y0 = origin
        return cls(tuple((x0 + i * spacing_um, y0) for i in range(count)))

    @property
    def count(self) -> int:
        return len(self.positions)

    def position(self, site: int) -> np.ndarray:
        return np.asarray(self.positions[site], dtype=float)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class AddressingBeam:
    """Gaussian beam parameters at one pointing.

    peak_pi_time_us is the pi time of an ion sitting exactly at the beam
    centre; everywhere else the local pi time scales inversely with the
    relative intensity.
    """

    center: tuple
    waist_um: float
    peak_pi_time_us: float
    scatter_floor: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.shape != (2,):
            raise ConfigError("beam center must be a 2-vector (um)")
        if not self.waist_um > 0.0:
            raise ConfigError(f"waist {self.waist_um!r} must be positive")
        if not self.peak_pi_time_us > 0.0:
            raise ConfigError(f"peak pi time {self.peak_pi_time_us!r} must be positive")
        if not 0.0 <= self.scatter_floor < 1.0:
            raise ConfigError(f"scatter floor {self.scatter_floor!r} outside [0, 1)")
        object.__setattr__(self, "center", (float(c[0]), float(c[1])))

    def at(self, center) -> "AddressingBeam":
        """Same beam re-pointed to a new centre."""
        return replace(self, center=tuple(np.asarray(center, dtype=float)))


def gaussian_profile(distance_um, waist_um: float, scatter_floor: float = 0.0):
    """max(exp(-2 d^2 / w0^2), floor); vectorised over distance."""
    d = np.asarray(distance_um, dtype=float)
    g = np.exp(-2.0 * d * d / (waist_um * waist_um))
    out = np.maximum(g, scatter_floor)
    return float(out) if out.ndim == 0 else out


def relative_intensity(beam: AddressingBeam, point) -> float:
    """Relative intensity (peak = 1) seen at `point` (um)."""
    p = np.asarray(point, dtype=float)
    d = float(np.linalg.norm(p - np.asarray(beam.center)))
    return float(gaussian_profile(d, beam.waist_um, beam.scatter_floor))


def local_pi_time(beam: AddressingBeam, point) -> float:
    """Pi time at `point`: peak pi time divided by the relative intensity.

    The scatter floor bounds this from above; with floor 0 the value
    diverges as the point leaves the beam, which is the physical limit.
    """
    return beam.peak_pi_time_us / relative_intensity(beam, point)


def crosstalk_from_populations(
    population: float, duration_us: float, pi_time_target_us: float
) -> float:
    """Invert a neighbour's bright population into a Rabi-rate ratio.

    A neighbour driven at relative Rabi rate eps while the target is
    driven for duration T accumulates angle eps * pi * T / tau_pi and
    P = sin^2(eps * pi * T / (2 tau_pi)).  Inversion keeps the first
    arcsin branch only; population at or above 1 means the implied angle
    reached pi/2 and the branch is ambiguous.
    """
    if duration_us <= 0.0 or pi_time_target_us <= 0.0:
        raise ConfigError("duration and pi time must be positive")
    if population < 0.0:
        raise InversionBranchError(f"population {population!r} below 0")
    if population >= 1.0:
        raise InversionBranchError(
            f"population {population!r} saturates the first inversion branch"
        )
    return (
        2.0
        * pi_time_target_us
        / (math.pi * duration_us)
        * math.asin(math.sqrt(population))
    )


@dataclass(frozen=True)
class WaistEstimate:
    """Waist from a two-sided pi-time comparison, with the side spread."""

    waist_um: float
    spread_um: float
    side_estimates_um: tuple


def _one_side_waist(tau_side: float, tau_center: float, half_distance: float) -> float:
    if tau_side <= tau_center:
        raise WaistEstimateError(
            f"side pi time {tau_side!r} must exceed centre pi time {tau_center!r}"
        )
    return half_distance * math.sqrt(2.0 / math.log(tau_side / tau_center))


def estimate_waist_full(
    tau_a_us: float, tau_b_us: float, tau_center_us: float, spacing_um: float
) -> WaistEstimate:
    """Waist from pi times of two ions at +-spacing/2 and one at the centre.

    With the beam parked midway between two ions separated by
    `spacing_um`, each side ion sits at d = spacing/2 and
    tau_side / tau_center = exp(2 d^2 / w0^2), so
    w0 = (spacing / 2) * sqrt(2 / ln(tau_side / tau_center)).
    """
    if tau_center_us <= 0.0 or spacing_um <= 0.0:
        raise ConfigError("centre pi time and spacing must be positive")
    half = spacing_um / 2.0
    wa = _one_side_waist(tau_a_us, tau_center_us, half)
    wb = _one_side_waist(tau_b_us, tau_center_us, half)
    return WaistEstimate(
        waist_um=0.5 * (wa + wb),
        spread_um=0.5 * abs(wa - wb),
        side_estimates_um=(wa, wb),
    )


def estimate_waist(
    tau_a_us: float, tau_b_us: float, tau_center_us: float, spacing_um: float
) -> float:
    """Mean of the two one-sided waist estimates (um)."""
    return estimate_waist_full(tau_a_us, tau_b_us, tau_center_us, spacing_um).waist_um


@dataclass(frozen=True)
class SteeringGeometry:
    """Fourier-relay steering constants.

    A mirror tilt theta displaces the focus by 2 * theta * f / M in the
    ion plane; f is the relay focal length (mm) and M the demagnification
    from the mirror plane.  tilt_gain converts squared drive voltage to
    tilt: theta = tilt_gain * v^2.
    """

    focal_length_mm: float = 200.0
    demagnification: float = 54.0
    tilt_gain_rad_per_v2: float = 2.5e-8

    def __post_init__(self):
        if not self.focal_length_mm > 0.0:
            raise ConfigError("focal length must be positive")
        if not self.demagnification >= 1.0:
            raise ConfigError("demagnification must be >= 1")
        if not self.tilt_gain_rad_per_v2 > 0.0:
            raise ConfigError("tilt gain must be positive")


def _check_small_angle(theta: float, what: str) -> None:
    if abs(theta) >= SMALL_ANGLE_MAX_RAD:
        raise SmallAngleError(
            f"{what} {theta!r} rad outside the small-angle domain"
            f" (|theta| < {SMALL_ANGLE_MAX_RAD})"
        )


def displacement_from_tilts(
    theta_x: float, theta_y: float, geometry: SteeringGeometry
) -> np.ndarray:
    """Focus displacement (um) for mirror tilts (rad), linear model."""
    _check_small_angle(theta_x, "tilt_x")
    _check_small_angle(theta_y, "tilt_y")
    # f in mm -> displacement in um picks up a factor 1000
    scale = 2.0 * geometry.focal_length_mm * 1000.0 / geometry.demagnification
    return np.array([theta_x * scale, theta_y * scale], dtype=float)


def tilts_for_target(point_um, geometry: SteeringGeometry) -> tuple:
    """Exact inverse of displacement_from_tilts."""
    p = np.asarray(point_um, dtype=float)
    scale = 2.0 * geometry.focal_length_mm * 1000.0 / geometry.demagnification
    theta_x = float(p[0]) / scale
    theta_y = float(p[1]) / scale
    _check_small_angle(theta_x, "required tilt_x")
    _check_small_angle(theta_y, "required tilt_y")
    return theta_x, theta_y
