"""Pulse/switch scheduling and shot-level simulation.

A schedule is a time-ordered list of mirror switch commands and laser
pulse events on a common clock (us).  Simulation evolves each ion's
qubit through every pulse: the rotation angle accumulated by ion i is

    theta_i = (pi / tau_peak) * D * integral I_i(t) dt over the pulse,

where D is the shot's slow drift factor and I_i(t) the relative beam
intensity at the ion while the mirror follows its trajectory.  While the
beam is parked the integrand is constant and the integral is closed
form; only pulse segments overlapping a mirror transition are sampled,
midpoint rule with a 10 ns step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from . import rng
from .exceptions import ConfigError, ScanRangeError, ScheduleError
from .mems import MirrorTrajectory, SwitchTiming
from .optics import AddressingBeam, IonChain, gaussian_profile
from .qmath import PureState, rotation_gate
from .tomo import SpamModel, apply_spam

#: integration step for pulse segments that overlap a mirror transition (us)
DT_INTEGRATION_US = 0.01

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# gates and schedules


@dataclass(frozen=True)
class GateSpec:
    """Equatorial rotation request: azimuth `phase`, angle `angle` (rad)."""

    phase: float
    angle: float

    @classmethod
    def rx(cls, angle: float) -> "GateSpec":
        return cls(0.0, angle)

    @classmethod
    def ry(cls, angle: float) -> "GateSpec":
        return cls(math.pi / 2.0, angle)

    @classmethod
    def identity(cls) -> "GateSpec":
        return cls(0.0, 0.0)

    def normalized(self) -> "GateSpec":
        """Fold the angle into [0, 2pi); negative angles flip the axis."""
        phase, angle = self.phase, self.angle
        if angle < 0.0:
            phase += math.pi
            angle = -angle
        angle = angle % TWO_PI
        phase = phase % TWO_PI
        return GateSpec(phase, angle)

    def unitary(self) -> np.ndarray:
        return rotation_gate(self.phase, self.angle)


@dataclass(frozen=True)
class PulseEvent:
    """One laser pulse: [t_start, t_start + duration], fixed phase."""

    t_start_us: float
    duration_us: float
    phase: float
    amplitude_scale: float = 1.0

    def __post_init__(self):
        if self.duration_us < 0.0:
            raise ScheduleError(f"pulse duration {self.duration_us!r} is negative")
        if not 0.0 <= self.amplitude_scale <= 1.0:
            raise ScheduleError(
                f"amplitude scale {self.amplitude_scale!r} outside [0, 1]"
            )

    @property
    def t_end_us(self) -> float:
        return self.t_start_us + self.duration_us


@dataclass(frozen=True)
class MirrorCommand:
    """Retarget the beam to `target_site` starting at time t_us."""

    t_us: float
    target_site: int


@dataclass(frozen=True)
class Schedule:
    """Validated event list plus the switch timing it was built against."""

    pulses: tuple
    switches: tuple
    timing: SwitchTiming
    total_duration_us: float

    def __post_init__(self):
        pulses = tuple(self.pulses)
        switches = tuple(self.switches)
        for a, b in zip(pulses, pulses[1:]):
            if b.t_start_us < a.t_end_us - 1e-12:
                raise ScheduleError(
                    f"pulses overlap: one ends at {a.t_end_us}, next starts at {b.t_start_us}"
                )
        for a, b in zip(switches, switches[1:]):
            if b.t_us - a.t_us < self.timing.t_s_us - 1e-12:
                raise ScheduleError(
                    "switch commands closer than the settle time are not modelled"
                )
        end = 0.0
        for p in pulses:
            end = max(end, p.t_end_us)
        for s in switches:
            end = max(end, s.t_us + self.timing.t_s_us)
        if self.total_duration_us < end - 1e-9:
            raise ScheduleError(
                f"total duration {self.total_duration_us} ends before the last event ({end})"
            )
        object.__setattr__(self, "pulses", pulses)
        object.__setattr__(self, "switches", switches)

    def to_dict(self) -> dict:
        return {
            "pulses": [
                {
                    "t_start_us": p.t_start_us,
                    "duration_us": p.duration_us,
                    "phase": p.phase,
                    "amplitude_scale": p.amplitude_scale,
                }
                for p in self.pulses
            ],
            "switches": [
                {"t_us": s.t_us, "target_site": s.target_site} for s in self.switches
            ],
            "timing": {"t_m_us": self.timing.t_m_us, "t_s_us": self.timing.t_s_us},
            "total_duration_us": self.total_duration_us,
        }


def build_gate_schedule(gates, chain: IonChain, beam: AddressingBeam,
                        timing: SwitchTiming) -> Schedule:
    """Serial schedule for a list of (site, GateSpec) requests.

    Pulse duration is (angle / pi) * peak pi time, since an addressed ion
    sits at the beam centre.  Angles beyond 2 pi are kept as-is: the
    drive winds through the extra revolutions, so the pulse really is
    that long.  A retarget inserts a switch command and the next pulse
    waits the full settle time t_s; consecutive gates on the same site
    do not switch.  Identity requests (angle 0) emit nothing.
    """
    pulses = []
    switches = []
    t = 0.0
    current_site = None
    for site, gate in gates:
        if not 0 <= site < chain.count:
            raise ScheduleError(f"site {site} outside the chain")
        phase, angle = gate.phase, gate.angle
        if angle < 0.0:
            phase += math.pi
            angle = -angle
        if angle == 0.0:
            continue
        if site != current_site:
            switches.append(MirrorCommand(t, site))
            t += timing.t_s_us
            current_site = site
        duration = (angle / math.pi) * beam.peak_pi_time_us
        pulses.append(PulseEvent(t, duration, phase % TWO_PI))
        t += duration
    return Schedule(tuple(pulses), tuple(switches), timing, t)


# ---------------------------------------------------------------------------
# beam timeline


class SteeredBeam:
    """Beam centre as a function of time for one schedule run."""

    def __init__(self, waist_um, peak_pi_time_us, trajectories, initial_position):
        self.waist_um = float(waist_um)
        self.peak_pi_time_us = float(peak_pi_time_us)
        self.trajectories = tuple(trajectories)
        self.initial_position = np.asarray(initial_position, dtype=float)

    @classmethod
    def from_schedule(cls, schedule: Schedule, chain: IonChain,
                      beam: AddressingBeam, initial_position=None) -> "SteeredBeam":
        """Resolve switch targets to chain positions.

        With no explicit initial position the beam starts settled on the
        first switch target, so the leading switch is a no-op transition.
        """
        if initial_position is None:
            if schedule.switches:
                start = chain.position(schedule.switches[0].target_site)
            else:
                start = np.asarray(beam.center, dtype=float)
        else:
            start = np.asarray(initial_position, dtype=float)
        trajectories = []
        pos = start
        for cmd in schedule.switches:
            target = chain.position(cmd.target_site)
            trajectories.append(
                MirrorTrajectory(tuple(pos), tuple(target), cmd.t_us, schedule.timing)
            )
            pos = target
        return cls(beam.waist_um, beam.peak_pi_time_us, trajectories, start)

    def position_at(self, t_us):
        """Beam centre at time(s) t; vectorised."""
        t = np.asarray(t_us, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if not self.trajectories:
            out = np.broadcast_to(self.initial_position, t.shape + (2,)).copy()
        else:
            out = np.empty(t.shape + (2,), dtype=float)
            out[:] = self.trajectories[0].start
            for traj in self.trajectories:
                mask = t >= traj.switch_time_us
                if np.any(mask):
                    out[mask] = traj.position_at(t[mask])
        return out[0] if scalar else out

    def transition_windows(self):
        return [traj.transition_window() for traj in self.trajectories]


def pulse_intensity_time(beam: SteeredBeam, ion_position, floor: float,
                         pulse: PulseEvent, dt_us: float = DT_INTEGRATION_US) -> float:
    """integral of relative intensity at the ion over the pulse (us).

    Constant-position segments are closed form; segments inside a mirror
    transition window are midpoint-sampled with step <= dt_us.
    """
    a, b = pulse.t_start_us, pulse.t_end_us
    if b <= a:
        return 0.0
    ion = np.asarray(ion_position, dtype=float)
    cuts = {a, b}
    for lo, hi in beam.transition_windows():
        if hi > a and lo < b:
            cuts.add(min(max(lo, a), b))
            cuts.add(min(max(hi, a), b))
    edges = sorted(cuts)
    total = 0.0
    for u, v in zip(edges, edges[1:]):
        if v - u <= 0.0:
            continue
        mid = 0.5 * (u + v)
        moving = any(lo < mid < hi for lo, hi in beam.transition_windows())
        if moving:
            n = max(1, int(math.ceil((v - u) / dt_us)))
            h = (v - u) / n
            ts = u + (np.arange(n) + 0.5) * h
            d = np.linalg.norm(beam.position_at(ts) - ion, axis=-1)
            total += float(np.sum(gaussian_profile(d, beam.waist_um, floor))) * h
        else:
            d = float(np.linalg.norm(beam.position_at(mid) - ion))
            total += gaussian_profile(d, beam.waist_um, floor) * (v - u)
    return total


# ---------------------------------------------------------------------------
# slow drift


@dataclass(frozen=True)
class DriftModel:
    """Slow multiplicative Rabi-rate drift D = 1 + x.

    x follows a stationary Ornstein-Uhlenbeck process sampled once per
    shot (constant within a shot): std sigma_rel, exponential
    autocorrelation with the given time constant.
    """

    sigma_rel: float = 0.01
    correlation_time_us: float = 1.0e6

    def __post_init__(self):
        if self.sigma_rel < 0.0:
            raise ConfigError(f"sigma_rel {self.sigma_rel!r} is negative")
        if not self.correlation_time_us > 0.0:
            raise ConfigError("correlation time must be positive")


class DriftPath:
    """Sequential AR(1) realisation of the drift across a shot sequence.

    Innovations come from a counter-based stream keyed by
    (seed, experiment, "drift"), so the path depends only on the shot
    index, never on batching.
    """

    def __init__(self, drift, key: int):
        self.drift = drift
        self.key = key
        self._x_prev = None
        self._count = 0

    def next_block(self, n_shots: int, period_us: float) -> np.ndarray:
        """Drift factors for the next n shots, spaced period_us apart."""
        if n_shots <= 0:
            return np.empty(0)
        if self.drift is None or self.drift.sigma_rel == 0.0:
            self._count += n_shots
            return np.ones(n_shots)
        sigma = self.drift.sigma_rel
        alpha = math.exp(-period_us / self.drift.correlation_time_us)
        beta = sigma * math.sqrt(1.0 - alpha * alpha)
        z = rng.normals(self.key, self._count, n_shots)
        self._count += n_shots
        if self._x_prev is None:
            x0 = sigma * z[0]  # stationary start
            rest, _ = lfilter([beta], [1.0, -alpha], z[1:], zi=np.array([alpha * x0]))
            x = np.concatenate(([x0], rest))
        else:
            x, _ = lfilter(
                [beta], [1.0, -alpha], z, zi=np.array([alpha * self._x_prev])
            )
        self._x_prev = float(x[-1])
        return 1.0 + x


def sample_drift(drift: DriftModel, seed: int, shot_index: int,
                 period_us: float, experiment: str = "drift") -> float:
    """Drift factor of one shot; recomputes the path up to shot_index."""
    path = DriftPath(drift, rng.derive_key(seed, experiment, "drift"))
    return float(path.next_block(shot_index + 1, period_us)[-1])


# ---------------------------------------------------------------------------
# shot simulation


@dataclass(frozen=True)
class ShotResult:
    """Pre-measurement states plus the realised drift and pulse angles."""

    states: tuple
    drift_factor: float
    pulse_angles: tuple  # (n_pulses, n_ions) rad

    @property
    def bright_probabilities(self) -> tuple:
        return tuple(s.bright_probability for s in self.states)


def _resolve_floors(floors, n_ions: int, default: float):
    if floors is None:
        return np.full(n_ions, default, dtype=float)
    arr = np.asarray(floors, dtype=float)
    if arr.shape != (n_ions,):
        raise ConfigError(f"need one scatter floor per ion, got shape {arr.shape}")
    return arr


def rotation_angles(steered: SteeredBeam, chain: IonChain, schedule: Schedule,
                    floors, drift_factor: float = 1.0) -> np.ndarray:
    """(n_pulses, n_ions) rotation angles for one schedule run."""
    angles = np.zeros((len(schedule.pulses), chain.count))
    rate = math.pi / steered.peak_pi_time_us
    for j, pulse in enumerate(schedule.pulses):
        for i in range(chain.count):
            acc = pulse_intensity_time(steered, chain.position(i), floors[i], pulse)
            angles[j, i] = rate * drift_factor * pulse.amplitude_scale * acc
    return angles


def evolve_states(schedule: Schedule, angles: np.ndarray) -> tuple:
    """Apply every pulse's rotation, per ion, starting from |0>."""
    n_ions = angles.shape[1]
    states = []
    for i in range(n_ions):
        v = np.array([1.0 + 0.0j, 0.0j])
        for j, pulse in enumerate(schedule.pulses):
            v = rotation_gate(pulse.phase, angles[j, i]) @ v
        states.append(PureState(complex(v[0]), complex(v[1])))
    return tuple(states)


def simulate_shot(chain: IonChain, beam: AddressingBeam, schedule: Schedule,
                  drift, seed: int, shot_index: int = 0,
                  shot_period_us: float = None, floors=None,
                  initial_position=None, experiment: str = "shot") -> ShotResult:
    """One shot: all ions start in |0> and evolve through the schedule.

    The drift factor is the shot_index-th sample of the drift path for
    `experiment`; shot_period_us defaults to the schedule duration.
    """
    steered = SteeredBeam.from_schedule(schedule, chain, beam, initial_position)
    floors_arr = _resolve_floors(floors, chain.count, beam.scatter_floor)
    if drift is None:
        d = 1.0
    else:
        period = schedule.total_duration_us if shot_period_us is None else shot_period_us
        d = sample_drift(drift, seed, shot_index, period, experiment)
    angles = rotation_angles(steered, chain, schedule, floors_arr, d)
    states = evolve_states(schedule, angles)
    return ShotResult(states, d, tuple(map(tuple, angles.tolist())))


# ---------------------------------------------------------------------------
# Rabi-time scan (crosstalk experiment)


@dataclass(frozen=True)
class RabiScanResult:
    """Bright fractions vs pulse duration for every ion in the chain."""

    durations_us: np.ndarray
    bright: np.ndarray        # (n_points, n_ions)
    stderr: np.ndarray        # binomial standard error, same shape
    block_means: np.ndarray   # (n_points, n_blocks, n_ions)
    target_site: int
    shots: int
    relative_intensities: np.ndarray  # (n_ions,) at the settled alignment


def _check_grid(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ScanRangeError("scan grid must be a non-empty 1-d array")
    if np.any(~np.isfinite(arr)):
        raise ScanRangeError("scan grid contains non-finite values")
    return arr


def run_rabi_scan(chain: IonChain, beam: AddressingBeam, target_site: int,
                  durations_us, shots: int, spam: SpamModel,
                  drift, seed: int, timing: SwitchTiming = SwitchTiming(),
                  floors=None, shot_overhead_us: float = 1500.0,
                  experiment_id: str = "rabi", block_size: int = 100) -> RabiScanResult:
    """Scan the pulse duration on one site and record every ion's response.

    The drift path runs continuously across the whole scan on a shot
    clock of (schedule duration + overhead), so late points inherit the
    drift history of the earlier ones, as in a real data run.
    """
    durations = _check_grid(durations_us)
    if np.any(durations < 0.0):
        raise ScanRangeError("negative pulse duration in scan grid")
    if shots <= 0:
        raise ScanRangeError(f"shots {shots!r} must be positive")
    floors_arr = _resolve_floors(floors, chain.count, beam.scatter_floor)
    n_ions = chain.count
    detect_key = rng.derive_key(seed, experiment_id, "detect")
    drift_path = DriftPath(drift, rng.derive_key(seed, experiment_id, "drift"))
    rate = math.pi / beam.peak_pi_time_us

    n_blocks = max(1, shots // block_size)
    bright = np.empty((durations.size, n_ions))
    stderr = np.empty_like(bright)
    blocks = np.empty((durations.size, n_blocks, n_ions))
    rel_int = None
    for j, t in enumerate(durations):
        schedule = build_gate_schedule(
            [(target_site, GateSpec(0.0, math.pi * t / beam.peak_pi_time_us))],
            chain, beam, timing,
        )
        steered = SteeredBeam.from_schedule(schedule, chain, beam)
        if schedule.pulses:
            acc = np.array([
                pulse_intensity_time(steered, chain.position(i), floors_arr[i],
                                     schedule.pulses[0])
                for i in range(n_ions)
            ])
        else:
            acc = np.zeros(n_ions)
        if rel_int is None:
            target_pos = chain.position(target_site)
            rel_int = np.array([
                gaussian_profile(float(np.linalg.norm(chain.position(i) - target_pos)),
                                 beam.waist_um, floors_arr[i])
                for i in range(n_ions)
            ])
        d = drift_path.next_block(shots, schedule.total_duration_us + shot_overhead_us)
        theta = rate * np.multiply.outer(d, acc)          # (shots, n_ions)
        p_meas = apply_spam(np.sin(theta / 2.0) ** 2, spam)
        u = rng.uniforms(detect_key, (j * shots) * n_ions, shots * n_ions)
        hits = u.reshape(shots, n_ions) < p_meas
        frac = hits.mean(axis=0)
        bright[j] = frac
        stderr[j] = np.sqrt(frac * (1.0 - frac) / shots)
        usable = n_blocks * block_size
        if usable <= shots:
            blocks[j] = hits[:usable].reshape(n_blocks, block_size, n_ions).mean(axis=1)
        else:
            blocks[j] = frac
    return RabiScanResult(durations, bright, stderr, blocks, target_site, shots,
                          rel_int)


# ---------------------------------------------------------------------------
# switching-time scan


@dataclass(frozen=True)
class SwitchScanResult:
    """Bright fraction vs pulse offset around a beam switch."""

    offsets_us: np.ndarray
    bright: np.ndarray
    stderr: np.ndarray
    aligned_site: int
    pi_time_us: float
    switch_time_us: float
    sites: tuple              # the two beam targets (um)
    shots: int


def run_switching_scan(sites, aligned_site: int, offsets_us, pi_time_us: float,
                       timing: SwitchTiming, shots: int, spam: SpamModel,
                       seed: int, waist_um: float, floor: float = 0.0,
                       experiment_id: str = "switch") -> SwitchScanResult:
    """Offset-scan a probe pulse across a single beam switch.

    A single ion sits at sites[aligned_site]; the beam starts at
    sites[0], a switch command at the scan origin sends it to sites[1],
    and a pulse of the given pi time starts at each offset (offset 0 is
    the switch command).  No drift: the sequence is microseconds long.
    """
    offsets = _check_grid(offsets_us)
    if shots <= 0:
        raise ScanRangeError(f"shots {shots!r} must be positive")
    if aligned_site not in (0, 1):
        raise ScanRangeError("aligned_site must be 0 or 1")
    site_arr = [np.asarray(s, dtype=float) for s in sites]
    if len(site_arr) != 2:
        raise ConfigError("switching scan needs exactly two beam targets")
    chain = IonChain((tuple(site_arr[0]), tuple(site_arr[1])))
    ion_pos = site_arr[aligned_site]
    t0 = 1.0 + max(0.0, -float(offsets.min()))
    beam = AddressingBeam(tuple(site_arr[0]), waist_um, pi_time_us, 0.0)
    detect_key = rng.derive_key(seed, experiment_id, "detect")

    bright = np.empty(offsets.size)
    stderr = np.empty(offsets.size)
    for j, t in enumerate(offsets):
        pulse = PulseEvent(t0 + t, pi_time_us, 0.0)
        total = max(t0 + timing.t_s_us, pulse.t_end_us)
        schedule = Schedule((pulse,), (MirrorCommand(t0, 1),), timing, total)
        steered = SteeredBeam.from_schedule(schedule, chain, beam,
                                            initial_position=site_arr[0])
        acc = pulse_intensity_time(steered, ion_pos, floor, pulse)
        theta = math.pi * acc / pi_time_us
        p = apply_spam(math.sin(theta / 2.0) ** 2, spam)
        u = rng.uniforms(detect_key, j * shots, shots)
        frac = float(np.mean(u < p))
        bright[j] = frac
        stderr[j] = math.sqrt(frac * (1.0 - frac) / shots)
    return SwitchScanResult(offsets, bright, stderr, aligned_site, pi_time_us,
                            t0, (tuple(site_arr[0]), tuple(site_arr[1])), shots)


@dataclass(frozen=True)
class SwitchExtraction:
    """Switch-time readout from the pair of offset scans.

    The plateau edges are where each scan's full-pi plateau ends/starts:
    the last pulse start fully served before the move (t_m - tau_1) and
    the first start fully served after it (t_s).  Their spacing minus the
    probe pi time is the switching time, t_s - t_m.  Edges come from a
    least-squares fit of the response model because a direct threshold
    reading is biased by the flat top of sin^2 (see `raw_threshold_*`
    diagnostics for the naive values).
    """

    t_m_us: float
    t_s_us: float
    switching_time_us: float
    left_plateau_end_us: float
    right_plateau_start_us: float
    region_boundaries_us: tuple
    raw_threshold_left_end_us: float
    raw_threshold_right_start_us: float
    fit_rms: float


def _shape_tables(waist_um: float, travel_um: float, floor: float, n: int = 2001):
    u = np.linspace(0.0, 1.0, n)
    h = 0.5 * (1.0 - np.cos(np.pi * u))
    dep = gaussian_profile(travel_um * h, waist_um, floor)
    arr = gaussian_profile(travel_um * (1.0 - h), waist_um, floor)
    du = u[1] - u[0]

    def cum(values):
        c = np.concatenate(([0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * du)))
        return c

    return u, (dep, cum(dep)), (arr, cum(arr))


def _model_bright(offsets, pi_time, t_m, t_s, u_grid, profile, spam):
    """Noise-free measured bright fraction for one scan, switch at offset 0."""
    values, cumulative = profile
    delta = t_s - t_m
    a = offsets
    b = offsets + pi_time
    pre = np.clip(np.minimum(b, t_m) - a, 0.0, None) * values[0]
    post = np.clip(b - np.maximum(a, t_s), 0.0, None) * values[-1]
    u1 = np.clip((np.maximum(a, t_m) - t_m) / delta, 0.0, 1.0)
    u2 = np.clip((np.minimum(b, t_s) - t_m) / delta, 0.0, 1.0)
    u2 = np.maximum(u2, u1)
    mid = delta * (np.interp(u2, u_grid, cumulative) - np.interp(u1, u_grid, cumulative))
    theta = math.pi * (pre + post + mid) / pi_time
    return apply_spam(np.sin(theta / 2.0) ** 2, spam)


def _threshold_edge(offsets, bright, from_left: bool) -> float:
    thr = 0.98 * float(bright.max())
    above = bright >= thr
    if from_left:
        idx = 0
        while idx < above.size and above[idx]:
            idx += 1
        return float(offsets[idx - 1]) if idx > 0 else float("nan")
    idx = above.size - 1
    while idx >= 0 and above[idx]:
        idx -= 1
    return float(offsets[idx + 1]) if idx < above.size - 1 else float("nan")


def extract_switching_time(scan_departure: SwitchScanResult,
                           scan_arrival: SwitchScanResult,
                           spam: SpamModel, waist_um: float) -> SwitchExtraction:
    """Fit (t_m, t_s) to the two scans and read off the switching time.

    Both curves share the same mirror trajectory; the departure scan
    (ion at the start site) pins t_m and the arrival scan pins t_s.
    """
    if scan_departure.aligned_site != 0 or scan_arrival.aligned_site != 1:
        raise ScanRangeError(
            "expected the departure scan aligned to site 0 and arrival to site 1"
        )
    travel = float(
        np.linalg.norm(np.asarray(scan_departure.sites[1])
                       - np.asarray(scan_departure.sites[0]))
    )
    u_grid, dep_profile, arr_profile = _shape_tables(waist_um, travel, 0.0)

    def residuals(t_m, t_s):
        model_dep = _model_bright(scan_departure.offsets_us, scan_departure.pi_time_us,
                                  t_m, t_s, u_grid, dep_profile, spam)
        model_arr = _model_bright(scan_arrival.offsets_us, scan_arrival.pi_time_us,
                                  t_m, t_s, u_grid, arr_profile, spam)
        return np.concatenate([model_dep - scan_departure.bright,
                               model_arr - scan_arrival.bright])

    lo = float(min(scan_departure.offsets_us.min(), scan_arrival.offsets_us.min()))
    hi = float(max(scan_departure.offsets_us.max(), scan_arrival.offsets_us.max()))

    def sse(params):
        t_m, delta = params
        if delta <= 1e-4 or not (lo - 1.0 <= t_m <= hi + 1.0):
            return 1e9
        r = residuals(t_m, t_m + delta)
        return float(r @ r)

    best = None
    for t_m in np.arange(lo, hi, 0.1):
        for delta in np.arange(0.05, 3.05, 0.1):
            v = sse((t_m, delta))
            if best is None or v < best[0]:
                best = (v, t_m, delta)
    fit = minimize(sse, x0=np.array([best[1], best[2]]), method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000})
    t_m_hat, delta_hat = float(fit.x[0]), float(fit.x[1])
    t_s_hat = t_m_hat + delta_hat
    tau1 = scan_departure.pi_time_us
    n_pts = scan_departure.offsets_us.size + scan_arrival.offsets_us.size
    return SwitchExtraction(
        t_m_us=t_m_hat,
        t_s_us=t_s_hat,
        switching_time_us=(t_s_hat - (t_m_hat - tau1)) - tau1,
        left_plateau_end_us=t_m_hat - tau1,
        right_plateau_start_us=t_s_hat,
        region_boundaries_us=(t_m_hat - tau1, t_s_hat - tau1, t_m_hat, t_s_hat),
        raw_threshold_left_end_us=_threshold_edge(
            scan_departure.offsets_us, scan_departure.bright, True),
        raw_threshold_right_start_us=_threshold_edge(
            scan_arrival.offsets_us, scan_arrival.bright, False),
        fit_rms=math.sqrt(sse(fit.x) / n_pts),
    )
