"""Schedules, beam timeline, integrator, drift, scan runners, extraction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionsim import rng
from ionsim.exceptions import ConfigError, ScanRangeError, ScheduleError
from ionsim.mems import SwitchTiming
from ionsim.optics import AddressingBeam, IonChain, gaussian_profile
from ionsim.qmath import PureState, rotation_gate
from ionsim.sequencer import (
    DriftModel,
    DriftPath,
    GateSpec,
    MirrorCommand,
    PulseEvent,
    Schedule,
    SteeredBeam,
    build_gate_schedule,
    evolve_states,
    extract_switching_time,
    pulse_intensity_time,
    rotation_angles,
    run_rabi_scan,
    run_switching_scan,
    sample_drift,
    simulate_shot,
)
from ionsim.tomo import SpamModel

TIMING = SwitchTiming(0.9, 2.0)
CHAIN = IonChain.linear(2, 7.4)
BEAM = AddressingBeam(tuple(CHAIN.position(0)), 3.3, 1.5)


def make_switch_schedule(pulse_start, pulse_len=1.5, t0=1.0):
    pulse = PulseEvent(pulse_start, pulse_len, 0.0)
    total = max(t0 + TIMING.t_s_us, pulse.t_end_us)
    return Schedule((pulse,), (MirrorCommand(t0, 1),), TIMING, total)


class TestScheduleValidation:
    def test_overlapping_pulses_rejected(self):
        with pytest.raises(ScheduleError):
            Schedule(
                (PulseEvent(0.0, 2.0, 0.0), PulseEvent(1.0, 1.0, 0.0)),
                (), TIMING, 5.0,
            )

    def test_switches_inside_settle_rejected(self):
        with pytest.raises(ScheduleError):
            Schedule(
                (), (MirrorCommand(0.0, 0), MirrorCommand(1.0, 1)), TIMING, 5.0,
            )

    def test_total_duration_covers_settle(self):
        with pytest.raises(ScheduleError):
            Schedule((), (MirrorCommand(0.0, 1),), TIMING, 1.0)

    def test_negative_duration_rejected(self):
        with pytest.raises(ScheduleError):
            PulseEvent(0.0, -1.0, 0.0)


class TestBuildGateSchedule:
    def test_serial_layout_with_switches(self):
        gates = [(0, GateSpec.rx(math.pi)), (1, GateSpec.ry(math.pi / 2.0))]
        sched = build_gate_schedule(gates, CHAIN, BEAM, TIMING)
        assert len(sched.switches) == 2
        assert len(sched.pulses) == 2
        # first switch, settle, pi pulse (1.5 us), switch, settle, half pulse
        assert sched.switches[0].t_us == 0.0
        assert sched.pulses[0].t_start_us == pytest.approx(2.0)
        assert sched.pulses[0].duration_us == pytest.approx(1.5)
        assert sched.switches[1].t_us == pytest.approx(3.5)
        assert sched.pulses[1].t_start_us == pytest.approx(5.5)
        assert sched.pulses[1].duration_us == pytest.approx(0.75)
        assert sched.total_duration_us == pytest.approx(6.25)

    def test_same_site_gates_share_alignment(self):
        gates = [(0, GateSpec.rx(1.0)), (0, GateSpec.rx(1.0))]
        sched = build_gate_schedule(gates, CHAIN, BEAM, TIMING)
        assert len(sched.switches) == 1

    def test_identity_emits_nothing(self):
        sched = build_gate_schedule([(0, GateSpec.identity())], CHAIN, BEAM, TIMING)
        assert sched.pulses == () and sched.switches == ()

    def test_long_rotations_keep_their_winding(self):
        # 10.5 full turns: duration must scale linearly, not fold mod 2 pi
        angle = 21.0 * math.pi
        sched = build_gate_schedule([(0, GateSpec.rx(angle))], CHAIN, BEAM, TIMING)
        assert sched.pulses[0].duration_us == pytest.approx(21.0 * 1.5)

    def test_negative_angle_flips_phase(self):
        sched = build_gate_schedule([(0, GateSpec.rx(-math.pi / 2.0))],
                                    CHAIN, BEAM, TIMING)
        assert sched.pulses[0].phase == pytest.approx(math.pi)
        assert sched.pulses[0].duration_us == pytest.approx(0.75)

    def test_site_out_of_range(self):
        with pytest.raises(ScheduleError):
            build_gate_schedule([(2, GateSpec.rx(1.0))], CHAIN, BEAM, TIMING)


class TestSteeredBeam:
    def test_initial_position_defaults_to_first_target(self):
        sched = build_gate_schedule([(1, GateSpec.rx(1.0))], CHAIN, BEAM, TIMING)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM)
        assert steered.position_at(0.0) == pytest.approx(CHAIN.position(1))

    def test_two_switch_timeline(self):
        gates = [(0, GateSpec.rx(math.pi)), (1, GateSpec.rx(math.pi))]
        sched = build_gate_schedule(gates, CHAIN, BEAM, TIMING)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM)
        # parked on ion 0 through its pulse
        assert steered.position_at(3.0) == pytest.approx(CHAIN.position(0))
        # fully switched once settled
        assert steered.position_at(5.5) == pytest.approx(CHAIN.position(1))
        windows = steered.transition_windows()
        assert windows[1] == (pytest.approx(4.4), pytest.approx(5.5))

    def test_explicit_initial_position(self):
        sched = make_switch_schedule(2.5)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM,
                                            initial_position=(0.0, 0.0))
        assert steered.position_at(0.5) == pytest.approx([0.0, 0.0])
        assert steered.position_at(50.0) == pytest.approx(CHAIN.position(1))


class TestIntensityIntegral:
    def test_parked_segment_is_closed_form(self):
        # pulse entirely before the transition: exact product, not sampled
        sched = make_switch_schedule(0.0, pulse_len=1.9, t0=0.0)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM,
                                            initial_position=(0.0, 0.0))
        acc = pulse_intensity_time(steered, CHAIN.position(0), 0.0,
                                   PulseEvent(0.0, 0.9, 0.0))
        assert acc == pytest.approx(0.9, rel=1e-12)
        off = gaussian_profile(7.4, 3.3)
        acc_far = pulse_intensity_time(steered, CHAIN.position(1), 0.0,
                                       PulseEvent(0.0, 0.9, 0.0))
        assert acc_far == pytest.approx(0.9 * off, rel=1e-12)

    def test_settled_segment_is_closed_form(self):
        sched = make_switch_schedule(5.0, pulse_len=2.0, t0=0.0)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM,
                                            initial_position=(0.0, 0.0))
        acc = pulse_intensity_time(steered, CHAIN.position(1), 0.0,
                                   PulseEvent(5.0, 2.0, 0.0))
        assert acc == pytest.approx(2.0, rel=1e-12)

    def test_split_pulse_equals_sum_of_parts(self):
        sched = make_switch_schedule(0.0, t0=1.0)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM,
                                            initial_position=(0.0, 0.0))
        ion = CHAIN.position(0)
        whole = pulse_intensity_time(steered, ion, 0.0, PulseEvent(0.5, 4.0, 0.0))
        parts = sum(
            pulse_intensity_time(steered, ion, 0.0, PulseEvent(a, 0.5, 0.0))
            for a in np.arange(0.5, 4.5, 0.5)
        )
        assert whole == pytest.approx(parts, rel=1e-9)

    def test_moving_segment_against_dense_quadrature(self):
        sched = make_switch_schedule(0.0, t0=0.0)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM,
                                            initial_position=(0.0, 0.0))
        ion = CHAIN.position(1)
        pulse = PulseEvent(0.5, 2.0, 0.0)  # covers the whole move
        acc = pulse_intensity_time(steered, ion, 0.0, pulse)
        ts = np.linspace(0.5, 2.5, 2_000_001)
        d = np.linalg.norm(steered.position_at(ts) - ion, axis=-1)
        dense = np.trapezoid(gaussian_profile(d, 3.3, 0.0), ts)
        assert acc == pytest.approx(float(dense), abs=2e-6)

    def test_floor_raises_far_field_integral(self):
        sched = make_switch_schedule(0.0, t0=0.0)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM,
                                            initial_position=(0.0, 0.0))
        acc = pulse_intensity_time(steered, CHAIN.position(1), 1.3e-4,
                                   PulseEvent(0.0, 0.5, 0.0))
        assert acc == pytest.approx(0.5 * 1.3e-4, rel=1e-12)

    def test_zero_length_pulse(self):
        sched = make_switch_schedule(0.0, t0=0.0)
        steered = SteeredBeam.from_schedule(sched, CHAIN, BEAM,
                                            initial_position=(0.0, 0.0))
        assert pulse_intensity_time(steered, CHAIN.position(0), 0.0,
                                    PulseEvent(1.0, 0.0, 0.0)) == 0.0


class TestDrift:
    def test_zero_sigma_is_exactly_one(self):
        path = DriftPath(DriftModel(0.0, 1e6), rng.derive_key(1, "d"))
        assert np.all(path.next_block(100, 10.0) == 1.0)

    def test_block_split_is_exact(self):
        key = rng.derive_key(3, "drift-split")
        one = DriftPath(DriftModel(0.02, 500.0), key).next_block(200, 10.0)
        path = DriftPath(DriftModel(0.02, 500.0), key)
        two = np.concatenate([path.next_block(80, 10.0),
                              path.next_block(120, 10.0)])
        assert np.array_equal(one, two)

    def test_stationary_statistics(self):
        # near-independent sampling: period 10x the correlation time
        sigma = 0.05
        path = DriftPath(DriftModel(sigma, 10.0), rng.derive_key(9, "stat"))
        x = path.next_block(200_000, 100.0) - 1.0
        assert np.mean(x) == pytest.approx(0.0, abs=3e-3)
        assert np.std(x) == pytest.approx(sigma, rel=0.02)

    def test_autocorrelation_matches_ar1(self):
        sigma, tau, period = 0.05, 200.0, 100.0
        alpha = math.exp(-period / tau)
        path = DriftPath(DriftModel(sigma, tau), rng.derive_key(11, "ac"))
        x = path.next_block(200_000, period) - 1.0
        rho = np.mean(x[1:] * x[:-1]) / np.var(x)
        assert rho == pytest.approx(alpha, abs=0.01)

    def test_sample_drift_reproduces_path(self):
        drift = DriftModel(0.03, 1e4)
        path = DriftPath(drift, rng.derive_key(5, "shot", "drift"))
        block = path.next_block(10, 50.0)
        assert sample_drift(drift, 5, 9, 50.0, "shot") == pytest.approx(
            float(block[9]), rel=1e-15
        )


class TestShotSimulation:
    def test_pi_pulse_transfers_fully(self):
        sched = build_gate_schedule([(0, GateSpec.rx(math.pi))], CHAIN, BEAM,
                                    TIMING)
        shot = simulate_shot(CHAIN, BEAM, sched, None, seed=0)
        p = shot.bright_probabilities
        assert p[0] == pytest.approx(1.0, abs=1e-9)
        assert p[1] < 1e-7  # leaked angle from the 4.3e-5 tail

    def test_evolution_matches_gate_product(self):
        sched = Schedule(
            (PulseEvent(0.0, 1.0, 0.0), PulseEvent(1.0, 1.0, math.pi / 2.0)),
            (), TIMING, 2.0,
        )
        angles = np.array([[0.7], [1.1]])
        state = evolve_states(sched, angles)[0]
        expected = rotation_gate(math.pi / 2.0, 1.1) @ rotation_gate(0.0, 0.7) @ \
            np.array([1.0, 0.0j])
        assert np.allclose(state.vector, expected, atol=1e-12)

    def test_amplitude_scale_scales_angle(self):
        pulse_full = PulseEvent(0.0, 1.5, 0.0)
        pulse_half = PulseEvent(0.0, 1.5, 0.0, amplitude_scale=0.5)
        sched_full = Schedule((pulse_full,), (), TIMING, 1.5)
        sched_half = Schedule((pulse_half,), (), TIMING, 1.5)
        steered = SteeredBeam.from_schedule(sched_full, CHAIN, BEAM)
        floors = np.zeros(2)
        a_full = rotation_angles(steered, CHAIN, sched_full, floors)
        a_half = rotation_angles(steered, CHAIN, sched_half, floors)
        assert a_half[0, 0] == pytest.approx(0.5 * a_full[0, 0], rel=1e-12)

    def test_drift_scales_rotation_angle(self):
        sched = build_gate_schedule([(0, GateSpec.rx(1.0))], CHAIN, BEAM, TIMING)
        shot = simulate_shot(CHAIN, BEAM, sched, DriftModel(0.05, 1e3), seed=21)
        assert shot.pulse_angles[0][0] == pytest.approx(
            shot.drift_factor * 1.0, rel=1e-9
        )

    def test_shot_determinism(self):
        sched = build_gate_schedule([(0, GateSpec.rx(1.0))], CHAIN, BEAM, TIMING)
        a = simulate_shot(CHAIN, BEAM, sched, DriftModel(), seed=4, shot_index=3)
        b = simulate_shot(CHAIN, BEAM, sched, DriftModel(), seed=4, shot_index=3)
        assert a.drift_factor == b.drift_factor
        assert a.bright_probabilities == b.bright_probabilities


class TestRabiScan:
    def test_half_pi_point_without_noise_sources(self):
        scan = run_rabi_scan(
            CHAIN, BEAM, 0, [0.75], shots=4000, spam=SpamModel.ideal(),
            drift=DriftModel(0.0, 1e6), seed=12, timing=TIMING,
            floors=(0.0, 0.0),
        )
        assert scan.bright[0, 0] == pytest.approx(0.5, abs=0.03)
        assert scan.bright[0, 1] == pytest.approx(0.0, abs=1e-3)

    def test_scan_is_deterministic_in_seed(self):
        kwargs = dict(shots=200, spam=SpamModel(), drift=DriftModel(),
                      timing=TIMING, floors=(2.9e-4, 1.3e-4))
        a = run_rabi_scan(CHAIN, BEAM, 0, [1.0, 2.0], seed=7, **kwargs)
        b = run_rabi_scan(CHAIN, BEAM, 0, [1.0, 2.0], seed=7, **kwargs)
        c = run_rabi_scan(CHAIN, BEAM, 0, [1.0, 2.0], seed=8, **kwargs)
        assert np.array_equal(a.bright, b.bright)
        assert not np.array_equal(a.bright, c.bright)

    def test_block_means_average_to_point_mean(self):
        scan = run_rabi_scan(
            CHAIN, BEAM, 0, [0.4, 0.9], shots=400, spam=SpamModel(),
            drift=DriftModel(), seed=3, timing=TIMING, floors=(0.0, 0.0),
            block_size=100,
        )
        assert scan.block_means.shape == (2, 4, 2)
        assert np.allclose(scan.block_means.mean(axis=1), scan.bright,
                           atol=1e-12)

    def test_grid_validation(self):
        with pytest.raises(ScanRangeError):
            run_rabi_scan(CHAIN, BEAM, 0, [], shots=10, spam=SpamModel(),
                          drift=None, seed=0)
        with pytest.raises(ScanRangeError):
            run_rabi_scan(CHAIN, BEAM, 0, [-1.0], shots=10, spam=SpamModel(),
                          drift=None, seed=0)
        with pytest.raises(ScanRangeError):
            run_rabi_scan(CHAIN, BEAM, 0, [1.0], shots=0, spam=SpamModel(),
                          drift=None, seed=0)


SITES = (tuple(CHAIN.position(0)), tuple(CHAIN.position(1)))


def run_both_switch_scans(shots=2000, seed=5, timing=TIMING, step=0.1):
    offsets = np.round(np.arange(-3.0, 4.0 + 1e-9, step), 9)
    dep = run_switching_scan(SITES, 0, offsets, 1.5, timing, shots,
                             SpamModel(), seed, 3.3, experiment_id="dep")
    arr = run_switching_scan(SITES, 1, offsets, 1.3, timing, shots,
                             SpamModel(), seed, 3.3, experiment_id="arr")
    return dep, arr


class TestSwitchingScan:
    def test_plateaus(self):
        dep, arr = run_both_switch_scans(shots=3000)
        # pulse fully before the move: full transfer on the departure ion
        early = dep.offsets_us <= (0.9 - 1.5) - 0.05
        assert np.all(dep.bright[early] > 0.97)
        # pulse fully after settling: full transfer on the arrival ion
        late = arr.offsets_us >= 2.0 + 0.05
        assert np.all(arr.bright[late] > 0.97)
        # and the complementary side is dark
        assert np.all(arr.bright[dep.offsets_us <= -1.0] < 0.02)

    def test_departure_curve_is_monotone_falling_through_the_move(self):
        dep, _ = run_both_switch_scans(shots=3000)
        sel = (dep.offsets_us >= -0.4) & (dep.offsets_us <= 1.8)
        b = dep.bright[sel]
        assert b[0] - b[-1] > 0.9

    def test_extraction_recovers_configured_timing(self):
        dep, arr = run_both_switch_scans(shots=2000)
        ext = extract_switching_time(dep, arr, SpamModel(), 3.3)
        assert ext.t_m_us == pytest.approx(0.9, abs=0.06)
        assert ext.t_s_us == pytest.approx(2.0, abs=0.06)
        assert ext.switching_time_us == pytest.approx(1.1, abs=0.1)
        lo, hi = ext.region_boundaries_us[0], ext.region_boundaries_us[3]
        assert lo == pytest.approx(0.9 - 1.5, abs=0.06)
        assert hi == pytest.approx(2.0, abs=0.06)
        assert list(ext.region_boundaries_us) == sorted(ext.region_boundaries_us)

    def test_instantaneous_switch_extracts_zero(self):
        timing = SwitchTiming(2.0 - 1e-6, 2.0)
        offsets = np.round(np.arange(-3.0, 4.0 + 1e-9, 0.1), 9)
        dep = run_switching_scan(SITES, 0, offsets, 1.5, timing, 2000,
                                 SpamModel(), 5, 3.3, experiment_id="dep")
        arr = run_switching_scan(SITES, 1, offsets, 1.3, timing, 2000,
                                 SpamModel(), 5, 3.3, experiment_id="arr")
        ext = extract_switching_time(dep, arr, SpamModel(), 3.3)
        assert ext.switching_time_us == pytest.approx(0.0, abs=0.05)

    def test_mismatched_alignment_rejected(self):
        dep, arr = run_both_switch_scans(shots=100)
        with pytest.raises(ScanRangeError):
            extract_switching_time(arr, dep, SpamModel(), 3.3)
