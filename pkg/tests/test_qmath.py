"""Core two-level algebra.

The rotation-gate oracle is scipy's expm applied to the generator; the
Bloch-vector sign conventions are pinned by the four cardinal states.
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from ionsim.exceptions import NonPhysicalStateError
from ionsim.qmath import (
    BlochVector,
    DensityMatrix,
    IDENTITY,
    PureState,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    apply,
    apply_to_state,
    bloch_from_density,
    density_from_bloch,
    fidelity_pure,
    is_unitary,
    rotation_gate,
)

INV_SQRT2 = 1.0 / math.sqrt(2.0)

angles = st.floats(min_value=-4.0 * math.pi, max_value=4.0 * math.pi,
                   allow_nan=False)
phases = st.floats(min_value=0.0, max_value=2.0 * math.pi, allow_nan=False)


def expm_oracle(phase, angle):
    axis = math.cos(phase) * SIGMA_X + math.sin(phase) * SIGMA_Y
    return expm(-0.5j * angle * axis)


@given(phases, angles)
def test_rotation_gate_matches_matrix_exponential(phase, angle):
    u = rotation_gate(phase, angle)
    assert np.allclose(u, expm_oracle(phase, angle), atol=1e-12)


@given(phases, angles)
def test_rotation_gate_is_unitary(phase, angle):
    assert is_unitary(rotation_gate(phase, angle))


@given(phases, angles, angles)
def test_same_axis_rotations_compose(phase, a, b):
    lhs = rotation_gate(phase, a) @ rotation_gate(phase, b)
    assert np.allclose(lhs, rotation_gate(phase, a + b), atol=1e-9)


def test_quarter_turn_matrices():
    c = math.cos(math.pi / 4.0)
    s = math.sin(math.pi / 4.0)
    rx = rotation_gate(0.0, math.pi / 2.0)
    assert np.allclose(rx, [[c, -1.0j * s], [-1.0j * s, c]], atol=1e-15)
    ry = rotation_gate(math.pi / 2.0, math.pi / 2.0)
    assert np.allclose(ry, [[c, -s], [s, c]], atol=1e-15)


def test_half_turn_sends_ground_to_excited():
    psi = apply_to_state(rotation_gate(0.0, math.pi), PureState.ket0())
    assert psi.bright_probability == pytest.approx(1.0, abs=1e-15)
    # global phase -i
    assert psi.vector[1] == pytest.approx(-1.0j, abs=1e-15)


def test_cardinal_bloch_vectors():
    cases = [
        (PureState.ket0(), (0.0, 0.0, 1.0)),
        (PureState.ket1(), (0.0, 0.0, -1.0)),
        (PureState.from_vector([INV_SQRT2, INV_SQRT2]), (1.0, 0.0, 0.0)),
        (PureState.from_vector([INV_SQRT2, 1.0j * INV_SQRT2]), (0.0, 1.0, 0.0)),
    ]
    for psi, expected in cases:
        assert psi.bloch().as_array() == pytest.approx(expected, abs=1e-12)


def test_quarter_turn_about_x_points_minus_y():
    psi = apply_to_state(rotation_gate(0.0, math.pi / 2.0), PureState.ket0())
    assert psi.bloch().as_array() == pytest.approx((0.0, -1.0, 0.0), abs=1e-12)


def test_bright_probability_from_bloch_z():
    psi = apply_to_state(rotation_gate(0.0, 1.0), PureState.ket0())
    assert psi.bright_probability == pytest.approx(
        (1.0 - psi.bloch().r_z) / 2.0, abs=1e-12
    )


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_bloch_density_round_trip(x, y, z):
    n = math.sqrt(x * x + y * y + z * z)
    if n > 1.0:
        x, y, z = x / n, y / n, z / n
    r = BlochVector(x, y, z)
    back = bloch_from_density(density_from_bloch(r))
    assert back.as_array() == pytest.approx(r.as_array(), abs=1e-12)


def test_density_validation_rejects_bad_matrices():
    with pytest.raises(NonPhysicalStateError):
        DensityMatrix(np.array([[0.5, 0.5], [0.1, 0.5]]))  # not Hermitian
    with pytest.raises(NonPhysicalStateError):
        DensityMatrix(np.array([[0.8, 0.0], [0.0, 0.8]]))  # trace 1.6


def test_density_physicality_gate():
    # Hermitian, trace one, but a negative eigenvalue
    rho = DensityMatrix(np.array([[1.2, 0.0], [0.0, -0.2]]))
    assert not rho.is_physical()
    with pytest.raises(NonPhysicalStateError):
        rho.require_physical()
    DensityMatrix.maximally_mixed().require_physical()


def test_pure_state_norm_check():
    with pytest.raises(NonPhysicalStateError):
        PureState(1.0, 1.0)
    PureState.from_vector([2.0, 0.0])  # from_vector normalises
    with pytest.raises(NonPhysicalStateError):
        PureState.from_vector([0.0, 0.0])


def test_fidelity_pure_special_cases():
    ket0, ket1 = PureState.ket0(), PureState.ket1()
    assert fidelity_pure(ket0.density(), ket0) == pytest.approx(1.0, abs=1e-12)
    assert fidelity_pure(ket1.density(), ket0) == pytest.approx(0.0, abs=1e-12)
    assert fidelity_pure(DensityMatrix.maximally_mixed(), ket0) == pytest.approx(
        0.5, abs=1e-12
    )


@given(phases, angles)
def test_fidelity_equals_bloch_overlap(phase, angle):
    psi = apply_to_state(rotation_gate(phase, angle), PureState.ket0())
    rho = apply(rotation_gate(phase / 2.0, angle / 3.0),
                PureState.ket0().density())
    expected = 0.5 * (1.0 + float(np.dot(rho.bloch().as_array(),
                                         psi.bloch().as_array())))
    assert fidelity_pure(rho, psi) == pytest.approx(expected, abs=1e-12)


def test_pauli_matrices_anticommute():
    for a, b in ((SIGMA_X, SIGMA_Y), (SIGMA_Y, SIGMA_Z), (SIGMA_X, SIGMA_Z)):
        assert np.allclose(a @ b + b @ a, 0.0, atol=1e-15)
    assert np.allclose(SIGMA_X @ SIGMA_X, IDENTITY, atol=1e-15)
