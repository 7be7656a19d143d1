"""Exact single-qubit algebra: states, rotations, Bloch maps, fidelity.

Conventions used throughout the package:

* the computational basis is (|0>, |1>) with |0> the dark (south) state
  of detection and |1> the bright state;
* the Bloch map sends |0><0| to r = (0, 0, +1), so the bright
  probability of a state with Bloch vector r is (1 - r_z) / 2;
* ``rotation_gate(phase, angle)`` is
  exp(-i (angle/2) (cos(phase) sx + sin(phase) sy)),
  i.e. phase 0 gives an x rotation and phase pi/2 a y rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NonPhysicalStateError

_NORM_TOL = 1e-12

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class PureState:
    """Normalized single-qubit state amplitudes (amp0|0> + amp1|1>)."""

    amp0: complex
    amp1: complex

    def __post_init__(self):
        norm = abs(self.amp0) ** 2 + abs(self.amp1) ** 2
        if abs(norm - 1.0) > 1e-9:
            raise NonPhysicalStateError(f"state norm {norm!r} is not 1")

    @classmethod
    def ket0(cls) -> "PureState":
        return cls(1.0 + 0.0j, 0.0j)

    @classmethod
    def ket1(cls) -> "PureState":
        return cls(0.0j, 1.0 + 0.0j)

    @classmethod
    def from_vector(cls, vec) -> "PureState":
        v = np.asarray(vec, dtype=complex)
        n = math.sqrt(float(np.sum(np.abs(v) ** 2)))
        if n == 0.0:
            raise NonPhysicalStateError("zero vector cannot be normalized")
        return cls(complex(v[0] / n), complex(v[1] / n))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp0, self.amp1], dtype=complex)

    @property
    def bright_probability(self) -> float:
        return abs(self.amp1) ** 2

    def density(self) -> "DensityMatrix":
        v = self.vector
        return DensityMatrix(np.outer(v, v.conj()))

    def bloch(self) -> "BlochVector":
        rho01 = self.amp0 * self.amp1.conjugate()
        return BlochVector(
            2.0 * rho01.real,
            -2.0 * rho01.imag,
            abs(self.amp0) ** 2 - abs(self.amp1) ** 2,
        )


@dataclass(frozen=True)
class BlochVector:
    """Bloch components; raw reconstructions may lie outside the unit ball."""

    r_x: float
    r_y: float
    r_z: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.r_x**2 + self.r_y**2 + self.r_z**2)

    def is_physical(self, tol: float = 1e-9) -> bool:
        return self.norm <= 1.0 + tol

    def as_array(self) -> np.ndarray:
        return np.array([self.r_x, self.r_y, self.r_z], dtype=float)


class DensityMatrix:
    """A 2x2 Hermitian, unit-trace matrix.

    Hermiticity and trace are enforced at construction (tolerance 1e-12);
    positivity is a separate, weaker check because raw linear-inversion
    output is allowed to be slightly non-positive before projection.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise NonPhysicalStateError(f"density matrix shape {m.shape} is not (2, 2)")
        if not np.allclose(m, m.conj().T, atol=_NORM_TOL, rtol=0.0):
            raise NonPhysicalStateError("density matrix is not Hermitian")
        tr = m[0, 0].real + m[1, 1].real
        if abs(tr - 1.0) > 1e-9:
            raise NonPhysicalStateError(f"density matrix trace {tr!r} is not 1")
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @classmethod
    def from_bloch(cls, r: BlochVector) -> "DensityMatrix":
        m = 0.5 * (IDENTITY + r.r_x * SIGMA_X + r.r_y * SIGMA_Y + r.r_z * SIGMA_Z)
        return cls(m)

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(0.5 * IDENTITY)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._m)

    def is_physical(self, tol: float = 1e-9) -> bool:
        return bool(self.eigenvalues()[0] >= -tol)

    def require_physical(self, tol: float = 1e-9) -> None:
        lo = float(self.eigenvalues()[0])
        if lo < -tol:
            raise NonPhysicalStateError(f"negative eigenvalue {lo:.3e}")

    def bloch(self) -> BlochVector:
        return bloch_from_density(self)

    def __repr__(self):
        return f"DensityMatrix({self._m.tolist()!r})"


def rotation_gate(phase: float, angle: float) -> np.ndarray:
    """Rotation by `angle` about the equatorial axis at azimuth `phase`.

    Returns the 2x2 unitary
    exp(-i (angle/2) (cos(phase) sx + sin(phase) sy)).  phase=0 is R_x,
    phase=pi/2 is R_y.  Unitary by construction for all float inputs.
    """
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    e_minus = complex(math.cos(phase), -math.sin(phase))
    e_plus = e_minus.conjugate()
    return np.array(
        [[c, -1j * s * e_minus], [-1j * s * e_plus, c]], dtype=complex
    )


def apply(u: np.ndarray, rho: DensityMatrix) -> DensityMatrix:
    """Conjugate a density matrix by a unitary: rho -> u rho u^dagger."""
    return DensityMatrix(u @ rho.matrix @ u.conj().T)


def apply_to_state(u: np.ndarray, psi: PureState) -> PureState:
    v = u @ psi.vector
    return PureState(complex(v[0]), complex(v[1]))


def bloch_from_density(rho: DensityMatrix) -> BlochVector:
    m = rho.matrix
    return BlochVector(
        2.0 * m[0, 1].real,
        -2.0 * m[0, 1].imag,
        (m[0, 0] - m[1, 1]).real,
    )


def density_from_bloch(r: BlochVector) -> DensityMatrix:
    return DensityMatrix.from_bloch(r)


def fidelity_pure(rho: DensityMatrix, psi: PureState) -> float:
    """<psi| rho |psi> for a physical rho; raises on non-physical input."""
    rho.require_physical()
    v = psi.vector
    f = float(np.real(v.conj() @ rho.matrix @ v))
    if f < -1e-12 or f > 1.0 + 1e-12:
        raise NonPhysicalStateError(f"fidelity {f!r} outside [0, 1]")
    return min(max(f, 0.0), 1.0)


def is_unitary(u: np.ndarray, tol: float = 1e-12) -> bool:
    return np.allclose(u.conj().T @ u, IDENTITY, atol=tol, rtol=0.0)
