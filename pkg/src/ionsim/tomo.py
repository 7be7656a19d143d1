"""State detection, single-qubit tomography, and fidelity estimation.

Measurement model: a shot is detected bright with probability
P_meas = P * F1 + (1 - P) * (1 - F0) where P is the ideal bright
probability, F0 the dark-state and F1 the bright-state readout
fidelity.  Tomography measures three bases via pre-rotations

    Z: identity        X: R_y(pi/2)        Y: R_x(pi/2)

and reconstructs the raw Bloch vector by linear inversion
(r_x = 2 P_X - 1, r_y = 1 - 2 P_Y, r_z = 1 - 2 P_Z).  Raw vectors may
stick out of the unit ball; projection rescales them onto it, which for
a single qubit coincides with the closest (Frobenius) density matrix.
Reported fidelities are not corrected for the detection errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .exceptions import ConfigError, MissingBasisError, NonPhysicalStateError
from .qmath import (
    BlochVector,
    DensityMatrix,
    IDENTITY,
    PureState,
    fidelity_pure,
    rotation_gate,
)

BASES = ("Z", "Y", "X")


@dataclass(frozen=True)
class SpamModel:
    """State-preparation-and-measurement fidelities.

    f0: probability a dark ion is read dark; f1: probability a bright
    ion is read bright.
    """

    f0: float = 0.998
    f1: float = 0.991

    def __post_init__(self):
        for name, v in (("f0", self.f0), ("f1", self.f1)):
            if not 0.5 < v <= 1.0:
                raise ConfigError(f"{name}={v!r} outside (0.5, 1]")

    @classmethod
    def ideal(cls) -> "SpamModel":
        return cls(1.0, 1.0)


def apply_spam(p_bright, spam: SpamModel):
    """Measured bright probability for ideal bright probability p."""
    p = np.asarray(p_bright, dtype=float)
    out = p * spam.f1 + (1.0 - p) * (1.0 - spam.f0)
    return float(out) if out.ndim == 0 else out


def detect(p_bright: float, spam: SpamModel, uniform: float) -> bool:
    """One detection event from a uniform variate in [0, 1)."""
    if not 0.0 <= p_bright <= 1.0:
        raise NonPhysicalStateError(f"bright probability {p_bright!r} outside [0, 1]")
    return bool(uniform < apply_spam(p_bright, spam))


def detect_counts(p_bright: float, spam: SpamModel, key: int, counter: int,
                  shots: int) -> int:
    """Bright count over `shots` detections drawn from a counter stream."""
    u = rng.uniforms(key, counter, shots)
    return int(np.sum(u < apply_spam(p_bright, spam)))


def measurement_prerotations() -> list:
    """(basis label, pre-rotation unitary) in measurement order."""
    return [
        ("Z", IDENTITY.copy()),
        ("Y", rotation_gate(0.0, math.pi / 2.0)),
        ("X", rotation_gate(math.pi / 2.0, math.pi / 2.0)),
    ]


def bright_probability(state, prerotation: np.ndarray) -> float:
    """<1| U rho U^dag |1> for a PureState or DensityMatrix input."""
    if isinstance(state, PureState):
        v = prerotation @ state.vector
        return float(abs(v[1]) ** 2)
    m = prerotation @ state.matrix @ prerotation.conj().T
    return float(m[1, 1].real)


@dataclass(frozen=True)
class CountsTable:
    """Per-basis detection tallies for one ion.

    shots and bright map basis label -> count.  Float values are allowed
    so exact probabilities can be fed through the same reconstruction
    (shots=1, bright=p).
    """

    shots: dict
    bright: dict

    def __post_init__(self):
        for basis in BASES:
            if basis not in self.shots or basis not in self.bright:
                raise MissingBasisError(f"basis {basis} missing from counts")
        for basis in BASES:
            n, k = self.shots[basis], self.bright[basis]
            if n <= 0:
                raise ConfigError(f"basis {basis} has no shots")
            if not 0 <= k <= n:
                raise ConfigError(f"basis {basis} bright count {k!r} outside [0, {n}]")

    def probability(self, basis: str) -> float:
        return self.bright[basis] / self.shots[basis]

    @classmethod
    def from_probabilities(cls, p_z: float, p_y: float, p_x: float) -> "CountsTable":
        return cls(shots={"Z": 1.0, "Y": 1.0, "X": 1.0},
                   bright={"Z": p_z, "Y": p_y, "X": p_x})

    def to_dict(self) -> dict:
        return {"shots": dict(self.shots), "bright": dict(self.bright)}


def bloch_from_probabilities(p_z: float, p_y: float, p_x: float) -> BlochVector:
    """Linear inversion of the three measured bright probabilities."""
    return BlochVector(2.0 * p_x - 1.0, 1.0 - 2.0 * p_y, 1.0 - 2.0 * p_z)


def bloch_from_counts(counts: CountsTable) -> BlochVector:
    return bloch_from_probabilities(
        counts.probability("Z"), counts.probability("Y"), counts.probability("X")
    )


def project_physical(raw) -> DensityMatrix:
    """Closest physical density matrix to a raw reconstruction.

    Accepts a BlochVector or a Hermitian unit-trace matrix.  Vectors
    inside the unit ball pass through unchanged; outside, radial
    rescaling onto the sphere is the Frobenius-closest physical state
    for a single qubit (it equals clipping the negative eigenvalue and
    renormalising).
    """
    if isinstance(raw, BlochVector):
        r = raw
    elif isinstance(raw, DensityMatrix):
        r = raw.bloch()
    else:
        r = DensityMatrix(np.asarray(raw)).bloch()
    n = r.norm
    if n > 1.0:
        r = BlochVector(r.r_x / n, r.r_y / n, r.r_z / n)
    return DensityMatrix.from_bloch(r)


@dataclass(frozen=True)
class TomographyResult:
    """Reconstruction for one ion."""

    counts: CountsTable
    raw_bloch: BlochVector
    state: DensityMatrix
    fidelity: float
    ci_low: float
    ci_high: float
    analytic_se: float

    def to_dict(self) -> dict:
        return {
            "counts": self.counts.to_dict(),
            "raw_bloch": list(self.raw_bloch.as_array()),
            "bloch": list(self.state.bloch().as_array()),
            "fidelity": self.fidelity,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "analytic_se": self.analytic_se,
        }


@dataclass(frozen=True)
class FidelityEstimate:
    fidelity: float
    ci_low: float
    ci_high: float
    analytic_se: float


def _fidelity_from_bloch_arrays(rx, ry, rz, ideal: np.ndarray):
    """Fidelity against a pure state for stacked raw Bloch components,
    projecting onto the unit ball where needed."""
    norm = np.sqrt(rx * rx + ry * ry + rz * rz)
    scale = np.where(norm > 1.0, 1.0 / np.where(norm > 0, norm, 1.0), 1.0)
    dot = ideal[0] * rx * scale + ideal[1] * ry * scale + ideal[2] * rz * scale
    return 0.5 * (1.0 + dot)


def fidelity_with_ci(counts: CountsTable, ideal: PureState,
                     resamples: int = 1000, seed: int = 0,
                     experiment: str = "bootstrap") -> FidelityEstimate:
    """Fidelity of the projected reconstruction against a pure target.

    The point estimate projects the raw Bloch vector and evaluates
    <psi|rho|psi>.  The interval is a percentile bootstrap (16th-84th)
    over binomial resamples of each basis count; the analytic number is
    first-order binomial propagation through the linear inversion,
    reported alongside for comparison.  Identical counts and seed give
    identical intervals.
    """
    if resamples < 2:
        raise ConfigError("need at least 2 bootstrap resamples")
    ideal_r = ideal.bloch().as_array()
    raw = bloch_from_counts(counts)
    fid = fidelity_pure(project_physical(raw), ideal)

    n = {b: counts.shots[b] for b in BASES}
    p = {b: counts.probability(b) for b in BASES}
    # d r / d p is +-2 for every basis
    analytic_var = sum(
        (ideal_r[i] ** 2) * 4.0 * p[b] * (1.0 - p[b]) / n[b]
        for i, b in ((2, "Z"), (1, "Y"), (0, "X"))
    )
    analytic_se = 0.5 * math.sqrt(analytic_var)

    gen = rng.generator(rng.derive_key(seed, experiment, "bootstrap"))
    draws = {
        b: gen.binomial(int(round(n[b])), p[b], size=resamples) / n[b]
        for b in BASES
    }
    fids = _fidelity_from_bloch_arrays(
        2.0 * draws["X"] - 1.0,
        1.0 - 2.0 * draws["Y"],
        1.0 - 2.0 * draws["Z"],
        ideal_r,
    )
    lo, hi = np.percentile(fids, [16.0, 84.0])
    return FidelityEstimate(fid, float(lo), float(hi), analytic_se)


def exact_basis_probabilities(state, spam: SpamModel) -> dict:
    """Measured bright probability per basis, no sampling."""
    return {
        basis: apply_spam(bright_probability(state, u), spam)
        for basis, u in measurement_prerotations()
    }


def reconstruct_exact(state, spam: SpamModel):
    """Infinite-shot tomography: (raw Bloch, projected DensityMatrix)."""
    probs = exact_basis_probabilities(state, spam)
    counts = CountsTable.from_probabilities(probs["Z"], probs["Y"], probs["X"])
    raw = bloch_from_counts(counts)
    return raw, project_physical(raw)


def run_tomography_experiment(gate_a, gate_b, chain, beam, spam: SpamModel,
                              shots_per_basis: int, seed: int,
                              timing=None, floors=None, resamples: int = 1000,
                              experiment_id: str = "tomo") -> list:
    """Apply one gate per ion, tomograph both ions, estimate fidelities.

    For each basis the full pulse sequence (gate on ion 0, gate on
    ion 1, then the basis pre-rotation on each) is scheduled with the
    steered beam, so neighbour crosstalk during every pulse is in the
    simulated data.  Fidelity is against the ideal post-gate pure state
    of each ion; detection errors are simulated, not corrected.
    """
    # local import: sequencer depends on this module for the SPAM model
    from . import sequencer
    from .mems import SwitchTiming

    if shots_per_basis <= 0:
        raise ConfigError("shots_per_basis must be positive")
    if timing is None:
        timing = SwitchTiming()
    if chain.count != 2:
        raise ConfigError("gate-table tomography expects a two-ion chain")
    gates = (gate_a, gate_b)
    ideals = [
        PureState.from_vector(g.normalized().unitary() @ np.array([1.0, 0.0j]))
        for g in gates
    ]
    basis_gates = {
        "Z": sequencer.GateSpec.identity(),
        "Y": sequencer.GateSpec.rx(math.pi / 2.0),
        "X": sequencer.GateSpec.ry(math.pi / 2.0),
    }
    shots = {0: {}, 1: {}}
    bright = {0: {}, 1: {}}
    for b_idx, basis in enumerate(BASES):
        ops = [(0, gates[0]), (1, gates[1]),
               (0, basis_gates[basis]), (1, basis_gates[basis])]
        schedule = sequencer.build_gate_schedule(ops, chain, beam, timing)
        steered = sequencer.SteeredBeam.from_schedule(schedule, chain, beam)
        floors_arr = sequencer._resolve_floors(floors, chain.count,
                                               beam.scatter_floor)
        angles = sequencer.rotation_angles(steered, chain, schedule, floors_arr)
        states = sequencer.evolve_states(schedule, angles)
        key = rng.derive_key(seed, experiment_id, "detect", basis)
        for ion in range(2):
            p = states[ion].bright_probability
            k = detect_counts(p, spam, key, ion * shots_per_basis, shots_per_basis)
            shots[ion][basis] = shots_per_basis
            bright[ion][basis] = k
    results = []
    for ion in range(2):
        counts = CountsTable(shots=shots[ion], bright=bright[ion])
        raw = bloch_from_counts(counts)
        state = project_physical(raw)
        state.require_physical()
        est = fidelity_with_ci(counts, ideals[ion], resamples=resamples,
                               seed=seed, experiment=f"{experiment_id}/ion{ion}")
        results.append(TomographyResult(counts, raw, state, est.fidelity,
                                        est.ci_low, est.ci_high, est.analytic_se))
    return results
