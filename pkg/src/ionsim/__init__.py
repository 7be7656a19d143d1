"""Deterministic digital twin of a steered-beam two-ion addressing setup.

Submodules:
    qmath      two-level state algebra (states, rotations, Bloch vectors)
    optics     Gaussian addressing beam, crosstalk and waist estimators
    mems       tilt-mirror voltage model and switch trajectories
    sequencer  pulse/switch schedules and shot-level simulation
    tomo       detection model, state tomography, fidelity estimation
    harness    experiment runners, config, persistence, CLI backend
"""

from .exceptions import (
    ConfigError,
    InversionBranchError,
    IonsimError,
    MissingBasisError,
    NonPhysicalStateError,
    ScanRangeError,
    ScheduleError,
    SmallAngleError,
    UnreachableTargetError,
    VoltageRangeError,
    WaistEstimateError,
)
from .qmath import BlochVector, DensityMatrix, PureState, rotation_gate
from .optics import AddressingBeam, IonChain, SteeringGeometry
from .mems import SwitchTiming, VoltageSet
from .sequencer import DriftModel, GateSpec, Schedule
from .tomo import CountsTable, SpamModel
from .harness import ExperimentConfig, ResultBundle

__version__ = "0.1.0"

__all__ = [
    "AddressingBeam",
    "BlochVector",
    "ConfigError",
    "CountsTable",
    "DensityMatrix",
    "DriftModel",
    "ExperimentConfig",
    "GateSpec",
    "InversionBranchError",
    "IonChain",
    "IonsimError",
    "MissingBasisError",
    "NonPhysicalStateError",
    "PureState",
    "ResultBundle",
    "ScanRangeError",
    "Schedule",
    "ScheduleError",
    "SmallAngleError",
    "SpamModel",
    "SteeringGeometry",
    "SwitchTiming",
    "UnreachableTargetError",
    "VoltageRangeError",
    "VoltageSet",
    "WaistEstimateError",
    "rotation_gate",
    "__version__",
]
