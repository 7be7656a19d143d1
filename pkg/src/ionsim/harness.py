"""Experiment orchestration: config ingestion, runners, persistence, replay.

Four canned experiments mirror the characterization campaign of the
modelled instrument:

    fig2    long-pulse scans on each ion, neighbour-leakage extraction
    fig3    probe-pulse offset scans across a beam switch
    waist   pi-time comparison with the beam parked between the ions
    table1  sequential two-ion gate pairs read out by state tomography

Every runner returns a ResultBundle: config echo, raw data arrays,
derived scalars, and metadata.  Re-running from the echoed config and
seed regenerates the arrays exactly; `verify_replay` checks that.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np
from scipy.optimize import curve_fit

from . import rng
from .exceptions import ConfigError, ScanRangeError, WaistEstimateError
from .optics import (
    AddressingBeam,
    IonChain,
    estimate_waist_full,
    crosstalk_from_populations,
    gaussian_profile,
)
from .mems import SwitchTiming
from .sequencer import (
    DriftModel,
    DriftPath,
    PulseEvent,
    Schedule,
    SteeredBeam,
    GateSpec,
    extract_switching_time,
    pulse_intensity_time,
    run_rabi_scan,
    run_switching_scan,
)
from .tomo import SpamModel, apply_spam, run_tomography_experiment

SCHEMA_VERSION = 1

#: quoted device context; never consumed by the dynamics, only echoed
#: verbatim into result metadata.
DOCUMENTATION_CONSTANTS = {
    "hyperfine_splitting_ghz": 12.6,
    "raman_detuning_thz": 14.0,
    "comb_repetition_rate_mhz": 76.0,
    "raman_wavelength_nm": 376.0,
    "fluorescence_wavelength_nm": 369.5,
    "ion_height_um": 80.0,
}

GATE_TOKENS = {
    "rx90": ("rx", math.pi / 2.0),
    "ry90": ("ry", math.pi / 2.0),
    "rx180": ("rx", math.pi),
    "ry180": ("ry", math.pi),
    "identity": ("identity", 0.0),
}

DEFAULT_TABLE_ROWS = (
    ("rx90", "identity"),
    ("identity", "rx90"),
    ("rx180", "ry90"),
    ("rx90", "rx180"),
    ("rx90", "rx90"),
    ("rx90", "ry90"),
    ("ry90", "rx90"),
)


def gate_from_token(token: str) -> GateSpec:
    try:
        kind, angle = GATE_TOKENS[token]
    except KeyError:
        raise ConfigError(
            f"unknown gate token {token!r}; expected one of {sorted(GATE_TOKENS)}"
        ) from None
    if kind == "rx":
        return GateSpec.rx(angle)
    if kind == "ry":
        return GateSpec.ry(angle)
    return GateSpec.identity()


# ---------------------------------------------------------------------------
# configuration


def _check_keys(section: dict, name: str, allowed) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {sorted(unknown)}")


def _get(section: dict, name: str, key: str, default):
    value = section.get(key, default)
    if value is None:
        raise ConfigError(f"missing required key {key!r} in {name!r}")
    return value


@dataclass(frozen=True)
class ChainConfig:
    count: int = 2
    spacing_um: float = 7.4

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError(f"ion count {self.count!r} must be at least 1")
        if not self.spacing_um > 0.0:
            raise ConfigError(f"ion spacing {self.spacing_um!r} must be positive")

    def build(self) -> IonChain:
        return IonChain.linear(self.count, self.spacing_um)

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        _check_keys(d, "chain", ("count", "spacing_um"))
        return cls(int(_get(d, "chain", "count", 2)),
                   float(_get(d, "chain", "spacing_um", 7.4)))

    def to_dict(self) -> dict:
        return {"count": self.count, "spacing_um": self.spacing_um}


@dataclass(frozen=True)
class BeamConfig:
    waist_um: float = 3.3
    scatter_floors: tuple = (2.9e-4, 1.3e-4)

    def __post_init__(self):
        if not self.waist_um > 0.0:
            raise ConfigError(f"waist {self.waist_um!r} must be positive")
        floors = tuple(float(s) for s in self.scatter_floors)
        for s in floors:
            if not 0.0 <= s < 1.0:
                raise ConfigError(f"scatter floor {s!r} outside [0, 1)")
        object.__setattr__(self, "scatter_floors", floors)

    @classmethod
    def from_dict(cls, d: dict) -> "BeamConfig":
        _check_keys(d, "beam", ("waist_um", "scatter_floors"))
        return cls(float(_get(d, "beam", "waist_um", 3.3)),
                   tuple(_get(d, "beam", "scatter_floors", (2.9e-4, 1.3e-4))))

    def to_dict(self) -> dict:
        return {"waist_um": self.waist_um,
                "scatter_floors": list(self.scatter_floors)}


@dataclass(frozen=True)
class CrosstalkScanConfig:
    """Long-pulse scan grids for the neighbour-leakage experiment.

    The published grid is unknown; this fine+coarse split resolves the
    early fringes and still reaches the long-pulse endpoint cheaply.
    """

    pi_times_us: tuple = (13.0, 15.0)
    max_duration_us: float = 5000.0
    fine_step_us: float = 1.0
    fine_end_us: float = 60.0
    coarse_step_us: float = 100.0
    shots: int = 500
    shot_overhead_us: float = 1500.0
    block_size: int = 100

    def __post_init__(self):
        object.__setattr__(self, "pi_times_us",
                           tuple(float(t) for t in self.pi_times_us))
        if len(self.pi_times_us) != 2 or min(self.pi_times_us) <= 0.0:
            raise ConfigError("crosstalk pi_times_us needs two positive entries")
        for key in ("max_duration_us", "fine_step_us", "fine_end_us",
                    "coarse_step_us"):
            if not getattr(self, key) > 0.0:
                raise ConfigError(f"crosstalk {key} must be positive")
        if self.fine_end_us > self.max_duration_us:
            raise ConfigError("crosstalk fine_end_us exceeds max_duration_us")
        if self.shots <= 0 or self.block_size <= 0:
            raise ConfigError("crosstalk shots and block_size must be positive")
        if self.shot_overhead_us < 0.0:
            raise ConfigError("crosstalk shot_overhead_us is negative")

    def durations(self) -> np.ndarray:
        fine = np.arange(self.fine_step_us, self.fine_end_us + 1e-9,
                         self.fine_step_us)
        coarse = np.arange(self.fine_end_us + self.coarse_step_us,
                           self.max_duration_us, self.coarse_step_us)
        grid = np.concatenate([fine, coarse, [self.max_duration_us]])
        return np.unique(np.round(grid, 9))

    _KEYS = ("pi_times_us", "max_duration_us", "fine_step_us", "fine_end_us",
             "coarse_step_us", "shots", "shot_overhead_us", "block_size")

    @classmethod
    def from_dict(cls, d: dict) -> "CrosstalkScanConfig":
        _check_keys(d, "crosstalk", cls._KEYS)
        base = cls()
        kwargs = {}
        for key in cls._KEYS:
            if key in d:
                kwargs[key] = d[key]
        if "pi_times_us" in kwargs:
            kwargs["pi_times_us"] = tuple(kwargs["pi_times_us"])
        for key in ("shots", "block_size"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        return replace(base, **kwargs)

    def to_dict(self) -> dict:
        return {
            "pi_times_us": list(self.pi_times_us),
            "max_duration_us": self.max_duration_us,
            "fine_step_us": self.fine_step_us,
            "fine_end_us": self.fine_end_us,
            "coarse_step_us": self.coarse_step_us,
            "shots": self.shots,
            "shot_overhead_us": self.shot_overhead_us,
            "block_size": self.block_size,
        }


@dataclass(frozen=True)
class SwitchingScanConfig:
    pi_times_us: tuple = (1.5, 1.3)
    offset_min_us: float = -3.0
    offset_max_us: float = 4.0
    offset_step_us: float = 0.1
    shots: int = 500

    def __post_init__(self):
        object.__setattr__(self, "pi_times_us",
                           tuple(float(t) for t in self.pi_times_us))
        if len(self.pi_times_us) != 2 or min(self.pi_times_us) <= 0.0:
            raise ConfigError("switching pi_times_us needs two positive entries")
        if not self.offset_step_us > 0.0:
            raise ConfigError("switching offset_step_us must be positive")
        if self.offset_min_us >= self.offset_max_us:
            raise ConfigError("switching offset range is empty")
        if self.shots <= 0:
            raise ConfigError("switching shots must be positive")

    def offsets(self) -> np.ndarray:
        n = int(round((self.offset_max_us - self.offset_min_us)
                      / self.offset_step_us))
        return np.round(self.offset_min_us
                        + self.offset_step_us * np.arange(n + 1), 9)

    _KEYS = ("pi_times_us", "offset_min_us", "offset_max_us", "offset_step_us",
             "shots")

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchingScanConfig":
        _check_keys(d, "switching", cls._KEYS)
        kwargs = {k: d[k] for k in cls._KEYS if k in d}
        if "pi_times_us" in kwargs:
            kwargs["pi_times_us"] = tuple(kwargs["pi_times_us"])
        if "shots" in kwargs:
            kwargs["shots"] = int(kwargs["shots"])
        return replace(cls(), **kwargs)

    def to_dict(self) -> dict:
        return {
            "pi_times_us": list(self.pi_times_us),
            "offset_min_us": self.offset_min_us,
            "offset_max_us": self.offset_max_us,
            "offset_step_us": self.offset_step_us,
            "shots": self.shots,
        }


@dataclass(frozen=True)
class WaistScanConfig:
    """Pi-time comparison setup.  shots == 0 means exact (noise-free)
    probabilities with the half-transfer crossing found by bisection;
    shots > 0 samples a fringe and fits it."""

    pi_time_us: float = 13.0
    shots: int = 0
    n_points: int = 25
    span_factor: float = 2.3

    def __post_init__(self):
        if not self.pi_time_us > 0.0:
            raise ConfigError("waist pi_time_us must be positive")
        if self.shots < 0:
            raise ConfigError("waist shots must be >= 0")
        if self.n_points < 5:
            raise ConfigError("waist n_points must be at least 5")
        if not self.span_factor > 0.5:
            raise ConfigError("waist span_factor must exceed 0.5")

    _KEYS = ("pi_time_us", "shots", "n_points", "span_factor")

    @classmethod
    def from_dict(cls, d: dict) -> "WaistScanConfig":
        _check_keys(d, "waist", cls._KEYS)
        kwargs = {k: d[k] for k in cls._KEYS if k in d}
        for key in ("shots", "n_points"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        return replace(cls(), **kwargs)

    def to_dict(self) -> dict:
        return {"pi_time_us": self.pi_time_us, "shots": self.shots,
                "n_points": self.n_points, "span_factor": self.span_factor}


@dataclass(frozen=True)
class GateTableConfig:
    pi_time_us: float = 1.5
    shots_per_basis: int = 2000
    resamples: int = 1000
    rows: tuple = DEFAULT_TABLE_ROWS

    def __post_init__(self):
        if not self.pi_time_us > 0.0:
            raise ConfigError("gate_table pi_time_us must be positive")
        if self.shots_per_basis <= 0:
            raise ConfigError("gate_table shots_per_basis must be positive")
        if self.resamples < 2:
            raise ConfigError("gate_table resamples must be at least 2")
        rows = tuple(tuple(r) for r in self.rows)
        if not rows:
            raise ConfigError("gate_table rows is empty")
        for row in rows:
            if len(row) != 2:
                raise ConfigError(f"gate_table row {row!r} needs two gate tokens")
            for token in row:
                gate_from_token(token)
        object.__setattr__(self, "rows", rows)

    _KEYS = ("pi_time_us", "shots_per_basis", "resamples", "rows")

    @classmethod
    def from_dict(cls, d: dict) -> "GateTableConfig":
        _check_keys(d, "gate_table", cls._KEYS)
        kwargs = {k: d[k] for k in cls._KEYS if k in d}
        for key in ("shots_per_basis", "resamples"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        if "rows" in kwargs:
            kwargs["rows"] = tuple(tuple(r) for r in kwargs["rows"])
        return replace(cls(), **kwargs)

    def to_dict(self) -> dict:
        return {"pi_time_us": self.pi_time_us,
                "shots_per_basis": self.shots_per_basis,
                "resamples": self.resamples,
                "rows": [list(r) for r in self.rows]}


_TOP_KEYS = ("chain", "beam", "timing", "spam", "drift", "crosstalk",
             "switching", "waist", "gate_table", "seed", "metadata")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full campaign configuration.  The seed is mandatory: runs must
    never be silently non-reproducible."""

    seed: int
    chain: ChainConfig = ChainConfig()
    beam: BeamConfig = BeamConfig()
    timing: SwitchTiming = SwitchTiming()
    spam: SpamModel = SpamModel()
    drift: DriftModel = DriftModel()
    crosstalk: CrosstalkScanConfig = CrosstalkScanConfig()
    switching: SwitchingScanConfig = SwitchingScanConfig()
    waist: WaistScanConfig = WaistScanConfig()
    gate_table: GateTableConfig = GateTableConfig()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed {self.seed!r} must be an integer")
        if self.seed < 0:
            raise ConfigError(f"seed {self.seed!r} is negative")
        if len(self.beam.scatter_floors) != self.chain.count:
            raise ConfigError(
                f"{len(self.beam.scatter_floors)} scatter floors for "
                f"{self.chain.count} ions"
            )

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _check_keys(data, "config", _TOP_KEYS)
        if "seed" not in data:
            raise ConfigError("config must set an explicit seed")
        seed = data["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed {seed!r} must be an integer")

        def section(key, parser, default):
            return parser(data[key]) if key in data else default

        try:
            timing_d = data.get("timing", {})
            _check_keys(timing_d, "timing", ("t_m_us", "t_s_us"))
            spam_d = data.get("spam", {})
            _check_keys(spam_d, "spam", ("f0", "f1"))
            drift_d = data.get("drift", {})
            _check_keys(drift_d, "drift", ("sigma_rel", "correlation_time_us"))
            metadata = data.get("metadata", {})
            if not isinstance(metadata, dict):
                raise ConfigError("metadata must be an object")
            return cls(
                seed=seed,
                chain=section("chain", ChainConfig.from_dict, ChainConfig()),
                beam=section("beam", BeamConfig.from_dict, BeamConfig()),
                timing=SwitchTiming(float(timing_d.get("t_m_us", 0.9)),
                                    float(timing_d.get("t_s_us", 2.0))),
                spam=SpamModel(float(spam_d.get("f0", 0.998)),
                               float(spam_d.get("f1", 0.991))),
                drift=DriftModel(float(drift_d.get("sigma_rel", 0.01)),
                                 float(drift_d.get("correlation_time_us", 1.0e6))),
                crosstalk=section("crosstalk", CrosstalkScanConfig.from_dict,
                                  CrosstalkScanConfig()),
                switching=section("switching", SwitchingScanConfig.from_dict,
                                  SwitchingScanConfig()),
                waist=section("waist", WaistScanConfig.from_dict,
                              WaistScanConfig()),
                gate_table=section("gate_table", GateTableConfig.from_dict,
                                   GateTableConfig()),
                metadata=dict(metadata),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config value: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "chain": self.chain.to_dict(),
            "beam": self.beam.to_dict(),
            "timing": {"t_m_us": self.timing.t_m_us, "t_s_us": self.timing.t_s_us},
            "spam": {"f0": self.spam.f0, "f1": self.spam.f1},
            "drift": {"sigma_rel": self.drift.sigma_rel,
                      "correlation_time_us": self.drift.correlation_time_us},
            "crosstalk": self.crosstalk.to_dict(),
            "switching": self.switching.to_dict(),
            "waist": self.waist.to_dict(),
            "gate_table": self.gate_table.to_dict(),
            "seed": self.seed,
            "metadata": dict(self.metadata),
        }


def paper_config_path() -> str:
    """Path of the packaged reference configuration."""
    return os.path.join(os.path.dirname(__file__), "data", "paper.json")


def load_config(path=None) -> ExperimentConfig:
    return ExperimentConfig.from_file(paper_config_path() if path is None else path)


def thread_cap() -> "int | None":
    """Validated IONSIM_THREADS value, or None when unset.

    Execution is single-threaded either way (results never depend on
    it); the variable is accepted as an upper bound for forward
    compatibility and rejected early when malformed.
    """
    raw = os.environ.get("IONSIM_THREADS")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"IONSIM_THREADS={raw!r} is not an integer") from None
    if value <= 0:
        raise ConfigError(f"IONSIM_THREADS={value} must be positive")
    return value


# ---------------------------------------------------------------------------
# result bundles


def _software_version() -> str:
    try:
        from importlib.metadata import version

        return version("ionsim")
    except Exception:
        return "unknown"


@dataclass(frozen=True)
class ResultBundle:
    experiment: str
    config: dict
    data: dict
    derived: dict
    metadata: dict
    software_version: str
    timestamp: str
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "config": self.config,
            "data": self.data,
            "derived": self.derived,
            "metadata": self.metadata,
            "software_version": self.software_version,
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _bundle(experiment: str, config: ExperimentConfig, data: dict,
            derived: dict) -> ResultBundle:
    metadata = dict(DOCUMENTATION_CONSTANTS)
    metadata.update(config.metadata)
    return ResultBundle(
        experiment=experiment,
        config=config.to_dict(),
        data=data,
        derived=derived,
        metadata=metadata,
        software_version=_software_version(),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# runners


def run_fig2(config: ExperimentConfig) -> ResultBundle:
    """Neighbour leakage under long pulses, one scan per target ion."""
    if config.chain.count != 2:
        raise ConfigError("crosstalk experiment expects a two-ion chain")
    cc = config.crosstalk
    chain = config.chain.build()
    durations = cc.durations()
    data = {"durations_us": durations.tolist(), "scans": []}
    derived = {"crosstalk": [], "neighbor_population_at_max": [],
               "target_population_at_max": [],
               "max_duration_us": cc.max_duration_us}
    for target in (0, 1):
        beam = AddressingBeam(tuple(chain.position(target)),
                              config.beam.waist_um, cc.pi_times_us[target])
        scan = run_rabi_scan(
            chain, beam, target, durations, cc.shots, config.spam,
            config.drift, config.seed, timing=config.timing,
            floors=config.beam.scatter_floors,
            shot_overhead_us=cc.shot_overhead_us,
            experiment_id=f"fig2/target{target}", block_size=cc.block_size,
        )
        neighbor = 1 - target
        p_neighbor = float(scan.bright[-1, neighbor])
        p_target = float(scan.bright[-1, target])
        eps = crosstalk_from_populations(p_neighbor, cc.max_duration_us,
                                         cc.pi_times_us[target])
        data["scans"].append({
            "target_site": target,
            "pi_time_us": cc.pi_times_us[target],
            "bright": scan.bright.tolist(),
            "stderr": scan.stderr.tolist(),
            "block_means": scan.block_means.tolist(),
            "relative_intensities": scan.relative_intensities.tolist(),
        })
        derived["crosstalk"].append(eps)
        derived["neighbor_population_at_max"].append(p_neighbor)
        derived["target_population_at_max"].append(p_target)
    return _bundle("fig2", config, data, derived)


def run_fig3(config: ExperimentConfig) -> ResultBundle:
    """Probe pulses swept across a beam switch, both alignments."""
    if config.chain.count != 2:
        raise ConfigError("switching experiment expects a two-ion chain")
    sc = config.switching
    chain = config.chain.build()
    offsets = sc.offsets()
    sites = (tuple(chain.position(0)), tuple(chain.position(1)))
    scans = []
    for aligned, label in ((0, "depart"), (1, "arrive")):
        scans.append(run_switching_scan(
            sites, aligned, offsets, sc.pi_times_us[aligned], config.timing,
            sc.shots, config.spam, config.seed, config.beam.waist_um,
            experiment_id=f"fig3/{label}",
        ))
    extraction = extract_switching_time(scans[0], scans[1], config.spam,
                                        config.beam.waist_um)
    if math.isnan(extraction.raw_threshold_left_end_us) or math.isnan(
            extraction.raw_threshold_right_start_us):
        raise ScanRangeError(
            "offset scan does not bracket both full-transfer plateaus"
        )
    lo, hi = float(offsets.min()), float(offsets.max())
    if not (lo <= extraction.region_boundaries_us[0]
            and extraction.region_boundaries_us[3] <= hi):
        raise ScanRangeError(
            "fitted transfer regions extend beyond the scanned offsets"
        )
    data = {
        "offsets_us": offsets.tolist(),
        "scans": [
            {
                "aligned_site": s.aligned_site,
                "pi_time_us": s.pi_time_us,
                "bright": s.bright.tolist(),
                "stderr": s.stderr.tolist(),
            }
            for s in scans
        ],
    }
    derived = {
        "t_m_us": extraction.t_m_us,
        "t_s_us": extraction.t_s_us,
        "switching_time_us": extraction.switching_time_us,
        "region_boundaries_us": list(extraction.region_boundaries_us),
        "left_plateau_end_us": extraction.left_plateau_end_us,
        "right_plateau_start_us": extraction.right_plateau_start_us,
        "raw_threshold_left_end_us": extraction.raw_threshold_left_end_us,
        "raw_threshold_right_start_us": extraction.raw_threshold_right_start_us,
        "fit_rms": extraction.fit_rms,
    }
    return _bundle("fig3", config, data, derived)


def _parked_probe(park_um, ion_um, config: ExperimentConfig, duration_us):
    """Noise-free measured bright probability: beam parked, one pulse."""
    wc = config.waist
    beam = AddressingBeam(tuple(park_um), config.beam.waist_um, wc.pi_time_us)
    pulse = PulseEvent(0.0, float(duration_us), 0.0)
    schedule = Schedule((pulse,), (), config.timing, pulse.t_end_us)
    chain = config.chain.build()
    steered = SteeredBeam.from_schedule(schedule, chain, beam,
                                        initial_position=park_um)
    acc = pulse_intensity_time(steered, np.asarray(ion_um, dtype=float), 0.0,
                               pulse)
    theta = math.pi * acc / wc.pi_time_us
    return apply_spam(math.sin(theta / 2.0) ** 2, config.spam)


def _half_transfer_time(bright, level: float, t_start: float) -> float:
    """First time bright(t) reaches `level`, by doubling then bisection.

    bright must be monotone up to its first maximum and t_start must sit
    below the half-transfer point; doubling from there cannot skip past
    the first peak, so the bracket is always on the rising edge.
    """
    t = t_start
    for _ in range(200):
        if bright(t) >= level:
            break
        t *= 2.0
    else:
        raise WaistEstimateError("no half-transfer crossing found")
    lo, hi = t / 2.0, t
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bright(mid) >= level:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


def _measure_pi_time_exact(park_um, ion_um, config: ExperimentConfig) -> float:
    level = apply_spam(0.5, config.spam)
    tau = 2.0 * _half_transfer_time(
        lambda t: _parked_probe(park_um, ion_um, config, t),
        level, 0.01 * config.waist.pi_time_us,
    )
    return tau


def _measure_pi_time_sampled(park_um, ion_um, config: ExperimentConfig,
                             tau_guess: float, probe_id: str):
    """Sampled fringe plus sin^2 fit; returns (tau, durations, bright, err)."""
    wc = config.waist
    durations = np.linspace(0.1, wc.span_factor, wc.n_points) * tau_guess
    key = rng.derive_key(config.seed, "waist", probe_id)
    path = DriftPath(config.drift, rng.derive_key(config.seed, "waist",
                                                  probe_id, "drift"))
    tau_local = _local_pi_time_for(park_um, ion_um, config)
    bright = np.empty(durations.size)
    stderr = np.empty(durations.size)
    for j, t in enumerate(durations):
        theta = math.pi * t / tau_local
        # shot clock: pulse plus prep/readout dead time
        d = path.next_block(wc.shots, t + 1500.0)
        p = apply_spam(np.sin(theta * d / 2.0) ** 2, config.spam)
        u = rng.uniforms(key, j * wc.shots, wc.shots)
        frac_bright = float(np.mean(u < p))
        bright[j] = frac_bright
        stderr[j] = math.sqrt(frac_bright * (1.0 - frac_bright) / wc.shots)

    def model(t, tau, amp, off):
        return off + amp * np.sin(math.pi * t / (2.0 * tau)) ** 2

    popt, _ = curve_fit(
        model, durations, bright,
        p0=[tau_guess, config.spam.f1 + config.spam.f0 - 1.0,
            1.0 - config.spam.f0],
        bounds=([0.3 * tau_guess, 0.5, 0.0], [3.0 * tau_guess, 1.0, 0.1]),
        maxfev=10000,
    )
    return float(popt[0]), durations, bright, stderr


def _local_pi_time_for(park_um, ion_um, config: ExperimentConfig) -> float:
    d = float(np.linalg.norm(np.asarray(ion_um, float) - np.asarray(park_um, float)))
    rel = gaussian_profile(d, config.beam.waist_um, 0.0)
    return config.waist.pi_time_us / rel


def run_waist(config: ExperimentConfig) -> ResultBundle:
    """Waist from pi times: beam parked midway, then centred on an ion."""
    if config.chain.count != 2:
        raise ConfigError("waist experiment expects a two-ion chain")
    chain = config.chain.build()
    pos_a, pos_b = chain.position(0), chain.position(1)
    midpoint = 0.5 * (pos_a + pos_b)
    spacing = float(np.linalg.norm(pos_b - pos_a))
    probes = (
        ("side_a", midpoint, pos_a),
        ("side_b", midpoint, pos_b),
        ("center", pos_a, pos_a),
    )
    wc = config.waist
    pi_times = {}
    curves = []
    for name, park, ion in probes:
        if wc.shots == 0:
            tau = _measure_pi_time_exact(park, ion, config)
            grid = np.linspace(0.1, wc.span_factor, wc.n_points) * tau
            bright = np.array([_parked_probe(park, ion, config, t) for t in grid])
            err = np.zeros_like(bright)
        else:
            guess = _local_pi_time_for(park, ion, config)
            tau, grid, bright, err = _measure_pi_time_sampled(
                park, ion, config, guess, name)
        pi_times[name] = tau
        curves.append({"probe": name, "durations_us": grid.tolist(),
                       "bright": bright.tolist(), "stderr": err.tolist()})
    estimate = estimate_waist_full(pi_times["side_a"], pi_times["side_b"],
                                   pi_times["center"], spacing)
    data = {"curves": curves}
    derived = {
        "pi_time_side_a_us": pi_times["side_a"],
        "pi_time_side_b_us": pi_times["side_b"],
        "pi_time_center_us": pi_times["center"],
        "waist_um": estimate.waist_um,
        "waist_spread_um": estimate.spread_um,
        "side_estimates_um": list(estimate.side_estimates_um),
    }
    return _bundle("waist", config, data, derived)


def run_table1(config: ExperimentConfig) -> ResultBundle:
    """Sequential gate pairs on the two ions, tomographed and scored."""
    if config.chain.count != 2:
        raise ConfigError("gate-table experiment expects a two-ion chain")
    gt = config.gate_table
    chain = config.chain.build()
    beam = AddressingBeam(tuple(chain.position(0)), config.beam.waist_um,
                          gt.pi_time_us)
    rows = []
    for r, (token_a, token_b) in enumerate(gt.rows):
        results = run_tomography_experiment(
            gate_from_token(token_a), gate_from_token(token_b), chain, beam,
            config.spam, gt.shots_per_basis, config.seed,
            timing=config.timing, floors=config.beam.scatter_floors,
            resamples=gt.resamples, experiment_id=f"table1/row{r}",
        )
        rows.append({
            "gates": [token_a, token_b],
            "ions": [res.to_dict() for res in results],
        })
    derived = {
        "fidelities": [[ion["fidelity"] for ion in row["ions"]] for row in rows],
        "analytic_se": [[ion["analytic_se"] for ion in row["ions"]]
                        for row in rows],
    }
    return _bundle("table1", config, {"rows": rows}, derived)


RUNNERS = {
    "fig2": run_fig2,
    "fig3": run_fig3,
    "waist": run_waist,
    "table1": run_table1,
}


def run_experiment(name: str, config: ExperimentConfig) -> ResultBundle:
    try:
        runner = RUNNERS[name]
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}") from None
    return runner(config)


# ---------------------------------------------------------------------------
# CSV emission and replay


def _csv_rows(bundle: ResultBundle):
    """Tidy (x, series, y, yerr) rows for one bundle."""
    data = bundle.data
    if bundle.experiment == "fig2":
        durations = data["durations_us"]
        for scan in data["scans"]:
            for ion in range(len(scan["bright"][0])):
                series = f"target{scan['target_site']}_ion{ion}"
                for j, x in enumerate(durations):
                    yield x, series, scan["bright"][j][ion], scan["stderr"][j][ion]
    elif bundle.experiment == "fig3":
        offsets = data["offsets_us"]
        labels = {0: "depart", 1: "arrive"}
        for scan in data["scans"]:
            series = labels[scan["aligned_site"]]
            for j, x in enumerate(offsets):
                yield x, series, scan["bright"][j], scan["stderr"][j]
    elif bundle.experiment == "waist":
        for curve in data["curves"]:
            for x, y, e in zip(curve["durations_us"], curve["bright"],
                               curve["stderr"]):
                yield x, curve["probe"], y, e
    elif bundle.experiment == "table1":
        for r, row in enumerate(data["rows"]):
            for ion, label in enumerate(("fidelity_a", "fidelity_b")):
                rec = row["ions"][ion]
                yield r, label, rec["fidelity"], \
                    0.5 * (rec["ci_high"] - rec["ci_low"])
    else:
        raise ConfigError(f"no CSV layout for experiment {bundle.experiment!r}")


def bundle_csv_text(bundle: ResultBundle) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "series", "y", "yerr"])
    for x, series, y, yerr in _csv_rows(bundle):
        writer.writerow([f"{x:.17g}", series, f"{y:.17g}", f"{yerr:.17g}"])
    return buf.getvalue()


CSV_NAMES = {
    "fig2": "fig2_scan.csv",
    "fig3": "fig3_scan.csv",
    "waist": "waist_scan.csv",
    "table1": "table1_rows.csv",
}


def write_bundle(bundle: ResultBundle, out_dir: str, fmt: str = "both") -> list:
    """Write <experiment>.json and/or the per-curve CSV; returns paths."""
    if fmt not in ("json", "csv", "both"):
        raise ConfigError(f"unknown output format {fmt!r}")
    paths = []
    if fmt in ("json", "both"):
        path = os.path.join(out_dir, f"{bundle.experiment}.json")
        _atomic_write_text(path, bundle.to_json())
        paths.append(path)
    if fmt in ("csv", "both"):
        path = os.path.join(out_dir, CSV_NAMES[bundle.experiment])
        _atomic_write_text(path, bundle_csv_text(bundle))
        paths.append(path)
    return paths


def rerun_from_bundle(bundle) -> ResultBundle:
    """Re-execute an experiment from the config echoed in its bundle."""
    if isinstance(bundle, ResultBundle):
        bundle = bundle.to_dict()
    config = ExperimentConfig.from_dict(bundle["config"])
    return run_experiment(bundle["experiment"], config)


def verify_replay(bundle) -> bool:
    """True when a fresh run from the echoed config reproduces the arrays."""
    if isinstance(bundle, ResultBundle):
        bundle = bundle.to_dict()
    fresh = rerun_from_bundle(bundle)
    return fresh.data == bundle["data"] and fresh.derived == bundle["derived"]
