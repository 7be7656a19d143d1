"""Error types raised by the simulator.

Everything derives from IonsimError so callers can catch the package's
failures with a single except clause.  ConfigError is kept separate in
spirit: it marks bad input (wrong file, bad value) rather than a
simulation that could not run.
"""


class IonsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(IonsimError):
    """Invalid or missing configuration input."""


class ScheduleError(IonsimError):
    """Pulse/switch schedule violates ordering or separation rules."""


class ScanRangeError(IonsimError):
    """A scan grid is empty, unordered, or outside the model's domain."""


class UnreachableTargetError(IonsimError):
    """Requested beam target cannot be reached by the actuator."""


class VoltageRangeError(IonsimError):
    """Drive voltage outside the permitted [0, v_max] interval."""


class SmallAngleError(IonsimError):
    """Mirror tilt outside the small-angle optical model."""


class NonPhysicalStateError(IonsimError):
    """A state failed a physicality check (norm, trace, positivity)."""


class MissingBasisError(IonsimError):
    """Tomography counts lack one of the three measurement bases."""


class InversionBranchError(IonsimError):
    """Crosstalk inversion left the first arcsin branch (population too high)."""


class WaistEstimateError(IonsimError):
    """Waist estimation got a side pi-time not above the center pi-time."""
