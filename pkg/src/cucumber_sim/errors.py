"""Exception types shared across the package."""


class CucumberSimError(Exception):
    """Base class for every error raised by cucumber_sim."""


class InvalidAlpha(CucumberSimError):
    """Confidence level outside the open interval (0, 1)."""


class QuantileUnavailable(CucumberSimError):
    """Requested quantile level is not stored on a pre-quantized series."""


class GridMismatch(CucumberSimError):
    """Two series that must share a time grid do not."""


class RepresentationMismatch(CucumberSimError):
    """Series representation is not usable by the requested operation."""


class UnitMismatch(CucumberSimError):
    """Series units are incompatible with the requested operation."""


class InvalidUtilization(CucumberSimError):
    """Utilization value outside [0, 1]."""


class InvariantViolation(CucumberSimError):
    """Constructed or ingested data violates a structural invariant."""


class ParseError(CucumberSimError):
    """Malformed input file; message carries file, row and column context."""


class InvalidProfile(CucumberSimError):
    """Site profile parameters are out of range."""


class ManifestError(CucumberSimError):
    """Scenario directory manifest is missing or incomplete."""


class ConfigError(CucumberSimError):
    """Simulation or CLI configuration is invalid."""


class DataError(CucumberSimError):
    """Scenario data is unusable at runtime (missing forecasts, bad spans)."""
