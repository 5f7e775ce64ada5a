"""Exception types shared across the package."""


class BootsprtError(Exception):
    """Base class for all package-specific errors."""


class DegenerateBlock(BootsprtError):
    """A block (or resample) has no usable variation for the requested metric."""


class ZeroSigma(BootsprtError):
    """Studentization requested with a zero standard error."""


class AllSamplesEqual(BootsprtError):
    """Kernel density fit requested on samples with zero spread."""


class CalibrationFailed(BootsprtError):
    """No candidate threshold met the calibration target."""


class MalformedRow(BootsprtError):
    """A CSV row failed parsing or violated a record invariant."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class MissingHeader(BootsprtError):
    """Input CSV does not start with the expected header row."""


class ConfigError(BootsprtError):
    """Invalid run configuration."""
