"""Exception hierarchy shared by every stage of the pipeline."""


class IdsLabError(Exception):
    """Base class for all errors raised by idslab."""


class ConfigurationError(IdsLabError, ValueError):
    """Invalid configuration value; ``path`` names the offending key when known."""

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path
        self.reason = message


class DecodeError(IdsLabError, ValueError):
    """Malformed Modbus-TCP frame."""


class ShortBufferError(DecodeError):
    pass


class ProtocolIdError(DecodeError):
    pass


class LengthMismatchError(DecodeError):
    pass


class UnknownFunctionError(DecodeError):
    pass


class FrameTooLongError(IdsLabError, ValueError):
    pass


class ScenarioWindowError(IdsLabError, ValueError):
    """Attack window falls outside the run, or before the current clock."""


class ScalingError(IdsLabError, ValueError):
    """Requested composition cannot be realized with the configured scenarios."""


class OrderingError(IdsLabError, ValueError):
    """Packet timestamps are not monotone."""


class EmptyDatasetError(IdsLabError, ValueError):
    pass


class StratificationError(IdsLabError, ValueError):
    pass


class InputError(IdsLabError, ValueError):
    """Non-finite or wrongly shaped model input."""


class ParseError(IdsLabError, ValueError):
    """Schema violation in an input file; carries the 1-based line number."""

    def __init__(self, message, line=None, path=None):
        where = "" if line is None else f"line {line}: "
        super().__init__(f"{where}{message}")
        self.line = line
        self.path = path
        self.reason = message


class DegenerateClassError(IdsLabError, ValueError):
    """An operation needs both classes but only one is present."""


class ManifestError(IdsLabError):
    """Output files are missing or do not match the hashes recorded in the manifest."""
