"""Exception types raised across the package."""


class SdlError(Exception):
    """Base class for every error raised by sdlshrink."""


class ArgumentError(SdlError, ValueError):
    pass


class FormatError(SdlError, ValueError):
    """Malformed file header or encoding."""


class LengthError(FormatError):
    """Payload shorter or longer than the header declares."""


class UnsupportedError(FormatError):
    pass


class RangeError(SdlError, ValueError):
    """Intensity outside [0, 255]."""


class ConfigError(SdlError, ValueError):
    pass


class DegenerateError(SdlError, ValueError):
    """Input for which the requested quantity is undefined."""


class DivergenceError(SdlError, ArithmeticError):
    pass


class StagnationError(SdlError, RuntimeError):
    """A line search or backtracking loop ran out of trials."""


class UsageError(SdlError):
    pass
