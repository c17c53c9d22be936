"""Exception hierarchy shared across the flight stack."""


class FlightStackError(Exception):
    """Base class for all errors raised by quadstack."""


class InvalidArgumentError(FlightStackError, ValueError):
    pass


class ModelConfigError(FlightStackError, ValueError):
    """Physically invalid quadrotor parameters (e.g. singular allocation)."""


class CommandModeError(FlightStackError, AttributeError):
    """Access to the payload of a command mode that is not active."""


class SingularityError(FlightStackError, ArithmeticError):
    """Thrust direction undefined (free fall) in a flatness computation."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"thrust direction undefined (free fall) at t={t:.6f} s")


class NumericalError(FlightStackError, ArithmeticError):
    pass


class SimulationFault(FlightStackError, RuntimeError):
    def __init__(self, step, message):
        self.step = step
        super().__init__(f"simulation fault at step {step}: {message}")


class TrajectoryFormatError(FlightStackError, ValueError):
    """Malformed trajectory file. ``line`` is 1-based."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        loc = ""
        if source is not None:
            loc += f"{source}:"
        if line is not None:
            loc += f"{line}:"
        super().__init__(f"{loc} {message}" if loc else message)


class ConfigError(FlightStackError, ValueError):
    """Invalid configuration value; carries the key path and source line."""

    def __init__(self, message, path=None, line=None, source=None):
        self.path = path
        self.line = line
        self.source = source
        parts = []
        if source is not None:
            parts.append(str(source))
        if line is not None:
            parts.append(f"line {line}")
        if path:
            parts.append(path)
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class BridgeError(FlightStackError, RuntimeError):
    pass


class UsageError(FlightStackError, ValueError):
    pass
