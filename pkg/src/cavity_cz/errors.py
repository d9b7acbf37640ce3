"""Exception hierarchy shared by all layers of the package."""


class CavityCZError(Exception):
    """Base class for every error raised by this package."""


class InvalidTruncationError(CavityCZError, ValueError):
    pass


class LayoutMismatchError(CavityCZError, ValueError):
    pass


class HermiticityError(CavityCZError, ValueError):
    pass


class InvalidStateError(CavityCZError, ValueError):
    pass


class ResonanceError(CavityCZError, ZeroDivisionError):
    """A detuning denominator vanished.

    The offending denominator is available as ``denominator``.
    """

    def __init__(self, denominator: str, value: float = 0.0):
        self.denominator = denominator
        self.value = value
        super().__init__(f"resonance: denominator {denominator} = {value!r} vanishes")


class GateTimeUndefinedError(CavityCZError, ValueError):
    pass


class StabilityError(CavityCZError, ValueError):
    pass


class MaxStepsExceededError(CavityCZError, RuntimeError):
    def __init__(self, needed: int, allowed: int, suggested_horizon: float | None = None):
        self.needed = needed
        self.allowed = allowed
        self.suggested_horizon = suggested_horizon
        msg = f"integration needs {needed} steps, max_steps is {allowed}"
        if suggested_horizon is not None:
            msg += f"; largest horizon within budget is {suggested_horizon:g} ns"
        super().__init__(msg)


class IntegratorFailureError(CavityCZError, RuntimeError):
    pass


class SamplingTooCoarseError(CavityCZError, ValueError):
    pass


class LeakageTooLargeError(CavityCZError, RuntimeError):
    pass


class ConfigError(CavityCZError, ValueError):
    """Invalid run configuration; ``key`` holds the dotted key path."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
