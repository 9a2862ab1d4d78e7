"""Exception types shared across the simulator."""


class MicpSimError(Exception):
    """Base class for all simulator errors."""


class DomainError(MicpSimError, ValueError):
    """A value is outside the physically admissible range."""


class InvariantError(MicpSimError, ValueError):
    """A state object violates one of its declared invariants."""


class GeometryError(MicpSimError, ValueError):
    """Grid or leak geometry is inconsistent with the domain."""


class EmptyDomainError(GeometryError):
    """Grid construction produced zero active cells."""


class ConfigError(MicpSimError, ValueError):
    """Configuration text failed to parse or validate.

    Carries the full list of problems so a user can fix everything in one
    pass instead of being fed one error at a time.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class OracleError(MicpSimError, RuntimeError):
    """The explicit fine-step reference integrator went unstable."""


class ConvergenceError(MicpSimError, RuntimeError):
    """Newton failed and time-step cuts hit the minimum step size.

    ``last_good_state`` / ``last_good_time`` hold the most recent converged
    state so a driver can write a restart snapshot before giving up.
    """

    def __init__(self, message, last_good_state=None, last_good_time=None):
        super().__init__(message)
        self.last_good_state = last_good_state
        self.last_good_time = last_good_time
