"""Exception types shared across the package."""


class RmcError(Exception):
    """Base class for all package errors."""


class ConfigError(RmcError):
    """Invalid or unparsable scenario configuration."""


class DecompositionError(RmcError):
    """Base class for input-gain factorization failures."""


class SingularMinorError(DecompositionError):
    """A leading principal minor is numerically zero.

    Attributes
    ----------
    k : int
        1-based index of the offending minor.
    t : float or None
        Simulation time at which the failure occurred, when raised from a
        running simulation.
    """

    def __init__(self, k, value=None, t=None):
        self.k = int(k)
        self.value = value
        self.t = t
        msg = f"leading principal minor {self.k} is numerically zero"
        if value is not None:
            msg += f" (value {value:.3e})"
        if t is not None:
            msg += f" at t={t:.6g} s"
        super().__init__(msg)


class NonFiniteStateError(RmcError):
    """The integrated state left the set of finite floating-point vectors."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"non-finite state encountered at t={t:.6g} s")


class PlantModelError(RmcError):
    """The plant violated one of its declared invariants during a run."""

    def __init__(self, message, t=None):
        self.t = t
        if t is not None:
            message += f" at t={t:.6g} s"
        super().__init__(message)
