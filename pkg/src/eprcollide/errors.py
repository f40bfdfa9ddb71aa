"""Exception hierarchy shared by all modules."""


class ValidationError(ValueError):
    """An input violates a domain invariant (non-physical state, bad parameter)."""


class DomainError(ValidationError):
    """A scalar argument lies outside the domain of an operation."""


class PreconditionError(ValidationError):
    """A phase-space sample is outside the collision geometry (B not left of A)."""


class ConfigError(ValidationError):
    """A run configuration cannot be resolved."""


class SimulationError(RuntimeError):
    """A simulation failed after it started (too many rejections, re-collision)."""


class TruncationError(SimulationError):
    """A drawn sample left the collision geometry under the ``error`` policy."""


class SecondCollisionError(SimulationError):
    """Particles approach each other again after their elastic collision."""


class BracketError(RuntimeError):
    """A sweep did not bracket an interior minimum of its objective."""
