"""Exception hierarchy shared by every module."""


class RoughStabError(Exception):
    pass


class InputError(RoughStabError, ValueError):
    """Non-finite or malformed input data."""


class DimensionError(RoughStabError, ValueError):
    pass


class DomainError(RoughStabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UnsupportedError(RoughStabError):
    pass


class SamplerError(RoughStabError):
    pass


class DivergenceError(RoughStabError, ArithmeticError):
    pass


class ConfigError(RoughStabError, ValueError):
    pass


class RoughRegimeWarning(UserWarning):
    """Parameters outside the 1/3 < H <= 1/2, 2 < p < 3 regime."""


class ConstantAuditWarning(UserWarning):
    """A declared Lipschitz/bound constant is beaten by a sampled quotient."""


class StepSizeWarning(UserWarning):
    """A solver step carries a rough norm at or above the greedy threshold."""
