class ContractViolation(ValueError):
    """A precondition or shape contract was broken by the caller."""


class ConfigError(ValueError):
    """Invalid run configuration. The message names the offending key or line."""


class NumericalError(FloatingPointError):
    """A loss, gradient or parameter stopped being finite."""
