"""Exception hierarchy. The CLI maps each class onto an exit code."""


class ConfigError(ValueError):
    """Invalid parameters or an under-resolved configuration (exit code 2)."""


class NumericalError(RuntimeError):
    """A numerical stage failed: instability, boundary-attained supremum (exit code 3)."""


class BudgetExceeded(RuntimeError):
    """Combinatorial or sweep size budget exceeded (exit code 4)."""
