"""Exception types shared across the package."""


class GpCorrectError(Exception):
    """Base class for package-specific errors."""


class InputError(GpCorrectError, ValueError):
    """Malformed or inconsistent input: dimension mismatch, bad index, bad config."""


class ModelError(GpCorrectError, RuntimeError):
    """GP model construction failed, typically at the SPD factorization."""


class ContractMismatchError(GpCorrectError, ValueError):
    """Correction operators and model disagree on the problem instance."""


class BudgetError(GpCorrectError, RuntimeError):
    """Dense operator storage would exceed the configured scalar budget."""


class BoundUnsatisfiableError(GpCorrectError, RuntimeError):
    """No Taylor order up to the cap meets the requested accuracy."""

    def __init__(self, message, best_order=None, best_bound=None):
        super().__init__(message)
        self.best_order = best_order
        self.best_bound = best_bound


class CacheError(GpCorrectError, RuntimeError):
    """Operator cache file is malformed or incompatible with the model."""
