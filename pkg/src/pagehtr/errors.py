"""Exception types shared across the package."""


class PageHTRError(Exception):
    """Base class for all package errors."""


class ShapeError(PageHTRError, ValueError):
    """Operand dimensions do not agree."""


class ParameterError(PageHTRError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class ContractError(PageHTRError, ValueError):
    """A caller broke an operation's precondition."""


class VocabularyError(PageHTRError, ValueError):
    pass


class CheckpointIncompatible(PageHTRError):
    """Checkpoint tensors do not match the model they are loaded into.

    ``names`` lists the offending tensor names, first mismatch first.
    """

    def __init__(self, message, names=()):
        super().__init__(message)
        self.names = list(names)


class NonFiniteLoss(PageHTRError, FloatingPointError):
    def __init__(self, step, digest, value):
        super().__init__(f"non-finite loss {value!r} at step {step} (batch {digest})")
        self.step = step
        self.digest = digest
        self.value = value


class PageOverflowError(PageHTRError):
    """Text does not fit on the page at any allowed font size."""


class UndefinedMetric(PageHTRError, ValueError):
    pass


class ConfigError(PageHTRError, ValueError):
    pass
