"""Exception taxonomy shared across the package."""


class EchoFreeError(Exception):
    """Base class for all package errors."""


class ConfigError(EchoFreeError, ValueError):
    """A configuration value violates its invariants."""


class EmptyInputError(EchoFreeError, ValueError):
    """An operation received an empty signal or frame sequence."""


class ContractError(EchoFreeError, ValueError):
    """Caller violated an operation precondition (shape, range, state)."""


class SignalIntegrityError(EchoFreeError, ValueError):
    """Input samples contain NaN or Inf."""


class SampleRateError(EchoFreeError, ValueError):
    """Audio is not at the supported sample rate."""


class WeightFormatError(EchoFreeError, ValueError):
    """Weight file magic or version is not recognized."""


class WeightIntegrityError(EchoFreeError, ValueError):
    """Weight file is truncated, fails its checksum, or lies about its tensor table."""


class WeightShapeError(EchoFreeError, ValueError):
    """Stored tensor shapes disagree with the model configuration."""


class TrainingDivergedError(EchoFreeError, RuntimeError):
    """Training loss became non-finite.

    ``checkpoint`` holds the parameters of the last finite epoch, if any.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class SilentClipError(EchoFreeError, ValueError):
    """A source clip carries no usable energy; caller should draw another."""
