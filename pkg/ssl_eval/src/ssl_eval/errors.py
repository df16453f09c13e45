"""Exception taxonomy for the evaluator."""


class SslEvalError(Exception):
    """Base class for all package errors."""


class ContractError(SslEvalError, ValueError):
    """Caller violated an operation precondition (shape, range, paths)."""


class EmbeddingFormatError(SslEvalError, ValueError):
    """Embedding file magic, version, or payload is not usable."""


class ModelUnavailableError(SslEvalError, RuntimeError):
    """No local copy of the SSL model weights could be found."""
