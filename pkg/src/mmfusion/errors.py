"""Exception hierarchy shared across the package."""


class MMFusionError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MMFusionError, ValueError):
    """Operand shapes do not conform."""


class EmptyInputError(DimensionError):
    """A sequence, vector or collection that must be non-empty was empty."""


class ContractError(MMFusionError, ValueError):
    """A caller violated a documented precondition."""


class ConfigurationError(MMFusionError, ValueError):
    """Model or command configuration is inconsistent or unknown."""


class VocabularyError(MMFusionError, KeyError):
    """Token id outside the vocabulary."""


class DataError(MMFusionError, ValueError):
    """Corpus, split or hypothesis data is missing or inconsistent."""


class FormatError(MMFusionError, ValueError):
    """A file or signal is not in the expected format."""


class DivergenceError(MMFusionError, RuntimeError):
    """Training produced a non-finite loss."""
