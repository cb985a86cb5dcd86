"""Exception types shared across the toolkit."""


class AdvTextureError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(AdvTextureError, ValueError):
    """A caller passed an argument outside an operation's contract."""


class InvalidSpecError(AdvTextureError, ValueError):
    """A network spec violates the all-convolutional / zero-padding contract."""


class NumericDegeneracyError(AdvTextureError, ArithmeticError):
    """A linear system required by a transform is singular."""


class CapabilityError(AdvTextureError, RuntimeError):
    """An adapter was asked for a capability it does not provide."""


class DatasetError(AdvTextureError, OSError):
    """Dataset ingestion failed (missing directory, too many corrupt files)."""


class ArtifactMismatchError(AdvTextureError, RuntimeError):
    """Two persisted artifacts that must belong together do not."""


class DivergenceError(AdvTextureError, RuntimeError):
    """Training produced a non-finite loss; a diagnostic checkpoint was saved."""
