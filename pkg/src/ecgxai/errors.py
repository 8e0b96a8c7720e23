"""Exception types shared across the pipeline."""


class EcgxaiError(Exception):
    """Base class for all pipeline errors."""


class ManifestParseError(EcgxaiError):
    """A manifest row is malformed (bad column count, unknown label, ...)."""


class IntegrityError(EcgxaiError):
    """Data on disk contradicts what the manifest or caller declared."""


class ConfigError(EcgxaiError):
    """Invalid configuration value or inconsistent preset."""


class InsufficientBeatsError(EcgxaiError):
    """Too few R peaks / RR intervals for the requested computation."""


class ShapeError(EcgxaiError):
    """Tensor or layer shapes do not line up."""


class TrainingDivergedError(EcgxaiError):
    """Loss became NaN or infinite during training."""
