"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ValueError):
    """A value that must be finite is NaN or infinite."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class ConfigError(ValueError):
    """A configuration value is out of its legal range."""


class SceneGenerationError(RuntimeError):
    """Scene generation could not satisfy its feasibility requirements."""


class ValidationError(ValueError):
    """A manifest or serialized artifact failed validation."""
