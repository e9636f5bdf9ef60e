"""Exception types raised by the training and export pipeline."""


class ModelPrepError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(ModelPrepError):
    """A training configuration violates an invariant."""


class TrainingError(ModelPrepError):
    """Fine-tuning could not start or produced an unusable model."""


class ExportError(ModelPrepError):
    """The portable export is missing pieces or fails the parity check."""
