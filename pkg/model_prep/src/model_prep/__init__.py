"""Training-side companion to cvelink: build pairs, fine-tune, export.

The pipeline runs in three steps. ``build_training_pairs`` turns the
catalog mapping into labeled train/val/test files, ``fine_tune`` trains
a sentence encoder on them with a cosine objective, and
``export_portable_model`` writes the traced-graph directory the cvelink
portable backend loads for inference.
"""

from .config import (
    DEFAULT_EPOCHS,
    DEFAULT_EVAL_EVERY,
    DEFAULT_WARMUP_STEPS,
    TrainConfig,
)
from .errors import ConfigError, ExportError, ModelPrepError, TrainingError
from .export import (
    EXPORT_DIM,
    PARITY_TOLERANCE,
    PROBE_SENTENCES,
    export_portable_model,
)
from .pairs import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    SplitPaths,
    build_training_pairs,
    load_labeled_texts,
)
from .train import fine_tune, init_base_model

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
