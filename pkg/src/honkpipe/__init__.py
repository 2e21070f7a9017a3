"""Vehicle honk analysis: spectrograms, semi-automatic labelling, ensemble
classification and rule-based location context."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, HonkPipeError, TrainingDivergence  # noqa: E402,F401
