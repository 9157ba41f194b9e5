"""Assembly-based learning in a sparse random-graph model of brain areas."""
from .graph import ConfigError, ModelConfig, SizingError, make_rng
from .learning import TrainConfig, build_model, classify_halfspace, classify_overlap, train_classes

__version__ = "0.1.0"

__all__ = ["ConfigError", "ModelConfig", "SizingError", "TrainConfig", "build_model",
           "classify_halfspace", "classify_overlap", "make_rng", "train_classes"]
