from .features import FeatureTemplateConfig, extract_features, word_shape
from .model import (
    CrfModel,
    CrfParams,
    Featurized,
    emission_scores,
    featurize,
    forward_backward,
    log_partition,
    nll_and_gradient,
    path_score,
    viterbi,
    viterbi_decode,
)
from .persistence import load_model, save_model
from .training import EpochRecord, TrainConfig, TrainResult, train

__all__ = [
    "CrfModel",
    "CrfParams",
    "EpochRecord",
    "FeatureTemplateConfig",
    "Featurized",
    "TrainConfig",
    "TrainResult",
    "emission_scores",
    "extract_features",
    "featurize",
    "forward_backward",
    "load_model",
    "log_partition",
    "nll_and_gradient",
    "path_score",
    "save_model",
    "train",
    "viterbi",
    "viterbi_decode",
    "word_shape",
]
