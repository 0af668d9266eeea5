from .features import FeatureConfig, extract_features, sentence_features, word_shape
from .model import (CRFModel, TrainConfig, build_model, load_model, log_partition,
                    objective_and_gradient, read_model, save_model, tag_corpus, train_crf,
                    viterbi_decode, write_model)

__all__ = [
    "FeatureConfig", "extract_features", "sentence_features", "word_shape",
    "CRFModel", "TrainConfig", "build_model", "load_model", "log_partition",
    "objective_and_gradient", "read_model", "save_model", "tag_corpus", "train_crf",
    "viterbi_decode", "write_model",
]
