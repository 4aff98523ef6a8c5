"""Commonsense placement ranking: score models, CM training, evaluation."""

from .embeddings import embed_prompt, load_embeddings, save_embeddings, tokenize
from .scoring import (
    ExternalScores,
    NoisyOracleScores,
    OracleScores,
    RandomScores,
    ScoreModel,
    ThresholdCalibration,
    average_precision,
    calibrate_threshold,
    eval_map,
    ranked_placements,
    score_joint,
)
from .training import EmbeddingRanker, TrainConfig, TrainHistory, train_cm

__all__ = [
    "EmbeddingRanker", "ExternalScores", "NoisyOracleScores", "OracleScores", "RandomScores",
    "ScoreModel", "ThresholdCalibration", "TrainConfig", "TrainHistory", "average_precision",
    "calibrate_threshold", "embed_prompt", "eval_map", "load_embeddings", "ranked_placements",
    "save_embeddings", "score_joint", "tokenize", "train_cm",
]
