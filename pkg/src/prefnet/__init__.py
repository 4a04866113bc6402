"""Preference networks: a conditional Markov random field recommender."""
from .data import (AttributeCatalog, MeanStats, ParseError, Rating, RatingTable, ValidationError,
                   compute_means, load_dataset, load_ratings)
from .features import FeatureConfig, ParameterVector, g, load_parameters, save_parameters
from .inference import Recommender, joint_predict, predict_many, predict_rating, recommend_top_n
from .model import PNModel, energy_change, local_conditional
from .similarity import (SelectedPairs, adjusted_cosine_item_similarity, pearson_user_similarity,
                         select_positive_pairs)
from .train import TrainConfig, TrainingDiverged, pseudo_log_likelihood, train

__all__ = [
    "AttributeCatalog", "MeanStats", "ParseError", "Rating", "RatingTable", "ValidationError",
    "compute_means", "load_dataset", "load_ratings", "FeatureConfig", "ParameterVector", "g",
    "load_parameters", "save_parameters", "Recommender", "joint_predict", "predict_many",
    "predict_rating", "recommend_top_n", "PNModel", "energy_change", "local_conditional",
    "SelectedPairs", "adjusted_cosine_item_similarity", "pearson_user_similarity",
    "select_positive_pairs", "TrainConfig", "TrainingDiverged", "pseudo_log_likelihood", "train",
]
