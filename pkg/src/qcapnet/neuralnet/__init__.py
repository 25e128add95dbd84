"""From-scratch convolutional networks for success-probability regression."""
from .io import load_model, save_model
from .layers import Conv2D, Dense, Flatten, Pool2D, conv_apply
from .model import CnnModel, CnnSpec, bce, build_model, forward, loss_and_gradients, train, train_final
from .optim import AdamState, adam_step
from .reference import build_lps_reference_network, build_sequential_cnot_filters
from .search import Candidates, SearchSpace, hyperparameter_search

__all__ = [
    "AdamState", "Candidates", "CnnModel", "CnnSpec", "Conv2D", "Dense", "Flatten", "Pool2D", "SearchSpace",
    "adam_step", "bce", "build_lps_reference_network", "build_model", "build_sequential_cnot_filters",
    "conv_apply", "forward", "hyperparameter_search", "load_model", "loss_and_gradients", "save_model",
    "train", "train_final",
]
