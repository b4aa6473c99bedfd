"""Critic-assisted augment-REINFORCE-swap-merge policy gradients for multidimensional discrete actions."""

from .approx import Adam, Mlp
from .trainer import ALGOS, EpisodeLog, RunConfig, run, train
from .toy import ToyConfig, train_toy

__all__ = ["Adam", "Mlp", "ALGOS", "EpisodeLog", "RunConfig", "run", "train", "ToyConfig", "train_toy"]
__version__ = "0.1.0"
