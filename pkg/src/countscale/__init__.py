"""Count estimation as sequential weighing, learned with a deep Q-network."""

from .core import (DEFAULT_POOL, CONTINUOUS_POOL, END, Action, ActionPool, EpisodeConfig,
                   EpisodeState, WeightVector, accumulated_value, apply_update, is_terminal)
from .dqn import EpsilonSchedule, QNetParams, ReplayBuffer, Transition
from .quantizer import QuantizerConfig, density_map, inverse_quantize, patch_counts, quantize
from .rewards import RewardConfig, RewardMode, optimal_action, step_reward
from .trainer import Dataset, SynthConfig, TrainConfig, imitation_train, make_dataset, train

__version__ = "0.1.0"
