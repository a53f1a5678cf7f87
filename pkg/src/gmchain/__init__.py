"""Temporal contrastive trajectory embeddings with closed-form Gaussian
prediction and waypoint planning."""

__version__ = "0.1.0"

from .data import Trajectory, TrajectoryDataset, load_csv_series, load_dataset, \
    save_dataset, spiral_dataset
from .encoder import EncoderPair, embed, embed_future, init_encoder, load_checkpoint, \
    save_checkpoint
from .estimator import ContrastiveEncoder
from .inference import GaussianBelief, PlanResult, interpolate_waypoints, log_density, \
    plan_chain, plan_single, predict_future, predict_past
from .maze import MazeSpec, default_maze, maze_dataset
from .objective import TrainConfig, train

__all__ = [
    "ContrastiveEncoder",
    "EncoderPair",
    "GaussianBelief",
    "MazeSpec",
    "PlanResult",
    "Trajectory",
    "TrajectoryDataset",
    "TrainConfig",
    "default_maze",
    "embed",
    "embed_future",
    "init_encoder",
    "interpolate_waypoints",
    "load_checkpoint",
    "load_csv_series",
    "load_dataset",
    "log_density",
    "maze_dataset",
    "plan_chain",
    "plan_single",
    "predict_future",
    "predict_past",
    "save_checkpoint",
    "save_dataset",
    "spiral_dataset",
    "train",
]
