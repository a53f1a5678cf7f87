"""Scikit-learn style front end for the contrastive trajectory encoder.

``ContrastiveEncoder`` follows the fit/transform contract (plus get_params /
set_params via BaseEstimator), so it drops into sklearn pipelines and model
selection utilities. Fitting consumes trajectories; transforming maps
observation rows to embeddings.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .data import Trajectory, TrajectoryDataset
from .encoder import embed, embed_future
from .inference import GaussianBelief, PlanResult, interpolate_waypoints, plan_chain, \
    predict_future, predict_past
from .objective import StepRecord, TrainConfig, train


def _as_dataset(x) -> TrajectoryDataset:
    if isinstance(x, TrajectoryDataset):
        return x
    try:
        trajs = tuple(
            Trajectory(observations=np.asarray(t, dtype=np.float64), id=i)
            for i, t in enumerate(x))
    except (TypeError, ValueError) as exc:
        raise ValueError(
            "fit expects a TrajectoryDataset or a sequence of (T_i, d) arrays") from exc
    return TrajectoryDataset(trajs, obs_dim=trajs[0].observations.shape[1],
                             meta="arrays")


class ContrastiveEncoder(BaseEstimator, TransformerMixin):
    """Temporal contrastive embedding of trajectory observations.

    Parameters mirror the training configuration keys. After ``fit``, the
    learned encoder pair is available as ``encoder_`` and the closed-form
    inference helpers (predict_future_belief, plan, ...) become usable.
    """

    def __init__(
        self,
        repr_dim: int = 8,
        hidden_sizes: tuple[int, ...] = (64, 64),
        batch_size: int = 256,
        learning_rate: float = 3e-4,
        steps: int = 20000,
        c: float = 1.0,
        dual_step: float = 1e-3,
        gamma: float = 0.9,
        optimizer: str = "adam",
        seed: int = 0,
    ):
        self.repr_dim = repr_dim
        self.hidden_sizes = hidden_sizes
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.steps = steps
        self.c = c
        self.dual_step = dual_step
        self.gamma = gamma
        self.optimizer = optimizer
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            steps=self.steps,
            c=self.c,
            dual_step=self.dual_step,
            gamma=self.gamma,
            seed=self.seed,
            optimizer=self.optimizer,
            hidden_sizes=tuple(self.hidden_sizes),
            repr_dim=self.repr_dim,
        )

    def fit(self, X, y=None, callback=None):
        """Train on trajectories (a TrajectoryDataset or sequence of arrays)."""
        dataset = _as_dataset(X)
        self.history_: list[StepRecord] = []

        def record(step: StepRecord):
            self.history_.append(step)
            if callback is not None:
                callback(step)

        self.encoder_ = train(dataset, self._config(), callback=record)
        self.n_features_in_ = dataset.obs_dim
        return self

    def _require_fitted(self):
        if not hasattr(self, "encoder_"):
            raise NotFittedError("this ContrastiveEncoder has not been fitted yet")

    def _validated(self, X) -> np.ndarray:
        self._require_fitted()
        arr = check_array(X, dtype=np.float64, ensure_2d=True)
        if arr.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {arr.shape[1]} features, encoder was fitted with "
                f"{self.n_features_in_}")
        return arr

    def transform(self, X) -> np.ndarray:
        """Embeddings of observation rows, shape (n, repr_dim)."""
        return embed(self.encoder_, self._validated(X))

    def predict(self, X) -> np.ndarray:
        """Mean embedding of states reached after each observation row."""
        shrink = self.encoder_.norm_budget / (self.encoder_.norm_budget + 1.0)
        return shrink * embed_future(self.encoder_, self._validated(X))

    def predict_future_belief(self, x) -> GaussianBelief:
        self._require_fitted()
        enc = self.encoder_
        return predict_future(embed(enc, np.asarray(x, dtype=np.float64)),
                              enc.transition, enc.norm_budget)

    def predict_past_belief(self, x) -> GaussianBelief:
        self._require_fitted()
        enc = self.encoder_
        return predict_past(embed(enc, np.asarray(x, dtype=np.float64)),
                            enc.transition, enc.norm_budget)

    def plan(self, start, goal, num_waypoints: int, mode: str = "chain") -> PlanResult:
        """Posterior waypoint embeddings between two observations."""
        self._require_fitted()
        enc = self.encoder_
        start_rep = embed(enc, np.asarray(start, dtype=np.float64))
        goal_rep = embed(enc, np.asarray(goal, dtype=np.float64))
        if mode == "chain":
            return plan_chain(start_rep, goal_rep, num_waypoints, enc.transition,
                              enc.norm_budget)
        if mode == "special":
            return interpolate_waypoints(start_rep, goal_rep, num_waypoints, enc.transition)
        raise ValueError(f"mode must be 'chain' or 'special', got {mode!r}")
