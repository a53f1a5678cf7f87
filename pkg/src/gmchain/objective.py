"""Symmetrized infoNCE training with a dual-controlled expected-norm constraint.

The critic for a pair is the negative half squared distance between the
predicted future embedding of the current observation and the embedding of
the future observation. Each batch forms a logits matrix over all pairings;
the loss sums a row-normalized and a column-normalized term, excluding the
positive entry from both denominators.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import PairSampler, TrajectoryDataset
from .encoder import EncoderPair, init_encoder, pair_backward, pair_forward

OPTIMIZERS = ("adam", "sgd")


class TrainingDivergedError(RuntimeError):
    """Raised when the loss stops being finite; carries the failing step."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite loss at step {step}")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. Field names match the config-file keys."""

    batch_size: int = 256
    learning_rate: float = 3e-4
    steps: int = 20000
    c: float = 1.0
    dual_step: float = 1e-3
    gamma: float = 0.9
    seed: int = 0
    optimizer: str = "adam"
    hidden_sizes: tuple[int, ...] = (64, 64)
    repr_dim: int = 8

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))


def _pairwise_logits(preds: np.ndarray, feats_pos: np.ndarray) -> np.ndarray:
    """logits[i, j] = -||preds[i] - feats_pos[j]||^2 / 2, via one matmul."""
    p2 = np.square(preds).sum(axis=1)
    f2 = np.square(feats_pos).sum(axis=1)
    return preds @ feats_pos.T - 0.5 * (p2[:, None] + f2[None, :])


def symmetrized_infonce(preds, feats_pos) -> float:
    """Loss value for a batch (sum over batch entries; minimized).

    ``preds`` are the predicted future embeddings of the current observations
    and ``feats_pos`` the embeddings of the sampled future observations.
    """
    loss, _, _ = symmetrized_infonce_grads(preds, feats_pos)
    return loss


def symmetrized_infonce_grads(preds, feats_pos) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus its gradients with respect to both representation batches."""
    preds = np.asarray(preds, dtype=np.float64)
    feats_pos = np.asarray(feats_pos, dtype=np.float64)
    if preds.ndim != 2 or preds.shape != feats_pos.shape:
        raise ValueError(
            f"batches must be equal-shape (B, k) arrays, got {preds.shape} and {feats_pos.shape}")
    b = preds.shape[0]
    if b < 2:
        raise ValueError("batch size must be at least 2 (need in-batch negatives)")
    logits = _pairwise_logits(preds, feats_pos)
    diag = np.diag(logits).copy()
    np.fill_diagonal(logits, -np.inf)
    # One shared-peak exp suffices: squared-distance logits have small spread.
    peak = logits.max()
    expd = np.exp(logits - peak)
    row_tot_exp = expd.sum(axis=1, keepdims=True)
    col_tot_exp = expd.sum(axis=0, keepdims=True)
    lse_rows = peak + np.log(row_tot_exp).ravel()
    lse_cols = peak + np.log(col_tot_exp).ravel()
    loss = -float((2.0 * diag - lse_rows - lse_cols).sum())

    # d loss / d logits: -2 on the diagonal, plus the two off-diagonal softmaxes.
    g_logits = expd / row_tot_exp + expd / col_tot_exp
    g_logits[np.diag_indices_from(g_logits)] -= 2.0
    row_tot = g_logits.sum(axis=1, keepdims=True)
    col_tot = g_logits.sum(axis=0, keepdims=True)
    d_preds = -row_tot * preds + g_logits @ feats_pos
    d_feats_pos = g_logits.T @ preds - col_tot.T * feats_pos
    return loss, d_preds, d_feats_pos


def norm_penalty(feats, repr_dim: int | None = None) -> float:
    """Batch estimate of the per-dimension expected squared embedding norm."""
    f = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if f.shape[0] == 0:
        raise ValueError("need at least one embedding")
    k = repr_dim if repr_dim is not None else f.shape[1]
    return float(np.square(f).sum(axis=1).mean() / k)


def dual_update(dual_weight: float, constraint_value: float, budget: float, dual_step: float) -> float:
    """One projected dual-ascent step on the norm-constraint multiplier."""
    if dual_weight < 0:
        raise ValueError("dual_weight must be nonnegative")
    return max(0.0, dual_weight + dual_step * (constraint_value - budget))


class Adam:
    """Adam with the usual bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None
        self._t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        m_corr = 1.0 - b1 ** self._t
        v_corr = 1.0 - b2 ** self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p -= self.learning_rate * (m / m_corr) / (np.sqrt(v / v_corr) + self.eps)


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


@dataclass
class StepRecord:
    step: int
    loss: float
    constraint_value: float
    dual_weight: float


def regularized_loss_and_grads(enc: EncoderPair, xs, xs_pos):
    """Full training loss (mean infoNCE + dual-weighted penalty) and gradients.

    Returns (loss, constraint_value, GradientBundle). The infoNCE term is
    averaged over the batch so its gradient scale does not depend on the
    batch size; the constraint uses the embeddings of both batch halves.
    """
    acts = pair_forward(enc, xs, xs_pos)
    b = acts._batch
    nce, d_preds, d_feats_pos = symmetrized_infonce_grads(acts.preds, acts.feats_pos)
    nce /= b
    d_preds /= b
    d_feats_pos /= b

    all_feats = np.concatenate([acts.feats, acts.feats_pos], axis=0)
    constraint = norm_penalty(all_feats, enc.repr_dim)
    pen_scale = enc.dual_weight / (enc.repr_dim * all_feats.shape[0])
    d_feats = 2.0 * pen_scale * acts.feats
    d_feats_pos = d_feats_pos + 2.0 * pen_scale * acts.feats_pos

    loss = nce + enc.dual_weight * constraint
    grads = pair_backward(enc, acts, d_preds, d_feats, d_feats_pos)
    return loss, constraint, grads


def train(
    dataset: TrajectoryDataset,
    cfg: TrainConfig,
    encoder: EncoderPair | None = None,
    callback=None,
) -> EncoderPair:
    """Train an encoder pair on the train split of ``dataset``.

    Deterministic given cfg.seed. When ``encoder`` is given, training resumes
    from it (its architecture wins over cfg) and the step counter keeps
    growing. ``callback`` receives a StepRecord after every optimizer step.
    """
    train_split = dataset.subset("train") if "val" in dataset.splits else dataset
    enc = encoder.copy() if encoder is not None else init_encoder(
        input_dim=dataset.obs_dim,
        repr_dim=cfg.repr_dim,
        hidden_sizes=cfg.hidden_sizes,
        norm_budget=cfg.c,
        seed=np.random.default_rng(cfg.seed),
    )
    if enc.input_dim != dataset.obs_dim:
        raise ValueError(
            f"encoder expects inputs of dimension {enc.input_dim}, "
            f"dataset has {dataset.obs_dim}")
    rng = np.random.default_rng([cfg.seed, enc.steps_trained])
    sampler = PairSampler(train_split, cfg.gamma, rng)
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)
    params = enc.param_list()

    for local_step in range(cfg.steps):
        xs, xs_pos = sampler.sample(cfg.batch_size)
        loss, constraint, grads = regularized_loss_and_grads(enc, xs, xs_pos)
        step_index = enc.steps_trained + local_step
        if not np.isfinite(loss):
            raise TrainingDivergedError(step_index)
        opt.step(params, grads.as_list())
        enc.dual_weight = dual_update(enc.dual_weight, constraint, cfg.c, cfg.dual_step)
        if callback is not None:
            callback(StepRecord(step_index, loss, constraint, enc.dual_weight))
    enc.steps_trained += cfg.steps
    return enc


# -- config files -------------------------------------------------------------

_CONFIG_KEYS = {
    "batch_size": int,
    "learning_rate": float,
    "steps": int,
    "c": float,
    "dual_step": float,
    "gamma": float,
    "seed": int,
    "optimizer": str,
    "hidden_sizes": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
    "repr_dim": int,
}


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse ``key = value`` lines into a TrainConfig.

    Unknown keys are rejected so typos fail loudly. Lines starting with ``#``
    and blank lines are ignored.
    """
    cfg = base or TrainConfig()
    overrides = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        try:
            overrides[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise ValueError(f"config line {line_no}: bad value {value!r} for {key!r}") from None
    return replace(cfg, **overrides)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path, "r") as fh:
        return parse_config_text(fh.read(), base=base)
