"""Finite-state testbed with exact discounted occupancies.

A tabular chain admits a closed-form occupancy matrix, which makes it the
ground truth for two checks used throughout the test suite: a directly
parameterized critic trained on the contrastive objective should converge to
the log probability ratio up to a single constant, and the batch repulsion
term of the objective should equal a leave-one-out kernel entropy estimate up
to an additive constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .objective import Adam


@dataclass(frozen=True)
class TabularChain:
    """Row-stochastic transition matrix with a discount and start distribution."""

    transition: np.ndarray  # (S, S)
    gamma: float
    initial_dist: np.ndarray  # (S,)

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"transition must be square, got {p.shape}")
        if np.any(p < 0):
            raise ValueError("transition entries must be nonnegative")
        if not np.allclose(p.sum(axis=1), 1.0, atol=1e-12, rtol=0.0):
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        mu = np.asarray(self.initial_dist, dtype=np.float64)
        if mu.shape != (p.shape[0],) or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("initial_dist must be a distribution over the states")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "initial_dist", mu)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]


def random_chain(num_states: int, gamma: float, seed: int = 0,
                 concentration: float = 1.0) -> TabularChain:
    """Dirichlet-random transition rows with a uniform start distribution."""
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(num_states, concentration), size=num_states)
    return TabularChain(p, gamma, np.full(num_states, 1.0 / num_states))


def discounted_occupancy(chain: TabularChain) -> np.ndarray:
    """Exact discounted occupancy matrix; row x is the distribution over
    states visited from x, geometrically weighted with the current state
    itself carrying weight 1 - gamma."""
    s = chain.num_states
    system = np.eye(s) - chain.gamma * chain.transition
    return (1.0 - chain.gamma) * np.linalg.solve(system, np.eye(s))


@dataclass(frozen=True)
class TabularCritic:
    """Directly parameterized pair score table."""

    table: np.ndarray  # (S, S)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"table must be square, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("table contains non-finite entries")
        object.__setattr__(self, "table", t)


def fit_tabular_critic(
    chain: TabularChain,
    batch_size: int = 4096,
    steps: int = 20000,
    seed: int = 0,
    learning_rate: float = 0.05,
    average_fraction: float = 0.25,
) -> TabularCritic:
    """Ascend the symmetrized in-batch classification objective on a table.

    Anchors are drawn from the chain's start distribution and positives from
    the exact occupancy row of each anchor, so the optimum is the pointwise
    log ratio between the occupancy and the positive marginal, up to one
    additive constant.

    Because the score of a batch item depends only on its (state, future
    state) pair, each sampled batch is represented by its pair-count matrix
    and the objective gradient is accumulated per cell; this is algebraically
    identical to the per-item computation but costs O(S^2) per step. The
    learning rate decays linearly and the returned table averages the final
    ``average_fraction`` of the steps to remove optimizer noise.
    """
    if chain.num_states < 2:
        raise ValueError("need at least 2 states")
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    rng = np.random.default_rng(seed)
    s = chain.num_states
    occ = discounted_occupancy(chain)
    joint = (chain.initial_dist[:, None] * occ).reshape(-1)
    table = np.zeros((s, s))
    opt = Adam(learning_rate)
    averaging_from = int(steps * (1.0 - average_fraction))
    accum = np.zeros_like(table)
    accum_count = 0

    for step in range(steps):
        opt.learning_rate = learning_rate * (1.0 - step / steps)
        counts = rng.multinomial(batch_size, joint).reshape(s, s).astype(np.float64)
        anchor_counts = counts.sum(axis=1)   # items per anchor state
        pos_counts = counts.sum(axis=0)      # items per future state
        scores = np.exp(table - table.max())  # objective is shift-invariant
        row_total = (scores * pos_counts[None, :]).sum(axis=1)
        denom_row = row_total[:, None] - scores
        col_total = (scores * anchor_counts[:, None]).sum(axis=0)
        denom_col = col_total[None, :] - scores
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio_row = np.where(counts > 0, counts / denom_row, 0.0)
            ratio_col = np.where(counts > 0, counts / denom_col, 0.0)
        grad = (
            2.0 * counts
            - scores * (pos_counts[None, :] * ratio_row.sum(axis=1)[:, None] - ratio_row)
            - scores * (anchor_counts[:, None] * ratio_col.sum(axis=0)[None, :] - ratio_col)
        )
        opt.step([table], [-grad / batch_size])  # ascend
        if not np.all(np.isfinite(table)):
            raise RuntimeError(f"critic diverged at step {step}")
        if step >= averaging_from:
            accum += table
            accum_count += 1
    return TabularCritic(accum / accum_count if accum_count else table)


@dataclass(frozen=True)
class CriticGapReport:
    """How far a critic table sits from the exact log probability ratio."""

    max_abs_dev: float
    offset: float
    per_row_offset_var: float
    excluded_pairs: int
    deviations: np.ndarray = field(repr=False)

    def to_text(self) -> str:
        return (
            f"max_abs_dev: {self.max_abs_dev:.6g}\n"
            f"offset: {self.offset:.6g}\n"
            f"per_row_offset_var: {self.per_row_offset_var:.6g}\n"
            f"excluded_pairs: {self.excluded_pairs}\n"
        )


def critic_log_ratio_gap(critic: TabularCritic, chain: TabularChain) -> CriticGapReport:
    """Compare a critic table against log(occupancy / positive marginal).

    The comparison removes the best single constant (the mean gap) before
    measuring the maximum deviation. Pairs with zero probability under the
    sampling joint are excluded and counted.
    """
    if critic.table.shape[0] != chain.num_states:
        raise ValueError("critic and chain have different numbers of states")
    occ = discounted_occupancy(chain)
    marginal = chain.initial_dist @ occ
    joint = chain.initial_dist[:, None] * occ
    valid = joint > 0.0
    if not np.any(valid):
        raise ValueError("no pairs have positive probability")
    with np.errstate(divide="ignore"):
        target = np.log(occ) - np.log(marginal)[None, :]
    gap = np.where(valid, critic.table - target, np.nan)
    offset = float(np.nanmean(gap))
    deviations = gap - offset
    rows_with_data = valid.any(axis=1)
    row_means = np.array([np.nanmean(gap[i]) for i in range(gap.shape[0])
                          if rows_with_data[i]])
    return CriticGapReport(
        max_abs_dev=float(np.nanmax(np.abs(deviations))),
        offset=offset,
        per_row_offset_var=float(np.var(row_means)),
        excluded_pairs=int((~valid).sum()),
        deviations=deviations,
    )


def uniformity_entropy_identity(reps) -> tuple[float, float]:
    """Batch repulsion term and leave-one-out Gaussian-kernel entropy estimate.

    The two quantities are computed through separate reductions but are the
    same expression rearranged: repulsion + entropy equals
    (dim / 2) * log(2 * pi) exactly.
    """
    x = np.asarray(reps, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("need at least 3 embeddings of uniform dimension")
    n, k = x.shape
    d2 = np.square(x[:, None, :] - x[None, :, :]).sum(axis=2)
    neg_half = -0.5 * d2
    np.fill_diagonal(neg_half, -np.inf)
    lse = logsumexp(neg_half, axis=1)
    uniformity = float(np.mean(lse - np.log(n - 1)))
    log_kernel_mean = lse - np.log(n - 1) - 0.5 * k * np.log(2.0 * np.pi)
    entropy_estimate = float(-np.mean(log_kernel_mean))
    return uniformity, entropy_estimate
