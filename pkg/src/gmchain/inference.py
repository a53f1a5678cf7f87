"""Closed-form Gaussian inference over learned embeddings.

Under the trained pairing (predicted future embedding vs. future embedding),
embeddings along a trajectory behave like a discrete Gauss-Markov chain with
shrinkage factor budget / (budget + 1). Prediction, single-waypoint
posteriors, and multi-waypoint posteriors are all Gaussians whose parameters
come from small dense or block-tridiagonal solves. ``budget`` must be the
value the encoder was trained with; it is stored in the checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import (
    BlockTridiagonal,
    as_matrix,
    as_vector,
    block_tridiag_marginal_covs,
    block_tridiag_solve,
)

_SYM_TOL = 1e-10


def _check_spd(m: np.ndarray, name: str):
    """Symmetry within 1e-10 plus a Cholesky for positive definiteness."""
    if not np.allclose(m, m.T, atol=_SYM_TOL, rtol=0.0):
        raise ValueError(f"{name} is not symmetric within {_SYM_TOL}")
    try:
        return scipy.linalg.cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc


@dataclass(frozen=True)
class GaussianBelief:
    """Multivariate Gaussian in moment ("moment") or canonical ("canonical") form.

    Moment form stores (mean, covariance); canonical form stores
    (shift, precision) with mean = precision^-1 shift.
    """

    form: str
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if self.form not in ("moment", "canonical"):
            raise ValueError(f"unknown form {self.form!r}")
        loc = as_vector(self.loc, name="loc")
        scale = as_matrix(self.scale, shape=(loc.size, loc.size), name="scale")
        _check_spd(scale, "covariance" if self.form == "moment" else "precision")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.loc.size

    def to_moment(self) -> "GaussianBelief":
        if self.form == "moment":
            return self
        factor = scipy.linalg.cho_factor(self.scale, lower=True, check_finite=False)
        mean = scipy.linalg.cho_solve(factor, self.loc, check_finite=False)
        cov = scipy.linalg.cho_solve(factor, np.eye(self.dim), check_finite=False)
        return GaussianBelief("moment", mean, 0.5 * (cov + cov.T))

    def to_canonical(self) -> "GaussianBelief":
        if self.form == "canonical":
            return self
        factor = scipy.linalg.cho_factor(self.scale, lower=True, check_finite=False)
        precision = scipy.linalg.cho_solve(factor, np.eye(self.dim), check_finite=False)
        eta = scipy.linalg.cho_solve(factor, self.loc, check_finite=False)
        return GaussianBelief("canonical", eta, 0.5 * (precision + precision.T))

    @property
    def mean(self) -> np.ndarray:
        return self.to_moment().loc

    @property
    def cov(self) -> np.ndarray:
        return self.to_moment().scale


@dataclass(frozen=True)
class PlanResult:
    """Posterior marginals over an ordered sequence of waypoint embeddings.

    ``covariances`` is None when the result comes from the interpolation
    shortcut, which yields means only. ``interpolation_weights`` holds the
    convex weights i / (n + 1) whenever interpolation was used.
    """

    means: tuple[np.ndarray, ...]
    covariances: tuple[np.ndarray, ...] | None = None
    interpolation_weights: tuple[float, ...] | None = None
    joint_precision: BlockTridiagonal | None = None

    def __len__(self) -> int:
        return len(self.means)

    @property
    def waypoints(self) -> list[GaussianBelief]:
        if self.covariances is None:
            raise ValueError("interpolated plans carry means only, no covariances")
        return [GaussianBelief("moment", m, c) for m, c in zip(self.means, self.covariances)]


def _shrinkage(budget: float) -> float:
    if budget <= 0:
        raise ValueError("budget must be positive")
    return budget / (budget + 1.0)


def predict_future(rep, transition, budget: float) -> GaussianBelief:
    """Distribution over embeddings of states reached after the given one.

    An isotropic Gaussian: mean is the shrunk transition applied to the
    embedding, covariance is shrinkage times identity.
    """
    rep = as_vector(rep, name="rep")
    a = as_matrix(transition, shape=(rep.size, rep.size), name="transition")
    s = _shrinkage(budget)
    return GaussianBelief("moment", s * (a @ rep), s * np.eye(rep.size))


def predict_past(rep, transition, budget: float) -> GaussianBelief:
    """Distribution over embeddings of states that precede the given one."""
    return predict_future(rep, np.asarray(transition, dtype=np.float64).T, budget)


def plan_single(start_rep, goal_rep, transition, budget: float) -> GaussianBelief:
    """Posterior over the embedding of one waypoint between two states."""
    start_rep = as_vector(start_rep, name="start_rep")
    goal_rep = as_vector(goal_rep, dim=start_rep.size, name="goal_rep")
    a = as_matrix(transition, shape=(start_rep.size, start_rep.size), name="transition")
    s = _shrinkage(budget)
    precision = s * (a.T @ a) + (1.0 / s) * np.eye(start_rep.size)
    eta = a.T @ goal_rep + a @ start_rep
    return GaussianBelief("canonical", eta, precision).to_moment()


def _chain_precision(a: np.ndarray, budget: float, n: int) -> BlockTridiagonal:
    s = _shrinkage(budget)
    k = a.shape[0]
    diag_block = s * (a.T @ a) + (1.0 / s) * np.eye(k)
    return BlockTridiagonal(
        diag=np.repeat(diag_block[None, :, :], n, axis=0),
        lower=np.repeat(-a[None, :, :], n - 1, axis=0),
        upper=np.repeat(-a.T[None, :, :], n - 1, axis=0),
    )


def plan_chain(start_rep, goal_rep, num_waypoints: int, transition, budget: float) -> PlanResult:
    """Posterior marginals over a chain of waypoint embeddings.

    The joint posterior has block-tridiagonal precision, so means and
    per-waypoint covariances cost O(n k^3). Reduces exactly to plan_single
    at num_waypoints=1.
    """
    start_rep = as_vector(start_rep, name="start_rep")
    goal_rep = as_vector(goal_rep, dim=start_rep.size, name="goal_rep")
    k = start_rep.size
    a = as_matrix(transition, shape=(k, k), name="transition")
    if num_waypoints < 1:
        raise ValueError("num_waypoints must be at least 1")
    precision = _chain_precision(a, budget, num_waypoints)
    eta = np.zeros(num_waypoints * k)
    eta[:k] = a @ start_rep
    eta[-k:] += a.T @ goal_rep
    means = block_tridiag_solve(precision, eta).reshape(num_waypoints, k)
    covs = block_tridiag_marginal_covs(precision)
    return PlanResult(
        means=tuple(means),
        covariances=tuple(covs),
        joint_precision=precision,
    )


def interpolate_waypoints(start_rep, goal_rep, num_waypoints: int, transition) -> PlanResult:
    """Interpolation shortcut for waypoint means (no covariances).

    Waypoint i is the convex combination of the forward prediction from the
    start and the backward prediction from the goal with weight i / (n + 1).
    This matches plan_chain in the weak-regularization limit with an identity
    transition and is used as a fast approximate planner otherwise.
    """
    start_rep = as_vector(start_rep, name="start_rep")
    goal_rep = as_vector(goal_rep, dim=start_rep.size, name="goal_rep")
    a = as_matrix(transition, shape=(start_rep.size, start_rep.size), name="transition")
    if num_waypoints < 1:
        raise ValueError("num_waypoints must be at least 1")
    ahead = a @ start_rep
    behind = a.T @ goal_rep
    weights = tuple((i + 1) / (num_waypoints + 1.0) for i in range(num_waypoints))
    means = tuple((1.0 - w) * ahead + w * behind for w in weights)
    return PlanResult(means=means, covariances=None, interpolation_weights=weights)


def log_density(belief: GaussianBelief, x) -> float:
    """Exact multivariate normal log density of a point under a belief."""
    moment = belief.to_moment()
    x = as_vector(x, dim=moment.dim, name="x")
    factor = scipy.linalg.cho_factor(moment.scale, lower=True, check_finite=False)
    diff = x - moment.loc
    quad = float(diff @ scipy.linalg.cho_solve(factor, diff, check_finite=False))
    logdet = 2.0 * float(np.log(np.diag(factor[0])).sum())
    return -0.5 * (moment.dim * np.log(2.0 * np.pi) + logdet + quad)


def log_density_many(belief: GaussianBelief, xs) -> np.ndarray:
    """log_density evaluated at every row of xs."""
    moment = belief.to_moment()
    pts = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if pts.shape[1] != moment.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {moment.dim}")
    factor = scipy.linalg.cho_factor(moment.scale, lower=True, check_finite=False)
    diff = pts - moment.loc
    solved = scipy.linalg.cho_solve(factor, diff.T, check_finite=False)
    quad = np.einsum("ij,ji->i", diff, solved)
    logdet = 2.0 * float(np.log(np.diag(factor[0])).sum())
    return -0.5 * (moment.dim * np.log(2.0 * np.pi) + logdet + quad)
