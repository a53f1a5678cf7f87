"""Evaluation protocols: waypoint reconstruction error, prediction structure,
embedding moment checks, and series inpainting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrajectoryDataset
from .encoder import EncoderPair, embed
from .inference import interpolate_waypoints, log_density_many, plan_chain, predict_future
from .linalg import nearest_index, pca_fit
from .oracle import uniformity_entropy_identity

WAYPOINT_METHODS = ("contrastive", "pca-interp", "obs-interp")


def true_waypoint_indices(length: int, num_waypoints: int) -> list[int]:
    """Ground-truth frame indices at evenly spaced fractions of a trajectory."""
    return [int(round((i + 1) * (length - 1) / (num_waypoints + 1.0)))
            for i in range(num_waypoints)]


@dataclass(frozen=True)
class WaypointEvalResult:
    """Mean squared observation-space error per method."""

    mse: dict[str, float]
    per_index_mse: dict[str, tuple[float, ...]]
    num_pairs: int
    skipped: int

    def to_text(self) -> str:
        lines = ["method\tmse\t" + "\t".join(
            f"waypoint_{i}" for i in range(len(next(iter(self.per_index_mse.values())))))]
        for method in WAYPOINT_METHODS:
            per = "\t".join(f"{v:.8g}" for v in self.per_index_mse[method])
            lines.append(f"{method}\t{self.mse[method]:.8g}\t{per}")
        lines.append(f"num_pairs\t{self.num_pairs}")
        lines.append(f"skipped\t{self.skipped}")
        return "\n".join(lines) + "\n"


def waypoint_mse(
    enc: EncoderPair,
    dataset: TrajectoryDataset,
    num_waypoints: int = 5,
    mode: str = "special",
) -> WaypointEvalResult:
    """Infer intermediate observations from trajectory endpoints and score them.

    For every validation trajectory, the first and last observations are
    encoded, num_waypoints intermediate embeddings are inferred (interpolated
    by default, or via the full chain posterior with mode="chain"), and each
    is mapped to its nearest validation observation in embedding space. The
    error is measured against the frames at evenly spaced fractions of the
    same trajectory. Baselines share the protocol: pca-interp interpolates
    principal-component projections and retrieves by projection distance;
    obs-interp uses straight-line points in observation space directly.
    """
    if mode not in ("special", "chain"):
        raise ValueError(f"mode must be 'special' or 'chain', got {mode!r}")
    val = dataset.subset("val")
    bank_obs = val.all_observations()
    bank_reps = embed(enc, bank_obs)

    train_obs = dataset.subset("train").all_observations()
    pca_mean, pca_comps = pca_fit(train_obs, num_components=min(2, dataset.obs_dim))
    bank_pca = (bank_obs - pca_mean) @ pca_comps.T

    sq_errors = {m: np.zeros(num_waypoints) for m in WAYPOINT_METHODS}
    num_pairs = 0
    skipped = 0
    for traj in val.trajectories:
        if len(traj) < num_waypoints + 2:
            skipped += 1
            continue
        obs = traj.observations
        start, goal = obs[0], obs[-1]
        truth = obs[true_waypoint_indices(len(traj), num_waypoints)]

        start_rep = embed(enc, start)
        goal_rep = embed(enc, goal)
        if mode == "special":
            plan = interpolate_waypoints(start_rep, goal_rep, num_waypoints, enc.transition)
        else:
            plan = plan_chain(start_rep, goal_rep, num_waypoints, enc.transition,
                              enc.norm_budget)
        contrastive = bank_obs[nearest_index(np.asarray(plan.means), bank_reps)]

        z0 = (start - pca_mean) @ pca_comps.T
        z1 = (goal - pca_mean) @ pca_comps.T
        weights = (np.arange(1, num_waypoints + 1) / (num_waypoints + 1.0))[:, None]
        pca_query = (1.0 - weights) * z0 + weights * z1
        pca_pred = bank_obs[nearest_index(pca_query, bank_pca)]

        obs_pred = (1.0 - weights) * start + weights * goal

        for method, pred in (("contrastive", contrastive), ("pca-interp", pca_pred),
                             ("obs-interp", obs_pred)):
            sq_errors[method] += np.square(pred - truth).sum(axis=1)
        num_pairs += 1
    if num_pairs == 0:
        raise ValueError("no validation trajectory is long enough to evaluate")

    per_index = {m: tuple(v / num_pairs for v in errs) for m, errs in sq_errors.items()}
    mse = {m: float(errs.sum() / (num_pairs * num_waypoints)) for m, errs in sq_errors.items()}
    return WaypointEvalResult(mse=mse, per_index_mse=per_index,
                              num_pairs=num_pairs, skipped=skipped)


@dataclass(frozen=True)
class PredictionStructureResult:
    """Fraction of probes whose top-density bank points lie ahead on the arm."""

    model_fraction: float
    baseline_fraction: float
    num_probes: int


def spiral_prediction_structure(
    enc: EncoderPair,
    dataset: TrajectoryDataset,
    num_probes: int = 50,
    top_k: int = 10,
    required_ahead: int = 8,
    seed: int = 0,
) -> PredictionStructureResult:
    """Check that forward predictions point outward along the spiral.

    A probe passes when at least ``required_ahead`` of its ``top_k`` ranked
    validation points have strictly larger radius (distance from the origin,
    a monotone proxy for progress along the arm). The model ranks by log
    density under the forward-prediction belief; the baseline ranks by plain
    observation-space proximity. Probes are mid-trajectory validation states
    so that enough future exists.
    """
    rng = np.random.default_rng(seed)
    val = dataset.subset("val")
    bank_obs = val.all_observations()
    bank_reps = embed(enc, bank_obs)
    radius = np.linalg.norm(bank_obs, axis=1)

    lengths = [len(t) for t in val.trajectories]
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    candidates = []
    for traj_i, length in enumerate(lengths):
        lo, hi = max(1, length // 6), int(length * 0.75)
        candidates.extend(range(starts[traj_i] + lo, starts[traj_i] + hi))
    probes = rng.choice(np.asarray(candidates), size=num_probes, replace=False)

    model_pass = 0
    baseline_pass = 0
    for p in probes:
        belief = predict_future(bank_reps[p], enc.transition, enc.norm_budget)
        scores = log_density_many(belief, bank_reps)
        scores[p] = -np.inf  # the probe itself is not a prediction
        top = np.argsort(scores)[::-1][:top_k]
        model_pass += int((radius[top] > radius[p]).sum() >= required_ahead)

        d2 = np.square(bank_obs - bank_obs[p]).sum(axis=1)
        d2[p] = np.inf
        near = np.argsort(d2)[:top_k]
        baseline_pass += int((radius[near] > radius[p]).sum() >= required_ahead)
    return PredictionStructureResult(
        model_fraction=model_pass / num_probes,
        baseline_fraction=baseline_pass / num_probes,
        num_probes=num_probes,
    )


@dataclass(frozen=True)
class MomentReport:
    """First and second moments of validation embeddings vs. the norm budget."""

    mean_norm: float
    mean_norm_limit: float
    normalized_sq_norm: float
    sq_norm_band: tuple[float, float]
    max_offdiag_corr: float
    corr_limit: float
    uniformity: float
    entropy_estimate: float

    @property
    def mean_ok(self) -> bool:
        return self.mean_norm <= self.mean_norm_limit

    @property
    def sq_norm_ok(self) -> bool:
        lo, hi = self.sq_norm_band
        return lo <= self.normalized_sq_norm <= hi

    @property
    def corr_ok(self) -> bool:
        return self.max_offdiag_corr <= self.corr_limit

    def to_text(self) -> str:
        def verdict(ok):
            return "PASS" if ok else "FAIL"

        lo, hi = self.sq_norm_band
        return (
            f"mean_norm: {self.mean_norm:.6g} (limit {self.mean_norm_limit:.6g}) "
            f"{verdict(self.mean_ok)}\n"
            f"normalized_sq_norm: {self.normalized_sq_norm:.6g} "
            f"(band [{lo:.6g}, {hi:.6g}]) {verdict(self.sq_norm_ok)}\n"
            f"max_offdiag_corr: {self.max_offdiag_corr:.6g} "
            f"(limit {self.corr_limit:.6g}) {verdict(self.corr_ok)}\n"
            f"uniformity: {self.uniformity:.6g}\n"
            f"entropy_estimate: {self.entropy_estimate:.6g}\n"
        )


def representation_moments(
    enc: EncoderPair,
    dataset: TrajectoryDataset,
    corr_limit: float = 0.25,
    band: tuple[float, float] = (0.8, 1.2),
    max_points: int = 20000,
    seed: int = 0,
) -> MomentReport:
    """Moment checks of the validation embeddings against the norm budget."""
    val = dataset.subset("val")
    reps = embed(enc, val.all_observations())
    if reps.shape[0] > max_points:
        keep = np.random.default_rng(seed).choice(reps.shape[0], size=max_points,
                                                  replace=False)
        reps = reps[keep]
    k = reps.shape[1]
    budget = enc.norm_budget
    mean_vec = reps.mean(axis=0)
    corr = np.corrcoef(reps, rowvar=False)
    off = np.abs(corr - np.diag(np.diag(corr)))
    sub = reps[: min(4000, reps.shape[0])]
    uniformity, entropy = uniformity_entropy_identity(sub)
    return MomentReport(
        mean_norm=float(np.linalg.norm(mean_vec)),
        mean_norm_limit=0.2 * float(np.sqrt(budget * k)),
        normalized_sq_norm=float(np.square(reps).sum(axis=1).mean() / k),
        sq_norm_band=(band[0] * budget, band[1] * budget),
        max_offdiag_corr=float(off.max()),
        corr_limit=corr_limit,
        uniformity=uniformity,
        entropy_estimate=entropy,
    )


@dataclass(frozen=True)
class InpaintResult:
    """Reconstructed interior frames for validation windows of a series."""

    windows: tuple[dict, ...]  # each: window id, truth (n, d), predicted (n, d)
    mse: float
    baseline_mse: float  # straight-line interpolation of the endpoints

    def to_text(self) -> str:
        lines = [f"mse\t{self.mse:.8g}", f"obs_interp_mse\t{self.baseline_mse:.8g}"]
        for w in self.windows:
            for i, (t, p) in enumerate(zip(w["truth"], w["predicted"])):
                truth = ",".join(f"{v:.8g}" for v in t)
                pred = ",".join(f"{v:.8g}" for v in p)
                lines.append(f"window\t{w['id']}\t{i}\t{truth}\t{pred}")
        return "\n".join(lines) + "\n"


def inpaint_series(
    enc: EncoderPair,
    dataset: TrajectoryDataset,
    num_waypoints: int = 5,
    mode: str = "special",
) -> InpaintResult:
    """Fill in interior frames of validation windows from their endpoints."""
    val = dataset.subset("val")
    bank_obs = val.all_observations()
    bank_reps = embed(enc, bank_obs)
    windows = []
    total = 0.0
    baseline_total = 0.0
    count = 0
    for traj in val.trajectories:
        if len(traj) < num_waypoints + 2:
            continue
        obs = traj.observations
        idx = true_waypoint_indices(len(traj), num_waypoints)
        truth = obs[idx]
        start_rep = embed(enc, obs[0])
        goal_rep = embed(enc, obs[-1])
        if mode == "special":
            plan = interpolate_waypoints(start_rep, goal_rep, num_waypoints, enc.transition)
        else:
            plan = plan_chain(start_rep, goal_rep, num_waypoints, enc.transition,
                              enc.norm_budget)
        predicted = bank_obs[nearest_index(np.asarray(plan.means), bank_reps)]
        weights = (np.arange(1, num_waypoints + 1) / (num_waypoints + 1.0))[:, None]
        baseline = (1.0 - weights) * obs[0] + weights * obs[-1]
        windows.append({"id": traj.id, "truth": truth, "predicted": predicted})
        total += float(np.square(predicted - truth).mean())
        baseline_total += float(np.square(baseline - truth).mean())
        count += 1
    if count == 0:
        raise ValueError("no validation window is long enough to inpaint")
    return InpaintResult(windows=tuple(windows), mse=total / count,
                         baseline_mse=baseline_total / count)
