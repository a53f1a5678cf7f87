"""Waypoint-tracking proportional control in the maze, plus the evaluation
harness comparing planned waypoints against simpler guidance baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TrajectoryDataset
from .encoder import EncoderPair, embed
from .inference import plan_chain
from .linalg import nearest_index, pca_fit
from .maze import MazeSpec, classify_pair, move_with_slide, sample_point

TIERS = ("near", "medium", "far")
METHODS = ("planned", "direct", "pca-interp", "obs-interp")


@dataclass(frozen=True)
class ControllerConfig:
    gain: float = 0.5
    max_step: float = 0.1
    waypoint_tolerance: float = 0.15
    success_radius: float = 0.1
    max_steps: int = 600

    def __post_init__(self):
        if min(self.gain, self.max_step, self.waypoint_tolerance,
               self.success_radius, self.max_steps) <= 0:
            raise ValueError("all controller constants must be positive")


@dataclass
class RolloutRecord:
    start: np.ndarray
    goal: np.ndarray
    visited: list[np.ndarray]
    waypoints_used: list[np.ndarray]
    success: bool
    steps_taken: int
    difficulty_tier: str


def rollout(
    spec: MazeSpec,
    ctrl: ControllerConfig,
    waypoints: list[np.ndarray],
    start,
    goal,
    tier: str = "near",
) -> RolloutRecord:
    """Track the waypoint list, then the goal, with proportional control.

    The active target is the first waypoint not yet reached (within
    waypoint_tolerance); each action is gain * (target - position), clipped
    to max_step, resolved against walls by sliding. Deterministic. Failure
    to reach the goal within max_steps is a recorded outcome, not an error.
    """
    pos = np.asarray(start, dtype=np.float64).copy()
    goal = np.asarray(goal, dtype=np.float64)
    targets = [np.asarray(w, dtype=np.float64) for w in waypoints] + [goal]
    visited = [pos.copy()]
    cursor = 0
    success = False
    steps = 0
    for steps in range(1, ctrl.max_steps + 1):
        while cursor < len(targets) - 1 and \
                np.linalg.norm(targets[cursor] - pos) <= ctrl.waypoint_tolerance:
            cursor += 1
        action = ctrl.gain * (targets[cursor] - pos)
        norm = np.linalg.norm(action)
        if norm > ctrl.max_step:
            action *= ctrl.max_step / norm
        pos = move_with_slide(spec, pos, action)
        visited.append(pos.copy())
        if np.linalg.norm(goal - pos) <= ctrl.success_radius:
            success = True
            break
    return RolloutRecord(
        start=np.asarray(start, dtype=np.float64),
        goal=goal,
        visited=visited,
        waypoints_used=[np.asarray(w, dtype=np.float64) for w in waypoints],
        success=success,
        steps_taken=steps,
        difficulty_tier=tier,
    )


def plan_observation_waypoints(
    enc: EncoderPair,
    start_obs,
    goal_obs,
    num_waypoints: int,
    bank_obs: np.ndarray,
    bank_reps: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Plan in embedding space, then pull each waypoint back to an observation.

    Encodes the endpoints, infers the posterior waypoint means along the
    chain, and retrieves the nearest bank observation (by embedding distance)
    for each mean. num_waypoints=0 returns an empty plan.
    """
    bank_obs = np.asarray(bank_obs, dtype=np.float64)
    if bank_obs.ndim != 2 or bank_obs.shape[0] == 0:
        raise ValueError("bank_obs must be a nonempty (n, d) array")
    if num_waypoints == 0:
        return []
    if bank_reps is None:
        bank_reps = embed(enc, bank_obs)
    start_rep = embed(enc, np.asarray(start_obs, dtype=np.float64))
    goal_rep = embed(enc, np.asarray(goal_obs, dtype=np.float64))
    plan = plan_chain(start_rep, goal_rep, num_waypoints, enc.transition, enc.norm_budget)
    idx = nearest_index(np.asarray(plan.means), bank_reps)
    return [bank_obs[i].copy() for i in idx]


@dataclass
class SuccessTable:
    """Success fraction and mean steps per (tier, method) cell."""

    episodes_per_tier: int
    successes: dict[tuple[str, str], int] = field(default_factory=dict)
    total_steps: dict[tuple[str, str], int] = field(default_factory=dict)

    def record(self, tier: str, method: str, rec: RolloutRecord) -> None:
        key = (tier, method)
        self.successes[key] = self.successes.get(key, 0) + int(rec.success)
        self.total_steps[key] = self.total_steps.get(key, 0) + rec.steps_taken

    def success_rate(self, tier: str, method: str) -> float:
        return self.successes.get((tier, method), 0) / self.episodes_per_tier

    def mean_steps(self, tier: str, method: str) -> float:
        return self.total_steps.get((tier, method), 0) / self.episodes_per_tier

    def to_text(self) -> str:
        lines = ["tier\tmethod\tsuccesses\tepisodes\tsuccess_rate\tmean_steps"]
        for tier in TIERS:
            for method in METHODS:
                lines.append(
                    f"{tier}\t{method}\t{self.successes.get((tier, method), 0)}"
                    f"\t{self.episodes_per_tier}"
                    f"\t{self.success_rate(tier, method):.6f}"
                    f"\t{self.mean_steps(tier, method):.3f}")
        return "\n".join(lines) + "\n"


def _interp_points(start: np.ndarray, goal: np.ndarray, n: int) -> list[np.ndarray]:
    return [start + (i + 1) / (n + 1.0) * (goal - start) for i in range(n)]


def evaluate_success(
    enc: EncoderPair,
    spec: MazeSpec,
    dataset: TrajectoryDataset,
    num_waypoints: int = 8,
    num_episodes: int = 40,
    seed: int = 0,
    ctrl: ControllerConfig | None = None,
    max_pair_draws: int = 100000,
) -> tuple[SuccessTable, list[RolloutRecord]]:
    """Compare guidance methods on identical start/goal pairs, per tier.

    Pairs are sampled from the maze regions and stratified by straight-line
    feasibility until each tier holds num_episodes pairs. All four methods
    run on the same pairs: planned (embedding-space chain posterior with
    nearest-neighbor retrieval), direct (no waypoints), pca-interp
    (interpolation of principal-component projections with retrieval), and
    obs-interp (straight-line points in observation space).
    """
    ctrl = ctrl or ControllerConfig()
    rng = np.random.default_rng(seed)
    val = dataset.subset("val")
    bank_obs = val.all_observations()
    bank_reps = embed(enc, bank_obs)

    train_obs = dataset.subset("train").all_observations()
    pca_mean, pca_components = pca_fit(train_obs, num_components=min(2, dataset.obs_dim))
    bank_pca = (bank_obs - pca_mean) @ pca_components.T

    pairs: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {t: [] for t in TIERS}
    draws = 0
    while any(len(v) < num_episodes for v in pairs.values()):
        draws += 1
        if draws > max_pair_draws:
            raise RuntimeError("could not fill every difficulty tier with pairs")
        start = sample_point(spec, spec.start_region, rng)
        region = spec.goal_regions[int(rng.integers(len(spec.goal_regions)))]
        goal = sample_point(spec, region, rng)
        tier = classify_pair(spec, start, goal)
        if len(pairs[tier]) < num_episodes:
            pairs[tier].append((start, goal))

    table = SuccessTable(episodes_per_tier=num_episodes)
    records: list[RolloutRecord] = []
    for tier in TIERS:
        for start, goal in pairs[tier]:
            start_rep = embed(enc, start)
            goal_rep = embed(enc, goal)
            plan = plan_chain(start_rep, goal_rep, num_waypoints,
                              enc.transition, enc.norm_budget)
            planned_wps = [bank_obs[i].copy()
                           for i in nearest_index(np.asarray(plan.means), bank_reps)]

            z0 = (start - pca_mean) @ pca_components.T
            z1 = (goal - pca_mean) @ pca_components.T
            pca_wps = [bank_obs[i].copy()
                       for i in nearest_index(np.asarray(_interp_points(z0, z1, num_waypoints)),
                                              bank_pca)]
            obs_wps = _interp_points(start, goal, num_waypoints)

            for method, wps in (("planned", planned_wps), ("direct", []),
                                ("pca-interp", pca_wps), ("obs-interp", obs_wps)):
                rec = rollout(spec, ctrl, wps, start, goal, tier=tier)
                table.record(tier, method, rec)
                records.append(rec)
    return table, records
