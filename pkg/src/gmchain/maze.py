"""Planar point-mass maze: wall geometry, collision handling, data generation.

Walls are axis-aligned segments; movement that would cross a wall is resolved
by axis-separated sliding (try the x component, then the y component, else
stay). The default layout is a 5x5 arena with one U-shaped trap whose back
wall separates easy goals from goals that defeat a plain proportional
controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Trajectory, TrajectoryDataset, assign_splits

Rect = tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
Segment = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class MazeSpec:
    """Arena bounds, wall segments, and sampling regions.

    ``trap_wall`` indexes the wall whose crossing marks a start/goal pair as
    hard: a straight-line controller aiming through it gets caught in the
    pocket formed by the adjacent walls.
    """

    walls: tuple[Segment, ...]
    bounds: Rect
    start_region: Rect
    goal_regions: tuple[Rect, ...]
    trap_wall: int | None = None

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("bounds must describe a nonempty rectangle")
        for rect in (self.start_region, *self.goal_regions):
            rxmin, rymin, rxmax, rymax = rect
            if not (xmin <= rxmin < rxmax <= xmax and ymin <= rymin < rymax <= ymax):
                raise ValueError(f"region {rect} is not inside the bounds")
        if self.trap_wall is not None and not 0 <= self.trap_wall < len(self.walls):
            raise ValueError("trap_wall must index an existing wall")


def default_maze() -> MazeSpec:
    """5x5 arena with a downward-opening U trap in the middle.

    Starts sample from a band south of the trap; goals may fall anywhere,
    including inside the pocket and in the region north of the back wall.
    """
    back = ((1.2, 3.0), (3.8, 3.0))
    left_arm = ((1.2, 1.2), (1.2, 3.0))
    right_arm = ((3.8, 1.2), (3.8, 3.0))
    return MazeSpec(
        walls=(back, left_arm, right_arm),
        bounds=(0.0, 0.0, 5.0, 5.0),
        start_region=(0.4, 0.3, 4.6, 1.0),
        goal_regions=((0.2, 0.2, 4.8, 4.8),),
        trap_wall=0,
    )


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Whether segments p1-p2 and q1-q2 intersect (touching counts)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0) and d1 != 0 and d2 != 0
            and (d3 > 0) != (d4 > 0) and d3 != 0 and d4 != 0):
        return True

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    if d1 == 0 and on_segment(q1, q2, p1):
        return True
    if d2 == 0 and on_segment(q1, q2, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, q1):
        return True
    if d4 == 0 and on_segment(p1, p2, q2):
        return True
    return False


def move_blocked(spec: MazeSpec, start, end) -> bool:
    """Whether the straight move start -> end crosses any wall."""
    s = (float(start[0]), float(start[1]))
    e = (float(end[0]), float(end[1]))
    return any(segments_intersect(s, e, w[0], w[1]) for w in spec.walls)


def walls_crossed(spec: MazeSpec, start, end) -> list[int]:
    """Indices of the walls crossed by the straight segment start -> end."""
    s = (float(start[0]), float(start[1]))
    e = (float(end[0]), float(end[1]))
    return [i for i, w in enumerate(spec.walls) if segments_intersect(s, e, w[0], w[1])]


def clip_to_bounds(spec: MazeSpec, point: np.ndarray) -> np.ndarray:
    xmin, ymin, xmax, ymax = spec.bounds
    return np.clip(point, [xmin, ymin], [xmax, ymax])


def move_with_slide(spec: MazeSpec, pos: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Apply a displacement, sliding along walls when the full move is blocked.

    Tries the full move, then the x component alone, then the y component
    alone, and stays put if all three cross a wall. Bounds are enforced by
    clipping, which produces the same sliding behavior at the arena edge.
    """
    pos = np.asarray(pos, dtype=np.float64)
    target = clip_to_bounds(spec, pos + delta)
    if not move_blocked(spec, pos, target):
        return target
    x_only = clip_to_bounds(spec, pos + np.array([delta[0], 0.0]))
    if not move_blocked(spec, pos, x_only):
        return x_only
    y_only = clip_to_bounds(spec, pos + np.array([0.0, delta[1]]))
    if not move_blocked(spec, pos, y_only):
        return y_only
    return pos.copy()


def sample_point(spec: MazeSpec, region: Rect, rng: np.random.Generator,
                 retries: int = 200) -> np.ndarray:
    """Random point inside a region, rejecting points that sit on a wall."""
    xmin, ymin, xmax, ymax = region
    for _ in range(retries):
        p = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        on_wall = any(
            segments_intersect(tuple(p), tuple(p), w[0], w[1]) for w in spec.walls)
        if not on_wall:
            return p
    raise RuntimeError(f"could not sample a free point in {region} after {retries} tries")


def classify_pair(spec: MazeSpec, start, goal) -> str:
    """Difficulty tier of a start/goal pair from straight-line feasibility.

    near: the straight segment crosses no wall. far: it crosses the trap
    wall (the controller would drive into the pocket). medium: anything else.
    """
    crossed = walls_crossed(spec, start, goal)
    if not crossed:
        return "near"
    if spec.trap_wall is not None and spec.trap_wall in crossed:
        return "far"
    return "medium"


def maze_dataset(
    spec: MazeSpec | None = None,
    num_traj: int = 400,
    seed: int = 0,
    min_len: int = 50,
    max_len: int = 300,
    step_size: float = 0.1,
    jitter: float = 0.04,
    val_fraction: float = 0.2,
) -> TrajectoryDataset:
    """Waypoint-directed random walks through the maze.

    Each trajectory repeatedly picks a random target in the arena and walks
    toward it with clipped, jittered steps under the sliding collision rule,
    so the data covers the pocket, the open areas, and the routes around the
    trap. Lengths vary uniformly between min_len and max_len.
    """
    spec = spec or default_maze()
    if num_traj < 1 or min_len < 2 or max_len < min_len:
        raise ValueError("need num_traj >= 1 and 2 <= min_len <= max_len")
    rng = np.random.default_rng(seed)
    whole = spec.bounds
    trajs = []
    for j in range(num_traj):
        length = int(rng.integers(min_len, max_len + 1))
        pos = sample_point(spec, whole, rng)
        target = sample_point(spec, whole, rng)
        points = [pos.copy()]
        while len(points) < length:
            gap = target - pos
            dist = np.hypot(*gap)
            if dist < 1.5 * step_size:
                target = sample_point(spec, whole, rng)
                continue
            step = gap / dist * step_size * rng.uniform(0.6, 1.0)
            step = step + rng.normal(0.0, jitter, size=2)
            pos = move_with_slide(spec, pos, step)
            points.append(pos.copy())
        trajs.append(Trajectory(observations=np.asarray(points), id=j))
    splits = assign_splits(num_traj, val_fraction, rng)
    return TrajectoryDataset(tuple(trajs), obs_dim=2, meta="maze", splits=splits)
