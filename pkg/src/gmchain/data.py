"""Trajectory datasets: synthetic generators, pair sampling, and persistence.

Positive training pairs are drawn from a geometric-horizon distribution over
future offsets within a trajectory, matching the discounted occupancy used by
the tabular oracle: offset 0 (the state itself) carries weight 1 - discount.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass, field

import numpy as np

SPLITS = ("train", "val")


class DatasetFormatError(ValueError):
    """Raised on malformed dataset files; carries the failing byte offset."""

    def __init__(self, message: str, byte_offset: int | None = None):
        self.byte_offset = byte_offset
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)


@dataclass(frozen=True)
class Trajectory:
    """One ordered observation sequence."""

    observations: np.ndarray  # (T, d)
    id: int

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=np.float64)
        if obs.ndim != 2 or obs.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 observations of uniform dimension")
        if not np.all(np.isfinite(obs)):
            raise ValueError("trajectory contains non-finite observations")
        object.__setattr__(self, "observations", obs)

    def __len__(self) -> int:
        return self.observations.shape[0]


@dataclass(frozen=True)
class TrajectoryDataset:
    """Trajectories plus a deterministic train/validation split."""

    trajectories: tuple[Trajectory, ...]
    obs_dim: int
    meta: str = "unknown"
    splits: tuple[str, ...] = field(default=())

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("dataset must contain at least one trajectory")
        for t in trajs:
            if t.observations.shape[1] != self.obs_dim:
                raise ValueError(
                    f"trajectory {t.id} has dimension {t.observations.shape[1]}, "
                    f"dataset declares {self.obs_dim}")
        splits = tuple(self.splits) or ("train",) * len(trajs)
        if len(splits) != len(trajs) or any(s not in SPLITS for s in splits):
            raise ValueError("splits must assign 'train' or 'val' to every trajectory")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "splits", splits)

    def __len__(self) -> int:
        return len(self.trajectories)

    def subset(self, split: str) -> "TrajectoryDataset":
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        pairs = [(t, s) for t, s in zip(self.trajectories, self.splits) if s == split]
        if not pairs:
            raise ValueError(f"dataset has no {split!r} trajectories")
        return TrajectoryDataset(
            trajectories=tuple(t for t, _ in pairs),
            obs_dim=self.obs_dim,
            meta=self.meta,
            splits=tuple(s for _, s in pairs),
        )

    def all_observations(self) -> np.ndarray:
        """All observations stacked into one (N, d) array, trajectory order."""
        return np.concatenate([t.observations for t in self.trajectories], axis=0)


def assign_splits(num_traj: int, val_fraction: float, rng: np.random.Generator) -> tuple[str, ...]:
    """Random but deterministic partition into train and validation."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    n_val = int(round(num_traj * val_fraction))
    order = rng.permutation(num_traj)
    val_ids = set(order[:n_val].tolist())
    return tuple("val" if i in val_ids else "train" for i in range(num_traj))


def spiral_dataset(
    num_traj: int = 500,
    length: int = 60,
    noise_std: float = 0.01,
    seed: int = 0,
    radius_rate: float = 0.05,
    angular_rate: float = 0.35,
    val_fraction: float = 0.2,
) -> TrajectoryDataset:
    """Outward-spiraling 2-D trajectories with random initial angles.

    Point t of a trajectory sits at radius radius_rate * t and angle
    theta0 + angular_rate * t, plus isotropic Gaussian noise.
    """
    if num_traj < 1 or length < 2:
        raise ValueError("need num_traj >= 1 and length >= 2")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    radius = radius_rate * t
    trajs = []
    for j in range(num_traj):
        theta0 = rng.uniform(0.0, 2.0 * np.pi)
        angles = theta0 + angular_rate * t
        pts = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
        if noise_std > 0:
            pts = pts + rng.normal(0.0, noise_std, size=pts.shape)
        trajs.append(Trajectory(observations=pts, id=j))
    splits = assign_splits(num_traj, val_fraction, rng)
    return TrajectoryDataset(tuple(trajs), obs_dim=2, meta="spiral", splits=splits)


class PairSampler:
    """Vectorized sampler of (current, future) observation pairs.

    Trajectories are picked with probability proportional to their length,
    the anchor index uniformly, and the forward offset from a geometric
    distribution on {0, 1, 2, ...} with success probability 1 - discount.
    Offsets that run past the trajectory end are rejected and redrawn, so the
    final states are not over-weighted.
    """

    def __init__(self, dataset: TrajectoryDataset, discount: float, rng: np.random.Generator):
        if not 0.0 < discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        self.discount = float(discount)
        self.rng = rng
        self._lengths = np.array([len(t) for t in dataset.trajectories])
        self._offsets = np.concatenate([[0], np.cumsum(self._lengths)[:-1]])
        self._flat = dataset.all_observations()
        self._probs = self._lengths / self._lengths.sum()

    def sample(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        rng = self.rng
        traj = rng.choice(self._lengths.size, size=batch, p=self._probs)
        t = rng.integers(0, self._lengths[traj])
        delta = rng.geometric(1.0 - self.discount, size=batch) - 1
        remaining = self._lengths[traj] - 1 - t
        bad = delta > remaining
        while np.any(bad):
            delta[bad] = rng.geometric(1.0 - self.discount, size=int(bad.sum())) - 1
            bad = delta > remaining
        base = self._offsets[traj]
        return self._flat[base + t], self._flat[base + t + delta]


def sample_pair(dataset: TrajectoryDataset, discount: float, rng: np.random.Generator):
    """Draw one positive pair (x, x_future)."""
    xs, xps = PairSampler(dataset, discount, rng).sample(1)
    return xs[0], xps[0]


# -- CSV ingestion -----------------------------------------------------------


@dataclass(frozen=True)
class CsvIngestReport:
    """What happened to each column while loading a CSV time series."""

    kept_columns: tuple[str, ...]
    dropped_missing: tuple[str, ...]
    dropped_zero_variance: tuple[str, ...]
    num_rows: int
    num_windows: int

    def summary(self) -> str:
        return (
            f"kept {len(self.kept_columns)} columns, dropped "
            f"{len(self.dropped_missing)} with missing data and "
            f"{len(self.dropped_zero_variance)} with zero variance; "
            f"{self.num_rows} rows -> {self.num_windows} windows"
        )


def load_csv_series(
    path,
    window_len: int,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[TrajectoryDataset, CsvIngestReport]:
    """Load a header-first CSV where rows are time steps and columns dimensions.

    Columns containing any missing or non-numeric cell are dropped (and
    reported), as are zero-variance columns that cannot be z-scored. The
    retained columns are normalized to zero mean and unit variance, then cut
    into overlapping windows of window_len (stride window_len // 2), each
    window becoming one trajectory.
    """
    if window_len < 2:
        raise ValueError("window_len must be at least 2")
    with open(path, "r", newline="") as fh:
        reader = _csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("CSV is empty; a header row is required") from None
        columns = [name.strip() for name in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(columns):
                raise DatasetFormatError(
                    f"line {line_no}: expected {len(columns)} cells, found {len(row)}")
            rows.append(row)
    if not rows:
        raise DatasetFormatError("CSV has a header but no data rows")

    values = np.full((len(rows), len(columns)), np.nan)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell:
                try:
                    values[i, j] = float(cell)
                except ValueError:
                    pass  # stays NaN, column will be dropped
    complete = ~np.isnan(values).any(axis=0)
    dropped_missing = tuple(c for c, ok in zip(columns, complete) if not ok)
    kept = values[:, complete]
    kept_names = [c for c, ok in zip(columns, complete) if ok]

    std = kept.std(axis=0)
    nonconstant = std > 0.0
    dropped_zero_var = tuple(c for c, ok in zip(kept_names, nonconstant) if not ok)
    kept = kept[:, nonconstant]
    kept_names = [c for c, ok in zip(kept_names, nonconstant) if ok]
    if kept.shape[1] == 0:
        raise DatasetFormatError(
            "no usable columns: "
            f"{len(dropped_missing)} dropped for missing data, "
            f"{len(dropped_zero_var)} dropped for zero variance")
    normalized = (kept - kept.mean(axis=0)) / kept.std(axis=0)

    stride = max(1, window_len // 2)
    starts = list(range(0, normalized.shape[0] - window_len + 1, stride))
    if not starts:
        raise DatasetFormatError(
            f"series has {normalized.shape[0]} rows, shorter than window_len={window_len}")
    trajs = tuple(
        Trajectory(observations=normalized[s:s + window_len].copy(), id=i)
        for i, s in enumerate(starts)
    )
    rng = np.random.default_rng(seed)
    splits = assign_splits(len(trajs), val_fraction, rng)
    dataset = TrajectoryDataset(trajs, obs_dim=normalized.shape[1], meta="csv", splits=splits)
    report = CsvIngestReport(
        kept_columns=tuple(kept_names),
        dropped_missing=dropped_missing,
        dropped_zero_variance=dropped_zero_var,
        num_rows=normalized.shape[0],
        num_windows=len(trajs),
    )
    return dataset, report


# -- persistence -------------------------------------------------------------
#
# Line-delimited text format. First record declares dimensions and counts,
# then one record per trajectory with its id, split, length, and the flat
# observation array at 17 significant digits (lossless for float64).

_HEADER_PREFIX = "gmchain-dataset v1"


def save_dataset(dataset: TrajectoryDataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(
            f"{_HEADER_PREFIX} obs_dim={dataset.obs_dim} meta={dataset.meta} "
            f"trajectories={len(dataset)}\n")
        for traj, split in zip(dataset.trajectories, dataset.splits):
            flat = ",".join(f"{v:.17g}" for v in traj.observations.reshape(-1))
            fh.write(f"traj {traj.id} {split} {len(traj)} {flat}\n")


def load_dataset(path) -> TrajectoryDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    offset = 0
    lines = raw.split(b"\n")
    if not lines or not lines[0].decode("utf-8", errors="replace").startswith(_HEADER_PREFIX):
        raise DatasetFormatError("missing dataset header", byte_offset=0)
    header = lines[0].decode("utf-8")
    fields = dict(tok.split("=", 1) for tok in header.split()[2:] if "=" in tok)
    try:
        obs_dim = int(fields["obs_dim"])
        meta = fields["meta"]
        declared = int(fields["trajectories"])
    except (KeyError, ValueError):
        raise DatasetFormatError("malformed dataset header", byte_offset=0) from None
    offset += len(lines[0]) + 1

    trajs: list[Trajectory] = []
    splits: list[str] = []
    for line in lines[1:]:
        if len(trajs) == declared:
            break
        text = line.decode("utf-8", errors="replace").strip()
        if not text:
            break
        parts = text.split(" ", 4)
        if len(parts) != 5 or parts[0] != "traj":
            raise DatasetFormatError("malformed trajectory record", byte_offset=offset)
        try:
            traj_id = int(parts[1])
            split = parts[2]
            length = int(parts[3])
            flat = np.array([float(v) for v in parts[4].split(",")])
        except ValueError:
            raise DatasetFormatError("unparseable trajectory record", byte_offset=offset) from None
        if split not in SPLITS or flat.size != length * obs_dim:
            raise DatasetFormatError(
                f"trajectory {traj_id}: expected {length * obs_dim} values, "
                f"found {flat.size}", byte_offset=offset)
        trajs.append(Trajectory(observations=flat.reshape(length, obs_dim), id=traj_id))
        splits.append(split)
        offset += len(line) + 1
    if len(trajs) != declared:
        raise DatasetFormatError(
            f"file ends after {len(trajs)} of {declared} trajectories", byte_offset=offset)
    return TrajectoryDataset(tuple(trajs), obs_dim=obs_dim, meta=meta, splits=tuple(splits))
