"""Command-line interface.

Subcommands: gen, train, verify, plan, predict, eval-waypoints, inpaint,
rollout-eval, replay. Every command accepts --seed, --config, --out-dir and
--quiet, writes its artifacts under --out-dir, and records a ``run.manifest``
whose stored argv is sufficient to reproduce the run. Exit codes: 0 the
command ran (verification FAIL verdicts included), 1 runtime failure, 2
usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import shlex
import sys

import numpy as np

from . import __version__
from .control import ControllerConfig, evaluate_success
from .data import load_csv_series, load_dataset, save_dataset, spiral_dataset
from .encoder import embed, load_checkpoint, save_checkpoint
from .evaluation import inpaint_series, representation_moments, waypoint_mse
from .inference import interpolate_waypoints, log_density_many, plan_chain, \
    predict_future, predict_past
from .linalg import nearest_index
from .maze import default_maze, maze_dataset
from .objective import TrainConfig, load_config, train
from .oracle import critic_log_ratio_gap, discounted_occupancy, fit_tabular_critic, \
    random_chain, uniformity_entropy_identity

log = logging.getLogger("gmchain")

USAGE_ERROR = 2


class UsageError(ValueError):
    """Input problems that are the caller's fault (exit code 2)."""


def _write(path: str, text: str) -> str:
    with open(path, "w") as fh:
        fh.write(text)
    return os.path.abspath(path)


class Manifest:
    """Key: value record of one run, written as run.manifest in the out dir."""

    def __init__(self, command: str, argv: list[str], seed: int | None):
        self.lines = [
            ("tool_version", __version__),
            ("command", command),
            ("argv", shlex.join(argv)),
        ]
        if seed is not None:
            self.lines.append(("seed", str(seed)))

    def add(self, key: str, value) -> None:
        self.lines.append((key, str(value)))

    def add_config(self, cfg: TrainConfig) -> None:
        for key in ("batch_size", "learning_rate", "steps", "c", "dual_step",
                    "gamma", "seed", "optimizer", "repr_dim"):
            self.add(f"config_{key}", getattr(cfg, key))
        self.add("config_hidden_sizes", ",".join(str(h) for h in cfg.hidden_sizes))

    def write(self, out_dir: str) -> str:
        text = "gmchain-manifest v1\n" + "".join(
            f"{k}: {v}\n" for k, v in self.lines)
        return _write(os.path.join(out_dir, "run.manifest"), text)


def _resolve_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _effective_seed(args, default: int = 0) -> int:
    return default if args.seed is None else args.seed


def _common_argv(args) -> list[str]:
    extra = []
    if args.seed is not None:
        extra += ["--seed", str(args.seed)]
    if args.config:
        extra += ["--config", os.path.abspath(args.config)]
    return extra


def _load_bank(dataset):
    """Validation observations; falls back to all when no split exists."""
    try:
        return dataset.subset("val").all_observations()
    except ValueError:
        return dataset.all_observations()


# -- commands -----------------------------------------------------------------


def cmd_gen(args) -> int:
    seed = _effective_seed(args)
    if args.kind == "spiral":
        dataset = spiral_dataset(num_traj=args.num_traj, length=args.length,
                                 noise_std=args.noise_std, seed=seed,
                                 val_fraction=args.val_fraction)
        detail = ["--num-traj", str(args.num_traj), "--len", str(args.length),
                  "--noise-std", repr(args.noise_std)]
    elif args.kind == "maze":
        dataset = maze_dataset(num_traj=args.num_traj, seed=seed,
                               val_fraction=args.val_fraction)
        detail = ["--num-traj", str(args.num_traj)]
    else:  # csv
        if not args.csv_path:
            raise UsageError("gen csv requires --csv-path")
        dataset, report = load_csv_series(args.csv_path, window_len=args.window_len,
                                          seed=seed, val_fraction=args.val_fraction)
        log.info("csv ingest: %s", report.summary())
        detail = ["--csv-path", os.path.abspath(args.csv_path),
                  "--window-len", str(args.window_len)]
    path = os.path.join(args.out_dir, "dataset.txt")
    save_dataset(dataset, path)
    log.info("wrote %d trajectories to %s", len(dataset), path)

    manifest = Manifest("gen", ["gen", args.kind, *detail,
                                "--val-fraction", repr(args.val_fraction),
                                *_common_argv(args)], seed)
    manifest.add("output_dataset", os.path.abspath(path))
    manifest.add("metric_num_trajectories", len(dataset))
    manifest.write(args.out_dir)
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.dataset)
    encoder = load_checkpoint(args.resume) if args.resume else None

    curve = ["step\tloss\tconstraint\tdual_weight"]

    def record(step):
        curve.append(f"{step.step}\t{step.loss:.17g}\t{step.constraint_value:.17g}"
                     f"\t{step.dual_weight:.17g}")
        if step.step % 1000 == 0:
            log.info("step %d loss %.4f constraint %.4f dual %.4f",
                     step.step, step.loss, step.constraint_value, step.dual_weight)

    enc = train(dataset, cfg, encoder=encoder, callback=record)
    ckpt_path = os.path.join(args.out_dir, "checkpoint.gmc")
    save_checkpoint(enc, ckpt_path)
    curve_path = _write(os.path.join(args.out_dir, "training_curve.tsv"),
                        "\n".join(curve) + "\n")

    argv = ["train", os.path.abspath(args.dataset), *_common_argv(args)]
    if args.resume:
        argv += ["--resume", os.path.abspath(args.resume)]
    manifest = Manifest("train", argv, cfg.seed)
    manifest.add("input_dataset", os.path.abspath(args.dataset))
    manifest.add("output_checkpoint", os.path.abspath(ckpt_path))
    manifest.add("output_curve", curve_path)
    if len(curve) > 1:
        manifest.add("metric_final_loss", curve[-1].split("\t")[1])
        manifest.add("metric_final_constraint", curve[-1].split("\t")[2])
    manifest.add_config(cfg)
    manifest.write(args.out_dir)
    return 0


def _oracle_suite_report(seed: int) -> list[str]:
    lines = []
    chain = random_chain(num_states=5, gamma=0.9, seed=seed)
    occ = discounted_occupancy(chain)
    row_dev = float(np.abs(occ.sum(axis=1) - 1.0).max())
    lines.append(f"occupancy_row_sum_dev: {row_dev:.3g} (limit 1e-10) "
                 f"{'PASS' if row_dev <= 1e-10 else 'FAIL'}")
    critic = fit_tabular_critic(chain, seed=seed)
    report = critic_log_ratio_gap(critic, chain)
    lines.append(f"critic_max_abs_dev: {report.max_abs_dev:.4g} (limit 0.05) "
                 f"{'PASS' if report.max_abs_dev <= 0.05 else 'FAIL'}")
    lines.append(f"critic_offset: {report.offset:.4g}")
    lines.append(f"critic_per_row_offset_var: {report.per_row_offset_var:.4g}")
    reps = np.random.default_rng(seed).normal(size=(64, 4))
    uni, ent = uniformity_entropy_identity(reps)
    residual = abs(uni + ent - 0.5 * reps.shape[1] * np.log(2 * np.pi))
    lines.append(f"uniformity_entropy_residual: {residual:.3g} (limit 1e-10) "
                 f"{'PASS' if residual <= 1e-10 else 'FAIL'}")
    return lines


def cmd_verify(args) -> int:
    seed = _effective_seed(args)
    lines = ["# tabular oracle suite"]
    lines += _oracle_suite_report(seed)
    if args.checkpoint:
        if not args.dataset:
            raise UsageError("verify with a checkpoint also needs --dataset")
        enc = load_checkpoint(args.checkpoint)
        dataset = load_dataset(args.dataset)
        lines.append("# embedding moment checks")
        report = representation_moments(enc, dataset, seed=seed)
        lines += report.to_text().strip().split("\n")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    path = _write(os.path.join(args.out_dir, "verify_report.txt"), text)

    argv = ["verify", *_common_argv(args)]
    if args.checkpoint:
        argv += ["--checkpoint", os.path.abspath(args.checkpoint),
                 "--dataset", os.path.abspath(args.dataset)]
    manifest = Manifest("verify", argv, seed)
    manifest.add("output_report", path)
    manifest.write(args.out_dir)
    return 0


def cmd_plan(args) -> int:
    enc = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    bank_obs = _load_bank(dataset)
    for name, idx in (("--start-idx", args.start_idx), ("--goal-idx", args.goal_idx)):
        if not 0 <= idx < bank_obs.shape[0]:
            raise UsageError(f"{name} {idx} out of range [0, {bank_obs.shape[0]})")
    bank_reps = embed(enc, bank_obs)
    start_rep, goal_rep = bank_reps[args.start_idx], bank_reps[args.goal_idx]
    if args.mode == "chain":
        plan = plan_chain(start_rep, goal_rep, args.n, enc.transition, enc.norm_budget)
    else:
        plan = interpolate_waypoints(start_rep, goal_rep, args.n, enc.transition)
    retrieved = bank_obs[nearest_index(np.asarray(plan.means), bank_reps)]

    lines = ["waypoint\tmean\tcov_diag\tretrieved_obs"]
    for i, mean in enumerate(plan.means):
        cov_diag = ("" if plan.covariances is None
                    else ",".join(f"{v:.8g}" for v in np.diag(plan.covariances[i])))
        lines.append(f"{i}\t{','.join(f'{v:.8g}' for v in mean)}\t{cov_diag}"
                     f"\t{','.join(f'{v:.8g}' for v in retrieved[i])}")
    path = _write(os.path.join(args.out_dir, "plan.tsv"), "\n".join(lines) + "\n")

    manifest = Manifest("plan", [
        "plan", os.path.abspath(args.checkpoint), os.path.abspath(args.dataset),
        "--start-idx", str(args.start_idx), "--goal-idx", str(args.goal_idx),
        "--n", str(args.n), "--mode", args.mode, *_common_argv(args)],
        _effective_seed(args))
    manifest.add("output_plan", path)
    manifest.write(args.out_dir)
    return 0


def cmd_predict(args) -> int:
    enc = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    bank_obs = _load_bank(dataset)
    if not 0 <= args.idx < bank_obs.shape[0]:
        raise UsageError(f"--idx {args.idx} out of range [0, {bank_obs.shape[0]})")
    bank_reps = embed(enc, bank_obs)
    rep = bank_reps[args.idx]
    belief = (predict_future if args.direction == "future" else predict_past)(
        rep, enc.transition, enc.norm_budget)
    densities = log_density_many(belief, bank_reps)

    lines = [f"mean\t{','.join(f'{v:.8g}' for v in belief.mean)}",
             f"cov_diag\t{','.join(f'{v:.8g}' for v in np.diag(belief.cov))}",
             "bank_index\tlog_density"]
    lines += [f"{i}\t{d:.8g}" for i, d in enumerate(densities)]
    path = _write(os.path.join(args.out_dir, "belief.tsv"), "\n".join(lines) + "\n")

    manifest = Manifest("predict", [
        "predict", os.path.abspath(args.checkpoint), os.path.abspath(args.dataset),
        "--idx", str(args.idx), "--direction", args.direction, *_common_argv(args)],
        _effective_seed(args))
    manifest.add("output_belief", path)
    manifest.write(args.out_dir)
    return 0


def cmd_eval_waypoints(args) -> int:
    enc = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    result = waypoint_mse(enc, dataset, num_waypoints=args.n, mode=args.mode)
    path = _write(os.path.join(args.out_dir, "waypoint_mse.tsv"), result.to_text())
    sys.stdout.write(result.to_text())

    manifest = Manifest("eval-waypoints", [
        "eval-waypoints", os.path.abspath(args.checkpoint), os.path.abspath(args.dataset),
        "--n", str(args.n), "--mode", args.mode, *_common_argv(args)],
        _effective_seed(args))
    manifest.add("output_waypoint_mse", path)
    for method, value in result.mse.items():
        manifest.add(f"metric_mse_{method}", f"{value:.12g}")
    manifest.write(args.out_dir)
    return 0


def cmd_inpaint(args) -> int:
    enc = load_checkpoint(args.checkpoint)
    seed = _effective_seed(args)
    dataset, report = load_csv_series(args.csv, window_len=args.window, seed=seed)
    result = inpaint_series(enc, dataset, num_waypoints=args.n)
    header = (f"# columns kept: {','.join(report.kept_columns)}\n"
              f"# columns dropped (missing): {','.join(report.dropped_missing) or '-'}\n"
              f"# columns dropped (zero variance): "
              f"{','.join(report.dropped_zero_variance) or '-'}\n")
    path = _write(os.path.join(args.out_dir, "inpaint.tsv"), header + result.to_text())
    sys.stdout.write(header)

    manifest = Manifest("inpaint", [
        "inpaint", os.path.abspath(args.checkpoint), os.path.abspath(args.csv),
        "--window", str(args.window), "--n", str(args.n), *_common_argv(args)], seed)
    manifest.add("output_inpaint", path)
    manifest.add("metric_mse", f"{result.mse:.12g}")
    manifest.add("metric_obs_interp_mse", f"{result.baseline_mse:.12g}")
    manifest.write(args.out_dir)
    return 0


def cmd_rollout_eval(args) -> int:
    enc = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    seed = _effective_seed(args)
    table, records = evaluate_success(
        enc, default_maze(), dataset, num_waypoints=args.n_waypoints,
        num_episodes=args.episodes, seed=seed, ctrl=ControllerConfig())
    table_path = _write(os.path.join(args.out_dir, "success_table.tsv"), table.to_text())
    sys.stdout.write(table.to_text())

    ep_lines = ["tier\tmethod_order_eid\tsuccess\tsteps\tstart\tgoal"]
    for i, rec in enumerate(records):
        ep_lines.append(
            f"{rec.difficulty_tier}\t{i}\t{int(rec.success)}\t{rec.steps_taken}"
            f"\t{rec.start[0]:.8g},{rec.start[1]:.8g}"
            f"\t{rec.goal[0]:.8g},{rec.goal[1]:.8g}")
    episodes_path = _write(os.path.join(args.out_dir, "episodes.tsv"),
                           "\n".join(ep_lines) + "\n")

    manifest = Manifest("rollout-eval", [
        "rollout-eval", os.path.abspath(args.checkpoint), os.path.abspath(args.dataset),
        "--n-waypoints", str(args.n_waypoints), "--episodes", str(args.episodes),
        *_common_argv(args)], seed)
    manifest.add("output_success_table", table_path)
    manifest.add("output_episodes", episodes_path)
    for tier in ("near", "medium", "far"):
        for method in ("planned", "direct"):
            manifest.add(f"metric_success_{tier}_{method}",
                         f"{table.success_rate(tier, method):.6f}")
    manifest.write(args.out_dir)
    return 0


def cmd_replay(args) -> int:
    with open(args.manifest, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("gmchain-manifest"):
        raise UsageError(f"{args.manifest} is not a manifest file")
    fields = {}
    for line in lines[1:]:
        if ": " in line:
            key, value = line.split(": ", 1)
            fields[key] = value
    if "argv" not in fields:
        raise UsageError("manifest has no argv record")
    argv = shlex.split(fields["argv"])
    if argv and argv[0] == "replay":
        raise UsageError("refusing to replay a replay manifest")
    argv += ["--out-dir", args.out_dir]
    log.info("replaying: %s", shlex.join(argv))
    return main(argv)


# -- wiring -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="training config file")
    common.add_argument("--out-dir", default=".", help="directory for outputs")
    common.add_argument("--quiet", action="store_true", help="suppress info logging")

    parser = argparse.ArgumentParser(
        prog="gmchain",
        description="Contrastive trajectory embeddings with closed-form "
                    "prediction and waypoint planning.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a dataset file")
    p.add_argument("kind", choices=("spiral", "maze", "csv"))
    p.add_argument("--num-traj", type=int, default=500)
    p.add_argument("--len", dest="length", type=int, default=60)
    p.add_argument("--noise-std", type=float, default=0.01)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--csv-path", default=None)
    p.add_argument("--window-len", type=int, default=40)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train an encoder pair")
    p.add_argument("dataset")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", parents=[common],
                       help="run the oracle suite and optional embedding checks")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--dataset", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plan", parents=[common], help="plan waypoints between two states")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--start-idx", type=int, required=True)
    p.add_argument("--goal-idx", type=int, required=True)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--mode", choices=("chain", "special"), default="chain")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("predict", parents=[common],
                       help="dump a forward or backward belief over the bank")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--idx", type=int, required=True)
    p.add_argument("--direction", choices=("future", "past"), default="future")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval-waypoints", parents=[common],
                       help="waypoint reconstruction error on the validation split")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--mode", choices=("special", "chain"), default="special")
    p.set_defaults(func=cmd_eval_waypoints)

    p = sub.add_parser("inpaint", parents=[common],
                       help="reconstruct interior frames of CSV series windows")
    p.add_argument("checkpoint")
    p.add_argument("csv")
    p.add_argument("--window", type=int, default=40)
    p.add_argument("--n", type=int, default=5)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("rollout-eval", parents=[common],
                       help="waypoint-tracking control evaluation in the maze")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--n-waypoints", type=int, default=8)
    p.add_argument("--episodes", type=int, default=40)
    p.set_defaults(func=cmd_rollout_eval)

    p = sub.add_parser("replay", parents=[common], help="re-run a recorded manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
