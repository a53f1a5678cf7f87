"""Loss values against a double-loop oracle, constraint mechanics, training."""

import numpy as np
import pytest

from gmchain.data import spiral_dataset
from gmchain.objective import (
    Adam,
    TrainConfig,
    TrainingDivergedError,
    dual_update,
    load_config,
    norm_penalty,
    parse_config_text,
    regularized_loss_and_grads,
    symmetrized_infonce,
    symmetrized_infonce_grads,
    train,
)


def infonce_oracle(preds, pos):
    """Direct double-loop evaluation of the batch objective."""
    b = preds.shape[0]
    total = 0.0
    for i in range(b):
        match = -0.5 * np.sum((preds[i] - pos[i]) ** 2)
        row = sum(np.exp(-0.5 * np.sum((preds[i] - pos[j]) ** 2))
                  for j in range(b) if j != i)
        col = sum(np.exp(-0.5 * np.sum((preds[j] - pos[i]) ** 2))
                  for j in range(b) if j != i)
        total += (match - np.log(row)) + (match - np.log(col))
    return -total


class TestSymmetrizedInfonce:
    def test_all_equal_batch_is_zero(self):
        reps = np.ones((2, 3))
        assert symmetrized_infonce(reps, reps) == 0.0

    def test_two_point_hand_value(self):
        # 1-D: matching pairs at 0 and 10; all four ratio terms equal 50.
        reps = np.array([[0.0], [10.0]])
        assert symmetrized_infonce(reps, reps) == pytest.approx(-200.0, abs=1e-9)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            preds = rng.normal(size=(8, 4))
            pos = rng.normal(size=(8, 4))
            assert symmetrized_infonce(preds, pos) == pytest.approx(
                infonce_oracle(preds, pos), abs=1e-10)

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            symmetrized_infonce(np.ones((1, 3)), np.ones((1, 3)))

    def test_invariant_to_joint_permutation(self):
        rng = np.random.default_rng(1)
        preds = rng.normal(size=(6, 3))
        pos = rng.normal(size=(6, 3))
        perm = rng.permutation(6)
        assert symmetrized_infonce(preds[perm], pos[perm]) == pytest.approx(
            symmetrized_infonce(preds, pos), rel=1e-12)

    def test_invariant_to_common_translation(self):
        rng = np.random.default_rng(2)
        preds = rng.normal(size=(5, 4))
        pos = rng.normal(size=(5, 4))
        shift = rng.normal(size=4)
        assert symmetrized_infonce(preds + shift, pos + shift) == pytest.approx(
            symmetrized_infonce(preds, pos), rel=1e-9)

    def test_decreases_when_positive_pair_tightens(self):
        rng = np.random.default_rng(3)
        pos = rng.normal(size=(3, 2))
        preds = pos + rng.normal(size=(3, 2))
        tighter = preds.copy()
        tighter[0] = pos[0] + 0.5 * (preds[0] - pos[0])
        assert symmetrized_infonce(tighter, pos) < symmetrized_infonce(preds, pos)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        preds = rng.normal(size=(6, 3))
        pos = rng.normal(size=(6, 3))
        _, d_preds, d_pos = symmetrized_infonce_grads(preds, pos)
        h = 1e-6
        for arr, grad in ((preds, d_preds), (pos, d_pos)):
            for i in range(arr.shape[0]):
                for j in range(arr.shape[1]):
                    orig = arr[i, j]
                    arr[i, j] = orig + h
                    hi = symmetrized_infonce(preds, pos)
                    arr[i, j] = orig - h
                    lo = symmetrized_infonce(preds, pos)
                    arr[i, j] = orig
                    assert (hi - lo) / (2 * h) == pytest.approx(grad[i, j], abs=1e-6)


class TestNormPenalty:
    def test_zero_batch(self):
        assert norm_penalty(np.zeros((4, 3))) == 0.0

    def test_hand_value(self):
        assert norm_penalty(np.array([[2.0, 0.0, 0.0, 0.0]])) == 1.0

    def test_standard_normal_expectation(self):
        rng = np.random.default_rng(5)
        feats = rng.normal(size=(50000, 8))
        assert norm_penalty(feats) == pytest.approx(1.0, abs=0.03)


class TestDualUpdate:
    def test_equilibrium(self):
        assert dual_update(0.4, constraint_value=1.0, budget=1.0, dual_step=0.1) == 0.4

    def test_ascends_on_violation(self):
        assert dual_update(0.4, 2.0, 1.0, 0.1) == pytest.approx(0.5)

    def test_projection_at_zero(self):
        assert dual_update(0.05, constraint_value=-9.0, budget=1.0, dual_step=0.1) == 0.0


class TestTrain:
    @pytest.fixture(scope="class")
    def tiny_dataset(self):
        return spiral_dataset(num_traj=12, length=30, seed=0)

    def test_zero_steps_returns_initialization(self, tiny_dataset):
        from gmchain.encoder import init_encoder

        cfg = TrainConfig(steps=0, batch_size=16, seed=3)
        enc = train(tiny_dataset, cfg)
        fresh = init_encoder(2, repr_dim=cfg.repr_dim, hidden_sizes=cfg.hidden_sizes,
                             norm_budget=cfg.c, seed=np.random.default_rng(3))
        for a, b in zip(enc.param_list(), fresh.param_list()):
            np.testing.assert_array_equal(a, b)

    def test_deterministic_given_seed(self, tiny_dataset):
        cfg = TrainConfig(steps=40, batch_size=16, seed=7)
        enc1 = train(tiny_dataset, cfg)
        enc2 = train(tiny_dataset, cfg)
        for a, b in zip(enc1.param_list(), enc2.param_list()):
            np.testing.assert_array_equal(a, b)

    def test_loss_decreases(self, tiny_dataset):
        records = []
        cfg = TrainConfig(steps=300, batch_size=32, seed=0)
        train(tiny_dataset, cfg, callback=records.append)
        first = np.mean([r.loss for r in records[:20]])
        last = np.mean([r.loss for r in records[-20:]])
        assert last < first

    def test_resume_continues_step_count(self, tiny_dataset):
        cfg = TrainConfig(steps=10, batch_size=16, seed=1)
        enc = train(tiny_dataset, cfg)
        assert enc.steps_trained == 10
        enc2 = train(tiny_dataset, cfg, encoder=enc)
        assert enc2.steps_trained == 20

    def test_divergence_reports_step(self, tiny_dataset):
        cfg = TrainConfig(steps=200, batch_size=16, seed=0, learning_rate=1e12,
                          optimizer="sgd")
        with pytest.raises(TrainingDivergedError) as err:
            train(tiny_dataset, cfg)
        assert 0 <= err.value.step < 200

    def test_sgd_optimizer_runs(self, tiny_dataset):
        cfg = TrainConfig(steps=5, batch_size=16, seed=0, optimizer="sgd")
        enc = train(tiny_dataset, cfg)
        assert enc.steps_trained == 5


class TestAdam:
    def test_scale_invariance_of_direction(self):
        # Adam's first step moves each parameter by about the learning rate,
        # independent of gradient magnitude.
        p1, p2 = np.ones(3), np.ones(3)
        Adam(0.01).step([p1], [np.full(3, 1e-6)])
        Adam(0.01).step([p2], [np.full(3, 1e3)])
        np.testing.assert_allclose(p1, p2, atol=2e-4)


class TestConfigFile:
    def test_roundtrip_all_keys(self, tmp_path):
        text = (
            "batch_size = 32\nlearning_rate = 0.001\nsteps = 5\nc = 2.0\n"
            "dual_step = 0.01\ngamma = 0.8\nseed = 9\noptimizer = sgd\n"
            "hidden_sizes = 16,8\nrepr_dim = 4\n")
        path = tmp_path / "cfg.txt"
        path.write_text(text)
        cfg = load_config(path)
        assert cfg == TrainConfig(batch_size=32, learning_rate=0.001, steps=5, c=2.0,
                                  dual_step=0.01, gamma=0.8, seed=9, optimizer="sgd",
                                  hidden_sizes=(16, 8), repr_dim=4)

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config_text("# comment\n\nseed = 4\n")
        assert cfg.seed == 4

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config_text("temperature = 0.1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ValueError, match="bad value"):
            parse_config_text("steps = soon\n")
