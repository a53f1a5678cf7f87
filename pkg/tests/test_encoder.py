"""Feature network, paired encoders, gradients, and the checkpoint format."""

import numpy as np
import pytest

from gmchain.encoder import (
    CheckpointFormatError,
    EncoderPair,
    backward,
    embed,
    embed_future,
    init_encoder,
    load_checkpoint,
    pair_backward,
    pair_forward,
    save_checkpoint,
)
from gmchain.mlp import MLPParams, init_mlp, mlp_forward


def straight_line_forward(params, x):
    """Independent re-evaluation of the network, neuron by neuron."""
    h = list(x)
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for j in range(w.shape[1]):
            acc = b[j]
            for i in range(w.shape[0]):
                acc += h[i] * w[i, j]
            out.append(acc)
        if l < last:
            if params.activation == "tanh":
                out = [np.tanh(v) for v in out]
            else:
                out = [max(v, 0.0) for v in out]
        h = out
    return np.array(h)


class TestFeatureNetwork:
    def test_zero_network_gives_zero(self):
        net = MLPParams(layer_sizes=(3, 4, 2),
                        weights=[np.zeros((3, 4)), np.zeros((4, 2))],
                        biases=[np.zeros(4), np.zeros(2)])
        out, _ = mlp_forward(net, np.array([1.0, -2.0, 3.0]))
        np.testing.assert_array_equal(out, np.zeros(2))

    def test_single_linear_layer(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(3, 2))
        b = rng.normal(size=2)
        net = MLPParams(layer_sizes=(3, 2), weights=[w], biases=[b])
        x = rng.normal(size=3)
        out, _ = mlp_forward(net, x)
        np.testing.assert_allclose(out, x @ w + b, atol=1e-15)

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_matches_straight_line_oracle(self, activation):
        rng = np.random.default_rng(2)
        net = init_mlp((3, 5, 4, 2), activation=activation, rng=rng)
        x = rng.normal(size=3)
        out, _ = mlp_forward(net, x)
        np.testing.assert_allclose(out, straight_line_forward(net, x), atol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        net = init_mlp((2, 8, 4), rng=rng)
        x = rng.normal(size=2)
        a, _ = mlp_forward(net, x)
        b, _ = mlp_forward(net, x)
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        net = init_mlp((2, 3), rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="dimension"):
            mlp_forward(net, np.zeros(5))


class TestEncoderPair:
    def test_identity_transition_matches_embedding(self):
        enc = init_encoder(2, repr_dim=4, seed=0)
        x = np.array([0.3, -0.7])
        np.testing.assert_array_equal(embed_future(enc, x), embed(enc, x))

    def test_zero_transition_gives_zero(self):
        enc = init_encoder(2, repr_dim=4, seed=0)
        enc.transition = np.zeros((4, 4))
        np.testing.assert_array_equal(embed_future(enc, np.ones(2)), np.zeros(4))

    def test_future_embedding_is_transition_times_embedding(self):
        rng = np.random.default_rng(3)
        enc = init_encoder(3, repr_dim=5, seed=1)
        enc.transition = rng.normal(size=(5, 5))
        x = rng.normal(size=3)
        np.testing.assert_array_equal(embed_future(enc, x), enc.transition @ embed(enc, x))

    def test_transition_must_be_square_of_repr_dim(self):
        enc = init_encoder(2, repr_dim=4, seed=0)
        with pytest.raises(ValueError, match="transition"):
            EncoderPair(net=enc.net, transition=np.eye(3))


def _fd_bundle(enc, xs, xp, loss_fn, h=1e-5):
    """Central finite differences of loss_fn over every parameter."""
    out = []
    for p in enc.param_list():
        fd = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            hi = loss_fn(enc, xs, xp)
            p[i] = orig - h
            lo = loss_fn(enc, xs, xp)
            p[i] = orig
            fd[i] = (hi - lo) / (2 * h)
            it.iternext()
        out.append(fd)
    return out


class TestBackward:
    def test_linear_net_squared_norm_gradient_is_outer_product(self):
        # loss = ||f(x)||^2 / 2 on a single linear layer: dW = x outer f(x).
        rng = np.random.default_rng(4)
        w = rng.normal(size=(3, 2))
        net = MLPParams(layer_sizes=(3, 2), weights=[w], biases=[np.zeros(2)])
        enc = EncoderPair(net=net, transition=np.eye(2))
        x = rng.normal(size=(1, 3))
        acts = pair_forward(enc, x, x)
        g = pair_backward(enc, acts, np.zeros((1, 2)), acts.feats, np.zeros((1, 2)))
        np.testing.assert_allclose(g.weight_grads[0], np.outer(x[0], acts.feats[0]),
                                   atol=1e-12)

    def test_zero_upstream_gives_zero_bundle(self):
        enc = init_encoder(2, repr_dim=3, hidden_sizes=(4,), seed=0)
        xs = np.zeros((2, 2))
        z = np.zeros((2, 3))
        g = backward(enc, xs, xs, z, z, z)
        for arr in g.as_list():
            np.testing.assert_array_equal(arr, 0.0)

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_full_loss_matches_finite_differences(self, activation):
        from gmchain.objective import regularized_loss_and_grads

        rng = np.random.default_rng(11)
        enc = init_encoder(3, repr_dim=4, hidden_sizes=(8, 6),
                           activation=activation, seed=rng)
        enc.dual_weight = 0.25
        xs = rng.normal(size=(8, 3))
        xp = rng.normal(size=(8, 3))
        _, _, grads = regularized_loss_and_grads(enc, xs, xp)

        def loss_fn(e, a, b):
            value, _, _ = regularized_loss_and_grads(e, a, b)
            return value

        fds = _fd_bundle(enc, xs, xp, loss_fn)
        for fd, g in zip(fds, grads.as_list()):
            rel = np.abs(fd - g).max() / (np.abs(g).max() + 1e-12)
            assert rel <= 1e-4

    def test_shape_mismatch_rejected(self):
        enc = init_encoder(2, repr_dim=3, seed=0)
        xs = np.zeros((2, 2))
        with pytest.raises(ValueError, match="d_preds"):
            backward(enc, xs, xs, np.zeros((3, 3)), np.zeros((2, 3)), np.zeros((2, 3)))


class TestCheckpoint:
    def roundtrip(self, tmp_path, enc):
        path = tmp_path / "enc.gmc"
        save_checkpoint(enc, path)
        return load_checkpoint(path)

    def test_roundtrip_preserves_structure_and_values(self, tmp_path):
        enc = init_encoder(2, repr_dim=4, hidden_sizes=(8, 6), seed=3,
                           norm_budget=1.5, dual_weight=0.07)
        enc.steps_trained = 123
        back = self.roundtrip(tmp_path, enc)
        assert back.net.layer_sizes == enc.net.layer_sizes
        assert back.net.activation == enc.net.activation
        assert back.norm_budget == enc.norm_budget
        assert back.dual_weight == enc.dual_weight
        assert back.steps_trained == 123
        # payload is float32, so values round-trip at single precision
        for a, b in zip(enc.param_list(), back.param_list()):
            np.testing.assert_allclose(a, b, atol=0, rtol=1e-6)

    def test_embeddings_close_after_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        enc = init_encoder(3, repr_dim=4, seed=5)
        back = self.roundtrip(tmp_path, enc)
        x = rng.normal(size=(10, 3))
        np.testing.assert_allclose(embed(back, x), embed(enc, x), atol=1e-5)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.gmc"
        path.write_bytes(b"NOPE" + b"x" * 64)
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path):
        enc = init_encoder(2, repr_dim=3, seed=0)
        path = tmp_path / "enc.gmc"
        save_checkpoint(enc, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(CheckpointFormatError, match="payload"):
            load_checkpoint(path)

    def test_padded_payload_rejected(self, tmp_path):
        enc = init_encoder(2, repr_dim=3, seed=0)
        path = tmp_path / "enc.gmc"
        save_checkpoint(enc, path)
        path.write_bytes(path.read_bytes() + b"\x00" * 4)
        with pytest.raises(CheckpointFormatError, match="payload"):
            load_checkpoint(path)
