"""Paired state encoders: a feature network and a learned transition matrix.

An :class:`EncoderPair` holds the feature network ``net`` producing an
embedding of a single observation, plus a square ``transition`` matrix whose
application to an embedding predicts the embedding of a future observation.
The pair is trained jointly (see :mod:`gmchain.objective`); checkpoints use a
compact binary format shared with the CLI.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .mlp import ACTIVATIONS, MLPParams, init_mlp, mlp_backward, mlp_forward

CHECKPOINT_MAGIC = b"GMC1"


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file fails magic/header/payload validation."""


@dataclass
class EncoderPair:
    """Feature network, transition matrix, and the norm-constraint state."""

    net: MLPParams
    transition: np.ndarray = field(repr=False)  # (k, k)
    norm_budget: float = 1.0
    dual_weight: float = 0.1
    steps_trained: int = 0

    def __post_init__(self):
        k = self.net.output_dim
        t = np.asarray(self.transition, dtype=np.float64)
        if t.shape != (k, k):
            raise ValueError(f"transition must be ({k}, {k}), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("transition contains non-finite entries")
        if self.norm_budget <= 0:
            raise ValueError("norm_budget must be positive")
        if self.dual_weight < 0:
            raise ValueError("dual_weight must be nonnegative")
        self.transition = t

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    @property
    def repr_dim(self) -> int:
        return self.net.output_dim

    def copy(self) -> "EncoderPair":
        return EncoderPair(
            net=self.net.copy(),
            transition=self.transition.copy(),
            norm_budget=self.norm_budget,
            dual_weight=self.dual_weight,
            steps_trained=self.steps_trained,
        )

    def param_list(self) -> list[np.ndarray]:
        """All trainable tensors, in the fixed declaration order."""
        out: list[np.ndarray] = []
        for w, b in zip(self.net.weights, self.net.biases):
            out.extend((w, b))
        out.append(self.transition)
        return out


def init_encoder(
    input_dim: int,
    repr_dim: int = 8,
    hidden_sizes=(64, 64),
    activation: str = "tanh",
    norm_budget: float = 1.0,
    dual_weight: float = 0.1,
    seed: int | np.random.Generator = 0,
) -> EncoderPair:
    """Fresh encoder: Glorot feature net, identity transition."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sizes = (int(input_dim), *(int(h) for h in hidden_sizes), int(repr_dim))
    net = init_mlp(sizes, activation=activation, rng=rng)
    return EncoderPair(
        net=net,
        transition=np.eye(int(repr_dim)),
        norm_budget=float(norm_budget),
        dual_weight=float(dual_weight),
    )


def embed(enc: EncoderPair, x) -> np.ndarray:
    """Embedding of one observation (1-D input) or a batch (2-D input)."""
    out, _ = mlp_forward(enc.net, x)
    return out


def embed_future(enc: EncoderPair, x) -> np.ndarray:
    """Predicted future embedding: the transition applied to embed(x)."""
    return embed(enc, x) @ enc.transition.T


@dataclass
class GradientBundle:
    """Parameter gradients, shape-congruent with the encoder that produced them."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    transition_grad: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weight_grads, self.bias_grads):
            out.extend((w, b))
        out.append(self.transition_grad)
        return out

    def scaled(self, factor: float) -> "GradientBundle":
        return GradientBundle(
            weight_grads=[g * factor for g in self.weight_grads],
            bias_grads=[g * factor for g in self.bias_grads],
            transition_grad=self.transition_grad * factor,
        )


@dataclass
class PairActivations:
    """Forward results for a batch of (current, future) observation pairs."""

    feats: np.ndarray       # (B, k) embeddings of the current observations
    preds: np.ndarray       # (B, k) transition @ feats, row-wise
    feats_pos: np.ndarray   # (B, k) embeddings of the future observations
    _cache: list[np.ndarray] = field(repr=False, default=None)
    _batch: int = 0


def pair_forward(enc: EncoderPair, xs, xs_pos) -> PairActivations:
    """Embed a batch of pairs in one network pass.

    Both halves run through the feature net together, so the backward pass
    can also be done in a single sweep.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    xs_pos = np.atleast_2d(np.asarray(xs_pos, dtype=np.float64))
    if xs.shape != xs_pos.shape:
        raise ValueError(f"pair batch halves disagree: {xs.shape} vs {xs_pos.shape}")
    b = xs.shape[0]
    stacked, cache = mlp_forward(enc.net, np.concatenate([xs, xs_pos], axis=0))
    feats, feats_pos = stacked[:b], stacked[b:]
    return PairActivations(
        feats=feats,
        preds=feats @ enc.transition.T,
        feats_pos=feats_pos,
        _cache=cache,
        _batch=b,
    )


def pair_backward(
    enc: EncoderPair,
    acts: PairActivations,
    d_preds: np.ndarray,
    d_feats: np.ndarray,
    d_feats_pos: np.ndarray,
) -> GradientBundle:
    """Exact gradients of a scalar loss given its gradients at the three outputs.

    ``d_preds`` flows through the transition matrix and the feature net;
    ``d_feats`` and ``d_feats_pos`` flow through the feature net only. The
    transition gradient therefore comes exclusively from ``d_preds``.
    """
    b = acts._batch
    for g, ref, name in (
        (d_preds, acts.preds, "d_preds"),
        (d_feats, acts.feats, "d_feats"),
        (d_feats_pos, acts.feats_pos, "d_feats_pos"),
    ):
        if np.asarray(g).shape != ref.shape:
            raise ValueError(f"{name} has shape {np.asarray(g).shape}, expected {ref.shape}")
    transition_grad = np.asarray(d_preds).T @ acts.feats
    g_feats = np.asarray(d_feats) + np.asarray(d_preds) @ enc.transition
    g_stacked = np.concatenate([g_feats, np.asarray(d_feats_pos)], axis=0)
    weight_grads, bias_grads, _ = mlp_backward(enc.net, acts._cache, g_stacked)
    return GradientBundle(weight_grads, bias_grads, transition_grad)


def backward(enc: EncoderPair, xs, xs_pos, d_preds, d_feats, d_feats_pos) -> GradientBundle:
    """Convenience wrapper: forward the batch, then run pair_backward."""
    acts = pair_forward(enc, xs, xs_pos)
    return pair_backward(enc, acts, d_preds, d_feats, d_feats_pos)


# -- checkpoint format -------------------------------------------------------
#
# file := MAGIC header-line payload
#   MAGIC        = b"GMC1"
#   header-line  = ascii "key=value" tokens separated by single spaces,
#                  terminated by "\n"
#   payload      = all parameter tensors as little-endian float32, row-major,
#                  in declaration order (per layer: weight then bias; then
#                  the transition matrix)


def _header_string(enc: EncoderPair) -> str:
    sizes = ",".join(str(s) for s in enc.net.layer_sizes)
    return (
        f"layers={sizes} activation={enc.net.activation} repr_dim={enc.repr_dim} "
        f"norm_budget={enc.norm_budget:.17g} dual_weight={enc.dual_weight:.17g} "
        f"steps={enc.steps_trained}\n"
    )


def save_checkpoint(enc: EncoderPair, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(_header_string(enc).encode("ascii"))
        for tensor in enc.param_list():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path) -> EncoderPair:
    """Read and validate a checkpoint written by save_checkpoint."""
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic bytes; not a checkpoint file")
    header = bytearray()
    while True:
        ch = buf.read(1)
        if not ch:
            raise CheckpointFormatError("unterminated header")
        if ch == b"\n":
            break
        header.extend(ch)
    fields = {}
    for token in header.decode("ascii", errors="replace").split():
        if "=" not in token:
            raise CheckpointFormatError(f"malformed header token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    try:
        sizes = tuple(int(s) for s in fields["layers"].split(","))
        activation = fields["activation"]
        repr_dim = int(fields["repr_dim"])
        norm_budget = float(fields["norm_budget"])
        dual_weight = float(fields["dual_weight"])
        steps = int(fields["steps"])
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"incomplete or malformed header: {exc}") from exc
    if activation not in ACTIVATIONS:
        raise CheckpointFormatError(f"unknown activation {activation!r}")
    if len(sizes) < 2 or sizes[-1] != repr_dim:
        raise CheckpointFormatError("layer sizes inconsistent with repr_dim")

    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes.extend([(fan_in, fan_out), (fan_out,)])
    shapes.append((repr_dim, repr_dim))
    expected = sum(int(np.prod(s)) for s in shapes) * 4
    payload = buf.read()
    if len(payload) != expected:
        raise CheckpointFormatError(
            f"payload has {len(payload)} bytes, header implies {expected}")

    tensors = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        flat = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors.append(flat.astype(np.float64).reshape(shape))
        offset += count * 4
    weights = tensors[0:-1:2]
    biases = tensors[1:-1:2]
    net = MLPParams(layer_sizes=sizes, weights=list(weights), biases=list(biases),
                    activation=activation)
    return EncoderPair(
        net=net,
        transition=tensors[-1],
        norm_budget=norm_budget,
        dual_weight=dual_weight,
        steps_trained=steps,
    )
