"""Shared-base reward network with growable per-intention affine heads.

The base maps state features through ReLU hidden layers and a final linear
projection to reward features; head ``k`` maps reward features to a scalar
reward. Forward and backward passes are written out by hand in numpy.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"MIIRLNET"
CHECKPOINT_VERSION = 1


@dataclass
class AdamMoments:
    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> AdamMoments:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass(eq=False)
class Head:
    weight: np.ndarray  # (reward_feature_dim,)
    bias: np.ndarray  # shape ()
    adam: AdamMoments = None

    def __post_init__(self):
        if self.adam is None:
            self.adam = AdamMoments.zeros_like(self.params)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def __call__(self, reward_features: np.ndarray) -> np.ndarray:
        return reward_features @ self.weight + self.bias


@dataclass
class Gradients:
    """Gradients for the base layers and a subset of heads.

    ``base`` follows ``RewardNet.base_params`` order; ``heads`` maps head
    index to ``[d_weight, d_bias]``. Sets add elementwise.
    """

    base: list[np.ndarray]
    heads: dict[int, list[np.ndarray]] = field(default_factory=dict)

    def __add__(self, other: Gradients) -> Gradients:
        base = [a + b for a, b in zip(self.base, other.base)]
        heads = {k: list(v) for k, v in self.heads.items()}
        for k, v in other.heads.items():
            heads[k] = [a + b for a, b in zip(heads[k], v)] if k in heads else list(v)
        return Gradients(base, heads)

    def tensors(self):
        for i, g in enumerate(self.base):
            yield f"base[{i}]", g
        for k, gs in sorted(self.heads.items()):
            yield f"head[{k}].weight", gs[0]
            yield f"head[{k}].bias", gs[1]


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class RewardNet:
    def __init__(
        self,
        layers: list[tuple[np.ndarray, np.ndarray]],
        heads: list[Head],
        head_bias: bool = True,
    ):
        self.layers = layers
        self.heads = heads
        self.head_bias = head_bias
        self.base_adam = AdamMoments.zeros_like(self.base_params)

    @classmethod
    def init(
        cls,
        feature_dim: int,
        reward_feature_dim: int = 16,
        k_init: int = 1,
        seed: int = 0,
        hidden: tuple[int, ...] = (32, 32),
        head_bias: bool = True,
    ) -> RewardNet:
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases, deterministic in ``seed``."""
        if feature_dim < 1 or reward_feature_dim < 1 or k_init < 1:
            raise ValueError("dimensions and k_init must be >= 1")
        rng = np.random.default_rng(seed)
        widths = [feature_dim, *hidden, reward_feature_dim]
        layers = [
            (_uniform(rng, n_in, (n_in, n_out)), np.zeros(n_out))
            for n_in, n_out in zip(widths[:-1], widths[1:])
        ]
        net = cls(layers, [], head_bias=head_bias)
        for _ in range(k_init):
            net.heads.append(net.new_head(rng))
        return net

    @property
    def K(self) -> int:
        return len(self.heads)

    @property
    def feature_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def reward_feature_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(W.shape[1] for W, _ in self.layers[:-1])

    @property
    def base_params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer]

    def copy(self) -> RewardNet:
        return copy.deepcopy(self)

    def new_head(self, rng: np.random.Generator | int) -> Head:
        """A freshly initialised head that is not yet attached to the net."""
        rng = np.random.default_rng(rng)
        d = self.reward_feature_dim
        return Head(_uniform(rng, d, d), np.zeros(()))

    def spawn_head(self, seed: int) -> int:
        self.heads.append(self.new_head(seed))
        return self.K - 1

    def prune_heads(self, occupied) -> dict[int, int]:
        """Keep only ``occupied`` heads (in index order); returns old -> new indices."""
        occupied = sorted(set(int(k) for k in occupied))
        if not occupied:
            raise ValueError("cannot prune every head")
        if occupied[0] < 0 or occupied[-1] >= self.K:
            raise IndexError("occupied head index out of range")
        self.heads = [self.heads[k] for k in occupied]
        return {old: new for new, old in enumerate(occupied)}

    # forward / backward

    def _check_features(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.feature_dim:
            raise ValueError(
                f"features must have shape (n_states, {self.feature_dim}), got {features.shape}"
            )
        return features

    def base_forward(self, features) -> list[np.ndarray]:
        """Activations ``[input, h_1, ..., reward_features]`` (post-ReLU for hidden layers)."""
        x = self._check_features(features)
        acts = [x]
        for i, (W, b) in enumerate(self.layers):
            x = x @ W + b
            if i < len(self.layers) - 1:
                x = np.maximum(x, 0.0)
            acts.append(x)
        return acts

    def head_output(self, k: int, reward_features: np.ndarray) -> np.ndarray:
        return self._head(k)(reward_features)

    def forward(self, features, k: int) -> np.ndarray:
        """Per-state reward under intention ``k``."""
        return self.head_output(k, self.base_forward(features)[-1])

    def rewards(self, features) -> np.ndarray:
        """``(K, n_states)`` rewards of every head, sharing one base pass."""
        r = self.base_forward(features)[-1]
        return np.stack([h(r) for h in self.heads]) if self.heads else np.zeros((0, len(r)))

    def _head(self, k) -> Head:
        if isinstance(k, Head):
            return k
        if not 0 <= k < self.K:
            raise IndexError(f"head {k} out of range (K={self.K})")
        return self.heads[k]

    def backward_many(
        self,
        features,
        state_weights: dict,
        activations: list[np.ndarray] | None = None,
    ) -> Gradients:
        """Gradient of ``sum_k sum_s w_k[s] * R_k(s)`` over every key in ``state_weights``.

        Keys are head indices or detached ``Head`` objects; detached heads
        contribute to the base gradient only.
        """
        acts = self.base_forward(features) if activations is None else activations
        r = acts[-1]
        n_states = r.shape[0]
        d_r = np.zeros_like(r)
        heads = {}
        for key, w in state_weights.items():
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (n_states,):
                raise ValueError(f"state weights must have shape ({n_states},), got {w.shape}")
            head = self._head(key)
            d_r += np.outer(w, head.weight)
            if not isinstance(key, Head):
                d_bias = np.asarray(w.sum()) if self.head_bias else np.zeros(())
                heads[int(key)] = [r.T @ w, d_bias]
        base = []
        delta = d_r
        for i in reversed(range(len(self.layers))):
            W, _ = self.layers[i]
            base.append(delta.sum(axis=0))
            base.append(acts[i].T @ delta)
            if i > 0:
                delta = (delta @ W.T) * (acts[i] > 0)
        base.reverse()
        grads = Gradients(base, heads)
        for name, g in grads.tensors():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in {name}")
        return grads

    def backward(self, features, k: int, state_weights) -> Gradients:
        """Gradient of ``sum_s w[s] * R_k(s)`` w.r.t. the base and head ``k``."""
        self._head(k)
        return self.backward_many(features, {k: state_weights})

    def adam_step(self, grads: Gradients, lr: float = 1e-3) -> RewardNet:
        """One Adam ascent step on the base and on every head present in ``grads``."""
        base_params = self.base_params
        if len(grads.base) != len(base_params):
            raise ValueError("gradient set does not match the base layers")
        updates = [("base", base_params, grads.base, self.base_adam)]
        for k, g in grads.heads.items():
            head = self._head(k)
            updates.append((f"head[{k}]", head.params, g, head.adam))
        # compute everything first so a failure leaves the net untouched
        staged = []
        for name, params, gs, adam in updates:
            step = adam.step + 1
            new_m, new_v, deltas = [], [], []
            for p, g, m, v in zip(params, gs, adam.first, adam.second):
                if g.shape != p.shape:
                    raise ValueError(f"{name}: gradient shape {g.shape} != parameter {p.shape}")
                m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
                v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
                m_hat = m / (1 - ADAM_BETA1**step)
                v_hat = v / (1 - ADAM_BETA2**step)
                delta = lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
                if not np.all(np.isfinite(delta)):
                    raise FloatingPointError(f"non-finite Adam update for {name} at step {step}")
                new_m.append(m)
                new_v.append(v)
                deltas.append(delta)
            staged.append((params, adam, step, new_m, new_v, deltas))
        for params, adam, step, new_m, new_v, deltas in staged:
            for p, d in zip(params, deltas):
                p += d
            adam.first, adam.second, adam.step = new_m, new_v, step
        if not self.head_bias:
            for head in self.heads:
                head.bias[...] = 0.0
        return self

    # checkpoint I/O

    def to_bytes(self) -> bytes:
        """Flat little-endian layout.

        ``MIIRLNET``, then uint64 fields: version, feature_dim,
        reward_feature_dim, head_bias, n_hidden, hidden widths..., n_heads;
        then float64 parameters: each base layer's weight (row-major) and
        bias, then each head's weight and bias.
        """
        header = [CHECKPOINT_VERSION, self.feature_dim, self.reward_feature_dim,
                  int(self.head_bias), len(self.hidden), *self.hidden, self.K]
        parts = [CHECKPOINT_MAGIC, struct.pack(f"<{len(header)}Q", *header)]
        for p in self.base_params:
            parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
        for head in self.heads:
            for p in head.params:
                parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> RewardNet:
        if data[:8] != CHECKPOINT_MAGIC:
            raise ValueError("not a reward-net checkpoint")
        pos = 8

        def read_u64(n):
            nonlocal pos
            vals = struct.unpack_from(f"<{n}Q", data, pos)
            pos += 8 * n
            return vals

        version, feature_dim, reward_dim, head_bias, n_hidden = read_u64(5)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        hidden = read_u64(n_hidden)
        (n_heads,) = read_u64(1)

        def read_array(shape):
            nonlocal pos
            n = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64)
            pos += 8 * n
            return arr.reshape(shape)

        widths = [feature_dim, *hidden, reward_dim]
        layers = [(read_array((a, b)), read_array((b,))) for a, b in zip(widths[:-1], widths[1:])]
        heads = [Head(read_array((reward_dim,)), read_array(())) for _ in range(n_heads)]
        if pos != len(data):
            raise ValueError("trailing bytes in checkpoint")
        return cls(layers, heads, head_bias=bool(head_bias))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> RewardNet:
        return cls.from_bytes(Path(path).read_bytes())
