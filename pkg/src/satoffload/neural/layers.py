"""Dense layers, MLPs and the attention head used by the critic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor, concat, exp, log_softmax, matmul, relu, softmax_np, swapaxes, tanh

ACTIVATIONS = {"relu": relu, "tanh": tanh, "linear": None}


class Dense:
    """``y = x @ W + b`` with fan-in scaled uniform initialisation."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(n_in)
        self.W = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, size=n_out), requires_grad=True)

    @property
    def n_in(self) -> int:
        return self.W.shape[0]

    @property
    def n_out(self) -> int:
        return self.W.shape[1]

    def params(self) -> list[Tensor]:
        return [self.W, self.b]

    def __call__(self, x) -> Tensor:
        return matmul(x, self.W) + self.b


class Mlp:
    """Stack of dense layers; hidden layers use ``activation``, the last ``out_activation``."""

    def __init__(
        self,
        widths: list[int] | tuple[int, ...],
        rng: np.random.Generator,
        activation: str = "relu",
        out_activation: str = "linear",
    ):
        if len(widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        self.widths = tuple(int(w) for w in widths)
        self.layers = [Dense(a, b, rng) for a, b in zip(self.widths[:-1], self.widths[1:])]
        self.activations = [activation] * (len(self.layers) - 1) + [out_activation]

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        for i, (layer, act) in enumerate(zip(self.layers, self.activations)):
            if x.shape[-1] != layer.n_in:
                raise ValueError(f"layer {i}: expected input width {layer.n_in}, got {x.shape[-1]}")
            x = layer(x)
            fn = ACTIVATIONS[act]
            if fn is not None:
                x = fn(x)
        return x


def forward(mlp: Mlp, input_vector) -> np.ndarray:
    return mlp(input_vector).data


class AttentionHead:
    """Scaled dot-product attention over the other agents' embeddings.

    weight_i ~ exp((W_q e_b) . (W_k e_i) / sqrt(key_dim)), psi_b = sum_i weight_i * act(V e_i).
    """

    def __init__(self, embed_dim: int, key_dim: int, rng: np.random.Generator, value_activation: str = "relu"):
        bound = 1.0 / math.sqrt(embed_dim)
        self.W_q = Tensor(rng.uniform(-bound, bound, size=(embed_dim, key_dim)), requires_grad=True)
        self.W_k = Tensor(rng.uniform(-bound, bound, size=(embed_dim, key_dim)), requires_grad=True)
        self.V = Tensor(rng.uniform(-bound, bound, size=(embed_dim, key_dim)), requires_grad=True)
        self.key_dim = key_dim
        self.value_activation = value_activation

    def params(self) -> list[Tensor]:
        return [self.W_q, self.W_k, self.V]

    def _values(self, e) -> Tensor:
        v = matmul(e, self.V)
        fn = ACTIVATIONS[self.value_activation]
        return v if fn is None else fn(v)

    def scores(self, query_e, key_e) -> Tensor:
        q = matmul(query_e, self.W_q)
        k = matmul(key_e, self.W_k)
        return matmul(q, swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self.key_dim))

    def mix(self, query_e, key_e, mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """Batched attention.

        ``query_e``: (..., S, E) embeddings asking; ``key_e``: (..., S, E) embeddings
        attended to; ``mask``: (..., S, S) bool, True where query ``i`` may look at
        key ``j``. Rows with nothing to look at give psi = 0.
        """
        s = self.scores(query_e, key_e)
        any_ = mask.any(axis=-1, keepdims=True)
        w = log_softmax(s, mask, axis=-1)
        weights = exp(w) * any_.astype(float)
        psi = matmul(weights, self._values(key_e))
        return psi, weights.data


def attention_mix(head: AttentionHead, own: np.ndarray, others: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """psi_b and weights for one agent; ``others`` is (m, E), possibly empty."""
    own = np.asarray(own, dtype=float)
    others = np.asarray(others, dtype=float).reshape(-1, own.shape[-1])
    if others.shape[0] == 0:
        return np.zeros(head.key_dim), np.zeros(0)
    q = own @ head.W_q.data
    k = others @ head.W_k.data
    phi = softmax_np(k @ q / math.sqrt(head.key_dim))
    v = others @ head.V.data
    fn = ACTIVATIONS[head.value_activation]
    if fn is not None:
        v = fn(Tensor(v)).data
    return phi @ v, phi


@dataclass
class NetProfile:
    """Widths of the actor and critic networks."""

    actor_hidden: tuple[int, ...] = (32, 32)
    embed: int = 32
    key: int = 32
    critic_hidden: tuple[int, ...] = (32,)

    @classmethod
    def test(cls) -> "NetProfile":
        return cls()

    @classmethod
    def paper(cls) -> "NetProfile":
        return cls(actor_hidden=(512, 512, 512), embed=512, key=512, critic_hidden=(512, 512))


def masked_log_probs(logits: Tensor, mask: np.ndarray) -> Tensor:
    return log_softmax(logits, mask, axis=-1)


def stack_inputs(*parts) -> Tensor:
    return concat(parts, axis=-1)
