"""Dense layers and a small feed-forward stack."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from prozd.nn import tensor as T
from prozd.nn.params import Parameters
from prozd.nn.tensor import Tensor


class LayerShapeError(ValueError):
    def __init__(self, layer: str, expected, got):
        super().__init__(f"layer {layer!r} expects input width {expected}, got shape {got}")
        self.layer = layer


@dataclass
class Linear:
    name: str
    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, params: Parameters, name: str, in_dim: int, out_dim: int) -> Linear:
        return cls(name, params.xavier(f"{name}.weight", in_dim, out_dim), params.zeros(f"{name}.bias", (1, out_dim)))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        x = T._as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.in_dim:
            raise LayerShapeError(self.name, self.in_dim, x.shape)
        return T.matmul(x, self.weight) + self.bias


class MLP:
    """Linear layers with LeakyReLU between them; the last layer emits raw logits."""

    def __init__(self, params: Parameters, name: str, sizes: Sequence[int]):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.layers = [
            Linear.create(params, f"{name}.{i}", a, b) for i, (a, b) in enumerate(zip(self.sizes, self.sizes[1:]))
        ]

    def forward(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Logits plus every intermediate activation, input first."""
        acts = [T._as_tensor(x)]
        h = acts[0]
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = T.leaky_relu(h)
            acts.append(h)
        return h, acts

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)[0]

    def probabilities(self, x) -> np.ndarray:
        return T.softmax(self(T.Tensor(x))).data
