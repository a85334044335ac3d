"""Named parameter store, Adam, and JSON checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from prozd.nn.tensor import Tensor, parameter

CHECKPOINT_FORMAT = "prozd-checkpoint"
CHECKPOINT_VERSION = 1


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str, n_bad: int):
        super().__init__(f"gradient of {name!r} has {n_bad} non-finite entries; training halted")
        self.name = name


class CheckpointError(ValueError):
    pass


class Parameters:
    """Ordered map of named trainable matrices plus the seed that initialized them."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError(f"parameter {name!r} has non-finite entries")
        t = self._tensors[name] = parameter(value)
        return t

    def xavier(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, self.rng.uniform(-limit, limit, size=(fan_in, fan_out)))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for k, t in self._tensors.items()}

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self._tensors):
            missing = sorted(set(self._tensors) - set(arrays))
            extra = sorted(set(arrays) - set(self._tensors))
            raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for k, t in self._tensors.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.data.shape:
                raise CheckpointError(f"shape mismatch for {k!r}: checkpoint {a.shape}, model {t.data.shape}")
            t.data = a.copy()


@dataclass
class AdamConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    def __init__(self, params: Parameters, config: AdamConfig | None = None):
        self.params = params
        self.config = config or AdamConfig()
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        grads = self.params.grads() if grads is None else grads
        for k, g in grads.items():
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            if bad:
                raise NonFiniteGradientError(k, bad)
        c = self.config
        self.t += 1
        corr1 = 1 - c.beta1**self.t
        corr2 = 1 - c.beta2**self.t
        for k, t in self.params.items():
            g = grads[k]
            if g.shape != t.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {k!r} {t.data.shape}")
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            t.data = t.data - c.lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + c.eps)


def checkpoint_dict(params: Parameters, config: dict[str, Any] | None = None) -> dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": params.seed,
        "config": config or {},
        "params": {
            k: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()} for k, t in params.items()
        },
    }


def save_checkpoint(path: str | Path, params: Parameters, config: dict[str, Any] | None = None) -> None:
    # json writes floats with repr, which round-trips float64 exactly
    Path(path).write_text(json.dumps(checkpoint_dict(params, config), sort_keys=True) + "\n", encoding="utf-8")


def parse_checkpoint(doc: Any) -> tuple[dict[str, np.ndarray], int, dict[str, Any]]:
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a parameter checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    arrays = {}
    for k, entry in doc["params"].items():
        shape = tuple(int(s) for s in entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise CheckpointError(f"{k!r}: {data.size} values for shape {shape}")
        arrays[k] = data.reshape(shape)
    return arrays, int(doc.get("seed", 0)), dict(doc.get("config", {}))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], int, dict[str, Any]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"invalid checkpoint JSON: {exc.msg}") from None
    return parse_checkpoint(doc)
