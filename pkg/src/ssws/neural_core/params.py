"""Named parameter collection and seeded weight initialization."""

from __future__ import annotations

import math

import numpy as np

from ssws.neural_core.tensor import Tensor


class Parameters:
    """Ordered mapping of names to trainable tensors."""

    def __init__(self):
        self._items: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._items:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data), requires_grad=True)
        self._items[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self):
        return len(self._items)

    def names(self):
        return list(self._items)

    def items(self):
        return self._items.items()

    def tensors(self):
        return list(self._items.values())

    def zero_grad(self):
        for t in self._items.values():
            t.grad = None

    def total_size(self) -> int:
        return sum(t.data.size for t in self._items.values())


def uniform_init(rng: np.random.Generator, shape, fan_in, dtype=np.float32) -> np.ndarray:
    """Uniform in +-sqrt(1/fan_in), the default weight initialization."""
    bound = math.sqrt(1.0 / max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
