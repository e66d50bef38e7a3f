"""Desk-scale dual-tower encoders.

Two independently parameterized maps over a shared input feature space:
a query tower and an item tower with identical shapes, so either tower can
encode either kind of input (the swap mechanism requires this).

Architectures: "linear" (a single weight matrix, no bias) and "mlp1"
(one tanh hidden layer). Outputs are optionally L2-normalized so that dot
products equal cosine similarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import as_f32, row_normalize
from .errors import DimensionMismatch

LINEAR = "linear"
MLP1 = "mlp1"

QUERY = "query"
ITEM = "item"


@dataclass
class DualTowerModel:
    arch: str
    input_dim: int
    output_dim: int
    hidden_dim: int  # 0 for linear
    normalize_output: bool
    params_q: dict
    params_i: dict
    # Forward-pass counter, one tick per vector encoded through either tower.
    encode_calls: int = field(default=0, compare=False)

    def __eq__(self, other):
        if not isinstance(other, DualTowerModel):
            return NotImplemented
        if (self.arch, self.input_dim, self.output_dim, self.hidden_dim,
                self.normalize_output) != (other.arch, other.input_dim,
                                           other.output_dim, other.hidden_dim,
                                           other.normalize_output):
            return False
        for mine, theirs in ((self.params_q, other.params_q),
                             (self.params_i, other.params_i)):
            if mine.keys() != theirs.keys():
                return False
            if not all(np.array_equal(mine[k], theirs[k]) for k in mine):
                return False
        return True

    def param_names(self):
        if self.arch == LINEAR:
            return ("W",)
        return ("W1", "b1", "W2", "b2")


def _init_tower(arch, input_dim, output_dim, hidden_dim, rng) -> dict:
    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    if arch == LINEAR:
        return {"W": uniform((output_dim, input_dim), input_dim)}
    return {
        "W1": uniform((hidden_dim, input_dim), input_dim),
        "b1": np.zeros(hidden_dim, dtype=np.float32),
        "W2": uniform((output_dim, hidden_dim), hidden_dim),
        "b2": np.zeros(output_dim, dtype=np.float32),
    }


def init(arch: str, input_dim: int, output_dim: int, rng,
         hidden_dim: int = 0, normalize_output: bool = True) -> DualTowerModel:
    """Random uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases.

    The two towers are drawn independently, so they start deliberately
    misaligned.
    """
    if arch not in (LINEAR, MLP1):
        raise ValueError(f"unknown arch {arch!r}")
    if input_dim <= 0 or output_dim <= 0:
        raise ValueError("dims must be positive")
    if arch == MLP1 and hidden_dim <= 0:
        raise ValueError("mlp1 requires a positive hidden_dim")
    if arch == LINEAR:
        hidden_dim = 0
    params_q = _init_tower(arch, input_dim, output_dim, hidden_dim, rng)
    params_i = _init_tower(arch, input_dim, output_dim, hidden_dim, rng)
    return DualTowerModel(arch, input_dim, output_dim, hidden_dim,
                          normalize_output, params_q, params_i)


def tower_params(model: DualTowerModel, tower: str) -> dict:
    if tower == QUERY:
        return model.params_q
    if tower == ITEM:
        return model.params_i
    raise ValueError(f"unknown tower {tower!r}")


def forward(params: dict, arch: str, normalize: bool, x: np.ndarray,
            with_cache: bool = False):
    """Batched tower forward pass in float64. x is (n, input_dim).

    With with_cache=True also returns the intermediates needed by the
    training module's backward pass.
    """
    x = x.astype(np.float64, copy=False)
    if arch == LINEAR:
        z = x @ params["W"].astype(np.float64).T
        hidden = None
    else:
        pre = x @ params["W1"].astype(np.float64).T + params["b1"].astype(np.float64)
        hidden = np.tanh(pre)
        z = hidden @ params["W2"].astype(np.float64).T + params["b2"].astype(np.float64)
    if normalize:
        out = row_normalize(z)
    else:
        out = z
    if with_cache:
        return out, {"x": x, "hidden": hidden, "z": z}
    return out


def encode_batch(model: DualTowerModel, tower: str, xs) -> np.ndarray:
    """Encode a batch of input vectors; returns an (n, output_dim) float32 array."""
    xs = np.asarray(xs, dtype=np.float32)
    if xs.ndim == 1:
        xs = xs.reshape(0, model.input_dim) if xs.size == 0 else xs.reshape(1, -1)
    if xs.shape[0] == 0:
        return np.zeros((0, model.output_dim), dtype=np.float32)
    if xs.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"input dim {xs.shape[1]} != model input_dim {model.input_dim}")
    params = tower_params(model, tower)
    out = forward(params, model.arch, model.normalize_output, xs)
    model.encode_calls += xs.shape[0]
    return out.astype(np.float32)


def encode(model: DualTowerModel, tower: str, x) -> np.ndarray:
    """Encode a single input vector."""
    x = as_f32(x)
    if x.shape != (model.input_dim,):
        raise DimensionMismatch(
            f"input dim {x.shape} != model input_dim {model.input_dim}")
    return encode_batch(model, tower, x.reshape(1, -1))[0]
