import numpy as np
import pytest

from sci import encoder, training
from sci.core import make_rng


@pytest.fixture
def rng():
    return make_rng(0)


def random_batch(rng, n, dim, scale=1.0):
    return training.TripletBatch(
        scale * rng.normal(size=(n, dim)).astype(np.float32),
        scale * rng.normal(size=(n, dim)).astype(np.float32),
        scale * rng.normal(size=(n, dim)).astype(np.float32))


def linear_model(dim_in, dim_out, seed=0, normalize=True):
    return encoder.init(encoder.LINEAR, dim_in, dim_out, make_rng(seed),
                        normalize_output=normalize)


def mlp_model(dim_in, dim_out, hidden, seed=0, normalize=True):
    return encoder.init(encoder.MLP1, dim_in, dim_out, make_rng(seed),
                        hidden_dim=hidden, normalize_output=normalize)


def clone_model(model):
    return encoder.DualTowerModel(
        model.arch, model.input_dim, model.output_dim, model.hidden_dim,
        model.normalize_output,
        {k: v.copy() for k, v in model.params_q.items()},
        {k: v.copy() for k, v in model.params_i.items()})
