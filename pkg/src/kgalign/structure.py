"""Structure-aware entity encoding: gated graph propagation layers.

Each layer smooths embeddings over the normalized adjacency and blends the
result back with the input through a learned sigmoid gate, so entity
identity survives the smoothing. Both graphs are encoded with the same
parameters.
"""

import numpy as np

from . import autodiff as ad


def init_structure_params(rng, d_e, depth):
    if depth < 1:
        raise ValueError("depth must be at least 1")
    params = {}
    bound = np.sqrt(6.0 / (2 * d_e))
    for layer in range(depth):
        params[f"gcn.gate_w{layer}"] = ad.Tensor(
            rng.uniform(-bound, bound, size=(d_e, d_e)), requires_grad=True
        )
        params[f"gcn.gate_b{layer}"] = ad.zeros_param(d_e)
    return params


def gcn_propagate(x, adjacency_norm):
    """Degree-normalized neighborhood average followed by ReLU; no weights."""
    if adjacency_norm.shape[1] != x.data.shape[0]:
        raise ad.DimensionError(
            f"adjacency {adjacency_norm.shape} against embeddings {x.data.shape}"
        )
    return ad.relu(ad.left_matmul(adjacency_norm, x))


def highway_combine(x_old, x_new, gate_w, gate_b):
    """Elementwise convex blend gate*x_new + (1 - gate)*x_old."""
    gate = ad.sigmoid(ad.matmul(x_old, gate_w) + gate_b)
    return gate * x_new + (1.0 - gate) * x_old


def encode_structure(x, adjacency_norm, params, depth):
    for layer in range(depth):
        propagated = gcn_propagate(x, adjacency_norm)
        x = highway_combine(
            x, propagated, params[f"gcn.gate_w{layer}"], params[f"gcn.gate_b{layer}"]
        )
    return x
