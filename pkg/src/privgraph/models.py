"""Uniform access to the four model kinds: hgr, gcn, gat, mlp."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import baselines, hgr
from .exceptions import ConfigError, DimError
from .graph import derive_hybrid
from .params import ModelParams, init_tensors


@dataclass(frozen=True)
class ModelKind:
    name: str
    shapes: Callable
    prepare_graph: Callable  # HeteroSceneGraph -> per-graph structure
    make_batch: Callable  # list of prepared structures, dtype -> batch
    forward: Callable  # tensors dict, batch -> probability tensor


MODEL_KINDS = {
    "hgr": ModelKind("hgr", hgr.param_shapes, derive_hybrid, hgr.make_batch, hgr.forward_tensors),
    "gcn": ModelKind(
        "gcn", baselines.gcn_shapes, baselines.homogenize, baselines.make_homo_batch, baselines.gcn_tensors
    ),
    "gat": ModelKind(
        "gat", baselines.gat_shapes, baselines.homogenize, baselines.make_homo_batch, baselines.gat_tensors
    ),
    "mlp": ModelKind(
        "mlp", baselines.mlp_shapes, lambda g: g, baselines.make_feature_batch, baselines.mlp_tensors
    ),
}


def get_kind(name):
    try:
        return MODEL_KINDS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(MODEL_KINDS)}") from None


def init_params(kind, dims, seed=0):
    model = get_kind(kind)
    return ModelParams(kind, dict(dims), init_tensors(model.shapes(dims), seed))


def check_dataset_dims(params, d_o, d_r):
    if (params.dims["d_o"], params.dims["d_r"]) != (d_o, d_r):
        raise DimError(
            f"checkpoint dims (d_o={params.dims['d_o']}, d_r={params.dims['d_r']}) "
            f"do not match data dims (d_o={d_o}, d_r={d_r})"
        )


class Prepared:
    """Graphs converted once to the structure a model kind consumes."""

    def __init__(self, kind, graphs):
        self.kind = get_kind(kind)
        self.graphs = list(graphs)
        self.items = [self.kind.prepare_graph(g) for g in self.graphs]
        self.sizes = [g.n_categories for g in self.graphs]

    def batch(self, indices, dtype=np.float64):
        idx = [i for i in indices if self.sizes[i] > 0]
        if not idx:
            return None
        return self.kind.make_batch([self.items[i] for i in idx], dtype)


def predict_proba(params, graphs, batch_size=64, prepared=None):
    """Per-graph arrays of category-node probabilities (ascending node id)."""
    graphs = list(graphs)
    for g in graphs:
        check_dataset_dims(params, g.d_o, g.d_r)
    prep = prepared or Prepared(params.kind, graphs)
    dtype = next(iter(params.tensors.values())).dtype
    tensors = {k: ad.Tensor(v) for k, v in params.tensors.items()}
    out = []
    for start in range(0, len(graphs), batch_size):
        idx = list(range(start, min(start + batch_size, len(graphs))))
        batch = prep.batch(idx, dtype)
        probs = prep.kind.forward(tensors, batch).value if batch is not None else np.zeros(0)
        offset = 0
        for i in idx:
            n = prep.sizes[i]
            out.append(np.asarray(probs[offset : offset + n], dtype=np.float64))
            offset += n
    return out
