"""Hybrid graph reasoning network.

Each layer does three things:

1. Linear maps ``W1`` (category nodes) and ``W2`` (relation nodes) into a
   shared hidden size.
2. Node-level attention per metapath. A node attends over its neighbors on
   that path with logits ``LeakyReLU(a . [target ; neighbor])``. The
   softmax-weighted sum of neighbor features then goes through an ELU.
3. Semantic-level attention per node kind. Category nodes mix their o->o
   and o->r path embeddings after ``W3`` / ``W4``. Relation nodes mix r->o
   and r->r after ``W5`` / ``W6``. Mixing weights come from a softmax over
   per-graph path scores ``mean_j q . tanh(Ws z_j + bs)``.

Layer outputs of both kinds feed the next layer. Category embeddings from
the last layer go through ``sigmoid(Wh . Z + bh)``, optionally preceded by
``head_layers`` ReLU layers of width ``hidden``.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import DimError, EmptyGraphKind
from .graph import HybridGraph, canonical_path
from .params import ModelParams, check_dims, init_tensors

# attention vector name -> (metapath, target kind, neighbor kind)
ATTENTION_PATHS = {
    "a_oo": ("o->o", "o", "o"),
    "a_or": ("o->r", "o", "r"),
    "a_ro": ("r->o", "r", "o"),
    "a_rr": ("r->r", "r", "r"),
}
PATH_TO_ATTENTION = {path: name for name, (path, _, _) in ATTENTION_PATHS.items()}

# per node kind: the two (path embedding, semantic transform) pairs
SEMANTIC_INPUTS = {
    "o": (("a_oo", "W3"), ("a_or", "W4")),
    "r": (("a_ro", "W5"), ("a_rr", "W6")),
}

LEAKY_SLOPE = 0.2


def param_shapes(dims):
    check_dims(dims)
    h, ha = dims["hidden"], dims["attn_hidden"]
    shapes = {}
    for i in range(dims["layers"]):
        d_in_o = dims["d_o"] if i == 0 else h
        d_in_r = dims["d_r"] if i == 0 else h
        p = f"layers.{i}."
        shapes[p + "W1"] = (h, d_in_o)
        shapes[p + "W2"] = (h, d_in_r)
        for name in ATTENTION_PATHS:
            shapes[p + name] = (2 * h,)
        for name in ("W3", "W4", "W5", "W6"):
            shapes[p + name] = (h, h)
        shapes[p + "q"] = (ha,)
        shapes[p + "Ws"] = (ha, h)
        shapes[p + "bs"] = (ha,)
    for k in range(dims.get("head_layers", 0)):
        shapes[f"head.{k}.W"] = (h, h)
        shapes[f"head.{k}.b"] = (h,)
    shapes["Wh"] = (h,)
    shapes["bh"] = ()
    return shapes


def init_params(dims, seed=0):
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    return ModelParams("hgr", dict(dims), init_tensors(param_shapes(dims), seed))


@dataclass
class HybridBatch:
    """Disjoint union of hybrid graphs, flattened to index arrays."""

    x_o: np.ndarray
    x_r: np.ndarray
    cat_graph: np.ndarray
    rel_graph: np.ndarray
    edges: dict
    n_graphs: int
    labels: np.ndarray

    @property
    def n_o(self):
        return self.x_o.shape[0]

    @property
    def n_r(self):
        return self.x_r.shape[0]


def make_batch(hybrids, dtype=np.float64):
    if not hybrids:
        raise ValueError("empty batch")
    d_o, d_r = hybrids[0].base.d_o, hybrids[0].base.d_r
    edges = {name: ([], []) for name in ATTENTION_PATHS}
    off_o = off_r = 0
    cat_graph, rel_graph = [], []
    for gi, h in enumerate(hybrids):
        g = h.base
        if (g.d_o, g.d_r) != (d_o, d_r):
            raise DimError("all graphs in a batch must share feature dims")
        offsets = {"o": off_o, "r": off_r}
        for name, (path, tk, nk) in ATTENTION_PATHS.items():
            tgt, nbr = h.edge_index(path)
            edges[name][0].append(tgt + offsets[tk])
            edges[name][1].append(nbr + offsets[nk])
        cat_graph.append(np.full(g.n_categories, gi, dtype=np.int64))
        rel_graph.append(np.full(g.n_relations, gi, dtype=np.int64))
        off_o += g.n_categories
        off_r += g.n_relations
    n_o, n_r = off_o, off_r
    sizes = {"o": n_o, "r": n_r}
    index_pairs = {}
    for name, (t, n) in edges.items():
        _, tk, nk = ATTENTION_PATHS[name]
        index_pairs[name] = (
            ad.SegmentIndex(np.concatenate(t), sizes[tk]),
            ad.SegmentIndex(np.concatenate(n), sizes[nk]),
        )
    return HybridBatch(
        x_o=np.concatenate([h.base.category_features for h in hybrids]).astype(dtype).reshape(-1, d_o),
        x_r=np.concatenate([h.base.relation_features for h in hybrids]).astype(dtype).reshape(-1, d_r),
        cat_graph=ad.SegmentIndex(np.concatenate(cat_graph), len(hybrids)),
        rel_graph=ad.SegmentIndex(np.concatenate(rel_graph), len(hybrids)),
        edges=index_pairs,
        n_graphs=len(hybrids),
        labels=np.concatenate([h.base.labels for h in hybrids]),
    )


# ---------------------------------------------------------------------------
# tensor-level building blocks
# ---------------------------------------------------------------------------


def attend(a, target_feats, neighbor_feats, tgt, nbr, n_targets):
    """Node-level attention over one edge set; returns ``(z, alpha)``."""
    hidden = target_feats.shape[1]
    logits = ad.add(
        ad.matvec(ad.gather(target_feats, tgt), a[:hidden]),
        ad.matvec(ad.gather(neighbor_feats, nbr), a[hidden:]),
    )
    alpha = ad.segment_softmax(ad.leaky_relu(logits, LEAKY_SLOPE), tgt, n_targets)
    messages = ad.mul(ad.gather(neighbor_feats, nbr), ad.column(alpha))
    return ad.elu(ad.segment_sum(messages, tgt, n_targets)), alpha


def semantic_mix(q, ws, bs, path_embeddings, node_graph, n_graphs):
    """Semantic-level attention; returns ``(Z, beta)`` with beta shaped ``(n_graphs, n_paths)``."""
    node_graph = ad.as_index(node_graph, n_graphs)
    counts = np.bincount(node_graph.ids, minlength=n_graphs).astype(path_embeddings[0].value.dtype)
    inv = 1.0 / np.maximum(counts, 1.0)
    scores = []
    for z in path_embeddings:
        s = ad.matvec(ad.tanh(ad.add(ad.linear(z, ws), bs)), q)
        scores.append(ad.mul(ad.segment_sum(s, node_graph, n_graphs), inv))
    beta = ad.softmax_rows(ad.stack_columns(scores))
    out = None
    for k, z in enumerate(path_embeddings):
        term = ad.mul(z, ad.column(ad.gather(beta[:, k], node_graph)))
        out = term if out is None else ad.add(out, term)
    return out, beta


def layer_forward(lp, x_o, x_r, batch, trace=None):
    o_hat = ad.linear(x_o, lp["W1"])
    r_hat = ad.linear(x_r, lp["W2"])
    feats = {"o": o_hat, "r": r_hat}
    sizes = {"o": batch.n_o, "r": batch.n_r}
    z = {}
    for name, (path, tk, nk) in ATTENTION_PATHS.items():
        tgt, nbr = batch.edges[name]
        z[name], alpha = attend(lp[name], feats[tk], feats[nk], tgt, nbr, sizes[tk])
        if trace is not None:
            trace.setdefault("alpha", []).append((name, tgt.ids, alpha.value))
    out = {}
    for kind, node_graph in (("o", batch.cat_graph), ("r", batch.rel_graph)):
        inputs = [ad.linear(z[a], lp[w]) for a, w in SEMANTIC_INPUTS[kind]]
        out[kind], beta = semantic_mix(lp["q"], lp["Ws"], lp["bs"], inputs, node_graph, batch.n_graphs)
        if trace is not None:
            present = np.bincount(node_graph.ids, minlength=batch.n_graphs) > 0
            trace.setdefault("beta", []).append((kind, beta.value[present]))
    return out["o"], out["r"]


def forward_tensors(tensors, batch, trace=None):
    """Per-category-node probabilities for a batch, as a tape tensor."""
    x_o, x_r = ad.Tensor(batch.x_o), ad.Tensor(batch.x_r)
    n_layers = sum(1 for k in tensors if k.endswith(".W1"))
    for i in range(n_layers):
        prefix = f"layers.{i}."
        lp = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        x_o, x_r = layer_forward(lp, x_o, x_r, batch, trace)
    k = 0
    while f"head.{k}.W" in tensors:
        x_o = ad.relu(ad.add(ad.linear(x_o, tensors[f"head.{k}.W"]), tensors[f"head.{k}.b"]))
        k += 1
    return ad.sigmoid(ad.add(ad.matvec(x_o, tensors["Wh"]), tensors["bh"]))


def check_compatible(params, graph):
    if (params.dims["d_o"], params.dims["d_r"]) != (graph.d_o, graph.d_r):
        raise DimError(
            f"model expects dims (d_o={params.dims['d_o']}, d_r={params.dims['d_r']}), "
            f"graph has ({graph.d_o}, {graph.d_r})"
        )


def _const(tensors):
    return {k: ad.Tensor(v) for k, v in tensors.items()}


# ---------------------------------------------------------------------------
# single-graph numeric API
# ---------------------------------------------------------------------------


def transform_features(layer, x_o, x_r):
    """Return ``(W1 @ o_i, W2 @ r_i)`` row-wise for category and relation feature matrices."""
    x_o, x_r = np.asarray(x_o, dtype=float), np.asarray(x_r, dtype=float)
    w1, w2 = np.asarray(layer["W1"]), np.asarray(layer["W2"])
    if x_o.shape[1] != w1.shape[1] or (x_r.shape[0] and x_r.shape[1] != w2.shape[1]):
        raise DimError("feature dims do not match W1/W2")
    return x_o @ w1.T, x_r.reshape(-1, w2.shape[1]) @ w2.T


def node_level_attention(layer, h: HybridGraph, transformed, path):
    """Path embeddings for every source node of ``path``.

    ``transformed`` is the ``(o_hat, r_hat)`` pair from :func:`transform_features`.
    Returns ``(z, alpha)`` where ``alpha`` is keyed by ``(target_pos, neighbor_pos)``.
    """
    name = PATH_TO_ATTENTION[canonical_path(path)]
    _, tk, nk = ATTENTION_PATHS[name]
    feats = {"o": np.asarray(transformed[0]), "r": np.asarray(transformed[1])}
    tgt, nbr = h.edge_index(path)
    z, alpha = attend(
        ad.Tensor(np.asarray(layer[name])),
        ad.Tensor(feats[tk]),
        ad.Tensor(feats[nk]),
        tgt,
        nbr,
        feats[tk].shape[0],
    )
    return z.value, {(int(t), int(n)): float(a) for t, n, a in zip(tgt, nbr, alpha.value)}


def semantic_level_attention(layer, z_by_path, kind):
    """Fuse one node kind's two path embeddings (already passed through W3..W6).

    ``z_by_path`` holds two ``(n_nodes, h)`` arrays in the order o->o, o->r for
    category nodes or r->o, r->r for relation nodes. Returns ``(Z, beta)``.
    """
    if kind not in SEMANTIC_INPUTS:
        raise ValueError(f"kind must be 'o' or 'r', got {kind!r}")
    zs = [np.asarray(z, dtype=float) for z in z_by_path]
    if zs[0].shape[0] == 0:
        raise EmptyGraphKind(f"graph has no nodes of kind {kind!r}")
    node_graph = np.zeros(zs[0].shape[0], dtype=np.int64)
    out, beta = semantic_mix(
        ad.Tensor(np.asarray(layer["q"])),
        ad.Tensor(np.asarray(layer["Ws"])),
        ad.Tensor(np.asarray(layer["bs"])),
        [ad.Tensor(z) for z in zs],
        node_graph,
        1,
    )
    return out.value, beta.value[0]


def forward(params, h, trace=None):
    """Privacy probability for each category node of hybrid graph ``h`` (ascending id)."""
    check_compatible(params, h.base)
    if h.base.n_categories == 0:
        return np.zeros(0)
    batch = make_batch([h])
    return forward_tensors(_const(params.tensors), batch, trace).value
