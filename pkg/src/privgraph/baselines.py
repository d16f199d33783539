"""Ablation comparators: GCN and GAT on a homogenized graph, and an appearance-only MLP.

Homogenization turns relation nodes into ordinary nodes. Every triplet
(subject, r, object) becomes two undirected edges subject-r and r-object, and
every node gets a self-loop. Features are zero-padded to ``max(d_o, d_r)``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import DimError, InvalidGraph
from .graph import validate
from .hgr import attend
from .params import ModelParams, check_dims, init_tensors


@dataclass(frozen=True)
class HomoGraph:
    features: np.ndarray  # (n_nodes, dim); categories first, then relations
    edges: tuple  # undirected (u, v) pairs with u <= v, self-loops included
    is_category: np.ndarray
    labels: np.ndarray  # -1 for relation nodes and unknown labels
    n_categories: int
    _directed: list = field(default_factory=list, compare=False, repr=False)

    @property
    def n_nodes(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def directed(self):
        """Both directions of every edge (self-loops once), sorted by (target, source)."""
        if self._directed:
            return self._directed[0]
        pairs = set()
        for u, v in self.edges:
            pairs.add((u, v))
            pairs.add((v, u))
        ordered = sorted(pairs)
        tgt = np.array([p[0] for p in ordered], dtype=np.int64)
        src = np.array([p[1] for p in ordered], dtype=np.int64)
        self._directed.append((tgt, src))
        return tgt, src


def homogenize(g):
    report = validate(g)
    if not report.ok:
        raise InvalidGraph(report.violations)
    n_o, n_r = g.n_categories, g.n_relations
    dim = max(g.d_o, g.d_r)
    feats = np.zeros((n_o + n_r, dim))
    feats[:n_o, : g.d_o] = g.category_features
    feats[n_o:, : g.d_r] = g.relation_features
    edges = set((i, i) for i in range(n_o + n_r))
    for j, r in enumerate(g.relations):
        node = n_o + j
        for end in r.endpoints:
            u = g.category_pos[end]
            edges.add((min(u, node), max(u, node)))
    labels = np.full(n_o + n_r, -1, dtype=np.int64)
    labels[:n_o] = g.labels
    kind = np.zeros(n_o + n_r, dtype=bool)
    kind[:n_o] = True
    return HomoGraph(feats, tuple(sorted(edges)), kind, labels, n_o)


@dataclass
class HomoBatch:
    x: np.ndarray
    tgt: np.ndarray
    src: np.ndarray
    norm: np.ndarray  # GCN symmetric normalization per directed edge
    category_rows: np.ndarray
    labels: np.ndarray

    @property
    def n_nodes(self):
        return self.x.shape[0]


def make_homo_batch(homos, dtype=np.float64):
    xs, tgts, srcs, cats = [], [], [], []
    offset = 0
    for hg in homos:
        t, s = hg.directed()
        tgts.append(t + offset)
        srcs.append(s + offset)
        cats.append(np.arange(hg.n_categories) + offset)
        xs.append(hg.features)
        offset += hg.n_nodes
    tgt, src = np.concatenate(tgts), np.concatenate(srcs)
    deg = np.bincount(tgt, minlength=offset).astype(np.float64)  # self-loop included
    norm = 1.0 / np.sqrt(deg[tgt] * deg[src])
    return HomoBatch(
        x=np.concatenate(xs).astype(dtype),
        tgt=ad.SegmentIndex(tgt, offset),
        src=ad.SegmentIndex(src, offset),
        norm=norm.astype(dtype),
        category_rows=np.concatenate(cats),
        labels=np.concatenate([hg.labels[: hg.n_categories] for hg in homos]),
    )


def _head(tensors, emb):
    return ad.sigmoid(ad.add(ad.matvec(emb, tensors["Wh"]), tensors["bh"]))


def _homo_dim(dims):
    return max(dims["d_o"], dims["d_r"])


# ---------------------------------------------------------------------------
# GCN
# ---------------------------------------------------------------------------


def gcn_shapes(dims):
    check_dims(dims)
    h = dims["hidden"]
    shapes = {}
    for i in range(dims["layers"]):
        shapes[f"layers.{i}.W"] = (h, _homo_dim(dims) if i == 0 else h)
    shapes["Wh"] = (h,)
    shapes["bh"] = ()
    return shapes


def gcn_tensors(tensors, batch):
    x = ad.Tensor(batch.x)
    n_layers = sum(1 for k in tensors if k.startswith("layers."))
    norm = batch.norm[:, None]
    for i in range(n_layers):
        hw = ad.linear(x, tensors[f"layers.{i}.W"])
        msg = ad.mul(ad.gather(hw, batch.src), norm)
        x = ad.relu(ad.segment_sum(msg, batch.tgt, batch.n_nodes))
    return _head(tensors, ad.gather(x, batch.category_rows))


# ---------------------------------------------------------------------------
# GAT
# ---------------------------------------------------------------------------


def gat_shapes(dims):
    check_dims(dims)
    h = dims["hidden"]
    shapes = {}
    for i in range(dims["layers"]):
        shapes[f"layers.{i}.W"] = (h, _homo_dim(dims) if i == 0 else h)
        shapes[f"layers.{i}.a"] = (2 * h,)
    shapes["Wh"] = (h,)
    shapes["bh"] = ()
    return shapes


def gat_tensors(tensors, batch, trace=None):
    x = ad.Tensor(batch.x)
    n_layers = sum(1 for k in tensors if k.endswith(".W"))
    for i in range(n_layers):
        hw = ad.linear(x, tensors[f"layers.{i}.W"])
        x, alpha = attend(tensors[f"layers.{i}.a"], hw, hw, batch.tgt, batch.src, batch.n_nodes)
        if trace is not None:
            trace.setdefault("alpha", []).append(("homo", batch.tgt.ids, alpha.value))
    return _head(tensors, ad.gather(x, batch.category_rows))


# ---------------------------------------------------------------------------
# MLP (own features only)
# ---------------------------------------------------------------------------


def mlp_shapes(dims):
    check_dims(dims)
    h = dims["hidden"]
    shapes = {}
    for i in range(dims["layers"]):
        shapes[f"layers.{i}.W"] = (h, dims["d_o"] if i == 0 else h)
        shapes[f"layers.{i}.b"] = (h,)
    shapes["Wh"] = (h,)
    shapes["bh"] = ()
    return shapes


@dataclass
class FeatureBatch:
    x: np.ndarray
    labels: np.ndarray


def make_feature_batch(graphs, dtype=np.float64):
    d_o = graphs[0].d_o
    return FeatureBatch(
        x=np.concatenate([g.category_features for g in graphs]).astype(dtype).reshape(-1, d_o),
        labels=np.concatenate([g.labels for g in graphs]),
    )


def mlp_tensors(tensors, batch):
    x = ad.Tensor(batch.x)
    n_layers = sum(1 for k in tensors if k.endswith(".W"))
    for i in range(n_layers):
        x = ad.relu(ad.add(ad.linear(x, tensors[f"layers.{i}.W"]), tensors[f"layers.{i}.b"]))
    return _head(tensors, x)


# ---------------------------------------------------------------------------
# numeric single-graph entry points
# ---------------------------------------------------------------------------


def init_baseline(kind, dims, seed=0):
    shapes = {"gcn": gcn_shapes, "gat": gat_shapes, "mlp": mlp_shapes}[kind](dims)
    return ModelParams(kind, dict(dims), init_tensors(shapes, seed))


def _check_homo(params, hg):
    if hg.dim != _homo_dim(params.dims):
        raise DimError(f"model expects homogenized dim {_homo_dim(params.dims)}, got {hg.dim}")


def _const(params):
    return {k: ad.Tensor(v) for k, v in params.tensors.items()}


def gcn_forward(params, hg):
    _check_homo(params, hg)
    return gcn_tensors(_const(params), make_homo_batch([hg])).value


def gat_forward(params, hg, trace=None):
    _check_homo(params, hg)
    return gat_tensors(_const(params), make_homo_batch([hg]), trace).value


def mlp_forward(params, g):
    if g.d_o != params.dims["d_o"]:
        raise DimError(f"model expects d_o={params.dims['d_o']}, graph has {g.d_o}")
    if g.n_categories == 0:
        return np.zeros(0)
    return mlp_tensors(_const(params), make_feature_batch([g])).value
