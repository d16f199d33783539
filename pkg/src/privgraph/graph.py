"""Heterogeneous scene graphs and their hybrid (four-path) expansion.

A scene graph holds two node kinds. Category nodes are detected objects;
relation nodes are subject-predicate-object triplets promoted to nodes with
their own features. :func:`derive_hybrid` adds the homogeneous o-o and r-r
paths so that messages can travel between objects (or between relations)
without an intermediate hop.

Nodes are stored sorted by id. All neighbor lists and index arrays follow
ascending id order, which is what makes downstream reductions reproducible.
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from .exceptions import InvalidGraph, ParseError, PathKindMismatch, SchemaError, UnknownNode

POSITIVE = 1
NEGATIVE = 0

CATEGORY = "o"
RELATION = "r"

# (source kind, neighbor kind). A node of the source kind aggregates
# messages from its neighbors of the neighbor kind.
PATHS = {
    "o->r": (CATEGORY, RELATION),
    "r->o": (RELATION, CATEGORY),
    "o->o": (CATEGORY, CATEGORY),
    "r->r": (RELATION, RELATION),
}


def canonical_path(path):
    path = path.replace("→", "->").replace(" ", "")
    if path not in PATHS:
        raise ValueError(f"unknown metapath {path!r}; expected one of {sorted(PATHS)}")
    return path


class NodeRef(NamedTuple):
    kind: str
    id: int


@dataclass(frozen=True)
class CategoryNode:
    id: int
    category: str
    features: tuple
    privacy: Optional[int] = None
    bbox: Optional[tuple] = None
    origin: str = "source"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        if self.bbox is not None:
            object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))


@dataclass(frozen=True)
class RelationNode:
    id: int
    predicate: str
    features: tuple
    subject_id: int
    object_id: int

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))

    @property
    def endpoints(self):
        return (self.subject_id, self.object_id)


@dataclass(frozen=True)
class HeteroSceneGraph:
    """Immutable scene graph. ``categories`` and ``relations`` are kept sorted by id."""

    categories: tuple = ()
    relations: tuple = ()
    d_o: int = 1
    d_r: int = 1

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(sorted(self.categories, key=lambda n: n.id)))
        object.__setattr__(self, "relations", tuple(sorted(self.relations, key=lambda r: r.id)))

    @property
    def n_categories(self):
        return len(self.categories)

    @property
    def n_relations(self):
        return len(self.relations)

    @cached_property
    def category_pos(self):
        return {n.id: i for i, n in enumerate(self.categories)}

    @cached_property
    def relation_pos(self):
        return {r.id: i for i, r in enumerate(self.relations)}

    @cached_property
    def category_features(self):
        if not self.categories:
            return np.zeros((0, self.d_o))
        return np.array([n.features for n in self.categories], dtype=np.float64)

    @cached_property
    def relation_features(self):
        if not self.relations:
            return np.zeros((0, self.d_r))
        return np.array([r.features for r in self.relations], dtype=np.float64)

    @cached_property
    def labels(self):
        """Privacy labels per category node; -1 marks unknown."""
        return np.array(
            [-1 if n.privacy is None else int(n.privacy) for n in self.categories], dtype=np.int64
        )

    def category(self, node_id):
        try:
            return self.categories[self.category_pos[node_id]]
        except KeyError:
            raise UnknownNode(f"no category node with id {node_id}") from None

    def replace(self, categories=None, relations=None):
        return HeteroSceneGraph(
            categories=self.categories if categories is None else categories,
            relations=self.relations if relations is None else relations,
            d_o=self.d_o,
            d_r=self.d_r,
        )


def relabel_nodes(g, labels):
    """Copy of ``g`` with category labels replaced (ascending id order; None or -1 = unknown)."""
    labels = list(labels)
    if len(labels) != g.n_categories:
        raise ValueError(f"expected {g.n_categories} labels, got {len(labels)}")
    cats = [
        CategoryNode(n.id, n.category, n.features, None if lab is None or lab < 0 else int(lab), n.bbox, n.origin)
        for n, lab in zip(g.categories, labels)
    ]
    return g.replace(categories=cats)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    def as_dict(self):
        out = {"kind": type(self).__name__}
        out.update(self.__dict__)
        return out

    def __str__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.__dict__.items())
        return f"{type(self).__name__}({args})"


@dataclass(frozen=True)
class DanglingEndpoint(Violation):
    relation_id: int
    node_id: int


@dataclass(frozen=True)
class DuplicateId(Violation):
    node_kind: str
    node_id: int


@dataclass(frozen=True)
class DimensionMismatch(Violation):
    node_kind: str
    node_id: int
    expected: int
    actual: int


@dataclass(frozen=True)
class NonFiniteFeature(Violation):
    node_kind: str
    node_id: int


@dataclass(frozen=True)
class InvalidBBox(Violation):
    node_id: int


@dataclass(frozen=True)
class InvalidLabel(Violation):
    node_id: int
    value: object


@dataclass(frozen=True)
class InvalidDimension(Violation):
    node_kind: str
    value: object


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def validate(g):
    """Collect every invariant violation of ``g``; an empty report means OK."""
    out = []
    for kind, dim in ((CATEGORY, g.d_o), (RELATION, g.d_r)):
        if not isinstance(dim, int) or dim <= 0:
            out.append(InvalidDimension(kind, dim))

    seen = set()
    for n in g.categories:
        if n.id in seen:
            out.append(DuplicateId(CATEGORY, n.id))
        seen.add(n.id)
        _check_features(out, CATEGORY, n.id, n.features, g.d_o)
        if n.bbox is not None and (len(n.bbox) != 4 or not n.bbox[2] > 0 or not n.bbox[3] > 0):
            out.append(InvalidBBox(n.id))
        if n.privacy not in (None, POSITIVE, NEGATIVE):
            out.append(InvalidLabel(n.id, n.privacy))

    rel_seen = set()
    for r in g.relations:
        if r.id in rel_seen:
            out.append(DuplicateId(RELATION, r.id))
        rel_seen.add(r.id)
        _check_features(out, RELATION, r.id, r.features, g.d_r)
        for end in dict.fromkeys(r.endpoints):
            if end not in seen:
                out.append(DanglingEndpoint(r.id, end))
    return ValidationReport(out)


def _check_features(out, kind, node_id, feats, dim):
    if len(feats) != dim:
        out.append(DimensionMismatch(kind, node_id, dim, len(feats)))
    if not all(math.isfinite(v) for v in feats):
        out.append(NonFiniteFeature(kind, node_id))


# ---------------------------------------------------------------------------
# hybrid graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HybridGraph:
    """A scene graph plus its four metapath adjacencies.

    Each adjacency is a tuple indexed by node position (ascending id); entries
    are neighbor positions in ascending order.
    """

    base: HeteroSceneGraph
    adj_or: tuple
    adj_ro: tuple
    adj_oo: tuple
    adj_rr: tuple
    _edge_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def adjacency(self, path):
        return {
            "o->r": self.adj_or,
            "r->o": self.adj_ro,
            "o->o": self.adj_oo,
            "r->r": self.adj_rr,
        }[canonical_path(path)]

    def edge_index(self, path):
        """Flattened ``(target_pos, neighbor_pos)`` arrays for one path."""
        path = canonical_path(path)
        if path not in self._edge_cache:
            adj = self.adjacency(path)
            tgt = np.fromiter((i for i, nb in enumerate(adj) for _ in nb), dtype=np.int64)
            nbr = np.fromiter((j for nb in adj for j in nb), dtype=np.int64)
            self._edge_cache[path] = (tgt, nbr)
        return self._edge_cache[path]


def _rows(mat):
    mat = mat.tocsr()
    mat.sort_indices()
    return tuple(
        tuple(int(j) for j in mat.indices[mat.indptr[i] : mat.indptr[i + 1]])
        for i in range(mat.shape[0])
    )


def derive_hybrid(g):
    """Build the four-path hybrid graph of ``g``.

    o-o entries link the two endpoints of every relation; r-r entries link
    relations sharing a category node. Both are undirected, deduplicated and
    carry a self-entry per node.
    """
    report = validate(g)
    if not report.ok:
        raise InvalidGraph(report.violations)

    n_o, n_r = g.n_categories, g.n_relations
    rows, cols = [], []
    for j, r in enumerate(g.relations):
        for end in dict.fromkeys(r.endpoints):
            rows.append(g.category_pos[end])
            cols.append(j)
    incidence = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(n_o, n_r)
    )
    oo = (incidence @ incidence.T + sparse.identity(n_o, dtype=np.int64, format="csr")) > 0
    rr = (incidence.T @ incidence + sparse.identity(n_r, dtype=np.int64, format="csr")) > 0
    return HybridGraph(
        base=g,
        adj_or=_rows(incidence),
        adj_ro=_rows(incidence.T),
        adj_oo=_rows(oo),
        adj_rr=_rows(rr),
    )


def neighbors(h, node_ref, path):
    """Metapath neighborhood of ``node_ref`` as a list of :class:`NodeRef`, ascending id.

    ``node_ref`` is a ``NodeRef`` / ``(kind, id)`` pair, or a bare id taken to
    be of the path's source kind.
    """
    path = canonical_path(path)
    src_kind, nbr_kind = PATHS[path]
    if isinstance(node_ref, tuple):
        kind, node_id = node_ref
        if kind != src_kind:
            raise PathKindMismatch(f"path {path} starts at kind {src_kind!r}, got {kind!r}")
    else:
        node_id = node_ref
    g = h.base
    index = g.category_pos if src_kind == CATEGORY else g.relation_pos
    if node_id not in index:
        raise UnknownNode(f"no {src_kind!r} node with id {node_id}")
    nodes = g.categories if nbr_kind == CATEGORY else g.relations
    return [NodeRef(nbr_kind, nodes[j].id) for j in h.adjacency(path)[index[node_id]]]


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def graph_to_dict(g):
    nodes = []
    for n in g.categories:
        doc = {"id": n.id, "category": n.category, "features": list(n.features)}
        if n.bbox is not None:
            doc["bbox"] = list(n.bbox)
        doc["privacy"] = n.privacy
        if n.origin != "source":
            doc["origin"] = n.origin
        nodes.append(doc)
    relations = [
        {
            "id": r.id,
            "predicate": r.predicate,
            "features": list(r.features),
            "subject": r.subject_id,
            "object": r.object_id,
        }
        for r in g.relations
    ]
    return {"dims": {"category": g.d_o, "relation": g.d_r}, "nodes": nodes, "relations": relations}


def serialize_graph(g):
    # json renders floats via repr, which round-trips exactly.
    return json.dumps(graph_to_dict(g), allow_nan=False)


def _req(doc, key, where):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    if key not in doc:
        raise ParseError(f"{where}: missing required field {key!r}")
    return doc[key]


def _as_int(value, where):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{where}: expected an integer, got {value!r}")
    return value


def _as_features(value, where):
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ParseError(f"{where}: features must be an array of numbers")
    return value


def graph_from_dict(doc):
    dims = _req(doc, "dims", "document")
    d_o = _as_int(_req(dims, "category", "dims"), "dims.category")
    d_r = _as_int(_req(dims, "relation", "dims"), "dims.relation")
    raw_nodes = _req(doc, "nodes", "document")
    raw_rels = doc.get("relations", [])
    if not isinstance(raw_nodes, list) or not isinstance(raw_rels, list):
        raise ParseError("nodes and relations must be arrays")

    cats = []
    for i, nd in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        privacy = nd.get("privacy") if isinstance(nd, dict) else None
        if privacy is not None and (isinstance(privacy, bool) or privacy not in (0, 1)):
            raise ParseError(f"{where}.privacy: expected 0, 1 or null, got {privacy!r}")
        bbox = nd.get("bbox") if isinstance(nd, dict) else None
        if bbox is not None and (not isinstance(bbox, list) or len(bbox) != 4):
            raise ParseError(f"{where}.bbox: expected [x, y, w, h]")
        origin = nd.get("origin", "source") if isinstance(nd, dict) else "source"
        if origin not in ("source", "synthetic"):
            raise ParseError(f"{where}.origin: expected 'source' or 'synthetic'")
        category = _req(nd, "category", where)
        if not isinstance(category, str):
            raise ParseError(f"{where}.category: expected a string")
        cats.append(
            CategoryNode(
                id=_as_int(_req(nd, "id", where), f"{where}.id"),
                category=category,
                features=_as_features(_req(nd, "features", where), f"{where}.features"),
                privacy=privacy,
                bbox=None if bbox is None else tuple(bbox),
                origin=origin,
            )
        )
    rels = []
    for i, rd in enumerate(raw_rels):
        where = f"relations[{i}]"
        predicate = _req(rd, "predicate", where)
        if not isinstance(predicate, str):
            raise ParseError(f"{where}.predicate: expected a string")
        rels.append(
            RelationNode(
                id=_as_int(_req(rd, "id", where), f"{where}.id"),
                predicate=predicate,
                features=_as_features(_req(rd, "features", where), f"{where}.features"),
                subject_id=_as_int(_req(rd, "subject", where), f"{where}.subject"),
                object_id=_as_int(_req(rd, "object", where), f"{where}.object"),
            )
        )
    g = HeteroSceneGraph(categories=cats, relations=rels, d_o=d_o, d_r=d_r)
    report = validate(g)
    if not report.ok:
        raise SchemaError(report.violations)
    return g


def parse_graph(text):
    """Parse one scene-graph JSON document. Unknown fields are ignored."""
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    return graph_from_dict(doc)
