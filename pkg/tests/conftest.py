import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from privgraph.graph import CategoryNode, HeteroSceneGraph, RelationNode

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def scene_graphs(draw, max_nodes=8, max_relations=12, d_o=None, d_r=None, min_nodes=1, labeled=None):
    """Valid scene graphs with sparse, shuffled ids and optional bbox/labels."""
    d_o = d_o or draw(st.integers(1, 4))
    d_r = d_r or draw(st.integers(1, 4))
    n = draw(st.integers(min_nodes, max_nodes))
    ids = draw(st.lists(st.integers(0, 10_000), min_size=n, max_size=n, unique=True))
    cats = []
    for i in ids:
        feats = draw(st.lists(finite, min_size=d_o, max_size=d_o))
        bbox = draw(st.none() | st.tuples(finite, finite, st.floats(0.5, 500), st.floats(0.5, 500)))
        if labeled is None:
            privacy = draw(st.sampled_from([None, 0, 1]))
        else:
            privacy = draw(st.sampled_from([0, 1])) if labeled else None
        cats.append(CategoryNode(i, draw(st.sampled_from(["person", "bench", "car"])), feats, privacy, bbox))
    rels = []
    if n >= 1:
        m = draw(st.integers(0, max_relations))
        rel_ids = draw(st.lists(st.integers(0, 10_000), min_size=m, max_size=m, unique=True))
        for rid in rel_ids:
            s = draw(st.sampled_from(ids))
            o = draw(st.sampled_from(ids))
            feats = draw(st.lists(finite, min_size=d_r, max_size=d_r))
            rels.append(RelationNode(rid, draw(st.sampled_from(["on", "near", "holding"])), feats, s, o))
    return HeteroSceneGraph(cats, rels, d_o, d_r)


def small_graph(rng, n_nodes=5, n_relations=6, d_o=3, d_r=2, labels=True):
    """Random numeric graph with unit-scale features, for model tests."""
    cats = [
        CategoryNode(i, "thing", rng.normal(size=d_o), int(rng.integers(2)) if labels else None, (0, 0, 10, 10))
        for i in range(n_nodes)
    ]
    rels = []
    for j in range(n_relations):
        s, o = rng.choice(n_nodes, size=2, replace=False)
        rels.append(RelationNode(j, "rel", rng.normal(size=d_r), int(s), int(o)))
    return HeteroSceneGraph(cats, rels, d_o, d_r)


def chain_graph():
    """o1 -r1-> o2 -r2-> o3."""
    cats = [CategoryNode(i, "thing", [float(i), 1.0]) for i in (1, 2, 3)]
    rels = [RelationNode(1, "a", [1.0, 0.0], 1, 2), RelationNode(2, "b", [0.0, 1.0], 2, 3)]
    return HeteroSceneGraph(cats, rels, 2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
