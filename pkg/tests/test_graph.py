import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chain_graph, scene_graphs
from privgraph.exceptions import InvalidGraph, ParseError, PathKindMismatch, SchemaError, UnknownNode
from privgraph.graph import (
    CategoryNode,
    DanglingEndpoint,
    DimensionMismatch,
    DuplicateId,
    HeteroSceneGraph,
    InvalidBBox,
    NodeRef,
    NonFiniteFeature,
    RelationNode,
    derive_hybrid,
    neighbors,
    parse_graph,
    serialize_graph,
    validate,
)


def brute_force_oo(g):
    pairs = set()
    for r in g.relations:
        a, b = g.category_pos[r.subject_id], g.category_pos[r.object_id]
        if a != b:
            pairs.add((a, b))
            pairs.add((b, a))
    return pairs


def brute_force_rr(g):
    pairs = set()
    for (i, ri), (j, rj) in itertools.permutations(enumerate(g.relations), 2):
        if set(ri.endpoints) & set(rj.endpoints):
            pairs.add((i, j))
    return pairs


def off_diagonal(adj):
    return {(i, j) for i, nb in enumerate(adj) for j in nb if i != j}


class TestDeriveHybrid:
    def test_chain(self):
        h = derive_hybrid(chain_graph())
        # positions: o1=0, o2=1, o3=2; r1=0, r2=1
        assert h.adj_oo == ((0, 1), (0, 1, 2), (1, 2))
        assert h.adj_rr == ((0, 1), (0, 1))
        assert h.adj_or == ((0,), (0, 1), (1,))
        assert h.adj_ro == ((0, 1), (1, 2))

    def test_no_relations(self):
        g = HeteroSceneGraph([CategoryNode(i, "x", [0.0]) for i in range(3)], [], 1, 1)
        h = derive_hybrid(g)
        assert h.adj_oo == ((0,), (1,), (2,))
        assert h.adj_rr == ()
        assert h.adj_or == ((), (), ())
        assert h.adj_ro == ()

    def test_random_ten_triplets_against_brute_force(self, rng):
        for _ in range(20):
            cats = [CategoryNode(i, "x", [0.0]) for i in range(8)]
            rels = [RelationNode(j, "p", [0.0], *map(int, rng.integers(8, size=2))) for j in range(10)]
            g = HeteroSceneGraph(cats, rels, 1, 1)
            h = derive_hybrid(g)
            assert off_diagonal(h.adj_oo) == brute_force_oo(g)

    def test_invalid_graph_rejected(self):
        g = HeteroSceneGraph([CategoryNode(0, "x", [0.0])], [RelationNode(0, "p", [0.0], 0, 99)], 1, 1)
        with pytest.raises(InvalidGraph):
            derive_hybrid(g)

    def test_self_relation_does_not_duplicate(self):
        g = HeteroSceneGraph([CategoryNode(0, "x", [0.0])], [RelationNode(0, "p", [0.0], 0, 0)], 1, 1)
        h = derive_hybrid(g)
        assert h.adj_or == ((0,),)
        assert h.adj_oo == ((0,),)

    @given(scene_graphs())
    def test_invariants(self, g):
        h = derive_hybrid(g)
        assert off_diagonal(h.adj_oo) == brute_force_oo(g)
        assert off_diagonal(h.adj_rr) == brute_force_rr(g)
        for adj in (h.adj_oo, h.adj_rr, h.adj_or, h.adj_ro):
            for nb in adj:
                assert list(nb) == sorted(set(nb))
        for i, nb in enumerate(h.adj_oo):
            assert i in nb
        for i, nb in enumerate(h.adj_rr):
            assert i in nb
        incid = {(g.category_pos[e], j) for j, r in enumerate(g.relations) for e in r.endpoints}
        assert {(i, j) for i, nb in enumerate(h.adj_or) for j in nb} == incid
        assert {(i, j) for j, nb in enumerate(h.adj_ro) for i in nb} == incid

    @given(scene_graphs())
    def test_deterministic_and_base_untouched(self, g):
        before = serialize_graph(g)
        a, b = derive_hybrid(g), derive_hybrid(g)
        assert a.adj_oo == b.adj_oo and a.adj_rr == b.adj_rr
        assert serialize_graph(g) == before


class TestNeighbors:
    def test_isolated_node(self):
        g = HeteroSceneGraph([CategoryNode(5, "x", [0.0])], [], 1, 1)
        assert neighbors(derive_hybrid(g), 5, "o->o") == [NodeRef("o", 5)]

    def test_subject_sees_its_relation(self):
        h = derive_hybrid(chain_graph())
        assert neighbors(h, ("o", 1), "o->r") == [NodeRef("r", 1)]

    def test_chain_rr(self):
        h = derive_hybrid(chain_graph())
        assert neighbors(h, ("r", 1), "r→r") == [NodeRef("r", 1), NodeRef("r", 2)]

    def test_errors(self):
        h = derive_hybrid(chain_graph())
        with pytest.raises(UnknownNode):
            neighbors(h, 42, "o->o")
        with pytest.raises(PathKindMismatch):
            neighbors(h, ("r", 1), "o->o")
        with pytest.raises(ValueError):
            neighbors(h, 1, "o->x")

    @given(scene_graphs())
    def test_or_ro_consistent(self, g):
        h = derive_hybrid(g)
        for n in g.categories:
            for ref in neighbors(h, n.id, "o->r"):
                assert NodeRef("o", n.id) in neighbors(h, ref, "r->o")
        for r in g.relations:
            for ref in neighbors(h, ("r", r.id), "r->o"):
                assert NodeRef("r", r.id) in neighbors(h, ref, "o->r")


class TestValidate:
    def test_dangling(self):
        g = HeteroSceneGraph([CategoryNode(0, "x", [0.0])], [RelationNode(7, "p", [0.0], 99, 0)], 1, 1)
        assert validate(g).violations == [DanglingEndpoint(7, 99)]

    def test_empty_graph_ok(self):
        assert validate(HeteroSceneGraph())

    def test_nan_feature(self):
        g = HeteroSceneGraph([CategoryNode(0, "x", [math.nan])], [], 1, 1)
        assert validate(g).violations == [NonFiniteFeature("o", 0)]

    def test_reports_everything(self):
        cats = [CategoryNode(0, "x", [0.0, 1.0], bbox=(0, 0, 0, 5)), CategoryNode(0, "y", [0.0])]
        g = HeteroSceneGraph(cats, [RelationNode(1, "p", [math.inf], 0, 3)], 1, 1)
        kinds = {type(v) for v in validate(g).violations}
        assert kinds == {DuplicateId, DimensionMismatch, InvalidBBox, NonFiniteFeature, DanglingEndpoint}


class TestJson:
    def test_minimal(self):
        g = parse_graph('{"dims": {"category": 2, "relation": 1}, "nodes": [{"id": 3, "category": "a", "features": [1, 2]}]}')
        assert g.n_categories == 1 and g.n_relations == 0
        assert g.categories[0].privacy is None and g.categories[0].bbox is None

    def test_missing_node_is_schema_error(self):
        doc = {
            "dims": {"category": 1, "relation": 1},
            "nodes": [{"id": 0, "category": "a", "features": [0]}],
            "relations": [{"id": 0, "predicate": "p", "features": [0], "subject": 0, "object": 5}],
        }
        with pytest.raises(SchemaError) as info:
            parse_graph(json.dumps(doc))
        assert info.value.violations == [DanglingEndpoint(0, 5)]

    @pytest.mark.parametrize(
        "text",
        [
            "{not json",
            '{"nodes": []}',
            '{"dims": {"category": 1, "relation": 1}, "nodes": [{"id": 0, "features": [0]}]}',
            '{"dims": {"category": 1, "relation": 1}, "nodes": [{"id": "0", "category": "a", "features": [0]}]}',
            '{"dims": {"category": 1, "relation": 1}, "nodes": [{"id": 0, "category": "a", "features": [0], "privacy": 2}]}',
        ],
    )
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            parse_graph(text)

    def test_unknown_fields_ignored(self):
        doc = {
            "dims": {"category": 1, "relation": 1},
            "nodes": [{"id": 0, "category": "a", "features": [0.5], "score": 0.9}],
            "extra": True,
        }
        assert parse_graph(json.dumps(doc)).categories[0].features == (0.5,)

    def test_empty_graph(self):
        doc = json.loads(serialize_graph(HeteroSceneGraph(d_o=3, d_r=2)))
        assert doc == {"dims": {"category": 3, "relation": 2}, "nodes": [], "relations": []}

    @given(scene_graphs())
    def test_round_trip(self, g):
        assert parse_graph(serialize_graph(g)) == g

    @given(scene_graphs(d_o=2, d_r=2), st.floats(-10, 10))
    def test_injective_on_features(self, g, delta):
        node = g.categories[0]
        bumped = node.features[0] + delta
        if bumped == node.features[0]:
            return
        other = g.replace(categories=(CategoryNode(node.id, node.category, (bumped,) + node.features[1:], node.privacy, node.bbox),) + g.categories[1:])
        assert serialize_graph(other) != serialize_graph(g)

    def test_serialization_key_order_stable(self):
        g = chain_graph()
        assert serialize_graph(g) == serialize_graph(parse_graph(serialize_graph(g)))

    def test_features_bit_exact(self):
        v = np.nextafter(0.1, 1.0)
        g = HeteroSceneGraph([CategoryNode(0, "x", [v, 1 / 3])], [], 2, 1)
        assert parse_graph(serialize_graph(g)).categories[0].features == (v, 1 / 3)
