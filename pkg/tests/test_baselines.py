import numpy as np
import pytest
from hypothesis import given

from conftest import scene_graphs, small_graph
from privgraph import baselines, hgr
from privgraph.exceptions import DimError, InvalidGraph
from privgraph.graph import CategoryNode, HeteroSceneGraph, RelationNode, derive_hybrid
from privgraph.params import default_dims


def one_triplet(d_o=2, d_r=2):
    cats = [CategoryNode(1, "a", np.arange(d_o) + 1.0), CategoryNode(2, "b", -np.arange(d_o) - 0.5)]
    return HeteroSceneGraph(cats, [RelationNode(7, "p", np.full(d_r, 0.25), 1, 2)], d_o, d_r)


def sigmoid(x):
    return 1 / (1 + np.exp(-x))


class TestHomogenize:
    def test_one_triplet(self):
        hg = baselines.homogenize(one_triplet())
        assert hg.n_nodes == 3
        # nodes: o1=0, o2=1, r1=2
        assert set(hg.edges) == {(0, 2), (1, 2), (0, 0), (1, 1), (2, 2)}
        assert list(hg.is_category) == [True, True, False]

    def test_padding(self):
        hg = baselines.homogenize(one_triplet(d_o=4, d_r=2))
        assert hg.dim == 4
        np.testing.assert_array_equal(hg.features[2], [0.25, 0.25, 0.0, 0.0])

    @given(scene_graphs())
    def test_edge_count_identity(self, g):
        # a self-relation contributes one incidence edge, not two
        ends = [r.endpoints for r in g.relations]
        hg = baselines.homogenize(g)
        expected = sum(1 if s == o else 2 for s, o in ends) + hg.n_nodes
        assert len(hg.edges) == expected
        tgt, src = hg.directed()
        assert set(zip(tgt.tolist(), src.tolist())) == set(zip(src.tolist(), tgt.tolist()))

    def test_edge_count_simple(self, rng):
        for _ in range(20):
            g = small_graph(rng, n_nodes=6, n_relations=int(rng.integers(0, 10)))
            hg = baselines.homogenize(g)
            assert len(hg.edges) == 2 * g.n_relations + hg.n_nodes

    def test_invalid(self):
        g = HeteroSceneGraph([CategoryNode(0, "x", [0.0])], [RelationNode(0, "p", [0.0], 0, 5)], 1, 1)
        with pytest.raises(InvalidGraph):
            baselines.homogenize(g)


class TestGcn:
    def test_lone_self_loop(self):
        g = HeteroSceneGraph([CategoryNode(0, "x", [0.5, -2.0, 1.0])], [], 3, 3)
        p = baselines.init_baseline("gcn", default_dims(3, 3, 3, 2, 1))
        p.tensors["layers.0.W"] = np.eye(3)
        wh = np.array([0.3, 0.7, -1.1])
        p.tensors["Wh"] = wh
        out = baselines.gcn_forward(p, baselines.homogenize(g))
        np.testing.assert_allclose(out, sigmoid(np.maximum([0.5, -2.0, 1.0], 0) @ wh))

    def test_zero_weights(self, rng):
        g = small_graph(rng)
        p = baselines.init_baseline("gcn", default_dims(3, 2, 4, 2, 2))
        for k in p.tensors:
            p.tensors[k] = np.zeros_like(p.tensors[k])
        np.testing.assert_array_equal(baselines.gcn_forward(p, baselines.homogenize(g)), 0.5)

    def test_dense_oracle(self, rng):
        g = one_triplet(d_o=2, d_r=2)
        hg = baselines.homogenize(g)
        p = baselines.init_baseline("gcn", default_dims(2, 2, 3, 2, 2))
        for k in p.tensors:
            p.tensors[k] = rng.normal(size=np.shape(p.tensors[k]))
        a = np.eye(3)
        for u, v in hg.edges:
            a[u, v] = a[v, u] = 1.0
        d = np.diag(1 / np.sqrt(a.sum(1)))
        norm = d @ a @ d
        h = hg.features
        for i in range(2):
            h = np.maximum(norm @ h @ p[f"layers.{i}.W"].T, 0)
        expected = sigmoid(h[:2] @ p["Wh"] + p["bh"])
        np.testing.assert_allclose(baselines.gcn_forward(p, hg), expected, rtol=1e-12)

    def test_dim_error(self):
        p = baselines.init_baseline("gcn", default_dims(3, 3, 2, 2, 1))
        with pytest.raises(DimError):
            baselines.gcn_forward(p, baselines.homogenize(one_triplet()))


class TestGat:
    def test_isolated_node(self, rng):
        g = HeteroSceneGraph([CategoryNode(0, "x", [1.0, 2.0])], [], 2, 2)
        p = baselines.init_baseline("gat", default_dims(2, 2, 3, 2, 1), seed=1)
        trace = {}
        baselines.gat_forward(p, baselines.homogenize(g), trace)
        _, _, alpha = trace["alpha"][0]
        np.testing.assert_array_equal(alpha, [1.0])

    def test_identical_features_uniform(self):
        cats = [CategoryNode(i, "x", [1.0, 1.0]) for i in range(3)]
        rels = [RelationNode(0, "p", [1.0, 1.0], 0, 1), RelationNode(1, "p", [1.0, 1.0], 1, 2)]
        hg = baselines.homogenize(HeteroSceneGraph(cats, rels, 2, 2))
        p = baselines.init_baseline("gat", default_dims(2, 2, 3, 2, 1), seed=2)
        trace = {}
        baselines.gat_forward(p, hg, trace)
        _, tgt, alpha = trace["alpha"][0]
        deg = np.bincount(tgt)
        np.testing.assert_allclose(alpha, 1.0 / deg[tgt])

    def test_scripted(self, rng):
        hg = baselines.homogenize(one_triplet())
        p = baselines.init_baseline("gat", default_dims(2, 2, 2, 2, 1))
        w = rng.normal(size=(2, 2))
        a = rng.normal(size=4)
        p.tensors["layers.0.W"], p.tensors["layers.0.a"] = w, a
        p.tensors["Wh"], p.tensors["bh"] = rng.normal(size=2), np.array(0.3)
        x = hg.features @ w.T
        nbrs = {0: [0, 2], 1: [1, 2]}
        out = []
        for i in (0, 1):
            logits = [a[:2] @ x[i] + a[2:] @ x[j] for j in nbrs[i]]
            logits = [v if v > 0 else 0.2 * v for v in logits]
            e = np.exp(np.array(logits) - max(logits))
            alpha = e / e.sum()
            z = sum(al * x[j] for al, j in zip(alpha, nbrs[i]))
            z = np.where(z > 0, z, np.expm1(z))
            out.append(sigmoid(z @ p["Wh"] + 0.3))
        np.testing.assert_allclose(baselines.gat_forward(p, hg), out, rtol=1e-12)

    def test_agrees_with_hgr_on_degenerate_input(self, rng):
        # q = 0 makes beta uniform; W4 = 0 removes the relation path; W3 = 2I undoes the 1/2
        for seed in range(5):
            g = small_graph(np.random.default_rng(seed), n_nodes=6, n_relations=7, d_o=3, d_r=3)
            h = derive_hybrid(g)
            dims = default_dims(3, 3, 4, 2, 2)
            hp = hgr.init_params(dims, seed)
            gp = baselines.init_baseline("gat", dims, seed)
            for i in range(2):
                lp = f"layers.{i}."
                hp.tensors[lp + "W1"] = gp.tensors[lp + "W"] = rng.normal(size=hp[lp + "W1"].shape)
                hp.tensors[lp + "a_oo"] = gp.tensors[lp + "a"] = rng.normal(size=8)
                hp.tensors[lp + "W3"] = 2 * np.eye(4)
                hp.tensors[lp + "W4"] = np.zeros((4, 4))
                hp.tensors[lp + "q"] = np.zeros(2)
            hp.tensors["Wh"] = gp.tensors["Wh"] = rng.normal(size=4)
            hp.tensors["bh"] = gp.tensors["bh"] = np.array(0.1)
            oo_edges = tuple(sorted({(min(i, j), max(i, j)) for i, nb in enumerate(h.adj_oo) for j in nb}))
            hg = baselines.HomoGraph(
                g.category_features, oo_edges, np.ones(6, dtype=bool), g.labels, 6
            )
            np.testing.assert_allclose(baselines.gat_forward(gp, hg), hgr.forward(hp, h), rtol=1e-12)


class TestMlp:
    def test_zero_weights(self, rng):
        g = small_graph(rng)
        p = baselines.init_baseline("mlp", default_dims(3, 2, 4, 2, 2))
        for k in p.tensors:
            p.tensors[k] = np.zeros_like(p.tensors[k])
        np.testing.assert_array_equal(baselines.mlp_forward(p, g), 0.5)

    def test_context_blind(self, rng):
        p = baselines.init_baseline("mlp", default_dims(2, 2, 5, 2, 2), seed=3)
        cats = [CategoryNode(0, "x", [0.3, 0.4]), CategoryNode(1, "y", [0.3, 0.4]), CategoryNode(2, "z", [9.0, -9.0])]
        g = HeteroSceneGraph(cats, [RelationNode(0, "p", [1.0, 1.0], 1, 2)], 2, 2)
        out = baselines.mlp_forward(p, g)
        assert out[0] == out[1]
        alone = HeteroSceneGraph(cats[:1], [], 2, 2)
        assert baselines.mlp_forward(p, alone)[0] == out[0]

    def test_dim_error(self):
        p = baselines.init_baseline("mlp", default_dims(3, 2, 4, 2, 1))
        with pytest.raises(DimError):
            baselines.mlp_forward(p, one_triplet())


@pytest.mark.parametrize("kind", ["gcn", "gat", "mlp"])
def test_outputs_in_open_interval_and_equivariant(kind, rng):
    for seed in range(5):
        r = np.random.default_rng(seed)
        g = small_graph(r, n_nodes=6, n_relations=8, d_o=3, d_r=2)
        p = baselines.init_baseline(kind, default_dims(3, 2, 4, 2, 2), seed)
        run = (lambda gr: baselines.mlp_forward(p, gr)) if kind == "mlp" else (
            lambda gr: getattr(baselines, f"{kind}_forward")(p, baselines.homogenize(gr))
        )
        out = run(g)
        assert np.all((out > 0) & (out < 1))
        perm = r.permutation(6)
        cats = [CategoryNode(int(perm[n.id]), n.category, n.features, n.privacy) for n in g.categories]
        rels = [RelationNode(x.id, x.predicate, x.features, int(perm[x.subject_id]), int(perm[x.object_id])) for x in g.relations]
        moved = run(HeteroSceneGraph(cats, rels, 3, 2))
        np.testing.assert_allclose(moved[perm], out, rtol=1e-12)
