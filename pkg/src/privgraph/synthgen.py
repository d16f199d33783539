"""Synthetic scene graphs whose privacy labels depend only on relational context.

Every category gets one fixed random embedding. A node's features are that
embedding plus Gaussian noise, so positive and negative nodes of the target
category are drawn from the same distribution. Only the (predicate, neighbor
category) pairs around a target node decide its label.
"""

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset, assign_splits
from .exceptions import ConfigError
from .graph import NEGATIVE, POSITIVE, CategoryNode, HeteroSceneGraph, RelationNode, relabel_nodes

CATEGORIES = (
    "person", "street", "lectern", "microphone", "bench", "car", "tree", "building",
    "dog", "table", "chair", "sign", "bag", "stage", "crowd", "door",
)
PREDICATES = (
    "walking-on", "standing-on", "sitting-on", "holding", "near", "next-to",
    "looking-at", "behind", "in-front-of", "carrying",
)


@dataclass(frozen=True)
class ContextRule:
    """Labels ``target_category`` nodes from the (predicate, neighbor category) pairs touching them.

    A target node is negative if any incident relation matches
    ``negative_pattern``, otherwise positive if one matches
    ``positive_pattern``, otherwise negative. Other categories are negative.
    """

    target_category: str = "person"
    positive_pattern: frozenset = frozenset({("walking-on", "street"), ("sitting-on", "bench")})
    negative_pattern: frozenset = frozenset({("standing-on", "lectern"), ("holding", "microphone")})

    def __post_init__(self):
        object.__setattr__(self, "positive_pattern", frozenset(map(tuple, self.positive_pattern)))
        object.__setattr__(self, "negative_pattern", frozenset(map(tuple, self.negative_pattern)))
        if self.positive_pattern & self.negative_pattern:
            raise ConfigError("positive and negative patterns overlap")

    @property
    def patterns(self):
        return self.positive_pattern | self.negative_pattern


@dataclass(frozen=True)
class GenConfig:
    n_graphs: int = 500
    nodes_per_graph: tuple = (8, 20)
    relations_per_graph: tuple = (6, 25)
    positive_prior: float = 0.3
    feature_noise: float = 0.1
    seed: int = 0
    dim_category: int = 16
    dim_relation: int = 16
    train_fraction: float = 0.8
    targets_per_graph: tuple = (1, 4)
    decoy_prob: float = 0.5
    categories: tuple = field(default=CATEGORIES)
    predicates: tuple = field(default=PREDICATES)

    def check(self, rule):
        if not isinstance(self.n_graphs, int) or self.n_graphs < 0:
            raise ConfigError("n_graphs must be a non-negative integer")
        for name in ("nodes_per_graph", "relations_per_graph", "targets_per_graph"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ConfigError(f"{name} must be a non-empty range, got {(lo, hi)}")
        if self.nodes_per_graph[0] < 2:
            raise ConfigError("graphs need at least two category nodes")
        if not 0.0 < self.positive_prior < 1.0:
            raise ConfigError("positive_prior must lie in (0, 1)")
        if self.feature_noise < 0:
            raise ConfigError("feature_noise must be non-negative")
        if self.dim_category < 1 or self.dim_relation < 1:
            raise ConfigError("feature dims must be positive")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must lie in (0, 1]")
        vocab = set(self.categories)
        if rule.target_category not in vocab:
            raise ConfigError(f"target category {rule.target_category!r} not in vocabulary")
        for pred, cat in rule.patterns:
            if cat not in vocab or pred not in self.predicates:
                raise ConfigError(f"pattern {(pred, cat)} uses unknown predicate or category")
        if not rule.positive_pattern or not rule.negative_pattern:
            raise ConfigError("rule needs at least one positive and one negative pattern")
        if not set(self.predicates) - {p for p, _ in rule.patterns}:
            raise ConfigError("vocabulary needs at least one predicate outside the rule patterns")


def oracle_label(g, rule):
    """Rule-derived label for every category node, ascending id order."""
    cat_of = {n.id: n.category for n in g.categories}
    pairs = {n.id: set() for n in g.categories}
    for r in g.relations:
        s, o = r.subject_id, r.object_id
        pairs[s].add((r.predicate, cat_of[o]))
        pairs[o].add((r.predicate, cat_of[s]))
    labels = []
    for n in g.categories:
        if n.category != rule.target_category:
            labels.append(NEGATIVE)
        elif pairs[n.id] & rule.negative_pattern:
            labels.append(NEGATIVE)
        elif pairs[n.id] & rule.positive_pattern:
            labels.append(POSITIVE)
        else:
            labels.append(NEGATIVE)
    return labels


def relabel(g, rule):
    return relabel_nodes(g, oracle_label(g, rule))


def vocabulary_embeddings(cfg):
    rng = np.random.default_rng([cfg.seed, 0xC0FFEE])
    cat_emb = {c: rng.normal(size=cfg.dim_category) for c in cfg.categories}
    pred_emb = {p: rng.normal(size=cfg.dim_relation) for p in cfg.predicates}
    return cat_emb, pred_emb


class _GraphBuilder:
    def __init__(self, rng, cfg, rule, cat_emb, pred_emb):
        self.rng, self.cfg, self.rule = rng, cfg, rule
        self.cat_emb, self.pred_emb = cat_emb, pred_emb
        self.cats = []  # category names, position == node id
        self.rels = []  # (predicate, subject, object)
        self.targets = set()
        self.fillers = [c for c in cfg.categories if c != rule.target_category]
        self.pattern_predicates = {p for p, _ in rule.patterns}

    def add_node(self, category):
        self.cats.append(category)
        return len(self.cats) - 1

    def forbidden(self, pred, s, o):
        # fillers touching a target never use a pattern predicate
        return pred in self.pattern_predicates and (s in self.targets or o in self.targets)

    def add_filler(self, s, o):
        for _ in range(50):
            pred = self.cfg.predicates[self.rng.integers(len(self.cfg.predicates))]
            if not self.forbidden(pred, s, o):
                break
        else:
            pred = next(p for p in self.cfg.predicates if not self.forbidden(p, s, o))
        if self.rng.random() < 0.5:
            s, o = o, s
        self.rels.append((pred, s, o))

    def build(self, n_nodes, n_rel, n_targets):
        rng, rule = self.rng, self.rule
        planted = []
        for _ in range(n_targets):
            t = self.add_node(rule.target_category)
            self.targets.add(t)
            if rng.random() < self.cfg.positive_prior:
                planted.append((t, sorted(rule.positive_pattern)))
            elif rng.random() < self.cfg.decoy_prob:
                planted.append((t, sorted(rule.negative_pattern)))
        anchors = []
        for t, options in planted:
            pred, cat = options[rng.integers(len(options))]
            anchors.append(self.add_node(cat))
            self.rels.append((pred, t, anchors[-1]))
        while len(self.cats) < n_nodes:
            self.add_node(self.fillers[rng.integers(len(self.fillers))])
        # tie every planted object into the rest of the scene so it is never
        # seen only through the target it was planted for
        for a in anchors:
            others = [i for i in range(len(self.cats)) if i != a and i not in self.targets]
            if others:
                self.add_filler(a, others[rng.integers(len(others))])

        order = rng.permutation(len(self.cats))
        budget = n_rel - len(self.rels)
        for k in range(1, len(order)):
            if budget <= 0:
                break
            self.add_filler(int(order[k]), int(order[rng.integers(k)]))
            budget -= 1
        while budget > 0:
            s, o = rng.choice(len(self.cats), size=2, replace=False)
            self.add_filler(int(s), int(o))
            budget -= 1
        return self.finish()

    def finish(self):
        rng, noise = self.rng, self.cfg.feature_noise
        # shuffle ids so position carries no signal
        ids = rng.permutation(len(self.cats))
        cats = []
        for pos, name in enumerate(self.cats):
            feats = self.cat_emb[name] + noise * rng.normal(size=self.cfg.dim_category)
            w, h = rng.uniform(10, 200, size=2)
            x, y = rng.uniform(0, 600, size=2)
            cats.append(CategoryNode(int(ids[pos]), name, feats, None, (x, y, w, h)))
        rel_ids = rng.permutation(len(self.rels))
        rels = [
            RelationNode(
                int(rel_ids[j]),
                pred,
                self.pred_emb[pred] + noise * rng.normal(size=self.cfg.dim_relation),
                int(ids[s]),
                int(ids[o]),
            )
            for j, (pred, s, o) in enumerate(self.rels)
        ]
        return HeteroSceneGraph(cats, rels, self.cfg.dim_category, self.cfg.dim_relation)


def generate_graph(rng, cfg, rule, embeddings=None):
    cat_emb, pred_emb = embeddings or vocabulary_embeddings(cfg)
    lo, hi = cfg.nodes_per_graph
    n_nodes = int(rng.integers(lo, hi + 1))
    lo, hi = cfg.relations_per_graph
    n_rel = int(rng.integers(lo, hi + 1))
    lo, hi = cfg.targets_per_graph
    n_targets = int(rng.integers(lo, min(hi, n_nodes // 2) + 1))
    g = _GraphBuilder(rng, cfg, rule, cat_emb, pred_emb).build(n_nodes, n_rel, n_targets)
    return relabel(g, rule)


def generate_dataset(cfg=None, rule=None):
    """Deterministic labeled dataset with an 80/20 (configurable) train/val split."""
    cfg = cfg or GenConfig()
    rule = rule or ContextRule()
    cfg.check(rule)
    embeddings = vocabulary_embeddings(cfg)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_graphs)
    graphs = [generate_graph(np.random.default_rng(c), cfg, rule, embeddings) for c in children]
    names = [f"g{i:05d}.json" for i in range(cfg.n_graphs)]
    splits = assign_splits(cfg.n_graphs, cfg.train_fraction, seed=cfg.seed)
    return LabeledDataset(names, graphs, splits, cfg.dim_category, cfg.dim_relation)


def target_positive_fraction(ds, rule):
    pos = tot = 0
    for g in ds.graphs:
        for n in g.categories:
            if n.category == rule.target_category:
                tot += 1
                pos += n.privacy == POSITIVE
    return pos / tot if tot else 0.0


def random_graphs(seed, n_graphs=1, n_nodes=6, n_relations=6, d_o=3, d_r=3):
    """Small unstructured labeled graphs; the first two nodes of each are labeled 0 and 1."""
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(n_graphs):
        labels = rng.integers(0, 2, size=n_nodes)
        labels[:2] = (NEGATIVE, POSITIVE)
        cats = [CategoryNode(i, "thing", rng.normal(size=d_o), int(labels[i])) for i in range(n_nodes)]
        rels = []
        for j in range(n_relations):
            s, o = rng.choice(n_nodes, size=2, replace=False)
            rels.append(RelationNode(j, "rel", rng.normal(size=d_r), int(s), int(o)))
        graphs.append(HeteroSceneGraph(cats, rels, d_o, d_r))
    return graphs
