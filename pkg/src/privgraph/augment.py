"""Minority oversampling for privacy-positive category nodes.

Two strategies share one stopping rule: add the fewest synthetic positives
that lift the training split's positive ratio to ``target_ratio``. Seeds are
visited round-robin over a seeded shuffle of the original positives.

* :func:`cpos_augment` clones a positive node's features exactly and rebuilds
  its neighborhood by one Bernoulli pass over the incident relations. Each
  relation may be kept, rewired, or joined by a spurious extra one.
* :func:`smote_augment` interpolates features toward one of the k nearest
  positives and copies the seed's relations verbatim.
"""

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.neighbors import NearestNeighbors

from .dataset import TRAIN
from .exceptions import ConfigError, EmptySplit, NoMinorityNodes, TooFewNeighbors, UnreachableRatio
from .graph import POSITIVE, CategoryNode, RelationNode, validate


@dataclass(frozen=True)
class CposConfig:
    target_ratio: float = 0.5
    keep_prob: float = 0.9
    extra_edge_prob: float = 0.2
    rewire_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_ratio <= 0.5:
            raise ConfigError(f"target_ratio must lie in (0, 0.5], got {self.target_ratio}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError(f"keep_prob must lie in (0, 1], got {self.keep_prob}")
        for name in ("extra_edge_prob", "rewire_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")


def class_ratio(ds, split=TRAIN):
    """positives / (positives + negatives) over labeled category nodes of ``split``."""
    graphs = ds.split_graphs(split) if split is not None else list(ds.graphs)
    if not graphs:
        raise EmptySplit(f"split {split!r} is empty")
    pos, neg = ds.label_counts(split)
    if pos + neg == 0:
        raise EmptySplit(f"split {split!r} has no labeled nodes")
    return pos / (pos + neg)


def clones_needed(n_pos, n_neg, target_ratio):
    """Smallest ``c >= 0`` with ``(n_pos + c) / (n_pos + n_neg + c) >= target_ratio``."""
    t = Fraction(repr(float(target_ratio)))
    c = math.ceil((t * (n_pos + n_neg) - n_pos) / (1 - t))
    return max(c, 0)


class _GraphEdit:
    """Accumulates new nodes/relations for one graph, allocating fresh ids."""

    def __init__(self, g):
        self.g = g
        self.cats = []
        self.rels = []
        self.next_cat = max((n.id for n in g.categories), default=-1) + 1
        self.next_rel = max((r.id for r in g.relations), default=-1) + 1

    def new_cat_id(self):
        self.next_cat += 1
        return self.next_cat - 1

    def add_relation(self, predicate, features, subject, obj):
        self.rels.append(RelationNode(self.next_rel, predicate, features, subject, obj))
        self.next_rel += 1

    def result(self):
        if not self.cats and not self.rels:
            return self.g
        return self.g.replace(
            categories=self.g.categories + tuple(self.cats),
            relations=self.g.relations + tuple(self.rels),
        )


def _prepare(ds, target_ratio, seed):
    train_idx = ds.indices(TRAIN)
    if not train_idx:
        raise UnreachableRatio("training split is empty")
    n_pos, n_neg = ds.label_counts(TRAIN)
    if n_pos + n_neg == 0:
        raise UnreachableRatio("training split has no labeled nodes")
    if n_pos == 0:
        raise NoMinorityNodes("training split has no positive nodes")
    seeds = [(gi, n.id) for gi in train_idx for n in ds.graphs[gi].categories if n.privacy == POSITIVE]
    rng = np.random.default_rng(seed)
    seeds = [seeds[i] for i in rng.permutation(len(seeds))]
    return seeds, clones_needed(n_pos, n_neg, target_ratio), n_pos / (n_pos + n_neg), rng


def _finish(ds, edits, method, records, initial_ratio):
    graphs = list(ds.graphs)
    for gi, edit in edits.items():
        graphs[gi] = edit.result()
        report = validate(graphs[gi])
        if not report.ok:  # pragma: no cover - guarded by construction
            raise AssertionError(f"augmentation produced an invalid graph: {report.violations}")
    out = ds.with_graphs(graphs)
    per_graph = {}
    for rec in records:
        name = ds.names[rec["graph"]]
        per_graph[name] = per_graph.get(name, 0) + 1
    summary = {
        "method": method,
        "clones_added": len(records),
        "initial_ratio": initial_ratio,
        "final_ratio": class_ratio(out, TRAIN),
        "per_graph": per_graph,
        "clones": records,
    }
    return out, summary


def cpos_augment(ds, cfg=None, return_summary=False, rule=None):
    """Contextual perturbation oversampling of the training split.

    When a labeling ``rule`` is given, the summary also counts clones whose
    perturbed context would relabel them negative under that rule.
    """
    cfg = cfg or CposConfig()
    seeds, n_clones, initial, rng = _prepare(ds, cfg.target_ratio, cfg.seed)
    edits, records = {}, []
    for k in range(n_clones):
        gi, src_id = seeds[k % len(seeds)]
        g = ds.graphs[gi]
        edit = edits.setdefault(gi, _GraphEdit(g))
        src = g.category(src_id)
        clone_id = edit.new_cat_id()
        edit.cats.append(CategoryNode(clone_id, src.category, src.features, POSITIVE, None, "synthetic"))
        others = [n.id for n in g.categories]
        kept = rewired = 0
        for r in g.relations:
            if src_id not in r.endpoints:
                continue
            if rng.random() >= cfg.keep_prob:
                continue
            subject = clone_id if r.subject_id == src_id else r.subject_id
            obj = clone_id if r.object_id == src_id else r.object_id
            if rng.random() < cfg.rewire_prob:
                far = others[rng.integers(len(others))]
                if r.subject_id == src_id:
                    obj = far if r.object_id != src_id else obj
                else:
                    subject = far
                rewired += 1
            edit.add_relation(r.predicate, r.features, subject, obj)
            kept += 1
        extra = 0
        if g.relations and rng.random() < cfg.extra_edge_prob:
            predicates = sorted({r.predicate for r in g.relations})
            pred = predicates[rng.integers(len(predicates))]
            donors = [r for r in g.relations if r.predicate == pred]
            donor = donors[rng.integers(len(donors))]
            far = others[rng.integers(len(others))]
            edit.add_relation(pred, donor.features, clone_id, far)
            extra = 1
        records.append(
            {"graph": gi, "clone_id": clone_id, "source_id": src_id, "kept": kept, "rewired": rewired, "extra": extra}
        )
    out, summary = _finish(ds, edits, "cpos", records, initial)
    if rule is not None:
        summary["label_drift"] = _label_drift(out, records, rule)
    return (out, summary) if return_summary else out


def _label_drift(ds, records, rule):
    from .synthgen import oracle_label

    flipped = 0
    by_graph = {}
    for rec in records:
        by_graph.setdefault(rec["graph"], []).append(rec["clone_id"])
    for gi, clone_ids in by_graph.items():
        g = ds.graphs[gi]
        labels = dict(zip((n.id for n in g.categories), oracle_label(g, rule)))
        flipped += sum(labels[c] != POSITIVE for c in clone_ids)
    return {"clones_relabeled_negative": flipped, "fraction": flipped / len(records) if records else 0.0}


def smote_augment(ds, k=5, target_ratio=0.5, seed=0, return_summary=False):
    """SMOTE in node-feature space; relations are copied from the seed node unchanged."""
    if not 0.0 < target_ratio <= 0.5:
        raise ConfigError(f"target_ratio must lie in (0, 0.5], got {target_ratio}")
    if k < 1:
        raise ConfigError("k must be at least 1")
    seeds, n_clones, initial, rng = _prepare(ds, target_ratio, seed)
    if len(seeds) < k + 1:
        raise TooFewNeighbors(f"need at least {k + 1} positive nodes, found {len(seeds)}")
    pool = sorted(seeds)
    feats = np.array([ds.graphs[gi].category(nid).features for gi, nid in pool])
    # k + 1 because each point is its own nearest neighbor
    nn = NearestNeighbors(n_neighbors=k + 1).fit(feats)
    _, neigh = nn.kneighbors(feats)
    where = {key: i for i, key in enumerate(pool)}

    edits, records = {}, []
    for c in range(n_clones):
        gi, src_id = seeds[c % len(seeds)]
        i = where[(gi, src_id)]
        candidates = [j for j in neigh[i] if j != i][:k]
        j = candidates[rng.integers(len(candidates))]
        u = rng.random()
        x = feats[i] + u * (feats[j] - feats[i])
        g = ds.graphs[gi]
        edit = edits.setdefault(gi, _GraphEdit(g))
        clone_id = edit.new_cat_id()
        src = g.category(src_id)
        edit.cats.append(CategoryNode(clone_id, src.category, x, POSITIVE, None, "synthetic"))
        for r in g.relations:
            if src_id in r.endpoints:
                subject = clone_id if r.subject_id == src_id else r.subject_id
                obj = clone_id if r.object_id == src_id else r.object_id
                edit.add_relation(r.predicate, r.features, subject, obj)
        ngi, nid = pool[j]
        records.append(
            {"graph": gi, "clone_id": clone_id, "source_id": src_id, "neighbor_graph": ngi, "neighbor_id": nid, "u": u}
        )
    out, summary = _finish(ds, edits, "smote", records, initial)
    return (out, summary) if return_summary else out


class CPOSampler(BaseEstimator):
    """Estimator-style wrapper: ``fit_resample(dataset) -> dataset``."""

    def __init__(self, target_ratio=0.5, keep_prob=0.9, extra_edge_prob=0.2, rewire_prob=0.1, seed=0):
        self.target_ratio = target_ratio
        self.keep_prob = keep_prob
        self.extra_edge_prob = extra_edge_prob
        self.rewire_prob = rewire_prob
        self.seed = seed

    def fit_resample(self, ds):
        cfg = CposConfig(**self.get_params())
        out, self.summary_ = cpos_augment(ds, cfg, return_summary=True)
        return out


class SMOTESampler(BaseEstimator):
    def __init__(self, k_neighbors=5, target_ratio=0.5, seed=0):
        self.k_neighbors = k_neighbors
        self.target_ratio = target_ratio
        self.seed = seed

    def fit_resample(self, ds):
        out, self.summary_ = smote_augment(
            ds, self.k_neighbors, self.target_ratio, self.seed, return_summary=True
        )
        return out
