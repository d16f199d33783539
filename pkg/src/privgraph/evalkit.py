"""Precision/recall/F1, model evaluation and the edge-dropping robustness probe."""

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigError, EmptySplit, InvalidThreshold, NoLabeledNodes
from .models import Prepared, check_dataset_dims, predict_proba


def _check_threshold(threshold):
    if not 0.0 < threshold < 1.0:
        raise InvalidThreshold(f"threshold must lie in (0, 1), got {threshold}")


def confusion_counts(probs, labels, threshold=0.5):
    """``(tp, fp, fn, tn)``; a node is predicted positive iff ``prob >= threshold``.

    Labels of -1 (or None) are unknown and skipped.
    """
    _check_threshold(threshold)
    probs = np.asarray(probs, dtype=float)
    labels = np.array([-1 if v is None else v for v in labels], dtype=np.int64)
    known = labels >= 0
    if not known.any():
        raise NoLabeledNodes("no labeled nodes to score")
    pred = probs[known] >= threshold
    truth = labels[known] == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return tp, fp, fn, tn


def f1_from(precision, recall):
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def prf1(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall, f1_from(precision, recall)


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    threshold: float
    n_graphs: int
    n_nodes: int
    fingerprint: str
    model: str = ""
    split: str = ""

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def row(self, label=None):
        return (label or self.model, self.precision, self.recall, self.f1)


def format_table(rows, title=None):
    """Plain-text table with Methods / Precision / Recall / F1 Score columns."""
    header = ("Methods", "Precision", "Recall", "F1 Score")
    width = max([len(header[0])] + [len(str(r[0])) for r in rows]) + 2
    lines = []
    if title:
        lines.append(title)
    lines.append(header[0].ljust(width) + "".join(h.rjust(11) for h in header[1:]))
    for name, p, r, f in rows:
        lines.append(str(name).ljust(width) + f"{p:11.4f}{r:11.4f}{f:11.4f}")
    return "\n".join(lines)


def fingerprint(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def params_fingerprint(params):
    h = hashlib.sha256()
    h.update(json.dumps({"kind": params.kind, "dims": params.dims}, sort_keys=True).encode())
    for name, v in params.tensors.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(v, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def evaluate_model(params, ds, split="val", threshold=0.5, prepared=None):
    """Micro-averaged metrics of ``params`` on one split of ``ds``."""
    _check_threshold(threshold)
    check_dataset_dims(params, ds.d_o, ds.d_r)
    idx = ds.indices(split)
    if not idx:
        raise EmptySplit(f"split {split!r} is empty")
    graphs = [ds.graphs[i] for i in idx]
    probs = predict_proba(params, graphs, prepared=prepared)
    all_probs = np.concatenate(probs) if probs else np.zeros(0)
    all_labels = np.concatenate([g.labels for g in graphs])
    tp, fp, fn, tn = confusion_counts(all_probs, all_labels, threshold)
    p, r, f = prf1(tp, fp, fn)
    fp_hash = fingerprint(
        {"params": params_fingerprint(params), "split": split, "threshold": threshold, "data": sorted(ds.names[i] for i in idx)}
    )
    return MetricsReport(
        tp, fp, fn, tn, p, r, f, threshold, len(graphs), int(all_labels.size), fp_hash, params.kind, split
    )


def evaluate_graphs(params, graphs, threshold=0.5, prepared=None):
    """Counts-and-scores shortcut used during training; graphs carry their labels."""
    probs = predict_proba(params, graphs, prepared=prepared)
    labels = np.concatenate([g.labels for g in graphs])
    tp, fp, fn, _ = confusion_counts(np.concatenate(probs), labels, threshold)
    return prf1(tp, fp, fn)


def perturb_edges(g, drop_prob, seed=0):
    """Drop each relation independently with probability ``drop_prob``."""
    if not 0.0 <= drop_prob < 1.0:
        raise ConfigError(f"drop_prob must lie in [0, 1), got {drop_prob}")
    if drop_prob == 0.0 or not g.relations:
        return g
    rng = np.random.default_rng(seed)
    keep = rng.random(len(g.relations)) >= drop_prob
    return g.replace(relations=[r for r, k in zip(g.relations, keep) if k])


def perturb_dataset(ds, drop_prob, seed=0, split=None):
    """Apply :func:`perturb_edges` per graph with per-graph derived seeds."""
    children = np.random.SeedSequence(seed).spawn(len(ds.graphs))
    graphs = [
        perturb_edges(g, drop_prob, int(c.generate_state(1)[0])) if split is None or s == split else g
        for g, s, c in zip(ds.graphs, ds.splits, children)
    ]
    return ds.with_graphs(graphs)


def prepared_for(params, graphs):
    return Prepared(params.kind, graphs)
