"""Estimator-style wrapper around training and inference.

``X`` is either a :class:`LabeledDataset` (its train/val splits drive early
stopping) or a sequence of scene graphs, all used for training. Predictions
are flattened over graphs in order, category nodes by ascending id.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .dataset import TRAIN, LabeledDataset
from .evalkit import confusion_counts, prf1
from .exceptions import DimError
from .graph import HeteroSceneGraph, relabel_nodes
from .models import get_kind, predict_proba
from .params import default_dims
from .training import TrainConfig, train


def check_graphs(X, dims=None):
    """Return ``X`` as a list of scene graphs sharing one pair of feature dims."""
    if isinstance(X, LabeledDataset):
        graphs = list(X.graphs)
    elif isinstance(X, HeteroSceneGraph):
        graphs = [X]
    else:
        graphs = list(X)
    if not graphs:
        raise ValueError("expected at least one graph")
    for g in graphs:
        if not isinstance(g, HeteroSceneGraph):
            raise TypeError(f"expected HeteroSceneGraph, got {type(g).__name__}")
    found = {(g.d_o, g.d_r) for g in graphs}
    if len(found) > 1:
        raise DimError(f"graphs disagree on feature dims: {sorted(found)}")
    if dims is not None and found != {tuple(dims)}:
        raise DimError(f"estimator was fitted on dims {tuple(dims)}, got {found.pop()}")
    return graphs


def _with_labels(graphs, y):
    if y is None:
        return graphs
    if len(y) != len(graphs):
        raise ValueError("y must hold one label array per graph")
    return [relabel_nodes(g, labels) for g, labels in zip(graphs, y)]


class PrivacyGraphClassifier(ClassifierMixin, BaseEstimator):
    """Per-node privacy classifier over scene graphs.

    Parameters mirror :class:`TrainConfig` plus the model shape. ``model``
    picks one of ``hgr``, ``gcn``, ``gat`` or ``mlp``.
    """

    def __init__(
        self,
        model="hgr",
        hidden=64,
        attn_hidden=32,
        layers=2,
        learning_rate=1e-3,
        epochs=100,
        batch_size=16,
        pos_weight_cap=100.0,
        early_stop_patience=10,
        threshold=0.5,
        precision=64,
        random_state=0,
    ):
        self.model = model
        self.hidden = hidden
        self.attn_hidden = attn_hidden
        self.layers = layers
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.pos_weight_cap = pos_weight_cap
        self.early_stop_patience = early_stop_patience
        self.threshold = threshold
        self.precision = precision
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch=self.batch_size,
            pos_weight_cap=self.pos_weight_cap,
            early_stop_patience=self.early_stop_patience,
            seed=self.random_state,
            precision=self.precision,
            threshold=self.threshold,
        )

    def fit(self, X, y=None):
        get_kind(self.model)
        if isinstance(X, LabeledDataset) and y is None:
            ds = X
        else:
            graphs = _with_labels(check_graphs(X), y)
            ds = LabeledDataset(
                [f"g{i}" for i in range(len(graphs))], graphs, [TRAIN] * len(graphs), graphs[0].d_o, graphs[0].d_r
            )
        dims = default_dims(ds.d_o, ds.d_r, self.hidden, self.attn_hidden, self.layers)
        result = train(ds, self._config(), kind=self.model, dims=dims)
        self.params_ = result.params
        self.history_ = result.log
        self.best_epoch_ = result.best_epoch
        self.pos_weight_ = result.pos_weight
        self.feature_dims_ = (ds.d_o, ds.d_r)
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predicting")

    def predict_proba(self, X):
        self._check_fitted()
        graphs = check_graphs(X, self.feature_dims_)
        probs = predict_proba(self.params_, graphs)
        p = np.concatenate(probs) if probs else np.zeros(0)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(np.int64)

    def score(self, X, y=None, sample_weight=None):
        """Micro-averaged F1 over labeled nodes."""
        graphs = _with_labels(check_graphs(X), y)
        labels = np.concatenate([g.labels for g in graphs])
        tp, fp, fn, _ = confusion_counts(self.predict_proba(graphs)[:, 1], labels, self.threshold)
        return prf1(tp, fp, fn)[2]
