"""Imbalance-weighted loss, reverse-mode gradients, finite-difference checks and Adam training."""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .dataset import TRAIN, VAL
from .evalkit import evaluate_graphs
from .exceptions import ConfigError, DegenerateLabels, InvalidEpsilon, NoLabeledNodes, NonFiniteGradient
from .models import Prepared, check_dataset_dims, init_params
from .params import ModelParams, default_dims

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch: int = 16
    pos_weight_cap: float = 100.0
    early_stop_patience: int = 10
    seed: int = 0
    precision: int = 64
    threshold: float = 0.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.pos_weight_cap < 1:
            raise ConfigError("pos_weight_cap must be >= 1")
        if self.epochs < 0 or self.batch < 1 or self.early_stop_patience < 1:
            raise ConfigError("epochs >= 0, batch >= 1 and early_stop_patience >= 1 required")
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")

    @property
    def dtype(self):
        return np.float64 if self.precision == 64 else np.float32


@dataclass
class LossValue:
    value: float
    per_node: np.ndarray = field(repr=False)


def pos_weight_for(labels, cap=100.0):
    """``clamp(N_neg / N_pos, 1, cap)`` over known labels."""
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0:
        return float(cap)
    return float(min(max(n_neg / n_pos, 1.0), cap))


def _known(labels):
    labels = np.array([-1 if v is None else v for v in labels], dtype=np.int64)
    known = labels >= 0
    if not known.any():
        raise NoLabeledNodes("no labeled nodes in loss")
    return labels, known


def imbalance_loss(probs, labels, pos_weight=1.0):
    """Class-weighted binary cross-entropy, averaged over labeled nodes."""
    labels, known = _known(labels)
    y = labels[known].astype(float)
    p = ad.Tensor(np.asarray(probs, dtype=float)[known])
    w = np.where(y == 1, pos_weight, 1.0)
    loss, per_node = ad.weighted_bce(p, y, w, LOG_CLAMP)
    return LossValue(float(loss.value), per_node)


def _loss_tensor(kind, tensors, batch, pos_weight, labels=None):
    probs = kind.forward(tensors, batch)
    labels = batch.labels if labels is None else labels
    labels, known = _known(labels)
    y = labels[known].astype(probs.value.dtype)
    p = ad.gather(probs, np.flatnonzero(known))
    w = np.where(y == 1, pos_weight, 1.0).astype(probs.value.dtype)
    loss, _ = ad.weighted_bce(p, y, w, LOG_CLAMP)
    return loss


def compute_gradients(params, graphs, pos_weight=1.0, labels=None, prepared=None):
    """Loss and exact gradients for every tensor of ``params`` over ``graphs``.

    ``labels`` optionally overrides the graphs' own labels (one flat array in
    graph order, ascending node id).
    """
    prep = prepared or Prepared(params.kind, graphs)
    dtype = next(iter(params.tensors.values())).dtype
    batch = prep.batch(range(len(prep.graphs)), dtype)
    if batch is None:
        raise NoLabeledNodes("no category nodes in batch")
    tensors = {k: ad.param(v) for k, v in params.tensors.items()}
    loss = _loss_tensor(prep.kind, tensors, batch, pos_weight, labels)
    ad.backward(loss)
    grads = {}
    for name, t in tensors.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.value)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
        grads[name] = g
    return float(loss.value), grads


def gradcheck(params, graphs, epsilon=1e-5, pos_weight=1.0, labels=None, details=False):
    """Largest relative error between analytic and central-difference gradients.

    Relative error per scalar is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not epsilon > 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {epsilon}")
    params = ModelParams(
        params.kind, dict(params.dims), {k: np.array(v, dtype=np.float64) for k, v in params.tensors.items()}
    )
    prep = Prepared(params.kind, graphs)
    _, analytic = compute_gradients(params, graphs, pos_weight, labels, prepared=prep)
    batch = prep.batch(range(len(prep.graphs)), np.float64)
    consts = {k: ad.Tensor(v) for k, v in params.tensors.items()}

    def loss_at():
        return float(_loss_tensor(prep.kind, consts, batch, pos_weight, labels).value)

    worst, per_tensor = 0.0, {}
    for name, value in params.tensors.items():
        grad = analytic[name]
        tensor_worst = 0.0
        for i in np.ndindex(value.shape):
            orig = value[i]
            value[i] = orig + epsilon
            up = loss_at()
            value[i] = orig - epsilon
            down = loss_at()
            value[i] = orig
            num = (up - down) / (2 * epsilon)
            a = grad[i]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            tensor_worst = max(tensor_worst, err)
        per_tensor[name] = tensor_worst
        worst = max(worst, tensor_worst)
    return (worst, per_tensor) if details else worst


def gradcheck_random(kind, seed, hidden, layers=2, attn_hidden=None, epsilon=1e-5, n_nodes=6, n_relations=6, dim=3):
    """:func:`gradcheck` of a freshly initialized ``kind`` model on one random graph.

    Every tensor, biases included, is jittered away from its initial value so
    no gradient is trivially zero by symmetry.
    """
    from .synthgen import random_graphs

    graphs = random_graphs(seed, 1, n_nodes, n_relations, dim, dim)
    dims = default_dims(dim, dim, hidden, attn_hidden or hidden, layers)
    params = init_params(kind, dims, seed)
    rng = np.random.default_rng([seed, 2])
    for name, v in params.tensors.items():
        params.tensors[name] = np.asarray(v + 0.1 * rng.normal(size=np.shape(v)))
    return gradcheck(params, graphs, epsilon, pos_weight=2.0, details=True)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params.tensors[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(
                params.tensors[k].dtype
            )


@dataclass
class TrainResult:
    params: object
    log: list
    best_epoch: int
    pos_weight: float


def train(ds, cfg=None, kind="hgr", dims=None, callback=None):
    """Fit a model on the training split, early-stopping on validation F1.

    Returns a :class:`TrainResult` holding the best-validation parameters and
    one log entry per epoch.
    """
    cfg = cfg or TrainConfig()
    dims = dims or default_dims(ds.d_o, ds.d_r)
    params = init_params(kind, dims, cfg.seed).astype(cfg.dtype)
    check_dataset_dims(params, ds.d_o, ds.d_r)
    if cfg.epochs == 0:
        return TrainResult(params, [], 0, 1.0)

    train_graphs = [g for g in ds.split_graphs(TRAIN) if g.n_categories]
    val_graphs = [g for g in ds.split_graphs(VAL) if g.n_categories]
    if not train_graphs:
        raise DegenerateLabels("training split has no category nodes")
    all_labels = np.concatenate([g.labels for g in train_graphs])
    if not (all_labels == 1).any() or not (all_labels == 0).any():
        raise DegenerateLabels("training split needs at least one positive and one negative label")
    pos_weight = pos_weight_for(all_labels, cfg.pos_weight_cap)

    train_prep = Prepared(kind, train_graphs)
    val_prep = Prepared(kind, val_graphs) if val_graphs else None
    has_labels = [bool((g.labels >= 0).any()) for g in train_graphs]
    optimizer = Adam(params, lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 1])

    history, best, best_f1, best_epoch, stale = [], params.copy(), -1.0, 0, 0
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train_graphs))
        losses, weights = [], []
        for b in range(0, len(order), cfg.batch):
            idx = [int(i) for i in order[b : b + cfg.batch] if has_labels[i]]
            if not idx:
                continue
            batch = train_prep.batch(idx, cfg.dtype)
            tensors = {k: ad.param(v) for k, v in params.tensors.items()}
            loss = _loss_tensor(train_prep.kind, tensors, batch, pos_weight)
            ad.backward(loss)
            grads = {}
            for name, t in tensors.items():
                g = t.grad if t.grad is not None else np.zeros_like(t.value)
                if not np.all(np.isfinite(g)):
                    raise NonFiniteGradient(name)
                grads[name] = g
            optimizer.step(params, grads)
            losses.append(float(loss.value))
            weights.append(int((batch.labels >= 0).sum()))
        epoch_loss = float(np.average(losses, weights=weights))
        entry = {"epoch": epoch, "loss": epoch_loss}
        if val_prep is not None:
            p, r, f = evaluate_graphs(params, val_graphs, cfg.threshold, prepared=val_prep)
            entry.update(val_precision=p, val_recall=r, val_f1=f)
        entry["wall_time"] = time.perf_counter() - start
        history.append(entry)
        if callback is not None:
            callback(entry)
        log.debug("epoch %d loss %.5f val_f1 %s", epoch, epoch_loss, entry.get("val_f1"))

        if val_prep is None:
            best, best_epoch = params.copy(), epoch
            continue
        if entry["val_f1"] > best_f1:
            best, best_f1, best_epoch, stale = params.copy(), entry["val_f1"], epoch, 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return TrainResult(best, history, best_epoch, pos_weight)


def config_dict(cfg):
    return asdict(cfg)
