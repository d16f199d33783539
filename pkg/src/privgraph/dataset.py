"""Labeled collections of scene graphs and their on-disk directory format.

A dataset directory holds one JSON file per graph plus ``manifest.json``::

    {"dims": {"category": d_o, "relation": d_r},
     "graphs": [{"file": "g00000.json", "split": "train"}, ...]}
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError, EmptySplit, ParseError
from .graph import graph_from_dict, graph_to_dict

MANIFEST = "manifest.json"
TRAIN = "train"
VAL = "val"


@dataclass(frozen=True)
class LabeledDataset:
    names: tuple
    graphs: tuple
    splits: tuple
    d_o: int
    d_r: int

    def __post_init__(self):
        for attr in ("names", "graphs", "splits"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        if not len(self.names) == len(self.graphs) == len(self.splits):
            raise ValueError("names, graphs and splits must have equal length")

    def __len__(self):
        return len(self.graphs)

    def indices(self, split=None):
        if split is None:
            return list(range(len(self.graphs)))
        return [i for i, s in enumerate(self.splits) if s == split]

    def split_graphs(self, split):
        return [self.graphs[i] for i in self.indices(split)]

    def subset(self, split):
        idx = self.indices(split)
        if not idx:
            raise EmptySplit(f"split {split!r} is empty")
        return LabeledDataset(
            names=[self.names[i] for i in idx],
            graphs=[self.graphs[i] for i in idx],
            splits=[self.splits[i] for i in idx],
            d_o=self.d_o,
            d_r=self.d_r,
        )

    def with_graphs(self, graphs):
        return LabeledDataset(self.names, graphs, self.splits, self.d_o, self.d_r)

    def label_counts(self, split=None):
        labels = [g.labels for g in self.split_graphs(split)] if split else [g.labels for g in self.graphs]
        if not labels:
            return 0, 0
        cat = np.concatenate(labels)
        return int((cat == 1).sum()), int((cat == 0).sum())


def assign_splits(n, train_fraction=0.8, seed=0):
    """Random train/val assignment with exactly ``round(n * train_fraction)`` training graphs."""
    rng = np.random.default_rng(seed)
    n_train = int(round(n * train_fraction))
    order = rng.permutation(n)
    splits = [VAL] * n
    for i in order[:n_train]:
        splits[i] = TRAIN
    return splits


def save_dataset(ds, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, g, split in zip(ds.names, ds.graphs, ds.splits):
        (directory / name).write_text(json.dumps(graph_to_dict(g), allow_nan=False))
        entries.append({"file": name, "split": split})
    manifest = {"dims": {"category": ds.d_o, "relation": ds.d_r}, "graphs": entries}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1))


def load_dataset(directory):
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except FileNotFoundError:
        raise DataError(f"no {MANIFEST} in {directory}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{MANIFEST}: {exc}") from None
    try:
        d_o = manifest["dims"]["category"]
        d_r = manifest["dims"]["relation"]
        entries = manifest["graphs"]
    except (KeyError, TypeError):
        raise ParseError(f"{MANIFEST}: missing dims or graphs") from None
    names, graphs, splits = [], [], []
    for entry in entries:
        name = entry["file"]
        try:
            doc = json.loads((directory / name).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{name}: {exc}") from None
        g = graph_from_dict(doc)
        if (g.d_o, g.d_r) != (d_o, d_r):
            raise DataError(f"{name}: dims ({g.d_o}, {g.d_r}) differ from manifest ({d_o}, {d_r})")
        names.append(name)
        graphs.append(g)
        splits.append(entry.get("split", TRAIN))
    return LabeledDataset(names, graphs, splits, d_o, d_r)
