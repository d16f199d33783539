"""Parameter containers, initialization and checkpoint files."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, DimError, ParseError

CHECKPOINT_VERSION = 1

# tensors whose names end with these are biases and start at zero
_BIAS_SUFFIXES = (".bs", ".b", "bh")


def default_dims(d_o, d_r, hidden=64, attn_hidden=32, layers=2, head_layers=0):
    dims = {"d_o": d_o, "d_r": d_r, "hidden": hidden, "attn_hidden": attn_hidden, "layers": layers}
    if head_layers:
        dims["head_layers"] = head_layers
    return dims


def check_dims(dims):
    required = ("d_o", "d_r", "hidden", "attn_hidden", "layers")
    missing = [k for k in required if k not in dims]
    if missing:
        raise DimError(f"missing dims: {missing}")
    bad = {k: dims[k] for k in required if not isinstance(dims[k], int) or dims[k] <= 0}
    if bad:
        raise DimError(f"dims must be positive integers: {bad}")
    head = dims.get("head_layers", 0)
    if not isinstance(head, int) or head < 0:
        raise DimError(f"head_layers must be a non-negative integer, got {head!r}")


@dataclass
class ModelParams:
    """All learnable tensors of one model, in declared order."""

    kind: str
    dims: dict
    tensors: dict = field(default_factory=dict)

    def copy(self):
        return ModelParams(self.kind, dict(self.dims), {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype):
        return ModelParams(self.kind, dict(self.dims), {k: np.array(v, dtype=dtype) for k, v in self.tensors.items()})

    @property
    def n_scalars(self):
        return sum(v.size for v in self.tensors.values())

    def flat(self):
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    def __getitem__(self, name):
        return self.tensors[name]

    def layer(self, i):
        prefix = f"layers.{i}."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def glorot_bound(shape):
    """``sqrt(6 / (fan_in + fan_out))``; vectors count as a 1 x n matrix."""
    if len(shape) == 2:
        fan_out, fan_in = shape
    elif len(shape) == 1:
        fan_out, fan_in = 1, shape[0]
    else:
        fan_out, fan_in = 1, 1
    return math.sqrt(6.0 / (fan_in + fan_out))


def is_bias(name):
    return name.endswith(_BIAS_SUFFIXES)


def init_tensors(shapes, seed):
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in shapes.items():
        if is_bias(name):
            out[name] = np.zeros(shape)
        else:
            s = glorot_bound(shape)
            out[name] = rng.uniform(-s, s, size=shape)
    return out


def save_checkpoint(params, path, seed=None, training=None):
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model": params.kind,
        "dims": params.dims,
        "layers": params.dims.get("layers"),
        "seed": seed,
        "training": training or {},
        "tensors": [
            {"name": k, "shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
            for k, v in params.tensors.items()
        ],
    }
    text = json.dumps(doc, allow_nan=False)
    with open(path, "w") as fh:
        fh.write(text)
    return text


def load_checkpoint(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except FileNotFoundError:
        raise DataError(f"checkpoint {path} not found") from None
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    tensors = {}
    for t in doc["tensors"]:
        tensors[t["name"]] = np.array(t["data"], dtype=np.float64).reshape(t["shape"])
    return ModelParams(doc["model"], doc["dims"], tensors), doc
