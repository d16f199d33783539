"""Command-line pipeline: generate, augment, train, eval, predict, gradcheck, ablate.

Every run resolves one configuration document from built-in defaults, an
optional ``--config`` JSON file and command-line flags (in that order of
precedence, lowest first), then writes it as ``resolved_config.json`` next to
its outputs. Errors are reported as JSON on stderr with exit status 1 (usage
or configuration), 2 (bad data) or 3 (numerical failure).
"""

import argparse
import copy
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import augment, evalkit, synthgen
from .dataset import TRAIN, LabeledDataset, load_dataset, save_dataset
from .exceptions import ConfigError, DataError, NumericalError, ParseError, PrivGraphError
from .graph import graph_from_dict
from .models import get_kind, init_params, predict_proba
from .params import check_dims, default_dims, load_checkpoint, save_checkpoint
from .training import TrainConfig, gradcheck_random, train

log = logging.getLogger("privgraph")

RESOLVED = "resolved_config.json"
GRADCHECK_TOL = 1e-4
ABLATE_MODELS = ("mlp", "gcn", "gat", "hgr")

DEFAULTS = {
    "seed": 0,
    "threads": None,
    "data": {
        "n_graphs": 500,
        "nodes_per_graph": [8, 20],
        "relations_per_graph": [6, 25],
        "targets_per_graph": [1, 4],
        "positive_prior": 0.3,
        "decoy_prob": 0.5,
        "feature_noise": 0.1,
        "dim_category": 16,
        "dim_relation": 16,
        "train_fraction": 0.8,
    },
    "rule": {
        "target_category": "person",
        "positive_pattern": [["sitting-on", "bench"], ["walking-on", "street"]],
        "negative_pattern": [["holding", "microphone"], ["standing-on", "lectern"]],
    },
    "augment": {
        "method": "cpos",
        "target_ratio": 0.5,
        "keep_prob": 0.9,
        "extra_edge_prob": 0.2,
        "rewire_prob": 0.1,
        "smote_k": 5,
    },
    "model": {"kind": "hgr", "hidden": 64, "attn_hidden": 32, "layers": 2},
    "train": {
        "learning_rate": 1e-3,
        "epochs": 100,
        "batch": 16,
        "pos_weight_cap": 100.0,
        "early_stop_patience": 10,
        "precision": 64,
    },
    "eval": {"split": "val", "threshold": 0.5, "drop_prob": 0.0},
    # attn_hidden None: same as the hidden size, which keeps every gradient entry
    # well above finite-difference noise
    "gradcheck": {"epsilon": 1e-5, "n_nodes": 6, "n_relations": 6, "dim": 3, "attn_hidden": None},
    "ablate": {"seeds": [0], "skew_prior": 0.1},
}

# flag dest -> config path
FLAG_PATHS = {
    "seed": ("seed",),
    "threads": ("threads",),
    "dim": (("data", "dim_category"), ("data", "dim_relation")),
    "hidden": ("model", "hidden"),
    "layers": ("model", "layers"),
    "lr": ("train", "learning_rate"),
    "epochs": ("train", "epochs"),
    "precision": ("train", "precision"),
    "threshold": ("eval", "threshold"),
    "target_ratio": ("augment", "target_ratio"),
    "keep_prob": ("augment", "keep_prob"),
    "rewire_prob": ("augment", "rewire_prob"),
    "extra_edge_prob": ("augment", "extra_edge_prob"),
    "drop_prob": ("eval", "drop_prob"),
    "model": ("model", "kind"),
    "method": ("augment", "method"),
    "n_graphs": ("data", "n_graphs"),
    "split": ("eval", "split"),
}


class UsageError(ConfigError):
    code = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _merge(base, override, where=""):
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where + key!r} must be an object")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value
    return base


def _set(cfg, path, value):
    node = cfg
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value


def resolve_config(args):
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        # a resolved config written by an earlier run is a valid input
        doc.pop("command", None)
        _merge(cfg, doc)
    for dest, path in FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        paths = path if isinstance(path[0], tuple) else (path,)
        for p in paths:
            _set(cfg, p, value)
    return cfg


def write_resolved(cfg, directory, command):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = dict(cfg, command=command)
    (directory / RESOLVED).write_text(json.dumps(doc, indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# config -> library objects
# ---------------------------------------------------------------------------


def gen_config(cfg, **overrides):
    d = dict(cfg["data"], **overrides)
    try:
        return synthgen.GenConfig(
            n_graphs=int(d["n_graphs"]),
            nodes_per_graph=tuple(d["nodes_per_graph"]),
            relations_per_graph=tuple(d["relations_per_graph"]),
            targets_per_graph=tuple(d["targets_per_graph"]),
            positive_prior=float(d["positive_prior"]),
            decoy_prob=float(d["decoy_prob"]),
            feature_noise=float(d["feature_noise"]),
            seed=int(cfg["seed"]),
            dim_category=int(d["dim_category"]),
            dim_relation=int(d["dim_relation"]),
            train_fraction=float(d["train_fraction"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad data config: {exc}") from None


def context_rule(cfg):
    r = cfg["rule"]
    return synthgen.ContextRule(
        target_category=r["target_category"],
        positive_pattern=frozenset(map(tuple, r["positive_pattern"])),
        negative_pattern=frozenset(map(tuple, r["negative_pattern"])),
    )


def cpos_config(cfg):
    a = cfg["augment"]
    return augment.CposConfig(
        target_ratio=a["target_ratio"],
        keep_prob=a["keep_prob"],
        extra_edge_prob=a["extra_edge_prob"],
        rewire_prob=a["rewire_prob"],
        seed=int(cfg["seed"]),
    )


def train_config(cfg, seed=None):
    t = cfg["train"]
    return TrainConfig(
        learning_rate=t["learning_rate"],
        epochs=t["epochs"],
        batch=t["batch"],
        pos_weight_cap=t["pos_weight_cap"],
        early_stop_patience=t["early_stop_patience"],
        seed=int(cfg["seed"] if seed is None else seed),
        precision=t["precision"],
        threshold=cfg["eval"]["threshold"],
    )


def model_dims(cfg, d_o, d_r):
    m = cfg["model"]
    dims = default_dims(d_o, d_r, m["hidden"], m["attn_hidden"], m["layers"])
    check_dims(dims)
    return dims


def run_augment(ds, cfg, method=None, rule=None):
    method = method or cfg["augment"]["method"]
    if method == "cpos":
        return augment.cpos_augment(ds, cpos_config(cfg), return_summary=True, rule=rule)
    if method == "smote":
        a = cfg["augment"]
        return augment.smote_augment(ds, a["smote_k"], a["target_ratio"], int(cfg["seed"]), return_summary=True)
    raise ConfigError(f"unknown augmentation method {method!r}; choose cpos or smote")


def fit(ds, cfg, kind=None, seed=None):
    kind = kind or cfg["model"]["kind"]
    get_kind(kind)
    return train(ds, train_config(cfg, seed), kind=kind, dims=model_dims(cfg, ds.d_o, ds.d_r))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args, cfg):
    ds = synthgen.generate_dataset(gen_config(cfg), context_rule(cfg))
    save_dataset(ds, args.out)
    write_resolved(cfg, args.out, "generate")
    pos, neg = ds.label_counts(TRAIN)
    print(json.dumps({"graphs": len(ds), "train_positive": pos, "train_negative": neg, "out": str(args.out)}))
    return 0


def cmd_augment(args, cfg):
    ds = load_dataset(args.data)
    out, summary = run_augment(ds, cfg, rule=context_rule(cfg) if args.oracle_rule else None)
    save_dataset(out, args.out)
    Path(args.out, "augment_summary.json").write_text(json.dumps(summary, indent=1))
    write_resolved(cfg, args.out, "augment")
    print(json.dumps({k: v for k, v in summary.items() if k != "clones"}))
    return 0


def cmd_train(args, cfg):
    ds = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "train_log.jsonl", "w") as fh:
        result = train(
            ds,
            train_config(cfg),
            kind=cfg["model"]["kind"],
            dims=model_dims(cfg, ds.d_o, ds.d_r),
            callback=lambda entry: fh.write(json.dumps(entry) + "\n"),
        )
    save_checkpoint(result.params, out / "checkpoint.json", seed=cfg["seed"], training=cfg["train"])
    write_resolved(cfg, out, "train")
    summary = {"best_epoch": result.best_epoch, "epochs_run": len(result.log), "pos_weight": result.pos_weight}
    if result.log and "val_f1" in result.log[-1]:
        summary["best_val_f1"] = max(e["val_f1"] for e in result.log)
    print(json.dumps(summary))
    return 0


def cmd_eval(args, cfg):
    params, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    drop = cfg["eval"]["drop_prob"]
    if drop:
        ds = evalkit.perturb_dataset(ds, drop, seed=int(cfg["seed"]), split=cfg["eval"]["split"])
    report = evalkit.evaluate_model(params, ds, cfg["eval"]["split"], cfg["eval"]["threshold"])
    text = report.to_json()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        write_resolved(cfg, out.parent, "eval")
    print(text)
    return 0


def _read_graph(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return graph_from_dict(doc)


def cmd_predict(args, cfg):
    params, _ = load_checkpoint(args.checkpoint)
    named = []
    for path in args.graphs:
        p = Path(path)
        if p.is_dir():
            ds = load_dataset(p)
            named.extend(zip(ds.names, ds.graphs))
        else:
            named.append((p.name, _read_graph(p)))
    probs = predict_proba(params, [g for _, g in named])
    docs = []
    for (name, g), pr in zip(named, probs):
        nodes = [
            {"id": n.id, "is_privacy": float(p), "bbox": list(n.bbox) if n.bbox is not None else None}
            for n, p in zip(g.categories, pr)
        ]
        docs.append({"graph": name, "nodes": nodes})
    text = json.dumps(docs, indent=1)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        write_resolved(cfg, out.parent, "predict")
    else:
        print(text)
    return 0


def cmd_gradcheck(args, cfg):
    g = cfg["gradcheck"]
    worst, per_tensor = gradcheck_random(
        cfg["model"]["kind"],
        int(cfg["seed"]),
        cfg["model"]["hidden"],
        cfg["model"]["layers"],
        g["attn_hidden"],
        g["epsilon"],
        g["n_nodes"],
        g["n_relations"],
        g["dim"],
    )
    doc = {"model": cfg["model"]["kind"], "max_relative_error": worst, "tolerance": GRADCHECK_TOL, "per_tensor": per_tensor}
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "gradcheck.json").write_text(json.dumps(doc, indent=1))
        write_resolved(cfg, args.out, "gradcheck")
    print(f"max relative error {worst:.3e}")
    return 0 if worst < GRADCHECK_TOL else 3


def ablation_rows(ds, cfg, seeds, skewed=None, callback=None):
    """Mean val P/R/F1 per model over ``seeds``; augmented HGR rows on ``skewed`` if given."""
    split, thr = cfg["eval"]["split"], cfg["eval"]["threshold"]
    runs = [(kind.upper(), ds, kind, None) for kind in ABLATE_MODELS]
    if skewed is not None:
        runs.append(("HGR (skewed)", skewed, "hgr", None))
        runs.append(("HGR + SMOTE (skewed)", skewed, "hgr", "smote"))
        runs.append(("HGR + CPOS (skewed)", skewed, "hgr", "cpos"))
    rows = []
    for label, data, kind, method in runs:
        scores = []
        for seed in seeds:
            run_cfg = dict(cfg, seed=seed)
            train_ds = run_augment(data, run_cfg, method)[0] if method else data
            result = fit(train_ds, run_cfg, kind, seed)
            rep = evalkit.evaluate_model(result.params, train_ds, split, thr)
            scores.append((rep.precision, rep.recall, rep.f1))
            if callback:
                callback(label, seed, rep)
        p, r, f = np.mean(scores, axis=0)
        rows.append({"method": label, "precision": float(p), "recall": float(r), "f1": float(f), "per_seed": scores})
    return rows


def cmd_ablate(args, cfg):
    seeds = [int(s) for s in cfg["ablate"]["seeds"]]
    rule = context_rule(cfg)
    ds = load_dataset(args.data) if args.data else synthgen.generate_dataset(gen_config(cfg), rule)
    skewed = None
    if not args.no_skewed:
        skewed = synthgen.generate_dataset(gen_config(cfg, positive_prior=cfg["ablate"]["skew_prior"]), rule)
    rows = ablation_rows(
        ds, cfg, seeds, skewed, lambda label, seed, rep: log.info("%s seed %d f1 %.4f", label, seed, rep.f1)
    )
    table = evalkit.format_table([(r["method"], r["precision"], r["recall"], r["f1"]) for r in rows])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(rows, indent=1))
        (out / "ablation.txt").write_text(table + "\n")
        write_resolved(cfg, out, "ablate")
    print(table)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--dim", type=int, help="category and relation feature dimension")
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--target-ratio", type=float)
    p.add_argument("--keep-prob", type=float)
    p.add_argument("--rewire-prob", type=float)
    p.add_argument("--extra-edge-prob", type=float)
    p.add_argument("--drop-prob", type=float)
    p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads (1 = serial)")
    p.add_argument("--precision", type=int, choices=(32, 64))
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="privgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset directory")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-graphs", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("augment", help="oversample the training split")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("cpos", "smote"))
    p.add_argument("--oracle-rule", action="store_true", help="report clones the labeling rule would flip")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=sorted(ABLATE_MODELS))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="per-node privacy probabilities as JSON")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.add_argument("graphs", nargs="+", help="graph JSON files or dataset directories")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    _common(p)
    p.add_argument("--model", choices=sorted(ABLATE_MODELS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train every model and print a comparison table")
    _common(p)
    p.add_argument("--data", help="dataset directory (generated from the config if omitted)")
    p.add_argument("--out")
    p.add_argument("--no-skewed", action="store_true", help="skip the oversampling comparison")
    p.set_defaults(func=cmd_ablate)
    return parser


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        cfg = resolve_config(args)
        with _thread_limit(cfg["threads"]):
            return args.func(args, cfg)
    except PrivGraphError as exc:
        print(json.dumps(exc.payload()), file=sys.stderr)
        return exc.exit_status
    except (OSError, KeyError) as exc:
        err = DataError(str(exc))
        print(json.dumps(err.payload()), file=sys.stderr)
        return err.exit_status
    except FloatingPointError as exc:
        err = NumericalError(str(exc))
        print(json.dumps(err.payload()), file=sys.stderr)
        return err.exit_status


if __name__ == "__main__":
    sys.exit(main())
