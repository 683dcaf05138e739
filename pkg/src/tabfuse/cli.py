"""Command line front door.

Set TABGLM_LOG={error|info|debug} to control logging (default error).
Every command exits 0 on success; failures print a one-line JSON error to
stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import infer_schema, load_dataset, split, fit_preprocessor, transform
from .embed import hash_store, load_embeddings, write_embeddings
from .graph import compute_edge_weights, save_graph_spec
from .metrics import auc_roc
from .serialize import serialize_dataset, check_token_budget, write_corpus
from .training import (AUTO, FULL, GRAPH_ONLY, TEXT_ONLY, DEFAULT_SEEDS, TrainConfig,
                       config_hash, default_store, gradient_check_report,
                       load_experiment_checkpoint, metrics_json, predict_matrix,
                       predict_text, run_experiment, save_experiment_checkpoint)

log = logging.getLogger("tabfuse")

_MODES = {"auto": AUTO, "full": FULL, "graph": GRAPH_ONLY, "text": TEXT_ONLY}
GRADCHECK_TOLERANCE = 1e-4


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _setup_logging():
    level = os.environ.get("TABGLM_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise CliError(f"TABGLM_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _add_data_flags(p: _Parser):
    p.add_argument("data_positional", nargs="?", default=None, metavar="DATA")
    p.add_argument("--data", default=None)
    p.add_argument("--label", required=True)


def _add_train_flags(p: _Parser):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--mode", choices=sorted(_MODES), default=None)
    p.add_argument("--provider", choices=["hash", "file"], default="hash")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--encoding", choices=["onehot", "label"], default=None)
    p.add_argument("--config", default=None, help="optional key=value file; flags win")


def _data_path(args) -> Path:
    path = args.data if args.data is not None else args.data_positional
    if path is None:
        raise CliError("provide the CSV path via --data or positionally")
    return Path(path)


def _read_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            try:
                out[key] = json.loads(raw)
            except json.JSONDecodeError:
                out[key] = raw
    return out


_FLAG_TO_FIELD = {"seed": "seed", "lam": "lam", "tau": "tau", "lr": "learning_rate",
                  "batch": "batch_size", "max_epochs": "max_epochs",
                  "patience": "patience", "mode": "mode", "encoding": "encoding"}


def _build_config(args) -> TrainConfig:
    values = TrainConfig().to_json()
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
        unknown = set(file_values) - set(values)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for flag, fieldname in _FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[fieldname] = _MODES[v] if fieldname == "mode" else v
    try:
        return TrainConfig.from_json(values)
    except (TypeError, ValueError) as e:
        raise CliError(str(e)) from None


def _load_store(args, data):
    if args.provider == "file":
        if not args.embeddings:
            raise CliError("--provider file requires --embeddings")
        return load_embeddings(args.embeddings)
    return None  # hash store is built on demand inside run_experiment


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _write_json(path: Path, obj):
    path.write_text(_dump(obj) + "\n", encoding="utf-8")


# ---- commands ---------------------------------------------------------------

def cmd_schema(args) -> int:
    schema = infer_schema(_data_path(args), args.label)
    print(_dump(schema.to_json()))
    return 0


def cmd_serialize(args) -> int:
    data = load_dataset(_data_path(args), args.label)
    rows = serialize_dataset(data)
    for r in rows:
        budget = check_token_budget(r)
        if not budget.ok:
            log.warning("row %d exceeds the token budget by %d", r.row_id, budget.excess)
    if args.out:
        write_corpus(rows, args.out)
    else:
        for r in rows:
            print(_dump({"row_id": r.row_id, "text": r.text}))
    return 0


def cmd_embed(args) -> int:
    if not args.out:
        raise CliError("embed requires --out")
    if args.provider == "file":
        if not args.embeddings:
            raise CliError("--provider file requires --embeddings")
        store = load_embeddings(args.embeddings)
    else:
        config = _build_config(args)
        data = load_dataset(_data_path(args), args.label)
        store = hash_store(serialize_dataset(data), config.hash_dim)
    write_embeddings(store, args.out)
    print(_dump({"rows": len(store), "dim": store.dim, "out": str(args.out)}))
    return 0


def cmd_graph_spec(args) -> int:
    if not args.out:
        raise CliError("graph-spec requires --out")
    config = _build_config(args)
    data = load_dataset(_data_path(args), args.label)
    tr, _, _ = split(data, config.seed, config.fractions)
    prep = fit_preprocessor(tr, config.encoding)
    spec = compute_edge_weights(transform(prep, tr))
    save_graph_spec(spec, args.out)
    print(_dump({"nodes": spec.num_nodes, "out": str(args.out)}))
    return 0


def _run_training(args, forced_mode: str | None = None) -> int:
    if not args.out:
        raise CliError("train requires --out for the run directory")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _build_config(args)
    if forced_mode is not None:
        config = replace(config, mode=forced_mode)
    data_path = _data_path(args)
    data = load_dataset(data_path, args.label)
    store = _load_store(args, data)

    manifest = {
        "command": "train",
        "dataset": data_path.name,
        "label": args.label,
        "provider": args.provider,
        "embeddings": str(args.embeddings) if args.embeddings else None,
        "config": config.to_json(),
        "config_hash": config_hash(config),
    }
    _write_json(out / "manifest.json", manifest)  # before training starts

    result = run_experiment(data, config, store=store)
    save_experiment_checkpoint(out / "checkpoint.bin", result.checkpoint)
    metrics = metrics_json(data_path.stem, result)
    _write_json(out / "metrics.json", metrics)
    print(_dump({"mode": result.mode, "seed": result.seed, "auc_roc": result.test_auc,
                 "best_epoch": result.metrics.best_epoch, "out": str(out)}))
    return 0


def cmd_train(args) -> int:
    return _run_training(args)


def cmd_ablate(args) -> int:
    if args.mode is None:
        raise CliError("ablate requires --mode full|graph|text")
    if args.mode == "auto":
        raise CliError("ablate needs an explicit branch, not auto")
    return _run_training(args, forced_mode=_MODES[args.mode])


def cmd_eval(args) -> int:
    if not args.out:
        raise CliError("eval reads the run directory given by --out")
    out = Path(args.out)
    ckpt_path = out / "checkpoint.bin"
    manifest_path = out / "manifest.json"
    if not ckpt_path.exists() or not manifest_path.exists():
        raise CliError(f"{out} does not look like a finished run directory")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    config = TrainConfig.from_json(manifest["config"])
    ckpt = load_experiment_checkpoint(ckpt_path)
    data = load_dataset(_data_path(args), args.label, schema=ckpt.schema)
    _, _, te = split(data, ckpt.seed, config.fractions)
    num_classes = len(ckpt.schema.class_names)
    if ckpt.mode == TEXT_ONLY:
        if args.provider == "file":
            if not args.embeddings:
                raise CliError("text-mode eval with --provider file requires --embeddings")
            store = load_embeddings(args.embeddings)
        else:
            store = default_store(data, config.hash_dim)
        probs = predict_text(ckpt, store, te.row_ids)
    else:
        matrix = transform(ckpt.preprocessor, te)
        probs = predict_matrix(ckpt, matrix.values)
    scores = probs[:, 1] if num_classes == 2 else probs
    print(_dump({"mode": ckpt.mode, "seed": ckpt.seed, "rows": len(te),
                 "auc_roc": auc_roc(scores, te.labels)}))
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    report = gradient_check_report(seed=seed)
    worst = max(report.values())
    for name in sorted(report):
        print(f"{name}: {report[name]:.3e}")
    print(f"worst: {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    return 0 if worst < GRADCHECK_TOLERANCE else 1


def cmd_seeds(args) -> int:
    raw = args.seeds if args.seeds else args.list
    if raw:
        try:
            seeds = [int(s) for s in raw.split(",") if s.strip() != ""]
        except ValueError:
            raise CliError(f"bad seed list {raw!r}") from None
    else:
        seeds = list(DEFAULT_SEEDS)
    config = _build_config(args)
    data_path = _data_path(args)
    data = load_dataset(data_path, args.label)
    store = _load_store(args, data)
    report = None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {"command": "seeds", "dataset": data_path.name, "label": args.label,
                    "seeds": seeds, "provider": args.provider,
                    "config": config.to_json(), "config_hash": config_hash(config)}
        _write_json(out / "manifest.json", manifest)

    from .training import run_seeds
    report = run_seeds(data, config, seeds=seeds, store=store, dataset_name=data_path.stem)
    for row in report["seeds"]:
        print(_dump({"seed": row["seed"], "mode": row["mode"], "auc_roc": row["auc_roc"],
                     "best_epoch": row["best_epoch"]}))
    print(_dump({"mean": report["mean"], "std": report["std"]}))
    if args.out:
        _write_json(Path(args.out) / "report.json", report)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tabfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schema", help="infer column kinds and classes")
    _add_data_flags(p)

    p = sub.add_parser("serialize", help="rows to a JSONL text corpus")
    _add_data_flags(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("embed", help="build or validate an embedding file")
    _add_data_flags(p)
    p.add_argument("--provider", choices=["hash", "file"], default="hash")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("graph-spec", help="column graph with correlation edge weights")
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--encoding", choices=["onehot", "label"], default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)

    for name in ("train", "ablate"):
        p = sub.add_parser(name)
        _add_data_flags(p)
        _add_train_flags(p)
        p.add_argument("--out", default=None)

    p = sub.add_parser("eval", help="score the test split from a run directory")
    _add_data_flags(p)
    p.add_argument("--provider", choices=["hash", "file"], default="hash")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("gradcheck", help="numerical gradient checks")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("seeds", help="run a list of seeds and aggregate")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--seeds", default=None)
    p.add_argument("--list", dest="list", default=None)  # alias kept for compatibility
    p.add_argument("--out", default=None)
    return parser


_COMMANDS = {
    "schema": cmd_schema,
    "serialize": cmd_serialize,
    "embed": cmd_embed,
    "graph-spec": cmd_graph_spec,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "seeds": cmd_seeds,
}


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliError as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, RuntimeError) as e:
        print(json.dumps({"error": f"{type(e).__name__}: {e}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
