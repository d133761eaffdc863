"""Command-line interface.

Exit codes: 0 success, 1 domain error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import PRESETS, architecture_from, load_config, resolve, training_from
from .data import fetch_openml
from .errors import ConfigurationError, IgnnetError
from .explain import emit_chart, explain_instance, group_scores
from .graph import above_target_self_loop, calibrate_self_loop
from .metrics import evaluation_auc
from .model import IgnnetModel, dumps_model, load_model
from .pipeline import PreparedData, fit, load_dataset, make_graph, prepare
from .shap import convergence_audit

logger = logging.getLogger("ignnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 2 without argparse printing twice
        raise UsageError(f"{self.prog}: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Outputs:
    """Writes artifacts into one directory and records them in a manifest."""

    def __init__(self, directory: Path, command: str):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.files: dict[str, str] = {}
        self.timings: dict[str, float] = {}

    def write(self, name: str, content: str) -> Path:
        path = self.dir / name
        path.write_text(content)
        self.files[name] = hashlib.sha256(content.encode()).hexdigest()
        return path

    def write_external(self, path: Path, content: str) -> None:
        """A file the user asked for outside the directory; still listed."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content)
        self.files[str(path.resolve())] = hashlib.sha256(content.encode()).hexdigest()

    def finish(self, extra: Optional[dict] = None) -> Path:
        manifest = {
            "command": self.command,
            "version": __version__,
            "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
            "timings_seconds": self.timings,
            "files": {k: {"sha256": v} for k, v in sorted(self.files.items())},
        }
        if extra:
            manifest.update(extra)
        path = self.dir / "manifest.json"
        path.write_text(_dump(manifest))
        return path


def _config_from_args(args) -> dict:
    if args.config is None and args.preset is None:
        raise UsageError("give --config FILE or --preset NAME")
    config = load_config(args.config, args.preset)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("training", {})["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides.setdefault("training", {})["epochs"] = args.epochs
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.progress:
        overrides.setdefault("training", {})["progress"] = True
    return resolve(_deep_update(config, overrides)) if overrides else config


def _deep_update(base: dict, extra: dict) -> dict:
    out = json.loads(json.dumps(base))
    for k, v in extra.items():
        if isinstance(v, dict):
            out[k] = {**out.get(k, {}), **v}
        else:
            out[k] = v
    return out


def _train_artifacts(outputs: Outputs, result, config: dict) -> None:
    report = result.report.to_dict()
    for epoch in report["epochs"]:
        outputs.timings[f"epoch_{epoch['epoch']}"] = epoch.pop("seconds")
    outputs.write("model.json", dumps_model(result.model))
    outputs.write("train_report.json", _dump(report))
    outputs.write("graph.json", _dump(result.model.graph.to_dict()))
    outputs.write("transform_report.json", _dump(result.data.reports))
    outputs.write("config.json", _dump(config))
    outputs.write("scores.json", _dump(result.scores))


def cmd_fetch(args) -> dict:
    path = fetch_openml(args.openml_id, args.cache_dir)
    return {"openml_id": args.openml_id, "path": str(path)}


def cmd_train(args) -> dict:
    config = _config_from_args(args)
    outputs = Outputs(Path(config["output_dir"]), "train")
    started = time.perf_counter()
    dataset = load_dataset(config, args.cache_dir)
    train_cfg = training_from(config)
    data = prepare(dataset, config["split"], config["oversample"], seed=train_cfg.seed)
    graph = make_graph(data, config["graph"])
    arch = architecture_from(config, dataset.n_classes)
    result = fit(data, graph, arch, train_cfg, {"config": config, "dataset": dataset.name,
                                                 "provenance": dataset.provenance})
    outputs.timings["total"] = time.perf_counter() - started
    _train_artifacts(outputs, result, config)
    manifest = outputs.finish()
    return {"output_dir": str(outputs.dir), "manifest": str(manifest), **result.scores,
            "best_epoch": result.report.best_epoch, "stop_reason": result.report.stop_reason,
            "nodes": graph.n_nodes, "edges": graph.n_edges, "self_loop": graph.self_loop}


def _data_for_model(model: IgnnetModel, cache_dir) -> PreparedData:
    config = model.metadata.get("config")
    if not config:
        raise ConfigurationError("model file carries no run configuration; cannot locate its data")
    dataset = load_dataset(config, cache_dir)
    return prepare(dataset, config["split"], config["oversample"], seed=config["training"].get("seed", 0))


def cmd_eval(args) -> dict:
    model = load_model(args.model)
    data = _data_for_model(model, args.cache_dir)
    prob = model.predict_proba(data.x[args.split])
    return {"split": args.split, "auc": float(evaluation_auc(prob, data.y[args.split])),
            "rows": int(len(prob)), "recorded": {k: model.metadata.get(k) for k in ("dev_auc", "test_auc")}}


def cmd_explain(args) -> dict:
    model = load_model(args.model)
    data = _data_for_model(model, args.cache_dir)
    rows = data.x[args.split]
    if not 0 <= args.row < len(rows):
        raise ConfigurationError(f"--row {args.row} outside the {len(rows)} rows of the {args.split} split")
    expl = explain_instance(model, rows[args.row], args.class_index)
    if model.preprocessor is not None:
        expl.grouped = group_scores(expl, model.preprocessor)
    svg, record = emit_chart(expl, args.top_k, title=f"{model.metadata.get('dataset', 'model')}: "
                                                     f"{args.split} row {args.row}")
    record.update({"split": args.split, "row": args.row, "label": int(data.y[args.split][args.row])})
    out_dir = Path(args.out) if args.out else Path(args.model).parent / "explain"
    outputs = Outputs(out_dir, "explain")
    outputs.write(f"explanation_{args.split}_{args.row}.json", _dump(record))
    svg_name = args.svg or f"explanation_{args.split}_{args.row}.svg"
    svg_path = Path(svg_name)
    if svg_path.is_absolute() or svg_path.parent != Path("."):
        outputs.write_external(svg_path, svg)
    else:
        outputs.write(svg_name, svg)
    outputs.finish()
    return {"output_dir": str(out_dir), "prediction": record["prediction"], "bias": record["bias"],
            "top_k": [expl.node_names[i] for i in record["top_k"]]}


def cmd_shap_audit(args) -> dict:
    model = load_model(args.model)
    data = _data_for_model(model, args.cache_dir)
    try:
        schedule = [int(s) for s in args.schedule.split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"--schedule must be comma-separated integers, got {args.schedule!r}") from None
    rows = data.x[args.split]
    count = min(args.instances, len(rows))
    report = convergence_audit(model, rows[:count], data.train_mean, schedule, args.seed, centered=args.centered)
    out_dir = Path(args.out) if args.out else Path(args.model).parent / "shap_audit"
    outputs = Outputs(out_dir, "shap-audit")
    outputs.write("shap_audit.json", _dump(report.to_dict()))
    outputs.write("shap_audit.svg", report.to_svg(f"{model.metadata.get('dataset', 'model')}: KernelSHAP convergence"))
    outputs.finish()
    return {"output_dir": str(out_dir), "schedule": schedule,
            "mean_cosine": report.mean_cosine.tolist(), "mean_spearman": report.mean_spearman.tolist()}


def ablation_variants(variant: str, data: PreparedData, config: dict) -> list[tuple[str, dict, int]]:
    """(label, graph settings, layer count) per ablation arm."""
    g = dict(config["graph"])
    layers = config["architecture"].get("layers", 6)
    if variant == "self-loop":
        primary, fallback = g.get("primary_threshold", 0.2), g.get("fallback_threshold", 0.05)
        default = g["self_loop"] if g["self_loop"] != "auto" else calibrate_self_loop(data.correlation, primary=primary,
                                                                                     fallback=fallback)
        above = above_target_self_loop(data.correlation, primary=primary, fallback=fallback)
        return [
            (f"default (delta={default:g})", {**g, "self_loop": default}, layers),
            (f">90% (delta={above:g})", {**g, "self_loop": above}, layers),
            ("delta=1", {**g, "self_loop": 1}, layers),
            ("delta=0", {**g, "self_loop": 0, "allow_isolated": True}, layers),
        ]
    if variant == "threshold":
        return [
            ("threshold", g, layers),
            ("no threshold", {**g, "primary_threshold": None, "fallback_threshold": None}, layers),
        ]
    if variant == "layers":
        return [(f"{n} layers", g, n) for n in (6, 3, 1)]
    raise ConfigurationError(f"unknown ablation variant {variant!r}")


def cmd_ablate(args) -> dict:
    config = _config_from_args(args)
    outputs = Outputs(Path(config["output_dir"]), f"ablate {args.variant}")
    dataset = load_dataset(config, args.cache_dir)
    train_cfg = training_from(config)
    data = prepare(dataset, config["split"], config["oversample"], seed=train_cfg.seed)
    rows = []
    for label, graph_cfg, layers in ablation_variants(args.variant, data, config):
        started = time.perf_counter()
        arm = {**config, "graph": graph_cfg, "architecture": {**config["architecture"], "layers": layers}}
        graph = make_graph(data, graph_cfg)
        arch = architecture_from(arm, dataset.n_classes)
        result = fit(data, graph, arch, train_cfg, {"config": arm, "dataset": dataset.name})
        outputs.timings[label] = time.perf_counter() - started
        rows.append({"variant": label, "dev_auc": result.scores["dev"], "test_auc": result.scores["test"],
                     "best_epoch": result.report.best_epoch, "self_loop": graph.self_loop,
                     "self_loop_mass": graph.self_loop_mass(), "edges": graph.n_edges, "layers": layers})
        slug = "".join(c if c.isalnum() else "_" for c in label).strip("_")
        outputs.write(f"model_{slug}.json", dumps_model(result.model))
    table = ["| variant | dev AUC | test AUC | self-loop | mass | edges |", "|---|---|---|---|---|---|"]
    table += [f"| {r['variant']} | {r['dev_auc']:.4f} | {r['test_auc']:.4f} | {r['self_loop']:g} | "
              f"{r['self_loop_mass']:.3f} | {r['edges']} |" for r in rows]
    outputs.write("ablation.json", _dump({"variant": args.variant, "rows": rows}))
    outputs.write("ablation.md", "\n".join(table) + "\n")
    outputs.finish()
    return {"output_dir": str(outputs.dir), "rows": rows}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ignnet", description="Interpretable graph neural network for tabular data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json", action="store_true", help="print a machine-readable result on stdout")
    parser.add_argument("--cache-dir", default=None, help="dataset cache (default $IGNNET_CACHE or ~/.cache/ignnet)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fetch", help="download an OpenML dataset into the cache")
    p.add_argument("--openml-id", type=int, required=True)
    p.set_defaults(func=cmd_fetch)

    def run_options(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--progress", action="store_true", help="per-epoch progress on stderr")

    p = sub.add_parser("train", help="train a model from a config or preset")
    run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="AUC of a saved model on one split")
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="feature scores for one row")
    p.add_argument("--model", required=True)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--class-index", type=int, default=None)
    p.add_argument("--svg", help="chart file name (inside --out unless a path is given)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("shap-audit", help="KernelSHAP convergence against the model's scores")
    p.add_argument("--model", required=True)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--schedule", default="32,128,512,2048,8192")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--centered", action="store_true", help="compare against tau(x) - tau(background)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_shap_audit)

    p = sub.add_parser("ablate", help="train ablation arms and tabulate their AUCs")
    p.add_argument("--variant", choices=("self-loop", "threshold", "layers"), required=True)
    run_options(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def _validate_numbers(args) -> None:
    if getattr(args, "top_k", 1) < 1:
        raise UsageError("--top-k must be at least 1")
    if getattr(args, "instances", 1) < 1:
        raise UsageError("--instances must be at least 1")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (fetch, train, eval, explain, shap-audit, ablate)")
        _validate_numbers(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IgnnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(result, sort_keys=True, default=_json_default))
    else:
        for key, value in result.items():
            print(f"{key}: {value}")
    return 0


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
