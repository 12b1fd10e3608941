"""Command-line entry point: ``edgema <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import adaptation, dataset, forest, selection, synth
from .config import SEED_ENV, EngineConfig, load_config
from .engine import EdgeEngine, StreamFrame, run_replay, train_detector
from .manifest import read_manifest
from .registry import load_registry
from .texture import DEFAULT_LEVELS


def _seed(value: int) -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env else value


def cmd_synth(args) -> int:
    with open(args.spec) as fh:
        doc = json.load(fh)
    if SEED_ENV in os.environ and os.environ[SEED_ENV]:
        doc["seed"] = int(os.environ[SEED_ENV])
    spec = synth.SynthSpec.from_dict(doc)
    records = synth.synth_generate(spec, args.out)
    print(f"wrote {len(records)} frames to {args.out}")
    return 0


def cmd_features_extract(args) -> int:
    fs = dataset.extract_manifest(args.manifest, args.grid, args.levels)
    dataset.save_features(args.out, fs)
    print(f"extracted {fs.X.shape[1]} features for {len(fs)} frames")
    return 0


def cmd_select(args) -> int:
    fs = dataset.load_features(args.features)
    d, names = fs.domain_index()
    ens = selection.train_adaboost(fs.X, d, rounds=args.rounds, n_classes=len(names), importance_mode=args.importance)
    chosen = selection.select_top_k(ens.importance, args.top_k)
    selection.save_selection(args.out, ens.importance, chosen, fs.descriptor_names())
    names_sel = [fs.descriptor_names()[i] for i in chosen]
    print("selected: " + ", ".join(f"F{i} {n}" for i, n in zip(chosen, names_sel)))
    return 0


def cmd_domain_train(args) -> int:
    fs = dataset.load_features(args.features)
    d, names = fs.domain_index()
    subset = None
    if args.subset:
        _, subset = selection.load_selection(args.subset)
    f = forest.train_forest(fs.X, d, n_trees=args.trees, seed=_seed(args.seed), feature_subset=subset, domain_labels=names)
    forest.save_forest(args.out, f)
    print(f"trained {f.n_trees} trees over features {f.feature_subset} for domains {names}")
    return 0


def _domain_targets(fs: dataset.FeatureSet, labels: list[str]) -> np.ndarray:
    unknown = sorted({d for d in fs.domains if d not in labels}, key=str)
    if unknown:
        raise ValueError(f"test set has domains unknown to the forest: {unknown}")
    return np.array([labels.index(d) for d in fs.domains])


def cmd_domain_eval(args) -> int:
    f = forest.load_forest(args.forest)
    if args.features:
        fs = dataset.load_features(args.features)
    else:
        fs = dataset.extract_manifest(args.manifest, args.grid, args.levels)
    acc = forest.evaluate_detector(f, fs.X, _domain_targets(fs, f.domain_labels))
    print(json.dumps({"accuracy": acc, "frames": len(fs)}))
    return 0


def cmd_model_train(args) -> int:
    fs = dataset.extract_manifest(args.manifest, args.grid, args.levels)
    model = adaptation.train_model(fs.X, fs.y, args.classes, kind=args.kind, seed=_seed(args.seed))
    adaptation.save_checkpoint(args.out, model)
    acc = float(np.mean(model.predict(fs.X) == fs.y))
    print(f"trained {model.kind} model on {len(fs)} frames (training accuracy {acc:.4f})")
    return 0


def _stream(manifest_path):
    m = read_manifest(manifest_path)
    if not len(m):
        raise ValueError(f"{manifest_path}: stream is empty")
    for rec in m.records:
        yield StreamFrame(m.load_frame(rec), rec.timestamp, rec.label, rec.domain)


def cmd_replay(args) -> int:
    cfg = load_config(args.config) if args.config else EngineConfig.from_dict({})
    if args.static:
        cfg = cfg.static()
    profiles = load_registry(args.registry, cfg)
    detector = None
    if cfg.domain_detection:
        if cfg.forest.path:
            p = Path(cfg.forest.path)
            if not p.is_absolute() and args.config:
                p = Path(args.config).parent / p
            detector = forest.load_forest(p)
        else:
            detector = train_detector(profiles, cfg)
    engine = EdgeEngine(profiles, detector, cfg)
    _, summary = run_replay(_stream(args.stream), engine, args.out, args.summary)
    counts = ", ".join(f"{k}={summary[k]}" for k in ("adapt_domain", "adapt_labels", "lag"))
    top1 = summary["mean_top1"]
    print(f"{summary['batches']} batches ({counts}); mean top-1 " + ("n/a" if top1 is None else f"{top1:.4f}"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgema", description="Drift-adaptive streaming inference toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-domain frame stream")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    feats = sub.add_parser("features", help="texture feature extraction").add_subparsers(dest="action", required=True)
    p = feats.add_parser("extract")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", choices=("full", "reduced"), default="reduced")
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features_extract)

    p = sub.add_parser("select", help="AdaBoost feature importance and top-k selection")
    p.add_argument("--features", required=True)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--top-k", type=int, default=6)
    p.add_argument("--importance", choices=("alpha", "count"), default="alpha")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    dom = sub.add_parser("domain", help="domain detector").add_subparsers(dest="action", required=True)
    p = dom.add_parser("train")
    p.add_argument("--features", required=True)
    p.add_argument("--subset")
    p.add_argument("--trees", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_domain_train)
    p = dom.add_parser("eval")
    p.add_argument("--forest", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--features")
    p.add_argument("--grid", choices=("full", "reduced"), default="reduced")
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS)
    p.set_defaults(func=cmd_domain_eval)

    mdl = sub.add_parser("model", help="lightweight classifier").add_subparsers(dest="action", required=True)
    p = mdl.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=sorted(adaptation.MODEL_KINDS), default="softmax")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--grid", choices=("full", "reduced"), default="reduced")
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_model_train)

    p = sub.add_parser("replay", help="replay a frame stream through the adaptation loop")
    p.add_argument("--stream", required=True)
    p.add_argument("--config")
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True, help="metrics CSV")
    p.add_argument("--summary", required=True, help="summary JSON")
    p.add_argument("--static", action="store_true", help="disable all adaptation (baseline)")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, np.linalg.LinAlgError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"edgema: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
