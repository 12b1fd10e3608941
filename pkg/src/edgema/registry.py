"""Domain registry file: which training set and checkpoint belong to each domain.

Format::

    {"version": 1, "n_classes": 3,
     "profiles": [{"domain": "sunny", "features": "sunny_feats.json",
                   "checkpoint": "sunny_ckpt.json", "holdout_fraction": 0.25}, ...]}

Each profile names either ``features`` (output of ``features extract``) or a
frame ``manifest``; ``checkpoint`` is optional, a model is trained on the
non-holdout split when it is missing. Relative paths resolve against the
registry file's directory.
"""

from __future__ import annotations

import json
from pathlib import Path

from .adaptation import load_checkpoint
from .config import EngineConfig
from .dataset import extract_manifest, load_features
from .engine import DomainProfile, build_profile

REGISTRY_VERSION = 1


def load_registry(path, cfg: EngineConfig) -> list[DomainProfile]:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != REGISTRY_VERSION:
        raise ValueError(f"{path}: unsupported registry version {doc.get('version')!r}")
    entries = doc.get("profiles") or []
    if not entries:
        raise ValueError(f"{path}: registry lists no profiles")

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else path.parent / p

    sets = []
    for i, e in enumerate(entries):
        if "domain" not in e:
            raise ValueError(f"{path}: profile {i} has no 'domain'")
        if "features" in e:
            fs = load_features(resolve(e["features"]))
            if fs.grid != cfg.glcm.grid or fs.levels != cfg.glcm.levels:
                raise ValueError(
                    f"{path}: features for {e['domain']!r} use grid={fs.grid}/levels={fs.levels}, "
                    f"config expects {cfg.glcm.grid}/{cfg.glcm.levels}"
                )
        elif "manifest" in e:
            fs = extract_manifest(str(resolve(e["manifest"])), cfg.glcm.grid, cfg.glcm.levels)
        else:
            raise ValueError(f"{path}: profile {e['domain']!r} needs 'features' or 'manifest'")
        sets.append((e, fs))

    n_classes = doc.get("n_classes") or 1 + max(int(fs.y.max()) for _, fs in sets)
    profiles = []
    for i, (e, fs) in enumerate(sets):
        model = load_checkpoint(resolve(e["checkpoint"])) if e.get("checkpoint") else None
        profiles.append(
            build_profile(
                e["domain"],
                fs.X,
                fs.y,
                n_classes,
                holdout_fraction=float(e.get("holdout_fraction", 0.25)),
                seed=int(e.get("seed", cfg.engine_seed + i)),
                model=model,
            )
        )
    return profiles
