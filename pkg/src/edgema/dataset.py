"""Feature sets: texture vectors for a manifest, plus their JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .manifest import Manifest, read_manifest
from .texture import DEFAULT_LEVELS, descriptors_for, extract_features, grid_by_name

FEATURES_VERSION = 1


@dataclass
class FeatureSet:
    X: np.ndarray
    labels: list[int | None]
    domains: list[str | None]
    paths: list[str] = field(default_factory=list)
    timestamps: list[float] = field(default_factory=list)
    grid: str = "reduced"
    levels: int = DEFAULT_LEVELS

    def __len__(self) -> int:
        return len(self.X)

    @property
    def y(self) -> np.ndarray:
        if any(v is None for v in self.labels):
            raise ValueError("feature set has unlabeled records")
        return np.asarray(self.labels, dtype=np.int64)

    def domain_index(self) -> tuple[np.ndarray, list[str]]:
        """Domain names mapped to indices in order of first appearance."""
        if any(d is None for d in self.domains):
            raise ValueError("feature set has records without a domain")
        names: list[str] = []
        for d in self.domains:
            if d not in names:
                names.append(d)
        return np.array([names.index(d) for d in self.domains], dtype=np.int64), names

    def descriptor_names(self) -> list[str]:
        return [d.name for d in descriptors_for(grid_by_name(self.grid))]


def extract_manifest(manifest: Manifest | str, grid: str = "reduced", levels: int = DEFAULT_LEVELS) -> FeatureSet:
    if not isinstance(manifest, Manifest):
        manifest = read_manifest(manifest)
    offsets = grid_by_name(grid)
    rows = [extract_features(manifest.load_frame(r), offsets, levels).values for r in manifest.records]
    width = len(offsets) * 6
    return FeatureSet(
        X=np.vstack(rows) if rows else np.empty((0, width)),
        labels=list(manifest.labels),
        domains=list(manifest.domains),
        paths=[r.path for r in manifest.records],
        timestamps=[r.timestamp for r in manifest.records],
        grid=grid,
        levels=levels,
    )


def save_features(path, fs: FeatureSet) -> None:
    doc = {
        "version": FEATURES_VERSION,
        "grid": fs.grid,
        "levels": fs.levels,
        "descriptors": fs.descriptor_names(),
        "records": [
            {
                "path": fs.paths[i] if fs.paths else None,
                "label": fs.labels[i],
                "domain": fs.domains[i],
                "timestamp": fs.timestamps[i] if fs.timestamps else None,
                "values": [float(v) for v in fs.X[i]],
            }
            for i in range(len(fs))
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_features(path) -> FeatureSet:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != FEATURES_VERSION:
        raise ValueError(f"{path}: unsupported features version {doc.get('version')!r}")
    recs = doc["records"]
    width = len(doc.get("descriptors", [])) or (len(recs[0]["values"]) if recs else 0)
    X = np.array([r["values"] for r in recs], dtype=float).reshape(len(recs), width)
    return FeatureSet(
        X=X,
        labels=[r.get("label") for r in recs],
        domains=[r.get("domain") for r in recs],
        paths=[r.get("path") for r in recs],
        timestamps=[r.get("timestamp") for r in recs],
        grid=doc["grid"],
        levels=int(doc["levels"]),
    )
