"""JSON-Lines frame manifests: one ``{path, label, timestamp, domain}`` per line."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import pnm


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: int | None
    timestamp: float
    domain: str | None = None

    def to_json(self) -> str:
        d = {"path": self.path, "label": self.label, "timestamp": self.timestamp}
        if self.domain is not None:
            d["domain"] = self.domain
        return json.dumps(d)


@dataclass(frozen=True)
class Manifest:
    root: Path
    records: tuple[ManifestRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, rec: ManifestRecord) -> Path:
        p = Path(rec.path)
        return p if p.is_absolute() else self.root / p

    def load_frame(self, rec: ManifestRecord):
        return pnm.read(self.resolve(rec))

    @property
    def domains(self) -> list[str | None]:
        return [r.domain for r in self.records]

    @property
    def labels(self) -> list[int | None]:
        return [r.label for r in self.records]


def parse_record(line: str, lineno: int, n_classes: int | None = None) -> ManifestRecord:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(d, dict):
        raise ManifestError(f"line {lineno}: expected an object")
    path = d.get("path")
    if not isinstance(path, str) or not path:
        raise ManifestError(f"line {lineno}: missing or empty 'path'")
    label = d.get("label")
    if label is not None:
        if isinstance(label, bool) or not isinstance(label, int) or label < 0:
            raise ManifestError(f"line {lineno}: 'label' must be a non-negative integer")
        if n_classes is not None and label >= n_classes:
            raise ManifestError(f"line {lineno}: label {label} outside [0, {n_classes})")
    ts = d.get("timestamp")
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        raise ManifestError(f"line {lineno}: 'timestamp' must be a number")
    domain = d.get("domain")
    if domain is not None and not isinstance(domain, str):
        raise ManifestError(f"line {lineno}: 'domain' must be a string")
    return ManifestRecord(path, label, float(ts), domain)


def read_manifest(path, n_classes: int | None = None) -> Manifest:
    path = Path(path)
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                records.append(parse_record(line, lineno, n_classes))
    return Manifest(path.parent, tuple(records))


def write_manifest(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
