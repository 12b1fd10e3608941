"""Procedural multi-domain texture streams.

Each frame renders one class texture (stripes, checkerboard or blobs) and then
applies its domain's appearance transform: brightness gain, gamma and
additive Gaussian noise. Every frame draws from its own ``default_rng([seed,
index])``, so frames can be produced in any order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import pnm
from .manifest import ManifestRecord, write_manifest
from .texture import GrayFrame

FPS = 25.0


@dataclass(frozen=True)
class DomainStyle:
    name: str
    gain: float = 1.0
    noise: float = 0.0
    gamma: float = 1.0


@dataclass(frozen=True)
class TextureClass:
    kind: str  # stripes | checker | blobs
    period: float = 8.0  # stripe period / checker cell size / blob radius, pixels
    density: float = 0.02  # blobs per pixel (blobs only)
    jitter: float = 0.15  # relative per-frame variation of period
    fade: float = 0.0  # per-frame amplitude drawn from [1 - fade, 1]
    low: int = 50
    high: int = 200


@dataclass(frozen=True)
class Segment:
    domain: int
    mix: tuple[float, ...]
    length: int


@dataclass(frozen=True)
class SynthSpec:
    domains: tuple[DomainStyle, ...]
    classes: tuple[TextureClass, ...]
    schedule: tuple[Segment, ...]
    seed: int = 0
    width: int = 64
    height: int = 64
    fps: float = FPS
    frames_per_segment: int = 100

    def __post_init__(self):
        if not self.schedule:
            raise ValueError("schedule must not be empty")
        for seg in self.schedule:
            if not 0 <= seg.domain < len(self.domains):
                raise ValueError(f"segment domain {seg.domain} out of range")
            mix = np.asarray(seg.mix, dtype=float)
            if len(mix) != len(self.classes) or np.any(mix < 0) or abs(mix.sum() - 1) > 1e-9:
                raise ValueError(f"class mix {seg.mix} is not a distribution over {len(self.classes)} classes")
            if seg.length < 1:
                raise ValueError("segment length must be >= 1")

    @property
    def n_frames(self) -> int:
        return sum(s.length for s in self.schedule)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = [{**s, "mix": list(s["mix"])} for s in d["schedule"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        fps_default = d.get("frames_per_segment", 100)
        schedule = tuple(
            Segment(int(s["domain"]), tuple(float(v) for v in s["mix"]), int(s.get("length", fps_default)))
            for s in d["schedule"]
        )
        return cls(
            domains=tuple(DomainStyle(**x) for x in d["domains"]),
            classes=tuple(TextureClass(**x) for x in d["classes"]),
            schedule=schedule,
            seed=int(d.get("seed", 0)),
            width=int(d.get("width", 64)),
            height=int(d.get("height", 64)),
            fps=float(d.get("fps", FPS)),
            frames_per_segment=int(fps_default),
        )


@dataclass(frozen=True)
class SynthFrame:
    index: int
    image: GrayFrame
    label: int
    domain: int
    timestamp: float


def render_texture(cls: TextureClass, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Float image in [low, high] for one texture class."""
    period = cls.period * (1.0 + cls.jitter * rng.uniform(-1, 1))
    rows, cols = np.mgrid[0:h, 0:w].astype(float)
    if cls.kind == "stripes":
        theta = rng.uniform(0, np.pi)
        u = rows * np.cos(theta) + cols * np.sin(theta)
        base = 0.5 + 0.5 * np.sin(2 * np.pi * u / period + rng.uniform(0, 2 * np.pi))
    elif cls.kind == "checker":
        dr, dc = rng.uniform(0, period, 2)
        base = ((np.floor((rows + dr) / period) + np.floor((cols + dc) / period)) % 2).astype(float)
    elif cls.kind == "blobs":
        n = max(1, rng.poisson(cls.density * h * w))
        base = np.zeros((h, w))
        cy = rng.uniform(0, h, n)
        cx = rng.uniform(0, w, n)
        for y0, x0 in zip(cy, cx):
            base += np.exp(-((rows - y0) ** 2 + (cols - x0) ** 2) / (2 * period**2))
        base = np.clip(base, 0, 1)
    else:
        raise ValueError(f"unknown texture kind {cls.kind!r}")
    amp = 1.0 - cls.fade * rng.uniform(0, 1)
    mid = 0.5 * (cls.low + cls.high)
    return mid + amp * (cls.high - cls.low) * (base - 0.5)


def apply_domain(img: np.ndarray, style: DomainStyle, rng: np.random.Generator) -> np.ndarray:
    """Gain and gamma on normalized intensity, then additive noise; rounded to uint8."""
    x = np.clip(img, 0, 255) / 255.0
    x = 255.0 * (style.gain * x) ** style.gamma
    noise = rng.normal(0.0, 1.0, img.shape) * style.noise
    return np.clip(np.rint(x + noise), 0, 255).astype(np.uint8)


def render_frame(spec: SynthSpec, index: int, label: int, domain: int) -> GrayFrame:
    rng = np.random.default_rng([spec.seed, index, 1])
    tex = render_texture(spec.classes[label], spec.height, spec.width, rng)
    return GrayFrame(apply_domain(np.rint(tex), spec.domains[domain], rng))


def iter_frames(spec: SynthSpec) -> Iterator[SynthFrame]:
    index = 0
    n_classes = len(spec.classes)
    for seg in spec.schedule:
        mix = np.asarray(seg.mix, dtype=float)
        for _ in range(seg.length):
            label = int(np.random.default_rng([spec.seed, index, 0]).choice(n_classes, p=mix))
            yield SynthFrame(index, render_frame(spec, index, label, seg.domain), label, seg.domain, index / spec.fps)
            index += 1


def schedule_labels(spec: SynthSpec) -> list[tuple[int, int, float]]:
    """(label, domain, timestamp) per frame, derived without rendering."""
    out = []
    index = 0
    for seg in spec.schedule:
        mix = np.asarray(seg.mix, dtype=float)
        for _ in range(seg.length):
            label = int(np.random.default_rng([spec.seed, index, 0]).choice(len(spec.classes), p=mix))
            out.append((label, seg.domain, index / spec.fps))
            index += 1
    return out


def synth_generate(spec: SynthSpec, out_dir) -> list[ManifestRecord]:
    """Write ``frame_000000.pgm``... plus ``manifest.jsonl`` and ``synth_spec.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(6, len(str(spec.n_frames - 1)))
    records = []
    for fr in iter_frames(spec):
        name = f"frame_{fr.index:0{width}d}.pgm"
        pnm.write(out / name, fr.image)
        records.append(ManifestRecord(name, fr.label, round(fr.timestamp, 6), spec.domains[fr.domain].name))
    write_manifest(out / "manifest.jsonl", records)
    with open(out / "synth_spec.json", "w") as fh:
        json.dump(spec.to_dict(), fh, indent=1)
    return records


# -- ready-made scenarios -----------------------------------------------------

WEATHER = (
    DomainStyle("sunny", gain=1.0, noise=2.0, gamma=1.0),
    DomainStyle("cloudy", gain=0.65, noise=5.0, gamma=1.0),
    DomainStyle("rainy", gain=0.9, noise=22.0, gamma=0.9),
    DomainStyle("night", gain=0.35, noise=8.0, gamma=1.6),
)

TEXTURES = (
    TextureClass("stripes", period=7.0),
    TextureClass("checker", period=5.0),
    TextureClass("blobs", period=3.0, density=0.02),
)


def domain_training_spec(domain: int, n: int, seed: int, domains=WEATHER, classes=TEXTURES) -> SynthSpec:
    """Single-domain, uniform-mix set used to build a domain profile."""
    k = len(classes)
    return SynthSpec(domains, classes, (Segment(domain, tuple([1.0 / k] * k), n),), seed=seed)


def detector_spec(n_per_domain: int, seed: int, domains=WEATHER, classes=TEXTURES) -> SynthSpec:
    k = len(classes)
    uniform = tuple([1.0 / k] * k)
    return SynthSpec(domains, classes, tuple(Segment(d, uniform, n_per_domain) for d in range(len(domains))), seed=seed)


def drifting_stream_spec(seed: int, segment_length: int = 500, domains=WEATHER, classes=TEXTURES) -> SynthSpec:
    """Eight segments: four weather changes interleaved with class-mix shifts."""
    mixes = [
        (1 / 3, 1 / 3, 1 / 3),
        (0.7, 0.2, 0.1),
        (0.1, 0.2, 0.7),
        (0.2, 0.7, 0.1),
    ]
    plan = [(0, 0), (0, 1), (1, 2), (1, 3), (3, 1), (3, 2), (2, 3), (2, 0)]
    schedule = tuple(Segment(d, mixes[m], segment_length) for d, m in plan)
    return SynthSpec(domains, classes, schedule, seed=seed)
