"""Grayscale conversion, co-occurrence matrices and texture properties."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ANGLES = (0, 45, 90, 135)
PROPERTIES = (
    "contrast",
    "correlation",
    "homogeneity",
    "angular_second_moment",
    "dissimilarity",
    "energy",
)
MAX_DISTANCE = 30
DEFAULT_LEVELS = 32

# Best two distances per angle on the four-weather traffic benchmark.
REDUCED_DISTANCES = {0: (5, 9), 45: (4, 11), 90: (2, 4), 135: (2, 6)}


@dataclass(frozen=True)
class RgbFrame:
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"RGB frame must be (h, w, 3), got {px.shape}")
        object.__setattr__(self, "pixels", _as_u8(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class GrayFrame:
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"gray frame must be 2-D and non-empty, got {px.shape}")
        object.__setattr__(self, "pixels", _as_u8(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _as_u8(px: np.ndarray) -> np.ndarray:
    if px.dtype != np.uint8:
        if np.any(px < 0) or np.any(px > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        px = px.astype(np.uint8)
    px = np.ascontiguousarray(px)
    px.setflags(write=False)
    return px


@dataclass(frozen=True)
class GlcmOffset:
    angle: int
    distance: int

    def __post_init__(self):
        if self.angle not in ANGLES:
            raise ValueError(f"angle must be one of {ANGLES}, got {self.angle}")
        if int(self.distance) != self.distance or self.distance < 1:
            raise ValueError(f"distance must be an integer >= 1, got {self.distance}")

    @property
    def delta(self) -> tuple[int, int]:
        """(row step, column step)."""
        d = self.distance
        return {0: (0, d), 45: (-d, d), 90: (-d, 0), 135: (-d, -d)}[self.angle]


@dataclass(frozen=True)
class Glcm:
    levels: int
    raw: np.ndarray  # directed pair counts
    counts: np.ndarray  # raw + raw.T
    probs: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class TexturePropertySet:
    contrast: float
    correlation: float
    homogeneity: float
    angular_second_moment: float
    dissimilarity: float
    energy: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in PROPERTIES)


@dataclass(frozen=True)
class FeatureDescriptor:
    angle: int
    distance: int
    prop: str

    @property
    def name(self) -> str:
        return f"{self.prop}@{self.angle}deg/d{self.distance}"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    descriptors: tuple[FeatureDescriptor, ...]
    valid: np.ndarray  # False where the offset produced no in-bounds pairs

    def __post_init__(self):
        if len(self.values) != len(self.descriptors) or len(self.valid) != len(self.values):
            raise ValueError("values, descriptors and valid must have equal length")

    def __len__(self) -> int:
        return len(self.values)


def to_grayscale(frame: RgbFrame) -> GrayFrame:
    """Luminance 0.299 R + 0.587 G + 0.114 B, rounded half away from zero."""
    px = frame.pixels.astype(np.int64)
    # integer arithmetic in thousandths keeps the .5 cases exact
    lum = 299 * px[..., 0] + 587 * px[..., 1] + 114 * px[..., 2]
    g = (lum + 500) // 1000
    return GrayFrame(np.clip(g, 0, 255).astype(np.uint8))


def quantize(frame: GrayFrame, levels: int) -> GrayFrame:
    if not 2 <= levels <= 256:
        raise ValueError(f"levels must be in [2, 256], got {levels}")
    q = (frame.pixels.astype(np.int64) * levels) >> 8
    return GrayFrame(q.astype(np.uint8))


def _pair_views(img: np.ndarray, dr: int, dc: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = img.shape
    if abs(dr) >= h or abs(dc) >= w:
        empty = img[:0, :0]
        return empty, empty
    r0, r1 = max(0, -dr), h - max(0, dr)
    c0, c1 = max(0, -dc), w - max(0, dc)
    ref = img[r0:r1, c0:c1]
    nbr = img[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
    return ref, nbr


def compute_glcm(frame: GrayFrame, offset: GlcmOffset, levels: int) -> Glcm:
    """Co-occurrence matrix of an already-quantized frame.

    ``raw[i, j]`` counts positions (p, q) with I(p, q) = i and
    I(p + dr, q + dc) = j, both in bounds. ``counts`` is the symmetrized
    matrix and ``probs`` its normalization (all zeros if no pair fits).
    """
    img = frame.pixels
    if img.size and int(img.max()) >= levels:
        raise ValueError(f"frame has intensity {int(img.max())} >= levels {levels}")
    ref, nbr = _pair_views(img, *offset.delta)
    idx = ref.astype(np.int64).ravel() * levels + nbr.astype(np.int64).ravel()
    raw = np.bincount(idx, minlength=levels * levels).reshape(levels, levels)
    counts = raw + raw.T
    total = counts.sum()
    probs = counts / total if total > 0 else np.zeros((levels, levels))
    return Glcm(levels, raw, counts, probs)


def texture_properties(glcm: Glcm) -> TexturePropertySet:
    p = glcm.probs
    n = p.shape[0]
    i, j = np.indices((n, n), dtype=float)
    diff = i - j
    contrast = float(np.sum(p * diff**2))
    dissimilarity = float(np.sum(p * np.abs(diff)))
    homogeneity = float(np.sum(p / (1.0 + diff**2)))
    asm = float(np.sum(p**2))
    mu_i = np.sum(i * p)
    mu_j = np.sum(j * p)
    sd_i = np.sqrt(np.sum(p * (i - mu_i) ** 2))
    sd_j = np.sqrt(np.sum(p * (j - mu_j) ** 2))
    if sd_i * sd_j > 0:
        correlation = float(np.sum(p * (i - mu_i) * (j - mu_j)) / (sd_i * sd_j))
        correlation = min(1.0, max(-1.0, correlation))
    else:
        correlation = 1.0
    return TexturePropertySet(
        contrast=contrast,
        correlation=correlation,
        homogeneity=homogeneity,
        angular_second_moment=asm,
        dissimilarity=dissimilarity,
        energy=float(np.sqrt(asm)),
    )


def full_grid() -> list[GlcmOffset]:
    return [GlcmOffset(a, d) for a in ANGLES for d in range(1, MAX_DISTANCE + 1)]


def reduced_grid() -> list[GlcmOffset]:
    return [GlcmOffset(a, d) for a in ANGLES for d in REDUCED_DISTANCES[a]]


def grid_by_name(name: str) -> list[GlcmOffset]:
    if name == "full":
        return full_grid()
    if name == "reduced":
        return reduced_grid()
    raise ValueError(f"unknown grid {name!r} (expected 'full' or 'reduced')")


def _ordered(grid: Iterable[GlcmOffset]) -> list[GlcmOffset]:
    return sorted(grid, key=lambda o: (ANGLES.index(o.angle), o.distance))


def descriptors_for(grid: Sequence[GlcmOffset]) -> tuple[FeatureDescriptor, ...]:
    return tuple(
        FeatureDescriptor(o.angle, o.distance, prop)
        for o in _ordered(grid)
        for prop in PROPERTIES
    )


def extract_features(
    frame: GrayFrame | RgbFrame,
    grid: Sequence[GlcmOffset],
    levels: int = DEFAULT_LEVELS,
) -> FeatureVector:
    """Texture feature vector, angle-major then distance then property."""
    if not grid:
        raise ValueError("feature grid is empty")
    if isinstance(frame, RgbFrame):
        frame = to_grayscale(frame)
    if frame.height < 2 or frame.width < 2:
        raise ValueError(f"frame must be at least 2x2, got {frame.height}x{frame.width}")
    q = quantize(frame, levels)
    offsets = _ordered(grid)
    values = np.empty(len(offsets) * len(PROPERTIES))
    valid = np.empty(len(values), dtype=bool)
    for k, off in enumerate(offsets):
        glcm = compute_glcm(q, off, levels)
        sl = slice(k * len(PROPERTIES), (k + 1) * len(PROPERTIES))
        values[sl] = texture_properties(glcm).as_tuple()
        valid[sl] = glcm.total > 0
    return FeatureVector(values, descriptors_for(offsets), valid)


def feature_matrix(
    frames: Iterable[GrayFrame | RgbFrame],
    grid: Sequence[GlcmOffset],
    levels: int = DEFAULT_LEVELS,
) -> np.ndarray:
    rows = [extract_features(f, grid, levels).values for f in frames]
    if not rows:
        return np.empty((0, len(grid) * len(PROPERTIES)))
    return np.vstack(rows)
