"""Reusable experiment set-ups: simulated label shift and synthetic drifting streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import label_shift as ls
from . import synth
from .config import EngineConfig
from .engine import DomainProfile, EdgeEngine, StreamFrame, build_profile, run_replay, train_detector
from .texture import feature_matrix, grid_by_name


def noisy_predictions(y, accuracy: float, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric-noise classifier: correct w.p. ``accuracy``, else a uniformly random other class."""
    y = np.asarray(y)
    wrong = rng.random(len(y)) >= accuracy
    shift = rng.integers(1, n_classes, len(y))
    return np.where(wrong, (y + shift) % n_classes, y)


def bbse_recovery_error(
    source_prior,
    ratios,
    n_holdout: int,
    n_batch: int,
    accuracy: float,
    seed: int,
) -> tuple[float, np.ndarray]:
    """L-infinity error of recovered importance weights against the true ratios."""
    rng = np.random.default_rng(seed)
    ps = np.asarray(source_prior, dtype=float)
    pt = ps * np.asarray(ratios, dtype=float)
    k = len(ps)
    y_src = rng.choice(k, n_holdout, p=ps)
    y_tgt = rng.choice(k, n_batch, p=pt)
    C = ls.confusion_from_predictions(noisy_predictions(y_src, accuracy, k, rng), y_src, k)
    q = ls.estimate_predicted_distribution(noisy_predictions(y_tgt, accuracy, k, rng), k)
    w = ls.compute_importance_weights(C, q)
    return float(np.max(np.abs(w - np.asarray(ratios)))), w


@dataclass
class DriftScenario:
    profiles: list[DomainProfile]
    stream: list[StreamFrame]
    detector_features: np.ndarray


def synthetic_profiles(seed: int, n_per_domain: int, cfg: EngineConfig, domains=synth.WEATHER, classes=synth.TEXTURES):
    grid = grid_by_name(cfg.glcm.grid)
    profiles = []
    for d, style in enumerate(domains):
        spec = synth.domain_training_spec(d, n_per_domain, seed=10_000 * (seed + 1) + d, domains=domains, classes=classes)
        frames = list(synth.iter_frames(spec))
        X = feature_matrix((f.image for f in frames), grid, cfg.glcm.levels)
        profiles.append(build_profile(style.name, X, [f.label for f in frames], len(classes), seed=seed + d))
    return profiles


def synthetic_stream(spec: synth.SynthSpec, cfg: EngineConfig, precompute: bool = True) -> list[StreamFrame]:
    grid = grid_by_name(cfg.glcm.grid)
    frames = list(synth.iter_frames(spec))
    X = feature_matrix((f.image for f in frames), grid, cfg.glcm.levels) if precompute else [None] * len(frames)
    return [
        StreamFrame(f.image, f.timestamp, f.label, spec.domains[f.domain].name, X[i])
        for i, f in enumerate(frames)
    ]


def adaptive_vs_static(seed: int, n_per_domain: int = 500, segment_length: int = 500, cfg: EngineConfig | None = None):
    """Replay one seeded drifting stream with and without adaptation.

    Returns ``(adaptive_summary, static_summary, adaptive_reports, static_reports)``.
    """
    cfg = (cfg or EngineConfig()).with_seed(seed)
    profiles = synthetic_profiles(seed, n_per_domain, cfg)
    detector = train_detector(profiles, cfg)
    stream = synthetic_stream(synth.drifting_stream_spec(seed, segment_length), cfg)
    rep_a, sum_a = run_replay(stream, EdgeEngine(profiles, detector, cfg))
    rep_s, sum_s = run_replay(stream, EdgeEngine(profiles, None, cfg.static()))
    return sum_a, sum_s, rep_a, rep_s
