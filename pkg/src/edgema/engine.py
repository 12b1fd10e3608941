"""Batch-wise adaptation loop: infer, detect domain, gate label shift, fine-tune, swap."""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import label_shift as ls
from .adaptation import FineTuneConfig, fine_tune, train_model
from .config import EngineConfig
from .forest import RandomForest, detect_domain, train_forest
from .selection import select_top_k, train_adaboost
from .texture import GrayFrame, RgbFrame, extract_features, grid_by_name

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "batch_index",
    "t_start",
    "t_end",
    "domain_pred",
    "domain_true",
    "domain_changed",
    "kl",
    "decision",
    "finetune_ms",
    "top1_acc",
    "frames",
    "infer_ms_p50",
    "infer_ms_p95",
)
DECISIONS = ("lag", "adapt_domain", "adapt_labels")


class IncompatibleModelError(ValueError):
    pass


@dataclass(frozen=True)
class StreamFrame:
    image: GrayFrame | RgbFrame | None
    timestamp: float
    label: int | None = None
    domain: str | None = None
    features: np.ndarray | None = None  # precomputed texture vector, skips extraction


@dataclass(frozen=True)
class StreamBatch:
    index: int
    frames: tuple[StreamFrame, ...]

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a batch needs at least one frame")
        ts = [f.timestamp for f in self.frames]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"batch {self.index}: timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class DomainProfile:
    """Per-domain training data, source label prior, holdout confusion and checkpoint."""

    name: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_holdout: np.ndarray
    y_holdout: np.ndarray
    model: object
    prior: np.ndarray  # P_S over the full training set
    confusion: np.ndarray  # joint, on the holdout split

    @property
    def n_classes(self) -> int:
        return len(self.prior)


def build_profile(
    name: str,
    X,
    y,
    n_classes: int,
    holdout_fraction: float = 0.25,
    seed: int = 0,
    model=None,
) -> DomainProfile:
    """Split a domain training set, fit (or adopt) its checkpoint, estimate C and P_S."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    # stratified split keeps every class in the holdout
    hold = []
    for k in range(n_classes):
        idx = np.nonzero(y == k)[0]
        if len(idx) < 2:
            raise ValueError(f"domain {name!r}: class {k} needs at least two training samples")
        idx = rng.permutation(idx)
        hold.extend(idx[: max(1, int(round(holdout_fraction * len(idx))))])
    mask = np.zeros(len(y), dtype=bool)
    mask[hold] = True
    X_tr, y_tr, X_ho, y_ho = X[~mask], y[~mask], X[mask], y[mask]
    if model is None:
        model = train_model(X_tr, y_tr, n_classes)
    return DomainProfile(
        name=name,
        X_train=X_tr,
        y_train=y_tr,
        X_holdout=X_ho,
        y_holdout=y_ho,
        model=model,
        prior=ls.label_distribution(y, n_classes),
        confusion=ls.estimate_confusion(model, X_ho, y_ho, n_classes),
    )


def train_detector(profiles: Sequence[DomainProfile], cfg: EngineConfig) -> RandomForest:
    """AdaBoost feature selection then a random forest over all profile data."""
    X = np.vstack([np.vstack([p.X_train, p.X_holdout]) for p in profiles])
    d = np.concatenate([np.full(len(p.X_train) + len(p.X_holdout), i) for i, p in enumerate(profiles)])
    ens = train_adaboost(X, d, rounds=cfg.selection.rounds, n_classes=len(profiles))
    subset = select_top_k(ens.importance, min(cfg.selection.top_k, X.shape[1]))
    return train_forest(
        X, d, n_trees=cfg.forest.trees, seed=cfg.forest.seed, feature_subset=subset,
        domain_labels=[p.name for p in profiles],
    )


@dataclass(frozen=True)
class EngineState:
    domain: int
    model: object
    p_m: np.ndarray
    weights: np.ndarray | None = None
    provenance: str = ""
    version: int = 0


@dataclass
class BatchReport:
    batch_index: int
    t_start: float
    t_end: float
    domain_pred: str
    domain_true: str | None
    domain_changed: bool
    q: np.ndarray
    kl: float
    decision: str
    finetune_ms: float | None
    top1_acc: float | None
    frames: int
    correct: int
    labeled: int
    infer_ms_p50: float | None
    infer_ms_p95: float | None
    weights: np.ndarray | None = None
    model_version: int = 0
    error: str | None = None

    def csv_row(self) -> list[str]:
        def num(v, fmt="{:.6f}"):
            return "" if v is None else fmt.format(v)

        return [
            str(self.batch_index),
            num(self.t_start),
            num(self.t_end),
            self.domain_pred,
            self.domain_true or "",
            "1" if self.domain_changed else "0",
            "inf" if math.isinf(self.kl) else num(self.kl),
            self.decision,
            num(self.finetune_ms, "{:.3f}"),
            num(self.top1_acc),
            str(self.frames),
            num(self.infer_ms_p50, "{:.3f}"),
            num(self.infer_ms_p95, "{:.3f}"),
        ]


def swap_model(state: EngineState, model, provenance: str = "") -> EngineState:
    """New state with ``model`` active; refuses dimension-incompatible models."""
    cur = state.model
    if getattr(model, "n_features", None) != getattr(cur, "n_features", None) or getattr(
        model, "n_classes", None
    ) != getattr(cur, "n_classes", None):
        raise IncompatibleModelError("replacement model has different input/class dimensions")
    return replace(state, model=model, provenance=provenance or state.provenance, version=state.version + 1)


class EdgeEngine:
    """Holds the live state and processes batches in order.

    The active model lives in a single slot. Each batch is inferred against
    the model present when the batch starts; a replacement produced by
    fine-tuning becomes visible at the next batch boundary. With
    ``async_finetune`` the job overlaps inference of the following batch.
    """

    def __init__(self, profiles: Sequence[DomainProfile], detector: RandomForest | None, cfg: EngineConfig):
        if not profiles:
            raise ValueError("registry has no domain profiles")
        self.profiles = list(profiles)
        self.names = [p.name for p in self.profiles]
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate domain names in registry")
        k = self.profiles[0].n_classes
        if any(p.n_classes != k for p in self.profiles):
            raise ValueError("all domain profiles must share the class set")
        self.n_classes = k
        self.cfg = cfg
        self.detector = detector
        self._grid = grid_by_name(cfg.glcm.grid)
        start = 0 if cfg.initial_domain is None else self._index(cfg.initial_domain)
        prof = self.profiles[start]
        self.state = EngineState(start, prof.model, prof.prior.copy(), None, f"{prof.name}/checkpoint")
        self._first = cfg.initial_pm == "first_batch"
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=1) if cfg.async_finetune else None
        self._pending: tuple[Future, dict] | None = None

    def _index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"domain {name!r} is not in the registry") from None

    @property
    def active_model(self):
        with self._lock:
            return self.state.model

    def swap(self, model, provenance: str = "") -> None:
        with self._lock:
            self.state = swap_model(self.state, model, provenance)

    def close(self) -> None:
        if self._pending is not None:
            self._resolve()
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    # -- per-batch stages --------------------------------------------------

    def features(self, frame: StreamFrame) -> np.ndarray:
        if frame.features is not None:
            return np.asarray(frame.features, dtype=float)
        return extract_features(frame.image, self._grid, self.cfg.glcm.levels).values

    def _infer(self, batch: StreamBatch, model):
        timing = self.cfg.record_timing
        feats, preds, lat = [], [], []
        for fr in batch.frames:
            t0 = time.perf_counter() if timing else 0.0
            x = self.features(fr)
            preds.append(int(model.predict(x[None, :])[0]))
            if timing:
                lat.append(1000.0 * (time.perf_counter() - t0))
            feats.append(x)
        return np.vstack(feats), np.asarray(preds), lat

    def _finetune_job(self, profile: DomainProfile, q: np.ndarray, batch_index: int):
        t0 = time.perf_counter()
        w = ls.compute_importance_weights(profile.confusion, q)
        cfg = self.cfg.finetune
        seeded = FineTuneConfig(cfg.fraction, cfg.iterations, cfg.learning_rate, seed=[cfg.seed, batch_index])
        model = fine_tune(profile.model, profile.X_train, profile.y_train, w, seeded)
        return model, w, 1000.0 * (time.perf_counter() - t0)

    def _commit(self, job: dict, result) -> None:
        model, w, _ = result
        with self._lock:
            st = swap_model(self.state, model, f"{self.names[job['domain']]}/finetune@{job['batch']}")
            self.state = replace(st, domain=job["domain"], p_m=job["q"].copy(), weights=w)

    def _resolve(self) -> str | None:
        fut, job = self._pending
        self._pending = None
        try:
            self._commit(job, fut.result())
        except Exception as exc:  # fail-static: keep the previous model
            log.warning("fine-tune for batch %d failed: %s", job["batch"], exc)
            return f"fine-tune for batch {job['batch']} failed: {exc}"
        return None

    def process_batch(self, batch: StreamBatch) -> BatchReport:
        cfg = self.cfg
        model = self.active_model
        X, preds, lat = self._infer(batch, model)
        errors = []
        if self._pending is not None:
            err = self._resolve()
            if err:
                errors.append(err)

        state = self.state
        cur = state.domain
        detected = cur
        if cfg.domain_detection and self.detector is not None:
            dec = detect_domain(self.detector, list(X), cfg.domain_check_frames)
            name = self.detector.domain_labels[dec.domain]
            if name in self.names:
                detected = self.names.index(name)
            else:
                errors.append(f"detected domain {name!r} is not registered; keeping {self.names[cur]!r}")
        changed = detected != cur

        prof = self.profiles[detected]
        # q uses the profile's own checkpoint so that it pairs with that profile's confusion matrix
        q = ls.estimate_predicted_distribution(prof.model.predict(X), self.n_classes)
        if self._first:
            self._first = False
            with self._lock:
                self.state = replace(self.state, p_m=q.copy())
            state = self.state
        d = ls.kl_divergence(q, state.p_m)

        if changed:
            decision = "adapt_domain"
        elif ls.shift_gate(d, cfg.kl_threshold_D) == "adapt":
            decision = "adapt_labels"
        else:
            decision = "lag"

        ft_ms = None
        if decision != "lag":
            job = {"domain": detected, "q": q, "batch": batch.index}
            if not cfg.adaptation:
                # detection without retraining: switch to the profile checkpoint as-is
                if changed:
                    with self._lock:
                        st = swap_model(self.state, prof.model, f"{prof.name}/checkpoint")
                        self.state = replace(st, domain=detected, p_m=q.copy())
            elif self._pool is not None:
                self._pending = (self._pool.submit(self._finetune_job, prof, q, batch.index), job)
            else:
                try:
                    result = self._finetune_job(prof, q, batch.index)
                    self._commit(job, result)
                    ft_ms = result[2]
                except Exception as exc:
                    log.warning("fine-tune for batch %d failed: %s", batch.index, exc)
                    errors.append(f"fine-tune failed: {exc}")

        labeled = [(p, f.label) for p, f in zip(preds, batch.frames) if f.label is not None]
        correct = sum(int(p == t) for p, t in labeled)
        true_domains = [f.domain for f in batch.frames if f.domain is not None]
        return BatchReport(
            batch_index=batch.index,
            t_start=batch.frames[0].timestamp,
            t_end=batch.frames[-1].timestamp,
            domain_pred=self.names[detected],
            domain_true=max(set(true_domains), key=lambda s: (true_domains.count(s), s)) if true_domains else None,
            domain_changed=changed,
            q=q,
            kl=d,
            decision=decision,
            finetune_ms=ft_ms if cfg.record_timing else None,
            top1_acc=correct / len(labeled) if labeled else None,
            frames=len(batch),
            correct=correct,
            labeled=len(labeled),
            infer_ms_p50=float(np.percentile(lat, 50)) if lat else None,
            infer_ms_p95=float(np.percentile(lat, 95)) if lat else None,
            weights=self.state.weights,
            model_version=self.state.version,
            error="; ".join(errors) or None,
        )


def iter_batches(frames: Iterable[StreamFrame], batch_size: int, stride: int = 1) -> Iterator[StreamBatch]:
    """Consecutive batches of ``batch_size`` frames; the final partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    buf: list[StreamFrame] = []
    index = 0
    for i, fr in enumerate(frames):
        if i % stride:
            continue
        buf.append(fr)
        if len(buf) == batch_size:
            yield StreamBatch(index, tuple(buf))
            buf, index = [], index + 1
    if buf:
        yield StreamBatch(index, tuple(buf))


def summarize(reports: Sequence[BatchReport], cfg: EngineConfig) -> dict:
    counts = {k: sum(r.decision == k for r in reports) for k in DECISIONS}
    labeled = sum(r.labeled for r in reports)
    return {
        "batches": len(reports),
        "adapt_domain": counts["adapt_domain"],
        "adapt_labels": counts["adapt_labels"],
        "lag": counts["lag"],
        "mean_top1": sum(r.correct for r in reports) / labeled if labeled else None,
        "frames": sum(r.frames for r in reports),
        "errors": sum(r.error is not None for r in reports),
        "config_echo": cfg.to_dict(),
    }


def write_metrics_csv(path, reports: Sequence[BatchReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerow(r.csv_row())


def run_replay(
    frames: Iterable[StreamFrame],
    engine: EdgeEngine,
    metrics_path=None,
    summary_path=None,
) -> tuple[list[BatchReport], dict]:
    """Fold ``process_batch`` over the stream and optionally write CSV + summary JSON."""
    reports = []
    try:
        for batch in iter_batches(frames, engine.cfg.batch_size, engine.cfg.stride):
            reports.append(engine.process_batch(batch))
    finally:
        engine.close()
    if not reports:
        raise ValueError("stream is empty")
    summary = summarize(reports, engine.cfg)
    if metrics_path is not None:
        write_metrics_csv(metrics_path, reports)
    if summary_path is not None:
        with open(summary_path, "w") as fh:
            json.dump(summary, fh, indent=1)
    return reports, summary
