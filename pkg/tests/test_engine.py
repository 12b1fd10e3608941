import csv
import math

import numpy as np
import pytest

from edgema import engine as engine_mod
from edgema.adaptation import SoftmaxModel
from edgema.config import EngineConfig
from edgema.engine import (
    CSV_COLUMNS,
    DomainProfile,
    EdgeEngine,
    IncompatibleModelError,
    StreamBatch,
    StreamFrame,
    build_profile,
    iter_batches,
    run_replay,
    summarize,
)

K = 3
# domain B permutes the class centres so that A's model is wrong there
CENTRES = {0: np.eye(3) * 4.0, 1: np.eye(3)[[1, 2, 0]] * 4.0}


def domain_samples(domain, n, rng, prior=(1 / 3, 1 / 3, 1 / 3)):
    y = rng.choice(K, n, p=prior)
    X = CENTRES[domain][y] + rng.normal(0, 0.5, (n, 3))
    return np.hstack([X, np.full((n, 1), float(domain))]), y


def make_profiles(seed=0, n=300):
    rng = np.random.default_rng(seed)
    out = []
    for d, name in enumerate(["A", "B"]):
        X, y = domain_samples(d, n, rng)
        out.append(build_profile(name, X, y, K, seed=seed + d))
    return out


class ScriptedDetector:
    """Reads the domain straight off the last feature; one vote per tree."""

    def __init__(self, labels=("A", "B"), n_trees=4):
        self.domain_labels = list(labels)
        self.n_classes = len(labels)
        self.n_trees = n_trees

    def predict(self, x):
        d = int(round(x[-1]))
        votes = np.zeros(self.n_classes, dtype=np.int64)
        votes[d] = self.n_trees
        return d, votes


def stream(segments, seed=1, batch=50):
    """``segments`` is a list of (domain, prior) per batch."""
    rng = np.random.default_rng(seed)
    frames, t = [], 0.0
    names = ["A", "B"]
    for d, prior in segments:
        X, y = domain_samples(d, batch, rng, prior)
        for x, label in zip(X, y):
            frames.append(StreamFrame(None, t, int(label), names[d], x))
            t += 0.04
    return frames


def kl_oracle(p, m, eps=1e-6):
    ps = [v + eps for v in p]
    ms = [v + eps for v in m]
    zp, zm = sum(ps), sum(ms)
    total = 0.0
    for raw, a, b in zip(p, ps, ms):
        if raw > 0:
            total += (a / zp) * math.log((a / zp) / (b / zm))
    return max(total, 0.0)


UNIFORM = (1 / 3, 1 / 3, 1 / 3)
SKEW = (0.8, 0.1, 0.1)


def cfg(**kw):
    return EngineConfig(batch_size=50, **kw)


def test_first_batch_prior_gives_lag():
    eng = EdgeEngine(make_profiles(), ScriptedDetector(), cfg(initial_pm="first_batch"))
    rep = eng.process_batch(next(iter_batches(stream([(0, UNIFORM)]), 50)))
    assert rep.kl == 0.0 and rep.decision == "lag" and rep.error is None


def test_domain_change_adapts_and_swaps():
    profiles = make_profiles()
    eng = EdgeEngine(profiles, ScriptedDetector(), cfg())
    reps, _ = run_replay(stream([(0, UNIFORM), (1, UNIFORM), (1, UNIFORM)]), eng)
    assert [r.domain_pred for r in reps] == ["A", "B", "B"]
    assert reps[1].decision == "adapt_domain" and reps[1].domain_changed
    assert eng.state.domain == 1
    np.testing.assert_array_equal(eng.state.p_m, reps[1].q if reps[2].decision == "lag" else reps[2].q)
    assert eng.state.model is not profiles[0].model
    # the batch after the switch is served by the B-derived model
    assert reps[2].top1_acc > 0.8 > reps[1].top1_acc


def test_adapt_labels_on_skewed_histogram():
    profiles = make_profiles()
    eng = EdgeEngine(profiles, ScriptedDetector(), cfg())
    rep = eng.process_batch(StreamBatch(0, tuple(stream([(0, SKEW)], batch=200))))
    preds = profiles[0].model.predict(np.vstack([f.features for f in stream([(0, SKEW)], batch=200)]))
    q = np.bincount(preds, minlength=K) / len(preds)
    np.testing.assert_array_equal(rep.q, q)
    assert rep.kl == pytest.approx(kl_oracle(q, profiles[0].prior), rel=1e-12)
    assert rep.decision == "adapt_labels"
    np.testing.assert_array_equal(eng.state.p_m, q)
    assert rep.weights[0] > 1 > rep.weights[1]


class EchoModel:
    """Predicts the class stored in the first feature; gives exact histograms."""

    n_features, n_classes = 4, K

    def predict(self, X):
        return np.asarray(X)[:, 0].astype(int)


def echo_profile(prior):
    X = np.zeros((6, 4))
    y = np.array([0, 0, 1, 1, 2, 2])
    X[:, 0] = y
    return DomainProfile("A", X, y, X, y, EchoModel(), np.asarray(prior), np.diag([1 / 3] * 3))


def echo_batch(labels, index=0):
    return StreamBatch(index, tuple(StreamFrame(None, 0.04 * i, int(c), "A", np.array([c, 0, 0, 0.0])) for i, c in enumerate(labels)))


@pytest.mark.parametrize("hist", [[10, 10, 10], [25, 3, 2], [0, 30, 0], [14, 8, 8]])
def test_gate_matches_kl_oracle(hist):
    prior = [0.5, 0.3, 0.2]
    eng = EdgeEngine([echo_profile(prior)], None, cfg(adaptation=False))
    labels = np.repeat(np.arange(3), hist)
    rep = eng.process_batch(echo_batch(labels))
    q = np.asarray(hist) / sum(hist)
    d = kl_oracle(q, prior)
    assert rep.kl == pytest.approx(d, rel=1e-10, abs=1e-15)
    assert rep.decision == ("lag" if d < 0.1 else "adapt_labels")
    assert rep.top1_acc == 1.0


def test_threshold_bounds():
    frames = stream([(0, UNIFORM), (0, SKEW), (0, UNIFORM), (0, SKEW)])
    reps0, _ = run_replay(frames, EdgeEngine(make_profiles(), ScriptedDetector(), cfg(kl_threshold_D=0.0)))
    assert all(r.decision == "adapt_labels" for r in reps0)
    reps_inf, _ = run_replay(frames, EdgeEngine(make_profiles(), ScriptedDetector(), cfg(kl_threshold_D=math.inf)))
    assert all(r.decision == "lag" for r in reps_inf)


def test_fail_static_keeps_previous_model(monkeypatch):
    def boom(*a, **k):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(engine_mod, "fine_tune", boom)
    profiles = make_profiles()
    eng = EdgeEngine(profiles, ScriptedDetector(), cfg())
    reps, summary = run_replay(stream([(0, UNIFORM), (1, UNIFORM)]), eng)
    assert reps[1].decision == "adapt_domain"
    assert "diverged" in reps[1].error
    assert eng.active_model is profiles[0].model and eng.state.version == 0
    assert summary["errors"] == 1


def test_unregistered_domain_keeps_current():
    eng = EdgeEngine(make_profiles(), ScriptedDetector(labels=("A", "fog")), cfg())
    reps, _ = run_replay(stream([(0, UNIFORM), (1, UNIFORM)]), eng)
    assert reps[1].domain_pred == "A" and not reps[1].domain_changed
    assert "fog" in reps[1].error


def test_engine_rejects_bad_registries():
    p = make_profiles()
    with pytest.raises(ValueError):
        EdgeEngine([], None, cfg())
    with pytest.raises(ValueError):
        EdgeEngine([p[0], p[0]], None, cfg())
    with pytest.raises(KeyError):
        EdgeEngine(p, None, cfg(initial_domain="snow"))


def test_swap_rejects_incompatible_model():
    eng = EdgeEngine(make_profiles(), None, cfg())
    with pytest.raises(IncompatibleModelError):
        eng.swap(SoftmaxModel(5, K))
    eng.swap(SoftmaxModel(4, K), "manual")
    assert eng.state.version == 1 and eng.state.provenance == "manual"


def test_report_accounting():
    segs = [(0, UNIFORM), (0, SKEW), (1, UNIFORM), (1, (0.1, 0.1, 0.8))]
    frames = stream(segs)[:-7]
    reps, summary = run_replay(frames, EdgeEngine(make_profiles(), ScriptedDetector(), cfg()))
    assert summary["frames"] == len(frames) == sum(r.frames for r in reps)
    assert summary["batches"] == 4 and reps[-1].frames == 43
    assert summary["adapt_domain"] + summary["adapt_labels"] + summary["lag"] == 4
    labeled = sum(r.labeled for r in reps)
    assert summary["mean_top1"] == sum(r.correct for r in reps) / labeled
    for r in reps:
        assert 0 <= r.correct <= r.labeled == r.frames
        assert r.t_start <= r.t_end


def test_static_summary_is_plain_accuracy():
    profiles = make_profiles()
    frames = stream([(0, UNIFORM), (1, UNIFORM), (1, SKEW)])
    _, summary = run_replay(frames, EdgeEngine(profiles, ScriptedDetector(), cfg().static()))
    X = np.vstack([f.features for f in frames])
    y = np.array([f.label for f in frames])
    assert summary["mean_top1"] == np.mean(profiles[0].model.predict(X) == y)
    assert summary["adapt_domain"] == summary["adapt_labels"] == 0


def test_one_model_per_batch(monkeypatch):
    seen = []
    original = SoftmaxModel.predict

    def spy(self, X):
        if len(X) == 1:
            seen.append(id(self))
        return original(self, X)

    monkeypatch.setattr(SoftmaxModel, "predict", spy)
    eng = EdgeEngine(make_profiles(), ScriptedDetector(), cfg(async_finetune=True, kl_threshold_D=0.0))
    for batch in iter_batches(stream([(0, UNIFORM), (1, SKEW), (0, UNIFORM), (1, UNIFORM)]), 50):
        active = id(eng.active_model)
        seen.clear()
        eng.process_batch(batch)
        assert set(seen) == {active}
    eng.close()


def test_async_matches_sync_after_drain():
    frames = stream([(0, UNIFORM), (1, SKEW), (1, UNIFORM), (0, SKEW)])
    sync = EdgeEngine(make_profiles(), ScriptedDetector(), cfg())
    asyn = EdgeEngine(make_profiles(), ScriptedDetector(), cfg(async_finetune=True))
    rs, _ = run_replay(frames, sync)
    ra, _ = run_replay(frames, asyn)
    assert [r.decision for r in rs] == [r.decision for r in ra]
    assert asyn.state.version == sync.state.version
    assert asyn.active_model.params.tobytes() == sync.active_model.params.tobytes()


def test_iter_batches_counts():
    frames = [StreamFrame(None, 0.04 * i) for i in range(1000)]
    assert [len(b) for b in iter_batches(frames, 250)] == [250] * 4
    assert [len(b) for b in iter_batches(frames + [StreamFrame(None, 40.0)], 250)] == [250] * 4 + [1]
    strided = list(iter_batches(frames, 100, stride=4))
    assert sum(len(b) for b in strided) == 250
    assert strided[0].frames[1].timestamp == pytest.approx(0.16)
    with pytest.raises(ValueError):
        list(iter_batches(frames, 0))


def test_batch_validation():
    with pytest.raises(ValueError):
        StreamBatch(0, ())
    with pytest.raises(ValueError):
        StreamBatch(0, (StreamFrame(None, 1.0), StreamFrame(None, 0.5)))


def test_empty_stream_rejected():
    with pytest.raises(ValueError):
        run_replay([], EdgeEngine(make_profiles(), None, cfg()))


def test_csv_layout_and_determinism(tmp_path):
    frames = stream([(0, UNIFORM), (1, SKEW), (1, UNIFORM)])
    texts = []
    for i in range(2):
        path = tmp_path / f"m{i}.csv"
        run_replay(frames, EdgeEngine(make_profiles(), ScriptedDetector(), cfg()), metrics_path=path)
        texts.append(path.read_text())
    assert texts[0] == texts[1]
    rows = list(csv.reader(texts[0].splitlines()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4
    timing = [CSV_COLUMNS.index(c) for c in ("finetune_ms", "infer_ms_p50", "infer_ms_p95")]
    assert all(row[i] == "" for row in rows[1:] for i in timing)


def test_timing_recorded_when_requested():
    reps, _ = run_replay(stream([(0, UNIFORM), (1, UNIFORM)]), EdgeEngine(make_profiles(), ScriptedDetector(), cfg(record_timing=True)))
    assert reps[1].finetune_ms is not None and reps[1].finetune_ms >= 0
    assert all(r.infer_ms_p50 <= r.infer_ms_p95 for r in reps)


def test_summary_echoes_config():
    c = cfg(kl_threshold_D=0.25)
    _, summary = run_replay(stream([(0, UNIFORM)]), EdgeEngine(make_profiles(), None, c))
    assert summary["config_echo"] == c.to_dict()
    assert summarize([], c)["mean_top1"] is None
