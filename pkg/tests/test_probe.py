import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featprobe.probe import (
    DegenerateTestSplitError,
    MetricSet,
    ProbeConfig,
    TrainingDivergedError,
    adamw_init,
    adamw_step,
    cosine_warmup_lr,
    evaluate_probe,
    mean_metric_set,
    probe_site_sweep,
    train_probe,
)
from featprobe.synth import PlantedSite, make_planted_run
from featprobe.tensor_store import load_manifest


# -- learning-rate schedule -----------------------------------------------


def test_warmup_endpoint_is_base_lr():
    w = 5  # floor(0.05 * 100)
    assert cosine_warmup_lr(w - 1, 100, 0.05, 1e-4) == pytest.approx(1e-4, rel=1e-12)


def test_cosine_midpoint_is_half_base_lr():
    # (step - w) / (total - w) = 0.5 at step 55 for w=10, total=100
    assert cosine_warmup_lr(55, 100, 0.1, 2e-3) == pytest.approx(1e-3, rel=1e-12)


def test_schedule_value_near_end_matches_formula():
    # Frozen from an independent evaluation of the warmup+cosine formula.
    assert cosine_warmup_lr(99, 100, 0.05, 1e-4) == pytest.approx(
        2.7337132953697554e-08, rel=1e-9
    )


def test_schedule_out_of_range_rejected():
    with pytest.raises(ValueError):
        cosine_warmup_lr(100, 100, 0.05, 1e-4)
    with pytest.raises(ValueError):
        cosine_warmup_lr(-1, 100, 0.05, 1e-4)


def test_zero_warmup_starts_at_base_lr():
    assert cosine_warmup_lr(0, 10, 0.0, 1e-4) == pytest.approx(1e-4)


@settings(max_examples=50, deadline=None)
@given(
    total=st.integers(1, 400),
    ratio=st.floats(0.0, 0.5),
    base=st.floats(1e-6, 1.0),
)
def test_schedule_rises_then_falls(total, ratio, base):
    values = [cosine_warmup_lr(s, total, ratio, base) for s in range(total)]
    w = int(np.floor(ratio * total))
    for i in range(1, w):
        assert values[i] >= values[i - 1]
    for i in range(max(w, 1), total):
        if i > w:
            assert values[i] <= values[i - 1]
    assert all(0 <= v <= base + 1e-15 for v in values)


# -- AdamW -----------------------------------------------------------------


def test_adamw_zero_grad_zero_decay_is_identity():
    params = [np.array([1.0, -2.0, 0.5]), np.array([[3.0, 4.0]])]
    snapshot = [p.copy() for p in params]
    state = adamw_init(params)
    adamw_step(params, [np.zeros_like(p) for p in params], state, lr=0.1, weight_decay=0.0)
    for p, s in zip(params, snapshot):
        assert np.array_equal(p, s)


def test_adamw_one_step_scalar_hand_computed():
    params = [np.array([1.0])]
    state = adamw_init(params)
    adamw_step(params, [np.array([1.0])], state, lr=0.1, weight_decay=0.0)
    # Bias correction makes m_hat = v_hat = 1 on the first step.
    expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8))
    assert params[0][0] == pytest.approx(expected, abs=1e-9)


def test_adamw_pure_decoupled_decay():
    params = [np.array([2.0, -4.0])]
    state = adamw_init(params)
    adamw_step(params, [np.zeros(2)], state, lr=0.1, weight_decay=0.01)
    assert params[0] == pytest.approx(np.array([2.0, -4.0]) * (1 - 0.001), rel=1e-12)


def test_adamw_nonfinite_gradient_aborts():
    params = [np.array([1.0])]
    state = adamw_init(params)
    with pytest.raises(TrainingDivergedError, match="non-finite gradient"):
        adamw_step(params, [np.array([np.nan])], state, lr=0.1)


# -- training ---------------------------------------------------------------


def _clusters(rng, n_per_class, dim, separation, direction=None):
    if direction is None:
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
    shift = (separation / 2) * direction
    x = np.vstack(
        [rng.standard_normal((n_per_class, dim)) - shift,
         rng.standard_normal((n_per_class, dim)) + shift]
    )
    y = np.array([0] * n_per_class + [1] * n_per_class)
    perm = rng.permutation(len(y))
    return x[perm], y[perm], direction


def test_train_probe_deterministic_given_seed():
    rng = np.random.default_rng(0)
    x, y, _ = _clusters(rng, 30, 8, 2.0)
    cfg = ProbeConfig(epochs=3)
    a = train_probe(x, y, 2, cfg, seed=5)
    b = train_probe(x, y, 2, cfg, seed=5)
    assert a.loss_trace == b.loss_trace
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)


def test_train_probe_different_seed_differs():
    rng = np.random.default_rng(0)
    x, y, _ = _clusters(rng, 30, 8, 2.0)
    cfg = ProbeConfig(epochs=3)
    a = train_probe(x, y, 2, cfg, seed=5)
    b = train_probe(x, y, 2, cfg, seed=6)
    assert a.loss_trace != b.loss_trace


def test_inseparable_data_scores_near_chance():
    # Identical single features for both classes, balanced.
    x = np.ones((40, 4))
    y = np.array([0, 1] * 20)
    cfg = ProbeConfig(epochs=5, repeats=2)
    accs = []
    for r in range(cfg.repeats):
        probe = train_probe(x, y, 2, cfg, seed=r)
        accs.append(evaluate_probe(probe, x, y).accuracy)
    assert abs(float(np.mean(accs)) - 0.5) <= 0.15


def test_separated_clusters_reach_high_accuracy():
    rng = np.random.default_rng(7)
    xtr, ytr, direction = _clusters(rng, 200, 32, 6.0)
    xte, yte, _ = _clusters(rng, 100, 32, 6.0, direction)
    probe = train_probe(xtr, ytr, 2, ProbeConfig(), seed=1)
    metrics = evaluate_probe(probe, xte, yte)
    assert metrics.accuracy >= 0.99

    # Independent oracle: an off-the-shelf linear classifier agrees the
    # data is separable at this level.
    from sklearn.linear_model import LogisticRegression

    oracle = LogisticRegression(max_iter=1000).fit(xtr, ytr)
    assert oracle.score(xte, yte) >= 0.99


def test_loss_trace_descends_on_separable_data():
    rng = np.random.default_rng(3)
    x, y, _ = _clusters(rng, 100, 16, 4.0)
    probe = train_probe(x, y, 2, ProbeConfig(epochs=10), seed=2)
    assert min(probe.loss_trace[1:]) < probe.loss_trace[0]


def test_num_classes_lower_bound():
    with pytest.raises(ValueError, match="num_classes"):
        train_probe(np.ones((4, 2)), np.zeros(4, dtype=int), 1, ProbeConfig(epochs=1), 0)


def test_forward_returns_logit_rows():
    rng = np.random.default_rng(1)
    x, y, _ = _clusters(rng, 10, 6, 2.0)
    probe = train_probe(x, y, 2, ProbeConfig(epochs=1), seed=0)
    logits = probe.forward(x[:5])
    assert logits.shape == (5, 2)
    assert np.all(np.isfinite(logits))


def test_hidden_dim_default_caps_at_512():
    assert ProbeConfig().resolve_hidden(64) == 64
    assert ProbeConfig().resolve_hidden(4096) == 512
    assert ProbeConfig(hidden_dim=16).resolve_hidden(4096) == 16


def test_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(dropout=1.0)
    with pytest.raises(ValueError):
        ProbeConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        ProbeConfig(warmup_ratio=1.0)
    with pytest.raises(ValueError):
        ProbeConfig(repeats=0)


# -- evaluation ---------------------------------------------------------------


def test_evaluate_rejects_single_class_split():
    rng = np.random.default_rng(1)
    x, y, _ = _clusters(rng, 10, 6, 2.0)
    probe = train_probe(x, y, 2, ProbeConfig(epochs=1), seed=0)
    with pytest.raises(DegenerateTestSplitError):
        evaluate_probe(probe, x[:4], np.zeros(4, dtype=int))


def test_evaluate_accuracy_matches_brute_force_recount():
    rng = np.random.default_rng(2)
    x, y, _ = _clusters(rng, 30, 6, 1.0)
    probe = train_probe(x, y, 2, ProbeConfig(epochs=2), seed=0)
    metrics = evaluate_probe(probe, x, y)
    preds = probe.predict_scores(x).argmax(axis=1)
    recount = sum(int(p == t) for p, t in zip(preds, y)) / len(y)
    assert metrics.accuracy == pytest.approx(recount)


def test_evaluate_multiclass_uses_macro_metrics():
    rng = np.random.default_rng(4)
    # Three clusters along orthogonal directions.
    dirs = np.linalg.qr(rng.standard_normal((8, 3)))[0].T
    x = np.vstack([rng.standard_normal((30, 8)) + 3 * dirs[c] for c in range(3)])
    y = np.repeat(np.arange(3), 30)
    probe = train_probe(x, y, 3, ProbeConfig(epochs=5), seed=0)
    metrics = evaluate_probe(probe, x, y)
    for name in ("accuracy", "precision", "recall", "f1", "auc"):
        assert 0.0 <= getattr(metrics, name) <= 1.0
    # A test split missing one of the three classes skips it in AUC and
    # flags the zero divisions rather than erroring.
    mask = y < 2
    metrics2 = evaluate_probe(probe, x[mask], y[mask])
    assert any("class 2" in f for f in metrics2.flags)


def test_mean_metric_set_averages_fields():
    a = MetricSet(0.8, 0.6, 0.4, 0.5, 0.9)
    b = MetricSet(0.6, 0.8, 0.6, 0.7, 0.7, flags=("x",))
    m = mean_metric_set([a, b])
    assert m.accuracy == pytest.approx(0.7)
    assert m.auc == pytest.approx(0.8)
    assert m.flags == ("x",)


# -- site sweep ----------------------------------------------------------------


def test_sweep_single_site(tmp_path):
    path = make_planted_run(tmp_path, [PlantedSite("V", 0, 3.0)], 20, 10, dim=8, seed=0)
    manifest = load_manifest(path)
    sweep = probe_site_sweep(manifest, tmp_path, ProbeConfig(epochs=3, repeats=1))
    assert len(sweep.results) == 1
    assert sweep.errors == []
    assert sweep.results[0].site_id == "V0_mean_image_tokens"


def test_sweep_identical_features_identical_metrics(tmp_path):
    path = make_planted_run(tmp_path, [PlantedSite("V", 0, 2.0)], 20, 10, dim=8, seed=0)
    manifest = load_manifest(path)
    src = tmp_path / manifest.sites[0].file
    dup = tmp_path / "dup.ftd"
    dup.write_bytes(src.read_bytes())
    from featprobe.tensor_store import SiteDescriptor

    manifest.sites.append(SiteDescriptor("C0", "C", 0, "mean_image_tokens", "dup.ftd"))
    sweep = probe_site_sweep(manifest, tmp_path, ProbeConfig(epochs=3, repeats=2))
    assert len(sweep.results) == 2
    assert sweep.results[0].metrics == sweep.results[1].metrics


def test_sweep_orders_by_pipeline_position(tmp_path):
    sites = [
        PlantedSite("L", 1, 1.0),
        PlantedSite("V", 0, 1.0),
        PlantedSite("L", 0, 1.0),
        PlantedSite("C", 0, 1.0),
    ]
    path = make_planted_run(tmp_path, sites, 15, 10, dim=6, seed=1)
    manifest = load_manifest(path)
    manifest.sites.reverse()
    sweep = probe_site_sweep(manifest, tmp_path, ProbeConfig(epochs=2, repeats=1))
    order = [(r.module, r.layer_index) for r in sweep.results]
    assert order == [("V", 0), ("C", 0), ("L", 0), ("L", 1)]


def test_sweep_isolates_bad_site(tmp_path):
    sites = [PlantedSite("V", 0, 1.0), PlantedSite("V", 1, 1.0)]
    path = make_planted_run(tmp_path, sites, 15, 10, dim=6, seed=1)
    manifest = load_manifest(path)
    (tmp_path / manifest.sites[1].file).write_bytes(b"XXXXgarbage")
    sweep = probe_site_sweep(manifest, tmp_path, ProbeConfig(epochs=2, repeats=1))
    assert len(sweep.results) == 1
    assert len(sweep.errors) == 1
    assert sweep.errors[0].site_id == manifest.sites[1].site_id


def test_sweep_jobs_do_not_change_results(tmp_path):
    sites = [PlantedSite("V", i, 1.0 + i) for i in range(3)]
    path = make_planted_run(tmp_path, sites, 15, 10, dim=6, seed=2)
    manifest = load_manifest(path)
    cfg = ProbeConfig(epochs=3, repeats=1)
    serial = probe_site_sweep(manifest, tmp_path, cfg, jobs=1)
    parallel = probe_site_sweep(manifest, tmp_path, cfg, jobs=3)
    assert serial.results == parallel.results
