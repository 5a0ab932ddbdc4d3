import numpy as np
import pytest

from statiocl import numcore as nc
from statiocl.contrast import ContrastConfig, beta_weight
from statiocl.data import SynthSpec, gen_synthetic
from statiocl.encoder import EncoderConfig, embed, encoder_init
from statiocl.evaluate import (average_precision, embed_export, fnp_audit, format_fnp_comparison, format_label_curve,
                               label_fraction_protocol, linear_probe, load_encoder, metrics, read_embeddings,
                               stratified_subsample)

skm = pytest.importorskip("sklearn.metrics")


@pytest.mark.parametrize("seed", range(5))
def test_metrics_match_sklearn(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, 200)
    scores = rng.dirichlet(np.ones(3), 200) + np.eye(3)[y] * rng.uniform(0, 0.5, (200, 1))
    scores = np.round(scores, 2)  # force ties in the ranking
    pred = scores.argmax(axis=1)
    r = metrics(pred, y, scores, [0, 1, 2])
    assert r.accuracy == pytest.approx(skm.accuracy_score(y, pred), abs=1e-12)
    assert r.macro_f1 == pytest.approx(skm.f1_score(y, pred, average="macro"), abs=1e-12)
    assert r.macro_recall == pytest.approx(skm.recall_score(y, pred, average="macro"), abs=1e-12)
    ap = np.mean([skm.average_precision_score(y == c, scores[:, c]) for c in range(3)])
    assert r.auprc == pytest.approx(ap, abs=1e-12)


def test_average_precision_perfect_and_reversed():
    assert average_precision([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1]) == 1.0
    # positives ranked last: precision 1/3 at recall 1/2, 2/4 at recall 1
    assert average_precision([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == pytest.approx(0.5 * (1 / 3) + 0.5 * 0.5)
    with pytest.raises(ValueError):
        average_precision([0, 0], [0.1, 0.2])


def test_absent_class_excluded_with_warning():
    with pytest.warns(RuntimeWarning, match="class 2 absent"):
        r = metrics(np.array([0, 1, 1]), np.array([0, 1, 1]), classes=[0, 1, 2])
    assert r.per_class[2]["f1"] is None
    assert r.macro_f1 == 1.0


def _blobs(seed=0, n=300, d=6, gap=3.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, d)) + gap * y[:, None] * np.eye(d)[0]
    split = np.tile([0, 0, 0, 1, 2], n // 5 + 1)[:n]
    return X, y, split


def test_probe_separates_blobs():
    X, y, split = _blobs()
    r = linear_probe(X, y, split, seed=0, epochs=30, lr=1e-2)
    # the Bayes rate for a 3-sigma gap along one axis is about 0.93
    assert r.accuracy > 0.85
    assert r.n_test == int(np.sum(split == 2))
    assert 1 <= r.extra["best_epoch"] <= 30


def test_probe_agrees_with_sklearn_logistic_regression():
    lm = pytest.importorskip("sklearn.linear_model")
    X, y, split = _blobs(seed=1, gap=1.5)
    ours = linear_probe(X, y, split, seed=0, epochs=200, lr=1e-2).accuracy
    mu, sd = X[split == 0].mean(0), X[split == 0].std(0)
    ref = lm.LogisticRegression(C=1e4, max_iter=2000).fit((X[split == 0] - mu) / sd, y[split == 0])
    theirs = ref.score((X[split == 2] - mu) / sd, y[split == 2])
    assert abs(ours - theirs) <= 0.05


def test_probe_is_deterministic_and_scale_free():
    X, y, split = _blobs(seed=2)
    a = linear_probe(X, y, split, seed=3, epochs=5)
    b = linear_probe(X * 100 + 7, y, split, seed=3, epochs=5)
    assert a.accuracy == b.accuracy


def test_probe_errors():
    X, y, split = _blobs()
    with pytest.raises(ValueError, match="two classes"):
        linear_probe(X, np.zeros_like(y), split)
    with pytest.raises(ValueError, match="test split"):
        linear_probe(X, y, np.zeros_like(split))


def test_stratified_subsample_counts():
    labels = np.r_[np.zeros(30), np.ones(10)].astype(int)
    rows = np.arange(40)
    sub = stratified_subsample(labels, rows, 0.25, seed=0)
    assert np.sum(labels[sub] == 0) == round(0.25 * 30) and np.sum(labels[sub] == 1) == round(0.25 * 10)
    assert stratified_subsample(labels, rows, 0.01) is None
    np.testing.assert_array_equal(stratified_subsample(labels, rows, 1.0), rows)


def test_label_fraction_protocol_and_table():
    X, y, split = _blobs()
    with pytest.warns(RuntimeWarning, match="skipped"):
        curve = label_fraction_protocol(X, y, split, fractions=(1.0, 0.5, 0.001), epochs=5)
    assert sorted(curve) == [0.5, 1.0]
    assert curve[1.0].extra["n_train"] == int(np.sum(split == 0))
    table = format_label_curve(curve)
    assert table.splitlines()[0].startswith("fraction\tn_train\taccuracy")


# -- false negative pair audit ------------------------------------------------

def test_fnp_hand_example():
    classes = np.array([0, 0, 1, 1])
    states = np.array([0, 1, 0, 1])
    rec, pos = np.array([0, 0, 0, 0]), np.array([0, 1, 2, 3])
    cfg = ContrastConfig(alpha=2, beta=8)
    rep = fnp_audit(classes, states, rec, pos, cfg, [np.arange(4)], horizon=8)
    # hard pairs (ordered): (0,1),(0,3),(1,0),(1,2),(2,1),(2,3),(3,0),(3,2); same class: (0,1),(1,0),(2,3),(3,2)
    assert rep.hard_fnp_rate == pytest.approx(4 / 8)
    # soft pairs: (0,2),(2,0) distance 2/8, (1,3),(3,1) distance 2/8; none share a class
    assert rep.weighted_fnp_mass == 0.0
    w = beta_weight(2 / 8, 2, 8)
    assert rep.combined_rate == pytest.approx(4 / (8 + 4 * w))


def test_random_policy_single_batch_is_exact():
    classes = np.array([0, 0, 0, 1, 1, 2])
    rep = fnp_audit(classes, np.zeros(6), None, None, ContrastConfig(), [np.arange(6)], policy="random")
    # same-class ordered pairs: 3*2 + 2*1 = 8 of 30
    assert rep.hard_fnp_rate == pytest.approx(8 / 30)
    assert rep.weighted_fnp_mass is None


def test_fnp_report_table():
    classes = np.array([0, 1, 0, 1])
    reports = [fnp_audit(classes, classes, None, None, ContrastConfig(), [np.arange(4)], p)
               for p in ("statiocl", "random")]
    text = format_fnp_comparison(reports)
    assert "statiocl\tpooled\t0.0000" in text and "random\tpooled" in text
    with pytest.raises(ValueError):
        fnp_audit(classes, classes, None, None, ContrastConfig(), [], policy="other")


# -- embedding export -----------------------------------------------------------

def test_embed_export_roundtrip(tmp_path):
    cfg = EncoderConfig(widths=(4, 4, 4), output_dim=3)
    params = encoder_init(cfg, 0)
    ckpt = nc.Checkpoint(params, None, {"encoder": {"in_channels": 1, "widths": [4, 4, 4], "kernel_sizes": [8, 8, 8],
                                                    "pool_windows": [2, 2, 2], "padding": [4, 4, 4],
                                                    "output_dim": 3}})
    ds = gen_synthetic(SynthSpec(n_segments=30, segments_per_recording=10, length=32))
    z = embed_export(ckpt, ds, tmp_path / "emb.csv")
    ids, labels, back = read_embeddings(tmp_path / "emb.csv")
    np.testing.assert_array_equal(back, z)
    np.testing.assert_array_equal(ids, ds.segment_id)
    np.testing.assert_array_equal(labels, ds.labels)
    np.testing.assert_array_equal(z, embed(params, ds.normalize().values, cfg))
    assert load_encoder(ckpt)[1] == cfg


def test_checkpoint_without_encoder_config():
    with pytest.raises(nc.CheckpointError, match="encoder"):
        load_encoder(nc.Checkpoint({}, None, {}))
