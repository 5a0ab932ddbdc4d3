import numpy as np
import pytest

from statiocl import numcore as nc
from statiocl.augment import AugmentConfig
from statiocl.contrast import ContrastConfig
from statiocl.data import ConfigError, SynthSpec, gen_synthetic
from statiocl.encoder import EncoderConfig
from statiocl.train import (LOG_COLUMNS, TrainConfig, batch_schedule, pretrain, read_training_log, resume,
                            stationarity_states)

ENC = EncoderConfig(widths=(4, 6, 8), output_dim=5)


@pytest.fixture(scope="module")
def tiny():
    ds = gen_synthetic(SynthSpec(n_segments=120, segments_per_recording=10, length=48, seed=2))
    return ds, stationarity_states(ds.normalize(), 0.01)


def run(tiny, epochs, **kw):
    ds, states = tiny
    return pretrain(ds, ENC, AugmentConfig(), ContrastConfig(), TrainConfig(batch_size=16, epochs=epochs, seed=5),
                    states=states, **kw)


def test_batch_schedule_drops_partial_batch():
    batches = batch_schedule(70, 16, seed=0, epoch=0)
    assert [len(b) for b in batches] == [16] * 4
    flat = np.concatenate(batches)
    assert np.unique(flat).size == 64
    assert not np.array_equal(flat, batch_schedule(70, 16, 0, 1)[0])
    np.testing.assert_array_equal(batch_schedule(10, 5, 0, 0, shuffle=False)[1], np.arange(5, 10))


def test_same_seed_same_trajectory(tiny):
    a, b = run(tiny, 3), run(tiny, 3)
    la = np.array([h["loss"] for h in a.history])
    lb = np.array([h["loss"] for h in b.history])
    np.testing.assert_allclose(la, lb, rtol=0, atol=1e-10)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_loss_decreases(tiny):
    ds, states = tiny
    out = pretrain(ds, ENC, AugmentConfig(), ContrastConfig(), TrainConfig(batch_size=16, epochs=10, seed=5, lr=3e-3),
                   states=states)
    hist = [h["loss"] for h in out.history]
    assert np.mean(hist[-3:]) < np.mean(hist[:3])


def test_resume_equals_uninterrupted(tiny, tmp_path):
    full = run(tiny, 4)
    first = run(tiny, 2, out_dir=tmp_path)
    ckpt_path = tmp_path / "final.ckpt"
    ds, states = tiny
    rest = resume(ckpt_path, ds, ENC, AugmentConfig(), ContrastConfig(), TrainConfig(batch_size=16, epochs=4, seed=5),
                  states=states, out_dir=tmp_path)
    assert rest.epoch == 4 and first.epoch == 2
    for k in full.params:
        assert rest.params[k].tobytes() == full.params[k].tobytes()
        assert rest.opt_state.m[k].tobytes() == full.opt_state.m[k].tobytes()
    log = read_training_log(tmp_path / "train_log.csv")
    assert [r["epoch"] for r in log] == [1, 2, 3, 4]
    np.testing.assert_array_equal([r["L"] for r in log], [h["loss"] for h in full.history])


def test_log_and_checkpoints_written(tiny, tmp_path):
    ds, states = tiny
    pretrain(ds, ENC, AugmentConfig(), ContrastConfig(),
             TrainConfig(batch_size=16, epochs=2, seed=5, checkpoint_every=1), states=states, out_dir=tmp_path)
    header = (tmp_path / "train_log.csv").read_text().splitlines()[0]
    assert tuple(header.split(",")) == LOG_COLUMNS
    assert (tmp_path / "checkpoint-epoch0001.ckpt").exists() and (tmp_path / "final.ckpt").exists()
    meta = nc.load_checkpoint(tmp_path / "final.ckpt").meta
    assert meta["epoch"] == 2 and meta["encoder"]["widths"] == [4, 6, 8]


def test_objective_variants(tiny):
    nc_only = run(tiny, 1, objective="nc").history[0]
    assert np.isnan(nc_only["tc"]) and nc_only["loss"] == nc_only["nc"]
    with pytest.raises(ValueError, match="objective"):
        run(tiny, 1, objective="both")


def test_resume_with_other_encoder_is_rejected(tiny, tmp_path):
    run(tiny, 1, out_dir=tmp_path)
    ds, states = tiny
    with pytest.raises(nc.ShapeError, match="conv3.weight"):
        pretrain(ds, EncoderConfig(widths=(4, 6, 9), output_dim=5), AugmentConfig(), ContrastConfig(),
                 TrainConfig(batch_size=16, epochs=2), states=states, resume_from=tmp_path / "final.ckpt")


def test_input_validation(tiny):
    ds, states = tiny
    with pytest.raises(ConfigError, match="fewer than one batch"):
        pretrain(ds, ENC, AugmentConfig(), ContrastConfig(), TrainConfig(batch_size=500, epochs=1), states=states)
    with pytest.raises(ConfigError, match="channels"):
        pretrain(ds, EncoderConfig(in_channels=2, widths=(4, 6, 8), output_dim=5), AugmentConfig(),
                 ContrastConfig(), TrainConfig(batch_size=16, epochs=1), states=states)
    with pytest.raises(ValueError, match="one stationarity state"):
        pretrain(ds, ENC, AugmentConfig(), ContrastConfig(), TrainConfig(batch_size=16, epochs=1),
                 states=states[:-1])
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_states_computed_and_cached_when_missing(tiny, tmp_path):
    ds, states = tiny
    out = pretrain(ds, ENC, AugmentConfig(), ContrastConfig(), TrainConfig(batch_size=16, epochs=1, seed=5),
                   out_dir=tmp_path)
    np.testing.assert_array_equal(out.states, states)
    assert list((tmp_path / "cache").glob("adf-*.npy"))
