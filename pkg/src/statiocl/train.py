"""Self-supervised pretraining loop.

Per batch: weak/strong views -> shared encoder -> pair structure from the
precomputed stationarity states and recording positions -> combined loss ->
backward -> Adam.  Shuffling and augmentation draw from seed-derived streams
keyed by (seed, epoch[, sample]), so a run resumed from a checkpoint replays
exactly what an uninterrupted run would have done.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc
from .augment import AugmentConfig, make_views
from .contrast import ContrastConfig, build_pair_structure, combined_loss, nc_loss, tc_loss
from .data import ConfigError, Dataset
from .encoder import EncoderConfig, as_leaves, encode, encoder_init, layer_lengths, parameter_shapes
from .numcore import AdamState, Checkpoint, CheckpointError, ShapeError, adam_step
from .stationarity import assess_dataset, cached_assessment

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "L", "L_NC", "L_TC", "wall_time")
_SHUFFLE_TAG = 0x5EED


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 150
    lr: float = 3e-4
    weight_decay: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 so every anchor can have a negative")


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    opt_state: AdamState
    epoch: int
    history: list[dict] = field(default_factory=list)
    states: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.params, self.opt_state, {**self.meta, "epoch": self.epoch})


def batch_schedule(n: int, batch_size: int, seed: int, epoch: int, shuffle: bool = True) -> list[np.ndarray]:
    """Row positions per batch for one epoch; the trailing partial batch is dropped."""
    order = np.arange(n)
    if shuffle:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch), _SHUFFLE_TAG]))
        order = rng.permutation(n)
    n_full = n // batch_size
    return [order[i * batch_size:(i + 1) * batch_size] for i in range(n_full)]


def stationarity_states(dataset: Dataset, threshold: float, cache_dir=None) -> np.ndarray:
    """Binary state per segment of the whole dataset (cached when ``cache_dir`` is given)."""
    if cache_dir is not None:
        return cached_assessment(dataset.values, threshold, cache_dir)
    return assess_dataset(dataset.values, threshold).states


def _run_meta(encoder_config, augment_config, contrast_config, train_config) -> dict:
    return {
        "encoder": asdict(encoder_config),
        "augment": asdict(augment_config),
        "contrast": asdict(contrast_config),
        "train": asdict(train_config),
    }


def _check_compatible(params, encoder_config: EncoderConfig) -> None:
    expected = parameter_shapes(encoder_config)
    if set(expected) != set(params):
        raise ShapeError(f"checkpoint parameters {sorted(params)} do not match encoder {sorted(expected)}")
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise ShapeError(f"parameter {name!r}: checkpoint shape {params[name].shape}, encoder expects {shape}")


def _append_log(path: Path, rows: list[dict], fresh: bool) -> None:
    with path.open("w" if fresh else "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(LOG_COLUMNS)
        for r in rows:
            writer.writerow([r["epoch"], repr(r["loss"]), repr(r["nc"]), repr(r["tc"]), f"{r['wall_time']:.3f}"])


def read_training_log(path) -> list[dict]:
    with Path(path).open() as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def training_step(params, opt_state, values, idx, states, dataset: Dataset, channel_std, horizon: int, epoch: int,
                  encoder_config, augment_config, contrast_config, train_config, objective: str = "combined"):
    """One optimiser step on the rows ``idx`` of ``values``; returns (params, opt_state, breakdown)."""
    views = make_views(values[idx], augment_config, sample_index=idx, epoch=epoch, seed=train_config.seed,
                       states=states[idx], channel_std=channel_std)
    x = np.concatenate([views.view_a, views.view_b]).transpose(0, 2, 1)
    leaves = as_leaves(params)
    z = encode(leaves, x, encoder_config)
    B = len(idx)
    z_a, z_b = z[:B], z[B:]
    structure = build_pair_structure(states[idx], dataset.recording[idx], dataset.position[idx],
                                     contrast_config, horizon)
    if objective == "combined":
        loss, parts = combined_loss(z_a, z_b, structure, contrast_config)
    elif objective in ("nc", "tc"):
        fn = nc_loss if objective == "nc" else tc_loss
        loss = fn(z_a, z_b, structure, contrast_config)
        parts = {"loss": loss.item(), "nc": float("nan"), "tc": float("nan")}
        parts[objective] = loss.item()
    else:
        raise ValueError(f"unknown objective {objective!r}")
    nc.backward(loss)
    grads = {k: t.grad for k, t in leaves.items()}
    params, opt_state = adam_step(params, grads, opt_state, lr=train_config.lr, beta1=train_config.beta1,
                                  beta2=train_config.beta2, eps=train_config.eps,
                                  weight_decay=train_config.weight_decay)
    return params, opt_state, parts


def pretrain(dataset: Dataset, encoder_config: EncoderConfig, augment_config: AugmentConfig,
             contrast_config: ContrastConfig, train_config: TrainConfig, *, states=None, out_dir=None,
             resume_from=None, objective: str = "combined") -> TrainResult:
    """Contrastive pretraining on the train split of ``dataset``.

    ``states`` holds the stationarity state of every segment in ``dataset``; when
    omitted it is computed (and cached under ``out_dir``) at the configured
    ADF threshold.  ``resume_from`` is a checkpoint (or its path) whose
    parameters, optimiser state and epoch counter are restored.
    """
    dataset = dataset.normalize()
    train_idx = dataset.indices("train")
    if train_idx.size == 0:
        raise ConfigError("the train split is empty")
    if train_idx.size < train_config.batch_size:
        raise ConfigError(f"train split has {train_idx.size} segments, fewer than one batch of {train_config.batch_size}")
    if dataset.channels != encoder_config.in_channels:
        raise ConfigError(f"dataset has {dataset.channels} channels, encoder expects {encoder_config.in_channels}")
    layer_lengths(encoder_config, dataset.length)

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    if states is None:
        states = stationarity_states(dataset, contrast_config.adf_threshold,
                                     out_dir / "cache" if out_dir is not None else None)
    states = np.asarray(states, dtype=np.int64)
    if states.shape != (len(dataset),):
        raise ValueError("need one stationarity state per dataset segment")

    horizon = contrast_config.horizon or dataset.max_recording_length
    channel_std = dataset.values[train_idx].reshape(-1, dataset.channels).std(axis=0)
    meta = _run_meta(encoder_config, augment_config, contrast_config, train_config)
    meta["objective"] = objective

    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else nc.load_checkpoint(resume_from)
        _check_compatible(ckpt.params, encoder_config)
        if ckpt.opt_state is None:
            raise CheckpointError("checkpoint has no optimizer state; cannot resume")
        params, opt_state = dict(ckpt.params), ckpt.opt_state
        start_epoch = int(ckpt.meta.get("epoch", 0))
    else:
        params = encoder_init(encoder_config, np.random.default_rng(train_config.seed), dataset.length)
        opt_state = AdamState.zeros_like(params)
        start_epoch = 0

    log_path = out_dir / "train_log.csv" if out_dir is not None else None
    history = []
    values = dataset.values
    for epoch in range(start_epoch, train_config.epochs):
        tic = time.perf_counter()
        parts_seen = []
        for rows in batch_schedule(train_idx.size, train_config.batch_size, train_config.seed, epoch,
                                   train_config.shuffle):
            idx = train_idx[rows]
            params, opt_state, parts = training_step(
                params, opt_state, values, idx, states, dataset, channel_std, horizon, epoch,
                encoder_config, augment_config, contrast_config, train_config, objective)
            parts_seen.append(parts)
        row = {"epoch": epoch + 1, "wall_time": time.perf_counter() - tic}
        for key in ("loss", "nc", "tc"):
            row[key] = float(np.mean([p[key] for p in parts_seen]))
        history.append(row)
        logger.info("epoch %d  L=%.5f  L_NC=%.5f  L_TC=%.5f  (%.1fs)", row["epoch"], row["loss"], row["nc"],
                    row["tc"], row["wall_time"])
        if log_path is not None:
            _append_log(log_path, [row], fresh=(epoch == start_epoch and resume_from is None))
            if train_config.checkpoint_every and (epoch + 1) % train_config.checkpoint_every == 0:
                nc.save_checkpoint(out_dir / f"checkpoint-epoch{epoch + 1:04d}.ckpt",
                                   Checkpoint(params, opt_state, {**meta, "epoch": epoch + 1}))

    result = TrainResult(params, opt_state, max(start_epoch, train_config.epochs), history, states, meta)
    if out_dir is not None:
        nc.save_checkpoint(out_dir / "final.ckpt", result.checkpoint())
    return result


def resume(checkpoint, dataset: Dataset, encoder_config, augment_config, contrast_config, train_config,
           **kwargs) -> TrainResult:
    """Continue a run from ``checkpoint`` up to ``train_config.epochs``."""
    return pretrain(dataset, encoder_config, augment_config, contrast_config, train_config,
                    resume_from=checkpoint, **kwargs)
