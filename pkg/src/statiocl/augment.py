"""Weak (jitter + scale) and strong (permutation + jitter) views of time series.

Segments are (T, V) arrays.  Noise magnitudes are given in units of the
per-channel training-set standard deviation.

Randomness follows a fixed seed policy: the generator for one view of one
sample is ``default_rng(SeedSequence([seed, sample_index, epoch, view_tag]))``,
so a view depends only on those four integers and never on batch composition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VIEW_WEAK = 0
VIEW_STRONG = 1


@dataclass
class AugmentConfig:
    jitter_sigma_weak: float = 0.05
    jitter_sigma_strong: float = 0.8
    scale_sigma: float = 0.1
    max_segments: int = 8

    def __post_init__(self):
        for name in ("jitter_sigma_weak", "jitter_sigma_strong", "scale_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_segments < 1:
            raise ValueError("max_segments must be >= 1")


def sample_rng(seed: int, sample_index: int, epoch: int, view_tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(sample_index), int(epoch), int(view_tag)]))


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def jitter(x, sigma: float, rng: np.random.Generator, channel_std=None) -> np.ndarray:
    """Add i.i.d. Gaussian noise with std ``sigma * channel_std`` per channel."""
    arr = _as_2d(x)
    std = np.ones(arr.shape[1]) if channel_std is None else np.asarray(channel_std, dtype=np.float64)
    out = arr + rng.normal(0.0, 1.0, size=arr.shape) * (sigma * std)
    return out.reshape(np.shape(x))


def scale(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Multiply each channel by one factor drawn from N(1, sigma^2)."""
    arr = _as_2d(x)
    factors = rng.normal(1.0, sigma, size=arr.shape[1])
    return (arr * factors).reshape(np.shape(x))


def permutation_indices(length: int, max_segments: int, rng: np.random.Generator) -> np.ndarray:
    """Time-index permutation: cut into m pieces (m uniform on 2..max_segments), shuffle pieces."""
    if max_segments <= 1 or length < 2:
        return np.arange(length)
    m = int(rng.integers(2, max_segments + 1))
    m = min(m, length)
    cuts = np.sort(rng.choice(np.arange(1, length), size=m - 1, replace=False))
    pieces = np.split(np.arange(length), cuts)
    order = rng.permutation(m)
    return np.concatenate([pieces[i] for i in order])


def permute(x, max_segments: int, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[permutation_indices(x.shape[0], max_segments, rng)]


def weak_view(x, config: AugmentConfig, rng, channel_std=None) -> np.ndarray:
    return scale(jitter(x, config.jitter_sigma_weak, rng, channel_std), config.scale_sigma, rng)


def strong_view(x, config: AugmentConfig, rng, channel_std=None) -> np.ndarray:
    return jitter(permute(x, config.max_segments, rng), config.jitter_sigma_strong, rng, channel_std)


@dataclass
class AugmentedBatch:
    view_a: np.ndarray  # (B, T, V), weak
    view_b: np.ndarray  # (B, T, V), strong
    states: np.ndarray | None
    recording: np.ndarray | None
    position: np.ndarray | None
    sample_index: np.ndarray


def make_views(batch, config: AugmentConfig, *, sample_index, epoch: int = 0, seed: int = 0, states=None,
               recording=None, position=None, channel_std=None) -> AugmentedBatch:
    """Weak/strong views for each anchor in a (B, T, V) batch.

    Views carry the anchor's stationarity state and segment metadata unchanged;
    they are not re-tested.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[0] == 0:
        raise ValueError("cannot augment an empty batch")
    sample_index = np.asarray(sample_index, dtype=np.int64)
    if sample_index.shape != (batch.shape[0],):
        raise ValueError("need one sample index per batch row")
    view_a = np.empty_like(batch)
    view_b = np.empty_like(batch)
    for row, idx in enumerate(sample_index):
        view_a[row] = weak_view(batch[row], config, sample_rng(seed, idx, epoch, VIEW_WEAK), channel_std)
        view_b[row] = strong_view(batch[row], config, sample_rng(seed, idx, epoch, VIEW_STRONG), channel_std)

    def _copy(a):
        return None if a is None else np.array(a, copy=True)

    return AugmentedBatch(view_a, view_b, _copy(states), _copy(recording), _copy(position), sample_index.copy())
