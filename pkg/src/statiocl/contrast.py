"""Negative-pair construction and the non-stationary / temporal contrastive losses.

Hard negatives pair anchors whose stationarity states differ.  Same-state pairs
are soft negatives whose repulsion is scaled by a Beta-shaped weight of their
temporal distance inside a recording.  Both losses are NT-Xent style:

    L_i = -log( exp(s_ii/tau) / (exp(s_ii/tau) + sum_j c_ij exp(s_ij/tau)) )

with ``c_ij`` the mask (times weight) of admissible negatives, averaged over
anchors and over the a->b and b->a directions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import Tensor


class EmptyDenominatorError(ValueError):
    """An anchor has no admissible term in its softmax denominator."""


@dataclass
class ContrastConfig:
    tau: float = 0.2
    lam: float = 0.5
    alpha: float = 2.0
    beta: float = 8.0
    horizon: int | None = None
    adf_threshold: float = 0.01
    include_positive_in_denominator: bool = True
    literal_equation_mode: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not (self.alpha > 1 and self.beta > 1):
            raise ValueError("alpha and beta must both exceed 1 so the weight has an interior mode")
        if not 0.0 < self.adf_threshold < 1.0:
            raise ValueError("adf_threshold must lie in (0, 1)")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be a positive number of segments")

    @property
    def include_positive(self) -> bool:
        return self.include_positive_in_denominator and not self.literal_equation_mode


# -- Beta weights --------------------------------------------------------

def log_beta_function(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def beta_function(a: float, b: float) -> float:
    return math.exp(log_beta_function(a, b))


def beta_mode(a: float, b: float) -> float:
    return (a - 1.0) / (a + b - 2.0)


def beta_pdf(x, a: float, b: float):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_kernel = (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)
    out = np.exp(log_kernel - log_beta_function(a, b))
    return out if out.ndim else float(out)


def beta_weight(x, a: float, b: float):
    """Beta(a, b) density rescaled so its maximum (at the mode) is exactly 1."""
    if not (a > 1 and b > 1):
        raise ValueError("beta_weight needs a > 1 and b > 1")
    x = np.asarray(x, dtype=np.float64)
    if np.any((x < 0) | (x > 1)):
        warnings.warn("normalised time distance outside [0, 1]; clamping", RuntimeWarning, stacklevel=2)
        x = np.clip(x, 0.0, 1.0)
    w = beta_pdf(x, a, b) / beta_pdf(beta_mode(a, b), a, b)
    return w if np.ndim(w) else float(w)


# -- pair structure ------------------------------------------------------

@dataclass
class PairStructure:
    nc_mask: np.ndarray   # (B, B) bool, l_i != l_j
    tc_mask: np.ndarray   # (B, B) bool, l_i == l_j, i != j
    weights: np.ndarray   # (B, B), Beta weight on tc pairs, 1 on nc pairs, 0 on the diagonal

    @property
    def size(self) -> int:
        return self.nc_mask.shape[0]


def build_pair_structure(states, recording, position, config: ContrastConfig, horizon: int | None = None) -> PairStructure:
    states = np.asarray(states)
    B = states.shape[0]
    if B < 2:
        raise ValueError("a pair structure needs at least two anchors")
    horizon = config.horizon if horizon is None else horizon
    off = ~np.eye(B, dtype=bool)
    same_state = states[:, None] == states[None, :]
    nc_mask = off & ~same_state
    tc_mask = off & same_state

    weights = np.where(off, 1.0, 0.0)
    if recording is not None and position is not None:
        if horizon is None:
            raise ValueError("temporal weighting needs a horizon (segments per recording)")
        recording = np.asarray(recording)
        position = np.asarray(position, dtype=np.float64)
        same_rec = tc_mask & (recording[:, None] == recording[None, :])
        if same_rec.any():
            delta = np.minimum(np.abs(position[:, None] - position[None, :]) / horizon, 1.0)
            weights[same_rec] = beta_weight(delta[same_rec], config.alpha, config.beta)
    return PairStructure(nc_mask, tc_mask, weights)


def random_pair_structure(B: int) -> PairStructure:
    """Baseline policy: every other sample in the batch is a full-weight negative."""
    off = ~np.eye(B, dtype=bool)
    return PairStructure(off.copy(), np.zeros((B, B), dtype=bool), np.where(off, 1.0, 0.0))


# -- losses --------------------------------------------------------------

def _anchor_losses(sim: Tensor, coef: np.ndarray, tau: float) -> Tensor:
    support = coef > 0
    if not support.any(axis=1).all():
        bad = int(np.flatnonzero(~support.any(axis=1))[0])
        raise EmptyDenominatorError(f"anchor {bad} has no negatives and the positive is excluded")
    logits = sim * (1.0 / tau)
    # constant row shift; cancels exactly between log-sum and the positive term
    shift = np.where(support, logits.data, -np.inf).max(axis=1, keepdims=True)
    denom = nc.sum(nc.exp(logits - shift) * coef, axis=1)
    return nc.log(denom) + shift[:, 0] - nc.diagonal(logits)


def loss_from_similarity(sim, mask, weights, config: ContrastConfig) -> Tensor:
    """Symmetrised contrastive loss given the (B, B) view-a / view-b similarity matrix."""
    sim = nc.Tensor(sim) if not isinstance(sim, Tensor) else sim
    B = sim.shape[0]
    coef = np.where(mask, weights, 0.0)
    if config.include_positive:
        coef = coef + np.eye(B)
    forward = _anchor_losses(sim, coef, config.tau)
    reverse = _anchor_losses(nc.transpose(sim), coef.T, config.tau)
    return (nc.mean(forward) + nc.mean(reverse)) * 0.5


def similarity(z_a, z_b) -> Tensor:
    return nc.cosine_sim_matrix(z_a, z_b)


def nc_loss(z_a, z_b, structure: PairStructure, config: ContrastConfig, sim: Tensor | None = None) -> Tensor:
    sim = similarity(z_a, z_b) if sim is None else sim
    return loss_from_similarity(sim, structure.nc_mask, np.ones_like(structure.weights), config)


def tc_loss(z_a, z_b, structure: PairStructure, config: ContrastConfig, sim: Tensor | None = None) -> Tensor:
    sim = similarity(z_a, z_b) if sim is None else sim
    return loss_from_similarity(sim, structure.tc_mask, structure.weights, config)


def combined_loss(z_a, z_b, structure: PairStructure, config: ContrastConfig):
    """``lam * L_NC + (1 - lam) * L_TC`` and a float breakdown for logging.

    At the endpoints lam in {0, 1} the inactive term is left out of the graph,
    so the total is bitwise equal to the active component.
    """
    sim = similarity(z_a, z_b)
    lam = config.lam

    def _value(fn):
        try:
            with nc.no_grad():
                return fn(z_a, z_b, structure, config, sim=sim.detach()).item()
        except EmptyDenominatorError:
            return float("nan")

    if lam == 1.0:
        total = nc_loss(z_a, z_b, structure, config, sim=sim)
        l_nc, l_tc = total.item(), _value(tc_loss)
    elif lam == 0.0:
        total = tc_loss(z_a, z_b, structure, config, sim=sim)
        l_nc, l_tc = _value(nc_loss), total.item()
    else:
        a = nc_loss(z_a, z_b, structure, config, sim=sim)
        b = tc_loss(z_a, z_b, structure, config, sim=sim)
        total = a * lam + b * (1.0 - lam)
        l_nc, l_tc = a.item(), b.item()
    return total, {"loss": total.item(), "nc": l_nc, "tc": l_tc}
