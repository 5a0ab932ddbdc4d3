import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from statiocl import numcore as nc
from statiocl.contrast import (ContrastConfig, EmptyDenominatorError, PairStructure, beta_function, beta_mode,
                               beta_pdf, beta_weight, build_pair_structure, combined_loss, loss_from_similarity,
                               nc_loss, random_pair_structure, tc_loss)

from conftest import analytic_grads, central_difference, relative_error

scipy_stats = pytest.importorskip("scipy.stats")


def brute_force_loss(sim, coef, tau, include_positive=True):
    """Direct transcription with python loops; both directions averaged."""
    B = len(sim)

    def one_direction(S, C):
        total = 0.0
        for i in range(B):
            pos = math.exp(S[i][i] / tau)
            den = sum(C[i][j] * math.exp(S[i][j] / tau) for j in range(B) if j != i)
            if include_positive:
                den += pos
            total += -math.log(pos / den)
        return total / B

    S = np.asarray(sim)
    return 0.5 * (one_direction(S, coef) + one_direction(S.T, np.asarray(coef).T))


# -- Beta weight -----------------------------------------------------------

def test_beta_function_factorial_identity():
    # B(a, b) = (a-1)!(b-1)!/(a+b-1)!
    assert abs(beta_function(2, 8) - 1 / 72) < 1e-12
    assert abs(beta_function(3, 5) - math.factorial(2) * math.factorial(4) / math.factorial(7)) < 1e-12


@pytest.mark.parametrize("b", [8, 16, 24, 32])
def test_beta_pdf_matches_scipy(b):
    x = np.linspace(0.001, 0.999, 101)
    np.testing.assert_allclose(beta_pdf(x, 2, b), scipy_stats.beta.pdf(x, 2, b), rtol=1e-10)


@pytest.mark.parametrize("b", [8, 16, 24, 32])
def test_weight_peaks_at_one_at_mode(b):
    mode = beta_mode(2, b)
    assert mode == pytest.approx(1 / b)
    assert beta_weight(mode, 2, b) == pytest.approx(1.0, abs=1e-12)
    grid = np.linspace(0, 1, 1001)
    assert beta_weight(grid, 2, b).max() <= 1.0 + 1e-12


def test_weight_endpoints_are_zero():
    assert beta_weight(0.0, 2, 8) == 0.0
    assert beta_weight(1.0, 2, 8) == 0.0


def test_weight_clamps_out_of_range():
    with pytest.warns(RuntimeWarning, match="clamping"):
        w = beta_weight(np.array([-0.5, 1.5]), 2, 8)
    np.testing.assert_array_equal(w, [0.0, 0.0])


def test_weight_rejects_modeless_shapes():
    with pytest.raises(ValueError):
        beta_weight(0.5, 1.0, 8)


# -- pair structure --------------------------------------------------------

def test_pair_masks_partition_off_diagonal():
    rng = np.random.default_rng(0)
    states = rng.integers(0, 2, 12)
    s = build_pair_structure(states, rng.integers(0, 3, 12), rng.integers(0, 20, 12), ContrastConfig(), 20)
    off = ~np.eye(12, dtype=bool)
    assert not np.any(s.nc_mask & s.tc_mask)
    np.testing.assert_array_equal(s.nc_mask | s.tc_mask, off)
    np.testing.assert_array_equal(s.nc_mask, off & (states[:, None] != states[None, :]))
    assert np.all(np.diag(s.weights) == 0)


def test_tc_weights_follow_time_distance():
    cfg = ContrastConfig(alpha=2, beta=8)
    s = build_pair_structure([0, 0, 0, 0], [1, 1, 1, 2], [0, 5, 40, 5], cfg, horizon=40)
    assert s.weights[0, 1] == pytest.approx(beta_weight(5 / 40, 2, 8)) == pytest.approx(1.0)
    assert s.weights[0, 2] == 0.0  # distance at the horizon
    assert s.weights[0, 3] == 1.0  # other recording
    np.testing.assert_array_equal(s.weights, s.weights.T)


def test_nc_pairs_keep_unit_weight():
    s = build_pair_structure([0, 1], [1, 1], [0, 1], ContrastConfig(), horizon=10)
    assert s.weights[0, 1] == 1.0 and s.nc_mask[0, 1]


def test_random_structure_is_all_negatives():
    s = random_pair_structure(5)
    assert s.nc_mask.sum() == 20 and not s.tc_mask.any()


# -- losses --------------------------------------------------------------

def _two(states, positions=(0, 4), horizon=32):
    z = np.eye(2)
    return z, build_pair_structure(states, [0, 0], list(positions), ContrastConfig(tau=1.0), horizon)


def test_b2_nc_fixture():
    z, s = _two([0, 1])
    loss = nc_loss(z, z, s, ContrastConfig(tau=1.0)).item()
    assert abs(loss - (-math.log(math.e / (math.e + 1)))) < 1e-10


def test_b2_tc_fixture():
    z, s = _two([1, 1])
    w = beta_weight(4 / 32, 2, 8)
    loss = tc_loss(z, z, s, ContrastConfig(tau=1.0)).item()
    assert abs(loss - (-math.log(math.e / (math.e + w)))) < 1e-10


def test_literal_mode_excludes_positive():
    z, s = _two([0, 1])
    cfg = ContrastConfig(tau=1.0, literal_equation_mode=True)
    # exp(1) / exp(0) only
    assert abs(nc_loss(z, z, s, cfg).item() - (-1.0)) < 1e-12


def test_literal_mode_without_negatives_raises():
    z, s = _two([0, 0])
    with pytest.raises(EmptyDenominatorError):
        nc_loss(z, z, s, ContrastConfig(literal_equation_mode=True))


def _random_case(seed, B=8, D=5):
    rng = np.random.default_rng(seed)
    za, zb = rng.normal(size=(B, D)), rng.normal(size=(B, D))
    states = rng.integers(0, 2, B)
    rec, pos = rng.integers(0, 2, B), rng.integers(0, 30, B)
    return za, zb, states, rec, pos


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force(seed):
    za, zb, states, rec, pos = _random_case(seed)
    cfg = ContrastConfig(tau=0.3)
    s = build_pair_structure(states, rec, pos, cfg, 30)
    sim = nc.cosine_sim_matrix(za, zb).data
    expected_nc = brute_force_loss(sim, s.nc_mask * 1.0, 0.3)
    expected_tc = brute_force_loss(sim, np.where(s.tc_mask, s.weights, 0.0), 0.3)
    assert nc_loss(za, zb, s, cfg).item() == pytest.approx(expected_nc, abs=1e-12)
    assert tc_loss(za, zb, s, cfg).item() == pytest.approx(expected_tc, abs=1e-12)
    total, parts = combined_loss(za, zb, s, cfg)
    assert total.item() == pytest.approx(0.5 * expected_nc + 0.5 * expected_tc, abs=1e-12)
    assert parts["nc"] == pytest.approx(expected_nc) and parts["tc"] == pytest.approx(expected_tc)


def test_lambda_endpoints_are_exact():
    za, zb, states, rec, pos = _random_case(11)
    for lam, fn in ((1.0, nc_loss), (0.0, tc_loss)):
        cfg = ContrastConfig(lam=lam)
        s = build_pair_structure(states, rec, pos, cfg, 30)
        assert combined_loss(za, zb, s, cfg)[0].item() == fn(za, zb, s, cfg).item()


@given(st.integers(0, 10_000), st.floats(0.05, 2.0), st.floats(0.1, 10.0))
def test_temperature_rescaling_invariance(seed, tau, c):
    za, zb, states, rec, pos = _random_case(seed)
    s = build_pair_structure(states, rec, pos, ContrastConfig(), 30)
    sim = nc.cosine_sim_matrix(za, zb).data
    a = loss_from_similarity(sim, s.tc_mask, s.weights, ContrastConfig(tau=tau)).item()
    b = loss_from_similarity(sim * c, s.tc_mask, s.weights, ContrastConfig(tau=tau * c)).item()
    assert abs(a - b) < 1e-10


@given(st.integers(0, 10_000), st.permutations(list(range(8))))
def test_batch_permutation_invariance(seed, perm):
    za, zb, states, rec, pos = _random_case(seed)
    p = np.array(perm)
    cfg = ContrastConfig()
    s1 = build_pair_structure(states, rec, pos, cfg, 30)
    s2 = build_pair_structure(states[p], rec[p], pos[p], cfg, 30)
    a = combined_loss(za, zb, s1, cfg)[0].item()
    b = combined_loss(za[p], zb[p], s2, cfg)[0].item()
    assert abs(a - b) < 1e-10


def test_extreme_similarities_stay_finite():
    # tau tiny: logits of +-1e4 would overflow exp without the row shift
    za = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    s = build_pair_structure([0, 1, 0], None, None, ContrastConfig())
    cfg = ContrastConfig(tau=1e-4)
    total, parts = combined_loss(za, za, s, cfg)
    assert np.isfinite(total.item()) and np.isfinite(parts["nc"])


def test_loss_gradient_matches_finite_difference():
    za, zb, states, rec, pos = _random_case(5)
    cfg = ContrastConfig(tau=0.5)
    s = build_pair_structure(states, rec, pos, cfg, 30)

    def value(a, b):
        with nc.no_grad():
            return combined_loss(a, b, s, cfg)[0].item()

    analytic = analytic_grads(lambda a, b: combined_loss(a, b, s, cfg)[0], [za, zb])
    numeric, _ = central_difference(value, [za.copy(), zb.copy()])
    assert relative_error(analytic, numeric) < 1e-6


def test_config_validation():
    for bad in (dict(tau=0), dict(lam=1.5), dict(alpha=1.0), dict(adf_threshold=1.0), dict(horizon=0)):
        with pytest.raises(ValueError):
            ContrastConfig(**bad)


def test_horizon_required_for_temporal_weights():
    with pytest.raises(ValueError, match="horizon"):
        build_pair_structure([0, 0], [1, 1], [0, 1], ContrastConfig())


def test_all_same_state_nc_loss_reduces_to_positive_only():
    # no hard negatives: with the positive kept in the denominator the loss is exactly 0
    za, zb, _, rec, pos = _random_case(3)
    s = build_pair_structure(np.zeros(8, dtype=int), rec, pos, ContrastConfig(), 30)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert nc_loss(za, zb, s, ContrastConfig()).item() == pytest.approx(0.0, abs=1e-15)
    assert isinstance(s, PairStructure)
