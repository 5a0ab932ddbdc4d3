"""Augmented Dickey-Fuller unit-root test and binary stationarity states.

A segment gets state 1 (non-stationary) when the ADF p-value exceeds the
threshold, i.e. the unit-root null cannot be rejected, and state 0 otherwise.
"""
from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.01
P_MIN, P_MAX = 1e-4, 0.9999

# MacKinnon (1994) response surface, constant-only regression, one I(1) series.
_TAU_MAX = 2.74
_TAU_MIN = -18.83
_TAU_STAR = -1.61
_SMALL_P = (2.1659, 1.4412, 0.038269)
_LARGE_P = (1.7339, 0.93202, -0.12745, -0.010368)


class SingularDesignError(np.linalg.LinAlgError):
    pass


class SeriesLengthError(ValueError):
    pass


class DegenerateSeriesError(ValueError):
    """The differenced series has zero variance (e.g. a constant segment)."""


@dataclass(frozen=True)
class OlsResult:
    coef: np.ndarray
    resid: np.ndarray
    stderr: np.ndarray
    ssr: float


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    p_value: float
    lag_order: int
    n_effective: int


@dataclass(frozen=True)
class StationarityLabel:
    state: int
    threshold_used: float
    p_values: tuple[float | None, ...] = ()


def ols_fit(design, response, names=None) -> OlsResult:
    """Least squares through a reduced QR factorisation.

    Parameters
    ----------
    design : (n, k) array
    response : (n,) array
    names : optional column names used in the singularity message

    Returns
    -------
    OlsResult
        Coefficients, residuals, standard errors ``s * sqrt(diag((X'X)^-1))``
        with ``s^2 = RSS / (n - k)``, and the residual sum of squares.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError(f"response has shape {y.shape}, expected ({n},)")
    if n <= k:
        raise ValueError(f"need more rows than columns, got {n}x{k}")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    scale = max(diag.max(initial=0.0), np.abs(X).max(initial=0.0), 1.0)
    tol = n * np.finfo(np.float64).eps * scale
    bad = np.flatnonzero(diag <= tol)
    if bad.size:
        col = bad[0]
        label = names[col] if names is not None else f"column {col}"
        raise SingularDesignError(f"design matrix is rank deficient at {label}")
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - X @ coef
    ssr = float(resid @ resid)
    r_inv = np.linalg.solve(r, np.eye(k))
    s2 = ssr / (n - k)
    stderr = np.sqrt(s2 * np.sum(r_inv * r_inv, axis=1))
    return OlsResult(coef, resid, stderr, ssr)


def mackinnon_pvalue(statistic: float) -> float:
    """Approximate p-value of an ADF t-ratio (constant, no trend), clamped to [1e-4, 0.9999]."""
    if statistic > _TAU_MAX:
        p = 1.0
    elif statistic < _TAU_MIN:
        p = 0.0
    else:
        coefs = _SMALL_P if statistic <= _TAU_STAR else _LARGE_P
        z = sum(c * statistic ** i for i, c in enumerate(coefs))
        p = 0.5 * math.erfc(-z / math.sqrt(2.0))
    return min(max(p, P_MIN), P_MAX)


def schwert_maxlag(length: int) -> int:
    return int(math.floor(12.0 * (length / 100.0) ** 0.25))


def _design(y: np.ndarray, lags: int, start: int):
    """Regress dy_t on [y_{t-1}, dy_{t-1..t-lags}, 1] for t >= start (indices into diff)."""
    dy = np.diff(y)
    rows = dy.size - start
    cols = [y[start:start + rows]]
    cols += [dy[start - i:start - i + rows] for i in range(1, lags + 1)]
    cols.append(np.ones(rows))
    return np.column_stack(cols), dy[start:]


def _aic(ssr: float, n: int, k: int) -> float:
    llf = -0.5 * n * (math.log(2.0 * math.pi) + math.log(ssr / n) + 1.0)
    return -2.0 * llf + 2.0 * k


def select_lag(y: np.ndarray, max_lag: int) -> int:
    """Lag order minimising AIC, all candidates fitted on the common sample."""
    best = None
    for lag in range(max_lag + 1):
        X, dy = _design(y, lag, max_lag)
        fit = ols_fit(X, dy)
        score = (_aic(fit.ssr, dy.size, X.shape[1]), lag)
        if best is None or score < best:
            best = score
    return best[1]


def adf_test(series, lag_order: int | None = None, max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and no trend.

    ``lag_order`` fixes the number of lagged differences.  When it is None the
    order is chosen by AIC over ``0..max_lag``, where ``max_lag`` defaults to
    ``floor(12 * (T/100)**0.25)`` capped at ``T//2 - 2``.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    T = y.size
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    if lag_order is None:
        if max_lag is None:
            max_lag = min(schwert_maxlag(T), T // 2 - 2)
        if max_lag < 0 or T < max_lag + 10:
            raise SeriesLengthError(f"series of length {T} too short for max lag {max_lag}")
    elif lag_order < 0:
        raise ValueError("lag_order must be non-negative")
    elif T < lag_order + 10:
        raise SeriesLengthError(f"series of length {T} too short for lag order {lag_order}")
    if np.ptp(np.diff(y)) == 0.0:
        raise DegenerateSeriesError("differenced series has zero variance")

    if lag_order is None:
        lag_order = select_lag(y, max_lag)
    X, dy = _design(y, lag_order, lag_order)
    names = ["y_lag1"] + [f"dy_lag{i}" for i in range(1, lag_order + 1)] + ["const"]
    fit = ols_fit(X, dy, names)
    stat = float(fit.coef[0] / fit.stderr[0])
    return AdfResult(stat, mackinnon_pvalue(stat), lag_order, dy.size)


def channel_pvalues(values, lag_order: int | None = None) -> list[float | None]:
    """ADF p-value per channel of a (T,) or (T, V) array; None for constant channels."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    out: list[float | None] = []
    for v in range(arr.shape[1]):
        try:
            out.append(adf_test(arr[:, v], lag_order).p_value)
        except (DegenerateSeriesError, SingularDesignError):
            warnings.warn(f"channel {v} is degenerate; counted as stationary", RuntimeWarning, stacklevel=2)
            out.append(None)
    return out


def state_from_pvalues(p_values, threshold: float) -> int:
    """Majority vote of channels with p > threshold; ties count as non-stationary."""
    votes = sum(1 for p in p_values if p is not None and p > threshold)
    return int(2 * votes >= len(p_values))


def assess_segment(values, threshold: float = DEFAULT_THRESHOLD, lag_order: int | None = None) -> StationarityLabel:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    p = channel_pvalues(values, lag_order)
    return StationarityLabel(state_from_pvalues(p, threshold), threshold, tuple(p))


@dataclass
class DatasetAssessment:
    labels: list[StationarityLabel]
    summary: dict

    @property
    def states(self) -> np.ndarray:
        return np.array([lab.state for lab in self.labels], dtype=np.int64)


def _ratio(n_stationary: int, n_nonstationary: int):
    # None marks an undefined ratio; never a float sentinel
    return None if n_nonstationary == 0 else n_stationary / n_nonstationary


def summarize_states(states, classes=None, class_set=None) -> dict:
    states = np.asarray(states)
    n0, n1 = int(np.sum(states == 0)), int(np.sum(states == 1))
    summary = {"n_stationary": n0, "n_nonstationary": n1, "ratio": _ratio(n0, n1), "per_class": {}}
    if classes is not None:
        classes = np.asarray(classes)
        keys = sorted(set(classes.tolist()) | set(class_set or ()))
        for c in keys:
            sel = states[classes == c]
            c0, c1 = int(np.sum(sel == 0)), int(np.sum(sel == 1))
            summary["per_class"][c] = {"n_stationary": c0, "n_nonstationary": c1, "ratio": _ratio(c0, c1)}
    return summary


def assess_dataset(segments, threshold: float = DEFAULT_THRESHOLD, classes=None, class_set=None,
                   lag_order: int | None = None) -> DatasetAssessment:
    """Assess every segment of an (N, T[, V]) collection, preserving input order."""
    segments = list(segments) if not isinstance(segments, np.ndarray) else segments
    if len(segments) == 0:
        raise ValueError("cannot assess an empty dataset")
    labels = [assess_segment(seg, threshold, lag_order) for seg in segments]
    summary = summarize_states([lab.state for lab in labels], classes, class_set)
    return DatasetAssessment(labels, summary)


def cached_assessment(values, threshold: float, cache_dir, lag_order: int | None = None) -> np.ndarray:
    """Per-channel p-values for every segment, cached on disk by content hash.

    Returns the (N,) state vector at ``threshold``; the cache stores p-values so
    a threshold sweep reuses one pass of ADF fits.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    digest = hashlib.sha256(values.tobytes() + repr((values.shape, lag_order)).encode()).hexdigest()[:20]
    path = Path(cache_dir) / f"adf-{digest}.npy"
    if path.exists():
        pvals = np.load(path)
    else:
        pvals = np.array([[np.nan if p is None else p for p in channel_pvalues(seg, lag_order)]
                          for seg in values])
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(path, pvals)
        logger.info("cached ADF p-values for %d segments at %s", len(values), path)
    return np.array([state_from_pvalues([None if np.isnan(p) else p for p in row], threshold)
                     for row in pvals], dtype=np.int64)
