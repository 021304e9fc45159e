"""Forecast quality, network activity and readout diversity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

THETA = 0.4
LYAPUNOV_MAX = 0.91


def _error_normalizer(y: np.ndarray) -> float:
    den = float(np.mean(np.sum((y - y.mean(axis=0)) ** 2, axis=1)))
    if not den > 0:
        raise ValueError("target series is constant; relative error undefined")
    return den


def forecast_error(y: np.ndarray, y_hat: np.ndarray, normalizer: float | None = None) -> np.ndarray:
    """Relative error ``||y(t) - y_hat(t)||^2 / <||y - <y>||^2>`` per step.

    Parameters
    ----------
    y, y_hat : ndarray, shape (T, N_y)
    normalizer : float, optional
        Override for the denominator, e.g. computed over a longer reference
        series than the one being scored.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.ndim == 1:
        y, y_hat = y[:, None], y_hat[:, None]
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    if normalizer is None:
        if len(y) < 2:
            raise ValueError("need at least 2 steps")
        normalizer = _error_normalizer(y)
    return np.sum((y - y_hat) ** 2, axis=1) / normalizer


def forecast_time(error_series, theta: float = THETA, lyapunov_max: float = LYAPUNOV_MAX,
                  dt: float = 0.005) -> float:
    """Horizon in Lyapunov times until the error first exceeds ``theta``.

    The horizon stops at the first exceedance even if the error later drops
    back under the threshold. With exceedance at step ``k`` the result is
    ``lyapunov_max * dt * (k - 1)`` (0 when ``k`` is 0); a series that never
    exceeds gives ``lyapunov_max * dt * (T - 1)``.
    """
    e = np.asarray(error_series, dtype=float).ravel()
    if len(e) == 0:
        raise ValueError("empty error series")
    # NaN counts as exceeded
    over = np.flatnonzero(~(e <= theta))
    last_ok = len(e) - 1 if len(over) == 0 else over[0] - 1
    return lyapunov_max * dt * max(last_ok, 0)


@dataclass(frozen=True)
class ForecastMetrics:
    error_series: np.ndarray
    forecast_time_lyapunov: float
    theta: float = THETA
    lyapunov_max: float = LYAPUNOV_MAX


def score_forecast(y, y_hat, dt: float, theta: float = THETA,
                   lyapunov_max: float = LYAPUNOV_MAX, normalizer: float | None = None) -> ForecastMetrics:
    e = forecast_error(y, y_hat, normalizer)
    return ForecastMetrics(e, forecast_time(e, theta, lyapunov_max, dt), theta, lyapunov_max)


def training_nmse(y, y_hat, normalizer: float | None = None) -> float:
    """Mean of the relative error over the training steps."""
    return float(np.mean(forecast_error(y, y_hat, normalizer)))


def dG_statistics(g_trace: np.ndarray, dt: float, g_range: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-step mean and std over edges of ``|dG/dt| / g_range``.

    ``g_trace`` is ``(T, E)``; outputs have length ``T - 1``.
    """
    g = np.asarray(g_trace, dtype=float)
    if g.ndim != 2 or g.shape[0] < 2:
        raise ValueError("g_trace must be T x E with T >= 2")
    rate = np.abs(np.diff(g, axis=0)) / dt / g_range
    return rate.mean(axis=1), rate.std(axis=1)


@dataclass(frozen=True)
class DiversitySummary:
    mean: float
    min: float
    max: float
    n_used: int
    n_dropped: int


def readout_diversity(readouts: np.ndarray) -> DiversitySummary:
    """Pairwise Pearson correlation across readout columns.

    Constant columns carry no correlation and are dropped (``n_dropped``).
    """
    X = np.asarray(readouts, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ValueError("need a T x N matrix with T >= 3")
    sd = X.std(axis=0)
    keep = sd > 1e-12 * max(float(np.abs(X).max()), 1e-300)
    Xk = X[:, keep]
    if Xk.shape[1] < 2:
        raise ValueError("fewer than 2 non-constant readout columns")
    C = np.corrcoef(Xk, rowvar=False)
    iu = np.triu_indices(C.shape[0], 1)
    c = C[iu]
    return DiversitySummary(float(c.mean()), float(c.min()), float(c.max()),
                            int(Xk.shape[1]), int((~keep).sum()))


def input_tracking(inputs: np.ndarray, readouts: np.ndarray) -> np.ndarray:
    """Per readout: best |corr| with a single input minus |corr| with the input sum.

    Positive entries mean the readout follows some individual input more
    closely than it follows the aggregate drive. Constant readouts give NaN.
    """
    U = np.asarray(inputs, dtype=float)
    R = np.asarray(readouts, dtype=float)

    def zs(a):
        sd = a.std(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return (a - a.mean(axis=0)) / sd

    Zu = zs(U)
    Zs = zs(U.sum(axis=1, keepdims=True))
    Zr = zs(R)
    n = len(U)
    best = np.max(np.abs(Zu.T @ Zr) / n, axis=0)
    total = np.abs(Zs.T @ Zr)[0] / n
    return best - total


def lobe_persistence(y1, dt: float, lyapunov_max: float = LYAPUNOV_MAX, horizon: float = 20.0,
                     n_blocks: int = 3, limit: float | None = None) -> dict:
    """Whether a closed-loop trajectory keeps switching attractor lobes.

    The first ``horizon`` Lyapunov times of ``y1`` are cut into ``n_blocks``
    equal windows; the run passes when it is finite, stays within ``limit``
    (if given) and takes both signs of ``y1`` in every window.

    Returns
    -------
    dict
        ``ok``, ``bounded``, ``lyapunov_times`` covered, total ``sign_changes``
        and ``blocks_switching``.
    """
    y = np.asarray(y1, dtype=float).ravel()
    n_need = int(math.ceil(horizon / (lyapunov_max * dt)))
    span = len(y) * lyapunov_max * dt
    finite = bool(np.all(np.isfinite(y)))
    bounded = finite and (limit is None or bool(np.max(np.abs(y), initial=0.0) <= limit))
    sgn = np.sign(y[np.isfinite(y)])
    sgn = sgn[sgn != 0]
    changes = int(np.count_nonzero(sgn[1:] != sgn[:-1]))
    blocks = 0
    if len(y) >= n_need:
        for blk in np.array_split(y[:n_need], n_blocks):
            blocks += bool(np.any(blk > 0) and np.any(blk < 0))
    ok = bounded and len(y) >= n_need and blocks == n_blocks
    return {"ok": bool(ok), "bounded": bounded, "lyapunov_times": float(span),
            "sign_changes": changes, "blocks_switching": int(blocks)}
