"""Drive and target signals: Lorenz63, voltage scaling and square-wave modes."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.005
    y0: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        y0 = tuple(float(v) for v in self.y0)
        if len(y0) != 3:
            raise ValueError("y0 must have 3 components")
        object.__setattr__(self, "y0", y0)


def lorenz_rhs(y: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    x, yy, z = y[..., 0], y[..., 1], y[..., 2]
    return np.stack((sigma * (yy - x), x * (rho - z) - yy, x * yy - beta * z), axis=-1)


def _rk4(y, h, sigma, rho, beta):
    # scalar unrolled RK4: numpy call overhead dominates for a 3-vector
    x0, y0, z0 = y

    def f(x, yy, z):
        return sigma * (yy - x), x * (rho - z) - yy, x * yy - beta * z

    a1, b1, c1 = f(x0, y0, z0)
    a2, b2, c2 = f(x0 + 0.5 * h * a1, y0 + 0.5 * h * b1, z0 + 0.5 * h * c1)
    a3, b3, c3 = f(x0 + 0.5 * h * a2, y0 + 0.5 * h * b2, z0 + 0.5 * h * c2)
    a4, b4, c4 = f(x0 + h * a3, y0 + h * b3, z0 + h * c3)
    return (
        x0 + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4),
        y0 + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4),
        z0 + h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4),
    )


def lorenz_integrate(params: LorenzParams, n_steps: int, y0=None) -> np.ndarray:
    """Classical RK4 trajectory, shape ``(n_steps + 1, 3)``, row 0 is ``y0``.

    Raises
    ------
    FloatingPointError
        If the state stops being finite; the message carries the step index.
    """
    y = tuple(float(v) for v in (params.y0 if y0 is None else y0))
    if not all(math.isfinite(v) for v in y):
        raise ValueError("initial state must be finite")
    out = np.empty((int(n_steps) + 1, 3))
    out[0] = y
    s, r, b, h = params.sigma, params.rho, params.beta, params.dt
    for k in range(1, int(n_steps) + 1):
        y = _rk4(y, h, s, r, b)
        if not (math.isfinite(y[0]) and math.isfinite(y[1]) and math.isfinite(y[2])):
            raise FloatingPointError(f"non-finite Lorenz state at step {k}")
        out[k] = y
    return out


def lorenz_series(params: LorenzParams, n_steps: int, spin_up: int = 5000) -> np.ndarray:
    """Trajectory of ``n_steps + 1`` rows starting after ``spin_up`` discarded steps."""
    y0 = lorenz_integrate(params, spin_up)[-1] if spin_up > 0 else None
    return lorenz_integrate(params, n_steps, y0=y0)


def lyapunov_max(params: LorenzParams, n_steps: int = 200_000, d0: float = 1e-8,
                 renorm_every: int = 10, transient: int = 5000) -> float:
    """Largest Lyapunov exponent by two-trajectory renormalisation (Benettin).

    A companion trajectory starts ``d0`` away along the first axis; every
    ``renorm_every`` steps the log growth of the separation is accumulated
    and the companion is pulled back to distance ``d0``.
    """
    s, r, b, h = params.sigma, params.rho, params.beta, params.dt
    y = tuple(lorenz_integrate(params, transient)[-1])
    z = (y[0] + d0, y[1], y[2])
    total = 0.0
    n_renorm = int(n_steps) // renorm_every
    for _ in range(n_renorm):
        for _ in range(renorm_every):
            y = _rk4(y, h, s, r, b)
            z = _rk4(z, h, s, r, b)
        dx, dy, dz = z[0] - y[0], z[1] - y[1], z[2] - y[2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        total += math.log(d / d0)
        f = d0 / d
        z = (y[0] + f * dx, y[1] + f * dy, y[2] + f * dz)
    return total / (n_renorm * renorm_every * h)


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    voltage_scale: float = 0.2

    def __post_init__(self):
        if np.any(~(np.asarray(self.std) > 0)):
            raise ValueError("std must be positive in every component")

    def transform(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.mean) / self.std * self.voltage_scale

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=float) / self.voltage_scale * self.std + self.mean


def fit_normalization(raw: np.ndarray, voltage_scale: float = 0.2) -> NormalizationStats:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ValueError("need a 2-D array with at least 2 rows")
    std = raw.std(axis=0)
    const = np.flatnonzero(~(std > 0))
    if len(const):
        raise ValueError(f"constant column(s) {const.tolist()} cannot be normalised")
    return NormalizationStats(raw.mean(axis=0), std, float(voltage_scale))


def normalize(raw: np.ndarray, voltage_scale: float = 0.2) -> tuple[np.ndarray, NormalizationStats]:
    """Column-wise z-score (population std) times ``voltage_scale``."""
    stats = fit_normalization(raw, voltage_scale)
    return stats.transform(raw), stats


def fourier_square_modes(n_modes: int, period: float, times) -> np.ndarray:
    """Odd harmonics of a unit square wave, one column per mode.

    Column ``k`` (from 1) is ``(4/pi) sin((2k-1) 2 pi t / period) / (2k-1)``.
    """
    if not period > 0:
        raise ValueError("period must be positive")
    t = np.asarray(times, dtype=float)
    odd = 2 * np.arange(1, int(n_modes) + 1) - 1
    return 4.0 / np.pi * np.sin(np.outer(t, odd) * (2 * np.pi / period)) / odd


def write_trajectory(path: str | os.PathLike, times, y: np.ndarray) -> None:
    y = np.asarray(y, dtype=float)
    data = np.column_stack((np.asarray(times, dtype=float), y))
    names = ["t"] + [f"y{k + 1}" for k in range(y.shape[1])]
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def read_trajectory(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]
