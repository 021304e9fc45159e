"""Linear output layer with a skip connection, trained by ridge regression.

The prediction is ``y_hat = W_out r + u``, so the regression target is the
residual ``y - u`` and the skip term is exact rather than learned.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sl


@dataclass(frozen=True)
class RidgeConfig:
    tikhonov: float = 1e-6
    washout_steps: int = 1000

    def __post_init__(self):
        if not self.tikhonov >= 0:
            raise ValueError("tikhonov must be non-negative")
        if int(self.washout_steps) < 0 or int(self.washout_steps) != self.washout_steps:
            raise ValueError("washout_steps must be a non-negative integer")


@dataclass(frozen=True)
class TrainedReadout:
    """Output weights ``W_out`` of shape ``(N_y, N_out)``."""

    W_out: np.ndarray
    config: RidgeConfig
    training_rows: int
    wiring_seed: int | None = None

    @property
    def n_outputs(self) -> int:
        return self.W_out.shape[0]

    @property
    def n_features(self) -> int:
        return self.W_out.shape[1]


def ridge_fit(R: np.ndarray, targets: np.ndarray, config: RidgeConfig = RidgeConfig(),
              wiring_seed: int | None = None) -> TrainedReadout:
    """Minimise ``||R W^T - targets||^2 + tikhonov ||W||^2`` over rows after the washout.

    Solved as the augmented least-squares problem ``[R; sqrt(l) I] W^T = [Y; 0]``
    with a rank-revealing QR, which avoids squaring the condition number of
    ``R`` the way the normal equations do.
    """
    R = np.asarray(R, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if R.ndim != 2 or R.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: R {R.shape}, targets {Y.shape}")
    w = int(config.washout_steps)
    X, T = R[w:], Y[w:]
    if len(X) == 0:
        raise ValueError(f"no rows left after a washout of {w} steps (have {len(R)})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(T))):
        raise ValueError("training data contains non-finite values")
    n = X.shape[1]
    lam = float(config.tikhonov)
    if lam > 0:
        A = np.vstack((X, np.sqrt(lam) * np.eye(n)))
        B = np.vstack((T, np.zeros((n, T.shape[1]))))
    else:
        A, B = X, T
    sol, *_ = sl.lstsq(A, B, lapack_driver="gelsy", check_finite=False)
    W = np.ascontiguousarray(sol.T)
    W.setflags(write=False)
    return TrainedReadout(W, config, len(X), wiring_seed)


def predict(readout: TrainedReadout, r_out: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``W_out r_out + u``; accepts single vectors or row-stacked batches."""
    r = np.asarray(r_out, dtype=float)
    u = np.asarray(u, dtype=float)
    if r.shape[-1] != readout.n_features:
        raise ValueError(f"readout has {readout.n_features} features, got {r.shape[-1]}")
    if u.shape[-1] != readout.n_outputs:
        raise ValueError(f"readout has {readout.n_outputs} outputs, got {u.shape[-1]}")
    return r @ readout.W_out.T + u


def write_readout(readout: TrainedReadout, path: str | os.PathLike) -> None:
    """One CSV row per output dimension, preceded by a commented header."""
    cfg = readout.config
    head = (
        f"# tikhonov={cfg.tikhonov!r}, washout_steps={cfg.washout_steps}, "
        f"wiring_seed={readout.wiring_seed}, training_rows={readout.training_rows}\n"
    )
    cols = ",".join(f"w{k}" for k in range(readout.n_features))
    with open(path, "w") as fh:
        fh.write(head)
        fh.write(cols + "\n")
        np.savetxt(fh, readout.W_out, delimiter=",", fmt="%.17g")


def read_readout(path: str | os.PathLike) -> TrainedReadout:
    with open(path) as fh:
        head = fh.readline()
    if not head.startswith("#"):
        raise ValueError(f"{path}: missing readout header")
    meta = {}
    for item in head[1:].split(","):
        k, _, v = item.strip().partition("=")
        meta[k] = v
    W = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    W.setflags(write=False)
    seed = None if meta.get("wiring_seed", "None") == "None" else int(meta["wiring_seed"])
    cfg = RidgeConfig(float(meta["tikhonov"]), int(meta["washout_steps"]))
    return TrainedReadout(W, cfg, int(meta.get("training_rows", 0)), seed)
