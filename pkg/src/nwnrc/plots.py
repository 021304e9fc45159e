"""Optional SVG line plots. Needs matplotlib (``pip install artifact[plots]``)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path), format="svg")
    _plt().close(fig)


def plot_pulse(out, t, u, trace):
    plt = _plt()
    fig, ax = plt.subplots(3, 1, sharex=True, figsize=(6, 6))
    ax[0].plot(t, u)
    ax[0].set_ylabel("input (V)")
    ax[1].plot(t, trace.activity)
    ax[1].set_ylabel("active fraction")
    ax[2].plot(t, trace.mean_g)
    ax[2].set_ylabel("mean g")
    ax[2].set_xlabel("t")
    _save(fig, Path(out) / "pulse.svg")


def plot_io_map(out, t, U, readouts: dict):
    plt = _plt()
    fig, ax = plt.subplots(len(readouts) + 1, 1, sharex=True, figsize=(6, 2 * (len(readouts) + 1)))
    ax = np.atleast_1d(ax)
    ax[0].plot(t, U, lw=0.8)
    ax[0].set_ylabel("inputs")
    for a, (m, R) in zip(ax[1:], readouts.items()):
        a.plot(t, R[:, :20], lw=0.6)
        a.set_ylabel(f"{m} edges")
    ax[-1].set_xlabel("t")
    _save(fig, Path(out) / "io_map.svg")


def plot_forecast(out, t, truth, pred, err, theta):
    plt = _plt()
    fig, ax = plt.subplots(4, 1, sharex=True, figsize=(6, 7))
    for k in range(3):
        ax[k].plot(t, truth[:, k], label="true")
        ax[k].plot(t, pred[:, k], "--", label="predicted")
        ax[k].set_ylabel(f"y{k + 1}")
    ax[0].legend(loc="upper right")
    ax[3].semilogy(t, err)
    ax[3].axhline(theta, color="k", lw=0.6)
    ax[3].set_ylabel("error")
    ax[3].set_xlabel("t")
    _save(fig, Path(out) / "forecast.svg")
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(pred[:, 0], pred[:, 2], lw=0.4)
    ax.set_xlabel("y1")
    ax.set_ylabel("y3")
    _save(fig, Path(out) / "attractor.svg")


def plot_sweep(out, aggregates):
    plt = _plt()
    d = np.array([a["density"] for a in aggregates])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.fill_between(d, [a["p25_t_f"] for a in aggregates], [a["p75_t_f"] for a in aggregates], alpha=0.3)
    ax.plot(d, [a["mean_t_f"] for a in aggregates], "o-", label="mean")
    ax.plot(d, [a["best_t_f"] for a in aggregates], "s--", label="best")
    ax.set_xscale("log")
    ax.set_xlabel("density")
    ax.set_ylabel("forecast time (Lyapunov times)")
    ax.legend()
    _save(fig, Path(out) / "sweep.svg")
