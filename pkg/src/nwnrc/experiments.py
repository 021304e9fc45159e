"""Experiment runners behind the ``nwn`` command.

Each runner takes a resolved :class:`~nwnrc.config.ExperimentConfig` and an
output directory, writes CSV artifacts plus the resolved config, and
returns an in-memory summary. Every artifact is a pure function of the
config and its base seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import metrics as M
from .config import ExperimentConfig, derive_seed, write_resolved
from .graph import (
    NetworkGraph,
    density,
    edges_for_density,
    generate_nanowire_spatial,
    generate_random_graph,
    write_edgelist,
)
from .readout import RidgeConfig, TrainedReadout, ridge_fit, write_readout
from .reservoir import Reservoir, ReservoirTrace, make_wiring, routed_wiring, write_wiring
from .signals import LorenzParams, fourier_square_modes, lorenz_series, normalize, write_trajectory

METRIC_COLUMNS = ["seed", "n_nodes", "n_edges", "density", "t_f_lyapunov", "train_nmse", "mean_activity"]
TRACE_COLUMNS = ["t", "mean_g", "std_g", "mean_abs_dG_dt", "active_fraction"]
ROW_COLUMNS = ["density_index", "realization"] + METRIC_COLUMNS + ["diverged"]
AGG_COLUMNS = ["density_index", "n_nodes", "n_edges", "density", "count", "mean_t_f", "std_t_f",
               "p25_t_f", "median_t_f", "p75_t_f", "best_t_f", "mean_train_nmse", "mean_activity"]


# file helpers -------------------------------------------------------------

def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, columns, rows) -> None:
    atomic_write_text(path, csv_text(columns, rows))


def write_matrix_csv(path, columns, data: np.ndarray) -> None:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    np.savetxt(buf, np.asarray(data, dtype=float), delimiter=",", fmt="%.17g")
    atomic_write_text(path, buf.getvalue())


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_trace(path, trace: ReservoirTrace, voltages: list | None = None) -> None:
    """Per-step circuit trace; node-voltage columns are appended when given."""
    data = np.column_stack((trace.times, trace.mean_g, trace.std_g, trace.mean_abs_dG, trace.activity))
    cols = list(TRACE_COLUMNS)
    if voltages:
        V = np.asarray(voltages)
        data = np.column_stack((data, V))
        cols += [f"v{k}" for k in range(V.shape[1])]
    write_matrix_csv(path, cols, data)


# shared building blocks ------------------------------------------------------

def build_graph(cfg: ExperimentConfig, n_edges: int, seed: int) -> NetworkGraph:
    net = cfg.network
    if net.generator == "nanowire":
        return generate_nanowire_spatial(net.n_wires, net.wire_length, seed)
    return generate_random_graph(net.n_nodes, n_edges, seed)


@lru_cache(maxsize=4)
def _lorenz_cached(sigma, rho, beta, dt, y0, n_steps, spin_up):
    y = lorenz_series(LorenzParams(sigma, rho, beta, dt, y0), n_steps, spin_up)
    y.setflags(write=False)
    return y


def lorenz_data(cfg: ExperimentConfig, n_steps: int) -> np.ndarray:
    lz, s = cfg.signal.lorenz, cfg.signal
    return _lorenz_cached(lz.sigma, lz.rho, lz.beta, s.dt, tuple(lz.y0), int(n_steps), lz.spin_up)


def _sweep_edges(cfg: ExperimentConfig) -> list[int]:
    net = cfg.network
    if net.edge_counts:
        return [int(m) for m in net.edge_counts]
    return [edges_for_density(net.n_nodes, d) for d in net.densities]


def _maybe_plot(cfg, name, *args):
    if not cfg.output.plots:
        return
    from . import plots
    getattr(plots, name)(*args)


# forecast --------------------------------------------------------------------

@dataclass
class ForecastResult:
    seed: int
    n_nodes: int
    n_edges: int
    density: float
    t_f_lyapunov: float
    train_nmse: float
    mean_activity: float
    diverged: bool = False
    stop_step: int | None = None
    stop_reason: str = ""
    closed_loop_steps: int = 0
    long_term: dict = field(default_factory=dict)
    backend: str = ""
    seconds: float = 0.0

    def metric_row(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]


def forecast_once(cfg: ExperimentConfig, seed: int, n_edges: int | None = None,
                  out_dir: str | os.PathLike | None = None, keep: bool = False):
    """One teacher-forced training run followed by a closed-loop forecast.

    Parameters
    ----------
    seed : int
        Run seed; the graph uses it directly, the wiring a seed derived from it.
    n_edges : int, optional
        Overrides ``network.n_edges``.
    out_dir : path, optional
        When given, all per-run artifacts are written there.
    keep : bool
        Also return the arrays (truth, prediction, error series, trace).

    Returns
    -------
    ForecastResult, or ``(ForecastResult, dict)`` when ``keep`` is set.
    """
    t_start = time.perf_counter()
    sig, ridge, met = cfg.signal, cfg.ridge, cfg.metrics
    T, F = sig.train_steps, sig.forecast_steps
    graph = build_graph(cfg, cfg.network.n_edges if n_edges is None else n_edges, seed)
    w = cfg.wiring
    wiring = make_wiring(graph, w.n_inputs, w.n_grounds, 3, w.win_range, w.bias_range,
                         derive_seed(seed, 1))
    params = cfg.memristor.params()
    raw = lorenz_data(cfg, T + F)
    # statistics come from the training window only
    _, stats = normalize(raw[:T + 1], sig.voltage_scale)
    Z = stats.transform(raw)

    res = Reservoir(graph, wiring, params, sig.dt, backend=cfg.backend)
    vlog = [] if (out_dir is not None and cfg.output.verbose_voltages) else None
    train = res.drive(Z[:T], voltage_log=vlog)
    R = train.readouts
    wash = ridge.washout_steps
    if ridge.standardize:
        mu = R[wash:].mean(axis=0)
        sd = R[wash:].std(axis=0)
        sd[sd == 0] = 1.0
    else:
        mu, sd = 0.0, 1.0
    readout = ridge_fit((R - mu) / sd, Z[1:T + 1] - Z[:T],
                        RidgeConfig(ridge.tikhonov, wash), wiring_seed=wiring.seed)
    W = readout.W_out
    pred_train = (R - mu) / sd @ W.T + Z[:T]
    train_nmse = M.training_nmse(Z[1 + wash:T + 1], pred_train[wash:])

    # closed loop: continue the same reservoir, feeding predictions back
    truth = Z[T + 1:T + 1 + F]
    den = M._error_normalizer(truth)
    limit = met.divergence_factor * float(np.max(np.abs(Z[:T + 1])))
    P = np.full((F, 3), np.nan)
    closed = []
    u = pred_train[-1]
    stop, reason = None, ""
    for k in range(F):
        r = res.step(u)
        if vlog is not None:
            vlog.append(res.session.voltages.copy())
        closed.append(res.last_stats)
        u = (r - mu) / sd @ W.T + u
        if not np.all(np.isfinite(u)):
            stop, reason = k, "non-finite"
            break
        if np.max(np.abs(u)) > limit:
            stop, reason = k, "diverged"
            break
        P[k] = u
        if cfg.output.stop_at_threshold and np.sum((truth[k] - u) ** 2) / den > met.theta:
            stop, reason = k + 1, "threshold"
            break
    E = M.forecast_error(truth, P, normalizer=den)
    t_f = M.forecast_time(E, met.theta, met.lyapunov_max, sig.dt)
    n_done = F if stop is None else stop
    long_term = M.lobe_persistence(P[:n_done, 0], sig.dt, met.lyapunov_max, limit=limit)
    result = ForecastResult(
        seed=int(seed), n_nodes=graph.n_nodes, n_edges=graph.n_edges,
        density=density(graph), t_f_lyapunov=float(t_f), train_nmse=float(train_nmse),
        mean_activity=float(np.mean(train.activity[wash:])),
        diverged=reason in ("diverged", "non-finite"), stop_step=stop, stop_reason=reason,
        closed_loop_steps=n_done, long_term=long_term, backend=res.session.backend,
    )
    result.seconds = time.perf_counter() - t_start

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_resolved(cfg, out)
        write_edgelist(graph, out / "graph.edgelist")
        write_wiring(wiring, out / "wiring.json")
        write_readout(readout, out / "readout.csv")
        times = np.arange(len(raw)) * sig.dt
        write_trajectory(out / "trajectory.csv", times, raw)
        tp = (T + 1 + np.arange(F)) * sig.dt
        write_matrix_csv(out / "prediction.csv",
                         ["t", "y1", "y2", "y3", "y1_hat", "y2_hat", "y3_hat", "error"],
                         np.column_stack((tp, truth, P, E)))
        cloud = stats.inverse(P[:n_done])
        write_matrix_csv(out / "attractor.csv", ["t", "y1", "y2", "y3"],
                         np.column_stack((tp[:n_done], cloud)))
        write_csv(out / "metrics.csv", METRIC_COLUMNS, [result.metric_row()])
        if cfg.output.trace:
            full = _concat_trace(train, closed, sig.dt)
            write_trace(out / "trace.csv", full, vlog)
        # wall-clock time stays out of the artifacts so replays are bit-identical
        info = {k: v for k, v in asdict(result).items() if k != "seconds"}
        atomic_write_text(out / "run.json", json.dumps(_jsonable(info), indent=1) + "\n")
        _maybe_plot(cfg, "plot_forecast", out, tp, truth, P, E, met.theta)
    if keep:
        arrays = dict(truth=truth, prediction=P, error=E, train=train, readout=readout,
                      graph=graph, wiring=wiring, stats=stats)
        return result, arrays
    return result


def _concat_trace(train: ReservoirTrace, closed: list, dt: float) -> ReservoirTrace:
    if not closed:
        return train
    c = np.array([(s.active_fraction, s.mean_abs_dg, s.std_abs_dg, s.mean_g, s.std_g) for s in closed])
    n0 = len(train)
    times = np.concatenate((train.times, (n0 + np.arange(len(c))) * dt))
    return ReservoirTrace(
        times, train.readouts,
        np.concatenate((train.activity, c[:, 0])),
        np.concatenate((train.mean_abs_dG, c[:, 1])),
        np.concatenate((train.std_abs_dG, c[:, 2])),
        np.concatenate((train.mean_g, c[:, 3])),
        np.concatenate((train.std_g, c[:, 4])),
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_forecast(cfg: ExperimentConfig, out_dir) -> list[ForecastResult]:
    """``realizations`` forecast runs on the configured network; one subdirectory each."""
    out = Path(out_dir)
    write_resolved(cfg, out)
    results = []
    for r in range(cfg.realizations):
        seed = derive_seed(cfg.base_seed, 0, r)
        sub = out if cfg.realizations == 1 else out / f"run_{r:04d}"
        results.append(forecast_once(cfg, seed, out_dir=sub))
    if cfg.realizations > 1:
        write_csv(out / "metrics.csv", METRIC_COLUMNS, [x.metric_row() for x in results])
    return results


# density sweep ---------------------------------------------------------------

def _row_path(out: Path, di: int, ri: int) -> Path:
    return out / "rows" / f"d{di:02d}_r{ri:04d}.csv"


def _sweep_task(args):
    cfg, di, ri, n_edges, out = args
    seed = derive_seed(cfg.base_seed, di, ri)
    res = forecast_once(cfg, seed, n_edges=n_edges)
    row = [di, ri] + res.metric_row() + [res.diverged]
    write_csv(_row_path(Path(out), di, ri), ROW_COLUMNS, [row])
    return di, ri, res.seconds


def _row_done(path: Path) -> bool:
    try:
        rows = read_csv_rows(path)
    except (OSError, csv.Error):
        return False
    return len(rows) == 1 and set(ROW_COLUMNS) <= set(rows[0])


@dataclass
class SweepResult:
    rows: list[dict]
    aggregates: list[dict]


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Per-density summary of t_f; recomputable from the row files alone."""
    by = {}
    for r in rows:
        by.setdefault(int(r["density_index"]), []).append(r)
    out = []
    for di in sorted(by):
        rs = by[di]
        tf = np.array([float(r["t_f_lyapunov"]) for r in rs])
        out.append({
            "density_index": di,
            "n_nodes": int(rs[0]["n_nodes"]),
            "n_edges": int(rs[0]["n_edges"]),
            "density": float(rs[0]["density"]),
            "count": len(rs),
            "mean_t_f": float(tf.mean()),
            "std_t_f": float(tf.std()),
            "p25_t_f": float(np.percentile(tf, 25)),
            "median_t_f": float(np.median(tf)),
            "p75_t_f": float(np.percentile(tf, 75)),
            "best_t_f": float(tf.max()),
            "mean_train_nmse": float(np.mean([float(r["train_nmse"]) for r in rs])),
            "mean_activity": float(np.mean([float(r["mean_activity"]) for r in rs])),
        })
    return out


def run_density_sweep(cfg: ExperimentConfig, out_dir, progress=None) -> SweepResult:
    """All (density, realization) runs; finished row files are skipped on re-run."""
    out = Path(out_dir)
    write_resolved(cfg, out)
    edges = _sweep_edges(cfg)
    todo = []
    for di, m in enumerate(edges):
        for ri in range(cfg.realizations):
            if not _row_done(_row_path(out, di, ri)):
                todo.append((cfg, di, ri, m, str(out)))
    if cfg.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for done in pool.map(_sweep_task, todo):
                if progress:
                    progress(*done)
    else:
        for t in todo:
            done = _sweep_task(t)
            if progress:
                progress(*done)
    rows = []
    for di in range(len(edges)):
        for ri in range(cfg.realizations):
            rows += read_csv_rows(_row_path(out, di, ri))
    write_csv(out / "rows.csv", ROW_COLUMNS, [[r[c] for c in ROW_COLUMNS] for r in rows])
    aggs = aggregate_rows(rows)
    write_csv(out / "aggregate.csv", AGG_COLUMNS, [[a[c] for c in AGG_COLUMNS] for a in aggs])
    _maybe_plot(cfg, "plot_sweep", out, aggs)
    return SweepResult(rows, aggs)


# pulse -------------------------------------------------------------------------

@dataclass
class PulseResult:
    times: np.ndarray
    input_v: np.ndarray
    trace: ReservoirTrace
    graph: NetworkGraph
    input_node: int
    ground_node: int
    snapshots: dict


def run_pulse(cfg: ExperimentConfig, out_dir=None) -> PulseResult:
    """Single DC pulse into one node with one ground; traces activity and conductance."""
    sig, p = cfg.signal, cfg.pulse
    seed = derive_seed(cfg.base_seed, 0, 0)
    graph = build_graph(cfg, cfg.network.n_edges, seed)
    wiring = routed_wiring(graph, 1, cfg.wiring.n_grounds, derive_seed(seed, 1))
    n_steps = int(round(p.total_time / sig.dt))
    t = np.arange(n_steps) * sig.dt
    u = np.where(t < p.duration - 1e-12, p.amplitude, 0.0)
    res = Reservoir(graph, wiring, cfg.memristor.params(), sig.dt, backend=cfg.backend)
    # snapshots are the edge states after round(t / dt) steps
    marks = sorted({min(max(int(round(s / sig.dt)), 0), n_steps) for s in p.snapshot_times})
    snaps, parts, vlog = {}, [], ([] if cfg.output.verbose_voltages else None)
    k = 0
    for m in marks + [n_steps]:
        if m > k:
            parts.append(res.drive(u[k:m, None], voltage_log=vlog))
            k = m
        if m in marks:
            snaps[m * sig.dt] = res.edge_state.g.copy()
    trace = ReservoirTrace(*(np.concatenate([getattr(x, f) for x in parts])
                             for f in ("times", "readouts", "activity", "mean_abs_dG",
                                       "std_abs_dG", "mean_g", "std_g")))
    result = PulseResult(t, u, trace, graph, int(wiring.input_nodes[0]),
                         int(wiring.ground_nodes[0]), snaps)
    if out_dir is not None:
        out = Path(out_dir)
        write_resolved(cfg, out)
        write_edgelist(graph, out / "graph.edgelist")
        write_wiring(wiring, out / "wiring.json")
        write_matrix_csv(out / "pulse.csv", ["t", "input_v", "active_fraction", "mean_g"],
                         np.column_stack((t, u, trace.activity, trace.mean_g)))
        write_trace(out / "trace.csv", trace, vlog)
        for ts, g in snaps.items():
            write_matrix_csv(out / f"g_snapshot_t{ts:g}.csv", ["i", "j", "g"],
                             np.column_stack((graph.edges, g)))
        _maybe_plot(cfg, "plot_pulse", out, t, u, trace)
    return result


# input-output mapping ----------------------------------------------------------

@dataclass
class IOMapResult:
    inputs: np.ndarray
    readouts: dict
    diversity: dict
    tracking: dict


def run_io_map(cfg: ExperimentConfig, out_dir=None) -> IOMapResult:
    """Square-wave Fourier modes routed one per input node, for each edge count."""
    sig, f = cfg.signal, cfg.fourier
    t = np.arange(f.steps) * sig.dt
    U = f.voltage * fourier_square_modes(f.n_modes, f.period, t)
    readouts, div, track, rows = {}, {}, {}, []
    for di, m in enumerate(cfg.network.edge_counts):
        seed = derive_seed(cfg.base_seed, di, 0)
        graph = build_graph(cfg, m, seed)
        wiring = routed_wiring(graph, f.n_modes, cfg.wiring.n_grounds, derive_seed(seed, 1))
        res = Reservoir(graph, wiring, cfg.memristor.params(), sig.dt, backend=cfg.backend)
        tr = res.drive(U)
        R = tr.readouts
        readouts[graph.n_edges] = R
        if np.any(U) and np.ptp(R, axis=0).max() > 0:
            d = M.readout_diversity(R)
            tk = M.input_tracking(U, R)
            frac = float(np.mean(tk[np.isfinite(tk)] > 0)) if np.isfinite(tk).any() else float("nan")
        else:
            d, frac = M.DiversitySummary(float("nan"), float("nan"), float("nan"), 0, R.shape[1]), float("nan")
        div[graph.n_edges] = d
        track[graph.n_edges] = frac
        rows.append([graph.n_edges, density(graph), d.mean, d.min, d.max, d.n_used, d.n_dropped, frac])
        if out_dir is not None:
            out = Path(out_dir)
            write_matrix_csv(out / f"readouts_m{graph.n_edges}.csv",
                             ["t"] + [f"node{n}" for n in wiring.readout_nodes],
                             np.column_stack((t, R)))
            write_edgelist(graph, out / f"graph_m{graph.n_edges}.edgelist")
            write_wiring(wiring, out / f"wiring_m{graph.n_edges}.json")
    if out_dir is not None:
        out = Path(out_dir)
        write_resolved(cfg, out)
        write_matrix_csv(out / "inputs.csv", ["t"] + [f"u{k + 1}" for k in range(f.n_modes)],
                         np.column_stack((t, U)))
        write_csv(out / "diversity.csv",
                  ["n_edges", "density", "mean_corr", "min_corr", "max_corr", "n_used",
                   "n_dropped", "tracking_fraction"], rows)
        _maybe_plot(cfg, "plot_io_map", out, t, U, readouts)
    return IOMapResult(U, readouts, div, track)
