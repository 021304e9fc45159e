"""Declarative experiment configuration.

A config is a YAML mapping with nested sections. Every field is optional;
missing ones take the defaults of the experiment kind (see ``PRESETS``)
and then the dataclass defaults below. Unknown keys are rejected so a typo
cannot silently fall back to a default. The fully resolved config is
written next to every run's outputs.
"""
from __future__ import annotations

import copy
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .circuit import MemristorParams

KINDS = ("pulse", "io-map", "forecast", "sweep")
OUT_DIR_ENV = "NWN_OUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending dotted key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass
class NetworkConfig:
    generator: str = "random"
    n_nodes: int = 500
    n_edges: int = 9905
    # io-map and sweep iterate over edge counts; when ``edge_counts`` is
    # empty the sweep converts ``densities`` to edge counts instead
    edge_counts: list = field(default_factory=list)
    densities: list = field(default_factory=lambda: [0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 0.99])
    n_wires: int = 200
    wire_length: float = 0.1


@dataclass
class WiringConfig:
    n_inputs: int = 24
    n_grounds: int = 1
    win_range: float = 1.0
    bias_range: float = 0.05


@dataclass
class LorenzConfig:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    y0: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    spin_up: int = 5000


@dataclass
class SignalConfig:
    dt: float = 0.005
    voltage_scale: float = 0.2
    train_steps: int = 27000
    forecast_steps: int = 5000
    lorenz: LorenzConfig = field(default_factory=LorenzConfig)


@dataclass
class FourierConfig:
    n_modes: int = 10
    period: float = 2.0
    voltage: float = 0.5
    steps: int = 1600


@dataclass
class PulseConfig:
    amplitude: float = 0.5
    duration: float = 4.0
    total_time: float = 10.0
    snapshot_times: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 6.0, 10.0])


@dataclass
class RidgeSection:
    tikhonov: float = 1e-6
    washout_steps: int = 1000
    standardize: bool = False


@dataclass
class MetricsConfig:
    theta: float = 0.4
    lyapunov_max: float = 0.91
    # closed loop is cut once |y_hat| leaves this multiple of the training range
    divergence_factor: float = 10.0


@dataclass
class OutputConfig:
    dir: str = "runs"
    trace: bool = True
    verbose_voltages: bool = False
    plots: bool = False
    # sweeps only need t_f, so the closed loop may stop at the first exceedance
    stop_at_threshold: bool = False


@dataclass
class MemristorSection:
    v_threshold: float = MemristorParams.v_threshold
    g_off: float = MemristorParams.g_off
    g_on: float = MemristorParams.g_on
    k_grow: float = MemristorParams.k_grow
    k_decay: float = MemristorParams.k_decay
    sub_steps: int = MemristorParams.sub_steps

    def params(self) -> MemristorParams:
        return MemristorParams(**dataclasses.asdict(self))


@dataclass
class ExperimentConfig:
    experiment: str = "forecast"
    base_seed: int = 0
    realizations: int = 1
    jobs: int = 1
    backend: str = "auto"
    network: NetworkConfig = field(default_factory=NetworkConfig)
    memristor: MemristorSection = field(default_factory=MemristorSection)
    wiring: WiringConfig = field(default_factory=WiringConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    fourier: FourierConfig = field(default_factory=FourierConfig)
    pulse: PulseConfig = field(default_factory=PulseConfig)
    ridge: RidgeSection = field(default_factory=RidgeSection)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


# per-kind overrides applied before the user's file
PRESETS = {
    "pulse": {
        "network": {"n_nodes": 100, "n_edges": 261},
        "wiring": {"n_inputs": 1, "n_grounds": 1},
        "output": {"dir": "runs/pulse"},
    },
    "io-map": {
        "network": {"n_nodes": 100, "n_edges": 261, "edge_counts": [261, 1517, 4950]},
        "wiring": {"n_inputs": 10, "n_grounds": 1},
        "output": {"dir": "runs/io-map"},
    },
    "forecast": {
        "output": {"dir": "runs/forecast"},
    },
    "sweep": {
        "realizations": 30,
        "output": {"dir": "runs/sweep", "trace": False, "stop_at_threshold": True},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}".lstrip("."), "unknown key")
    kwargs = {}
    for name, f in fields.items():
        if name not in data:
            continue
        key = f"{path}.{name}".lstrip(".")
        v = data[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), v, key)
        else:
            kwargs[name] = _coerce(v, default, key)
    return cls(**kwargs)


def _coerce(v, default, key):
    if isinstance(default, bool):
        if not isinstance(v, bool):
            raise ConfigError(key, f"expected true/false, got {v!r}")
        return v
    if isinstance(default, int):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ConfigError(key, f"expected an integer, got {v!r}")
        return int(v)
    if isinstance(default, float):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(key, f"expected a number, got {v!r}")
        return float(v)
    if isinstance(default, str):
        if not isinstance(v, str):
            raise ConfigError(key, f"expected a string, got {v!r}")
        return v
    if isinstance(default, list):
        if not isinstance(v, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v
        ):
            raise ConfigError(key, f"expected a list of numbers, got {v!r}")
        return list(v)
    return v


def _check(cond, key, msg):
    if not cond:
        raise ConfigError(key, msg)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every parameter before a simulation starts."""
    _check(cfg.experiment in KINDS, "experiment", f"must be one of {', '.join(KINDS)}")
    _check(cfg.realizations >= 1, "realizations", "must be >= 1")
    _check(cfg.jobs >= 1, "jobs", "must be >= 1")
    _check(cfg.backend in ("auto", "compiled", "python"), "backend", "must be auto, compiled or python")
    net = cfg.network
    _check(net.generator in ("random", "nanowire"), "network.generator", "must be random or nanowire")
    _check(net.n_nodes >= 2, "network.n_nodes", "must be >= 2")
    full = net.n_nodes * (net.n_nodes - 1) // 2
    for key, counts in (("network.n_edges", [net.n_edges]), ("network.edge_counts", net.edge_counts)):
        for m in counts:
            _check(int(m) == m and net.n_nodes - 1 <= m <= full, key,
                   f"{m} outside the connected range [{net.n_nodes - 1}, {full}] for {net.n_nodes} nodes")
    for d in net.densities:
        _check(0 < d <= 1, "network.densities", f"density {d} outside (0, 1]")
    _check(net.n_wires >= 2, "network.n_wires", "must be >= 2")
    _check(0 < net.wire_length <= 1, "network.wire_length", "must lie in (0, 1]")
    try:
        cfg.memristor.params()
    except ValueError as exc:
        raise ConfigError("memristor", str(exc)) from None
    w = cfg.wiring
    _check(w.n_inputs >= 1, "wiring.n_inputs", "must be >= 1")
    _check(w.n_grounds >= 1, "wiring.n_grounds", "must be >= 1")
    if net.generator == "random":
        _check(w.n_inputs + w.n_grounds < net.n_nodes, "wiring",
               "n_inputs + n_grounds must leave at least one readout node")
    _check(w.win_range >= 0 and w.bias_range >= 0, "wiring", "ranges must be non-negative")
    s = cfg.signal
    _check(s.dt > 0, "signal.dt", "must be positive")
    _check(s.voltage_scale > 0, "signal.voltage_scale", "must be positive")
    _check(s.train_steps > cfg.ridge.washout_steps, "signal.train_steps",
           "must exceed ridge.washout_steps")
    _check(s.forecast_steps >= 1, "signal.forecast_steps", "must be >= 1")
    _check(len(s.lorenz.y0) == 3 and all(np.isfinite(s.lorenz.y0)), "signal.lorenz.y0",
           "must be 3 finite numbers")
    _check(s.lorenz.spin_up >= 0, "signal.lorenz.spin_up", "must be >= 0")
    f = cfg.fourier
    _check(f.n_modes >= 1, "fourier.n_modes", "must be >= 1")
    _check(f.period > 0, "fourier.period", "must be positive")
    _check(f.steps >= 3, "fourier.steps", "must be >= 3")
    if cfg.experiment == "io-map":
        _check(w.n_inputs == f.n_modes, "wiring.n_inputs", "io-map routes one mode per input node")
        _check(len(net.edge_counts) >= 1, "network.edge_counts", "io-map needs at least one edge count")
    p = cfg.pulse
    _check(p.duration >= 0 and p.total_time > 0, "pulse", "duration and total_time must be positive")
    _check(cfg.experiment != "pulse" or w.n_inputs == 1, "wiring.n_inputs", "pulse uses a single input node")
    _check(cfg.ridge.tikhonov >= 0, "ridge.tikhonov", "must be >= 0")
    _check(cfg.ridge.washout_steps >= 0, "ridge.washout_steps", "must be >= 0")
    m = cfg.metrics
    _check(m.theta > 0, "metrics.theta", "must be positive")
    _check(m.lyapunov_max > 0, "metrics.lyapunov_max", "must be positive")
    _check(m.divergence_factor > 0, "metrics.divergence_factor", "must be positive")
    return cfg


def resolve(data: dict | None = None, experiment: str | None = None) -> ExperimentConfig:
    """Build a validated config from a (possibly partial) mapping."""
    data = dict(data or {})
    kind = experiment or data.get("experiment", "forecast")
    if kind not in KINDS:
        raise ConfigError("experiment", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    if experiment is not None and data.get("experiment", experiment) != experiment:
        raise ConfigError("experiment", f"config is for {data['experiment']!r}, command is {experiment!r}")
    data["experiment"] = kind
    merged = _merge(PRESETS[kind], data)
    return validate(_build(ExperimentConfig, merged, ""))


def load_config(path: str | os.PathLike | None, experiment: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML config; ``overrides`` (e.g. from command-line flags) are merged last."""
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("--config", f"not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("--config", "top level must be a mapping")
    if overrides:
        data = _merge(data, overrides)
    return resolve(data, experiment)


def output_dir(cfg: ExperimentConfig, cli_out: str | None = None) -> Path:
    """``--out`` wins, then the ``NWN_OUT_DIR`` environment variable, then the config."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(cfg.output.dir)


def write_resolved(cfg: ExperimentConfig, out_dir: str | os.PathLike) -> Path:
    path = Path(out_dir) / "config.resolved.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.dump())
    return path


def derive_seed(base_seed: int, *indices: int) -> int:
    """Stable 63-bit seed from the base seed and position indices."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, indices)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
