"""A network wired as a dynamic reservoir.

Inputs drive a random subset of nodes through ``r_in = W_in u + b_in``,
ground nodes are held at 0 V and every other node is a readout whose
feature is its instantaneous voltage.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .circuit import CircuitSession, EdgeState, MemristorParams
from .graph import NetworkGraph


class WiringError(ValueError):
    pass


@dataclass(frozen=True)
class ReservoirWiring:
    input_nodes: np.ndarray
    ground_nodes: np.ndarray
    readout_nodes: np.ndarray
    W_in: np.ndarray
    b_in: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        arrs = {}
        for name in ("input_nodes", "ground_nodes", "readout_nodes"):
            a = np.array(getattr(self, name), dtype=np.int64).ravel()
            a.setflags(write=False)
            arrs[name] = a
        W = np.array(self.W_in, dtype=float, ndmin=2)
        b = np.array(self.b_in, dtype=float).ravel()
        if W.shape[0] != len(arrs["input_nodes"]) or b.shape != (W.shape[0],):
            raise WiringError(f"W_in {W.shape} / b_in {b.shape} do not match "
                              f"{len(arrs['input_nodes'])} input nodes")
        if len(arrs["ground_nodes"]) == 0 or len(arrs["input_nodes"]) == 0:
            raise WiringError("need at least one input and one ground node")
        every = np.concatenate(list(arrs.values()))
        if len(np.unique(every)) != len(every):
            raise WiringError("input, ground and readout nodes must be disjoint")
        W.setflags(write=False)
        b.setflags(write=False)
        for name, a in arrs.items():
            object.__setattr__(self, name, a)
        object.__setattr__(self, "W_in", W)
        object.__setattr__(self, "b_in", b)

    @property
    def n_inputs(self) -> int:
        return len(self.input_nodes)

    @property
    def n_u(self) -> int:
        return self.W_in.shape[1]

    @property
    def n_readouts(self) -> int:
        return len(self.readout_nodes)

    @property
    def pinned(self) -> np.ndarray:
        return np.concatenate((self.input_nodes, self.ground_nodes))

    def boundary_voltages(self, u: np.ndarray) -> np.ndarray:
        """Input-node voltages ``W_in u + b_in`` followed by zeros for the grounds."""
        return np.concatenate((self.W_in @ u + self.b_in, np.zeros(len(self.ground_nodes))))

    def check_covers(self, n_nodes: int) -> None:
        every = np.concatenate((self.input_nodes, self.ground_nodes, self.readout_nodes))
        if len(every) != n_nodes or every.min() < 0 or every.max() >= n_nodes:
            raise WiringError(f"wiring does not partition the {n_nodes} graph nodes")


def _split_nodes(n_nodes, n_inputs, n_grounds, rng):
    if n_inputs < 1 or n_grounds < 1:
        raise WiringError("n_inputs and n_grounds must be positive")
    if n_inputs + n_grounds >= n_nodes:
        raise WiringError(
            f"{n_inputs} inputs + {n_grounds} grounds leave no readout in {n_nodes} nodes"
        )
    nodes = rng.permutation(n_nodes)
    inputs = nodes[:n_inputs]
    grounds = np.sort(nodes[n_inputs:n_inputs + n_grounds])
    readouts = np.sort(nodes[n_inputs + n_grounds:])
    return inputs, grounds, readouts


def make_wiring(graph: NetworkGraph, n_inputs: int, n_grounds: int, n_u: int,
                win_range: float, bias_range: float, seed: int) -> ReservoirWiring:
    """Random input/ground placement with ``W_in ~ U(-win, win)``, ``b_in ~ U(-bias, bias)``."""
    rng = np.random.default_rng(seed)
    inputs, grounds, readouts = _split_nodes(graph.n_nodes, n_inputs, n_grounds, rng)
    W = rng.uniform(-win_range, win_range, size=(n_inputs, n_u))
    b = rng.uniform(-bias_range, bias_range, size=n_inputs)
    return ReservoirWiring(inputs, grounds, readouts, W, b, seed)


def routed_wiring(graph: NetworkGraph, n_inputs: int, n_grounds: int, seed: int,
                  gain: float = 1.0) -> ReservoirWiring:
    """One input signal per input node (``W_in = gain * I``, ``b_in = 0``)."""
    rng = np.random.default_rng(seed)
    inputs, grounds, readouts = _split_nodes(graph.n_nodes, n_inputs, n_grounds, rng)
    return ReservoirWiring(inputs, grounds, readouts, gain * np.eye(n_inputs),
                           np.zeros(n_inputs), seed)


def wiring_to_dict(w: ReservoirWiring) -> dict:
    return {
        "seed": w.seed,
        "input_nodes": w.input_nodes.tolist(),
        "ground_nodes": w.ground_nodes.tolist(),
        "readout_nodes": w.readout_nodes.tolist(),
        "W_in": w.W_in.tolist(),
        "b_in": w.b_in.tolist(),
    }


def write_wiring(w: ReservoirWiring, path: str | os.PathLike) -> None:
    # json writes floats with repr, so values round-trip exactly
    with open(path, "w") as fh:
        json.dump(wiring_to_dict(w), fh, indent=1)
        fh.write("\n")


def read_wiring(path: str | os.PathLike) -> ReservoirWiring:
    with open(path) as fh:
        d = json.load(fh)
    n_in = len(d["input_nodes"])
    W = np.array(d["W_in"], dtype=float).reshape(n_in, -1)
    return ReservoirWiring(d["input_nodes"], d["ground_nodes"], d["readout_nodes"],
                           W, d["b_in"], d["seed"])


@dataclass(frozen=True)
class ReservoirTrace:
    """Per-step record of a drive.

    Row ``t`` holds the readouts solved at step ``t`` (before that step's
    edge update), the activity of those drops, the ``|dG/dt|`` statistics
    of the update and the conductance mean/std after it.
    """

    times: np.ndarray
    readouts: np.ndarray
    activity: np.ndarray
    mean_abs_dG: np.ndarray
    std_abs_dG: np.ndarray
    mean_g: np.ndarray
    std_g: np.ndarray

    def __len__(self):
        return len(self.times)


class Reservoir:
    """Stateful reservoir session; the edge state persists across calls."""

    def __init__(self, graph: NetworkGraph, wiring: ReservoirWiring, params: MemristorParams,
                 dt: float, edge_state: EdgeState | None = None, backend: str = "auto"):
        wiring.check_covers(graph.n_nodes)
        self.graph = graph
        self.wiring = wiring
        self.params = params
        self.dt = float(dt)
        self.session = CircuitSession(graph, wiring.pinned, params, dt, edge_state, backend)
        self._ro = np.asarray(wiring.readout_nodes)
        self._n_ground = len(wiring.ground_nodes)
        self.t = 0
        self.last_stats = None

    @property
    def edge_state(self) -> EdgeState:
        return self.session.edge_state

    def reset(self, edge_state: EdgeState | None = None) -> None:
        if edge_state is None:
            edge_state = EdgeState.pristine(self.graph.n_edges, self.params)
        self.session.set_edge_state(edge_state)
        self.t = 0

    def step(self, u: np.ndarray) -> np.ndarray:
        """Apply input ``u`` for one step and return the readout vector."""
        w = self.wiring
        pv = np.concatenate((w.W_in @ u + w.b_in, np.zeros(self._n_ground)))
        self.last_stats = self.session.step(pv)
        self.t += 1
        return self.session.voltages_at(self._ro)

    def drive(self, u_sequence: np.ndarray, voltage_log: list | None = None) -> ReservoirTrace:
        """Drive with the rows of ``u_sequence`` and record a trace.

        ``voltage_log``, when given, receives a copy of every step's full
        node-voltage vector.
        """
        U = np.asarray(u_sequence, dtype=float)
        if U.ndim != 2 or U.shape[1] != self.wiring.n_u:
            raise ValueError(f"u_sequence must be T x {self.wiring.n_u}, got {U.shape}")
        if not np.all(np.isfinite(U)):
            raise ValueError("u_sequence contains non-finite values")
        T = len(U)
        R = np.empty((T, self.wiring.n_readouts))
        stats = np.empty((T, 5))
        t0 = self.t
        for k in range(T):
            R[k] = self.step(U[k])
            st = self.last_stats
            stats[k] = (st.active_fraction, st.mean_abs_dg, st.std_abs_dg, st.mean_g, st.std_g)
            if voltage_log is not None:
                voltage_log.append(self.session.voltages.copy())
        times = (t0 + np.arange(T)) * self.dt
        return ReservoirTrace(times, R, *stats.T.copy())


def drive(graph: NetworkGraph, wiring: ReservoirWiring, edge_state: EdgeState | None,
          u_sequence: np.ndarray, dt: float, params: MemristorParams,
          backend: str = "auto") -> tuple[ReservoirTrace, EdgeState]:
    """Functional form of :meth:`Reservoir.drive`; returns the final edge state too."""
    res = Reservoir(graph, wiring, params, dt, edge_state, backend)
    trace = res.drive(u_sequence)
    return trace, res.edge_state
