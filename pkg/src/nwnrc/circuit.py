"""Kirchhoff solve and memristive edge evolution.

The free functions here (``solve_voltages``, ``update_edges``, ``step``) are
the reference semantics and work on any graph and any pinning. The hot loop
of a simulation uses :class:`CircuitSession`, which keeps the pinning fixed
and hands every step to the kernel selected in :mod:`nwnrc.kernels`.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .graph import NetworkGraph


class CircuitError(ValueError):
    """Invalid boundary specification or unsolvable circuit."""


@dataclass(frozen=True)
class MemristorParams:
    """Equation-of-state constants shared by every junction.

    Above ``v_threshold`` the filament state grows linearly in the excess
    voltage; at or below it the state relaxes exponentially. The defaults
    are calibration choices, not measured device values.
    """

    v_threshold: float = 0.01
    g_off: float = 0.01
    g_on: float = 1.0
    k_grow: float = 50.0
    k_decay: float = 1.0
    sub_steps: int = 1

    def __post_init__(self):
        if not (0.0 < self.g_off < self.g_on):
            raise ValueError("need 0 < g_off < g_on")
        if not self.v_threshold > 0.0:
            raise ValueError("v_threshold must be positive")
        if self.k_grow < 0.0 or self.k_decay < 0.0:
            raise ValueError("k_grow and k_decay must be non-negative")
        if int(self.sub_steps) < 1 or int(self.sub_steps) != self.sub_steps:
            raise ValueError("sub_steps must be a positive integer")

    @property
    def g_range(self) -> float:
        return self.g_on - self.g_off

    def conductance(self, s: np.ndarray) -> np.ndarray:
        return self.g_off + (self.g_on - self.g_off) * s


@dataclass(frozen=True)
class EdgeState:
    """Filament state ``s`` in [0, 1] and the derived conductance ``g``."""

    s: np.ndarray
    g: np.ndarray

    @classmethod
    def from_s(cls, s, params: MemristorParams) -> "EdgeState":
        s = np.clip(np.array(s, dtype=float), 0.0, 1.0)
        g = params.conductance(s)
        s.setflags(write=False)
        g.setflags(write=False)
        return cls(s, g)

    @classmethod
    def pristine(cls, n_edges: int, params: MemristorParams) -> "EdgeState":
        return cls.from_s(np.zeros(n_edges), params)

    @property
    def n_edges(self) -> int:
        return len(self.s)


@dataclass(frozen=True)
class CircuitSolution:
    """Node voltages, edge drops ``V_i - V_j`` and currents drawn at pinned nodes.

    ``source_currents[k]`` is the current leaving pinned node
    ``pinned_nodes[k]`` into the network (negative at a ground that sinks
    current).
    """

    node_voltages: np.ndarray
    edge_drops: np.ndarray
    pinned_nodes: np.ndarray
    source_currents: np.ndarray
    pinned_voltages: np.ndarray = field(repr=False, default=None)

    @property
    def delivered_power(self) -> float:
        return float(np.dot(self.source_currents, self.pinned_voltages))


def _pinning(graph: NetworkGraph, boundary: Mapping[int, float], grounds: Iterable[int]):
    grounds = sorted({int(g) for g in grounds})
    bnodes = sorted(int(b) for b in boundary)
    if not grounds or not bnodes:
        raise CircuitError("need at least one boundary node and one ground")
    if set(bnodes) & set(grounds):
        raise CircuitError(f"nodes {sorted(set(bnodes) & set(grounds))} are both source and ground")
    allp = bnodes + grounds
    if min(allp) < 0 or max(allp) >= graph.n_nodes:
        raise CircuitError("pinned node outside the graph")
    pinned = np.array(allp, dtype=np.int64)
    values = np.array([float(boundary[b]) for b in bnodes] + [0.0] * len(grounds))
    if not np.all(np.isfinite(values)):
        raise CircuitError("boundary voltages must be finite")
    return pinned, values


def edge_currents(graph: NetworkGraph, g: np.ndarray, v: np.ndarray) -> np.ndarray:
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    return g * (v[i] - v[j])


def node_net_current(graph: NetworkGraph, g: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Net current leaving each node and the sum of absolute incident currents."""
    n = graph.n_nodes
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    cur = edge_currents(graph, g, v)
    net = np.bincount(i, cur, n) - np.bincount(j, cur, n)
    absum = np.bincount(i, np.abs(cur), n) + np.bincount(j, np.abs(cur), n)
    return net, absum


def kirchhoff_residual(graph: NetworkGraph, g: np.ndarray, v: np.ndarray, pinned) -> float:
    """Worst relative current imbalance over free nodes.

    ``|net_i| / (sum_e |I_e| at i + eps)`` where the floor ``eps`` is 1e-3 of
    the largest absolute-current throughput of any node; it keeps nodes
    that carry essentially no current from dividing round-off by zero.
    """
    net, absum = node_net_current(graph, g, v)
    free = np.ones(graph.n_nodes, dtype=bool)
    free[np.asarray(list(pinned), dtype=np.int64)] = False
    if not free.any():
        return 0.0
    eps = 1e-3 * absum.max()
    if eps == 0.0:
        return 0.0 if not np.any(net[free]) else math.inf
    return float(np.max(np.abs(net[free]) / (absum[free] + eps)))


def solve_voltages(
    graph: NetworkGraph,
    edge_state: EdgeState,
    boundary: Mapping[int, float],
    grounds: Iterable[int],
) -> CircuitSolution:
    """Node voltages for fixed conductances with sources and grounds pinned.

    Pinned rows and columns of the conductance Laplacian are eliminated and
    the reduced symmetric positive definite system is solved by sparse LU.
    """
    pinned, pv = _pinning(graph, boundary, grounds)
    n = graph.n_nodes
    g = np.asarray(edge_state.g, dtype=float)
    if len(g) != graph.n_edges:
        raise CircuitError("edge state size does not match the graph")
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    lap = sp.coo_matrix(
        (np.concatenate((-g, -g, g, g)), (np.concatenate((i, j, i, j)), np.concatenate((j, i, i, j)))),
        shape=(n, n),
    ).tocsr()
    free = np.setdiff1d(np.arange(n), pinned)
    v = np.zeros(n)
    v[pinned] = pv
    if len(free):
        a_ff = lap[free][:, free].tocsc()
        rhs = -(lap[free][:, pinned] @ pv)
        try:
            lu = splu(a_ff)
        except RuntimeError as exc:
            raise CircuitError(f"singular Kirchhoff system ({a_ff.shape[0]} free nodes): {exc}") from None
        x = lu.solve(rhs)
        # one refinement sweep keeps the residual at round-off
        x += lu.solve(rhs - a_ff @ x)
        if not np.all(np.isfinite(x)):
            raise CircuitError("Kirchhoff solve produced non-finite voltages")
        v[free] = x
    drops = v[i] - v[j]
    net, _ = node_net_current(graph, g, v)
    return CircuitSolution(v, drops, pinned, net[pinned], pv)


def active_fraction(edge_drops, v_threshold: float) -> float:
    d = np.asarray(edge_drops, dtype=float)
    if d.size == 0:
        raise ValueError("active_fraction needs at least one edge")
    return float(np.count_nonzero(np.abs(d) > v_threshold)) / d.size


def _evolve_s(s: np.ndarray, drops: np.ndarray, delta: float, params: MemristorParams) -> np.ndarray:
    a = np.abs(drops)
    decay = math.exp(-params.k_decay * delta)
    out = np.where(a > params.v_threshold, s + params.k_grow * (a - params.v_threshold) * delta, s * decay)
    return np.clip(out, 0.0, 1.0)


def update_edges(edge_state: EdgeState, edge_drops, dt: float, params: MemristorParams) -> EdgeState:
    """Advance every junction by ``dt`` with the drops held fixed.

    The interval is split into ``params.sub_steps`` equal pieces; the state
    is clamped to [0, 1] after each piece.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    drops = np.asarray(edge_drops, dtype=float)
    if drops.shape != edge_state.s.shape:
        raise ValueError("edge_drops length does not match the edge count")
    s = np.array(edge_state.s, dtype=float)
    delta = dt / params.sub_steps
    for _ in range(params.sub_steps):
        s = _evolve_s(s, drops, delta, params)
    return EdgeState.from_s(s, params)


def step(graph, edge_state, boundary, grounds, dt, params: MemristorParams):
    """One circuit step: solve on the current conductances, then evolve edges.

    With ``sub_steps > 1`` the circuit is re-solved at the start of every
    sub-interval so voltages and conductances stay coupled; the returned
    solution is the one from the start of the step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    first = solve_voltages(graph, edge_state, boundary, grounds)
    sol = first
    s = np.array(edge_state.s, dtype=float)
    delta = dt / params.sub_steps
    for k in range(params.sub_steps):
        if k:
            sol = solve_voltages(graph, EdgeState.from_s(s, params), boundary, grounds)
        s = _evolve_s(s, sol.edge_drops, delta, params)
    return first, EdgeState.from_s(s, params)


@dataclass
class StepStats:
    """Per-step summary: activity of the solved drops, ``|dG/dt|`` over
    ``g_on - g_off`` and the conductance distribution after the update."""

    active_fraction: float
    mean_abs_dg: float
    std_abs_dg: float
    mean_g: float
    std_g: float


class CircuitSession:
    """Stateful stepping of one network with a fixed set of pinned nodes.

    Parameters
    ----------
    graph : NetworkGraph
    pinned : sequence of int
        Nodes whose voltage is imposed each step, in the order the values
        are passed to :meth:`step`. Grounds are pinned nodes fed 0 V.
    params : MemristorParams
    dt : float
    edge_state : EdgeState, optional
        Initial state; pristine (``s = 0``) when omitted.
    backend : {"auto", "compiled", "python"}
    """

    def __init__(self, graph: NetworkGraph, pinned, params: MemristorParams, dt: float,
                 edge_state: EdgeState | None = None, backend: str = "auto"):
        if not dt > 0:
            raise ValueError("dt must be positive")
        pinned = np.asarray(pinned, dtype=np.int64)
        if len(np.unique(pinned)) != len(pinned):
            raise CircuitError("pinned nodes must be distinct")
        if len(pinned) == 0 or pinned.min() < 0 or pinned.max() >= graph.n_nodes:
            raise CircuitError("pinned nodes must be non-empty and inside the graph")
        if len(pinned) >= graph.n_nodes:
            raise CircuitError("at least one node must be free")
        self.graph = graph
        self.params = params
        self.dt = float(dt)
        self.pinned = pinned
        n = graph.n_nodes
        free = np.setdiff1d(np.arange(n), pinned)
        self.free = free
        order = np.concatenate((free, pinned))
        self._label = np.empty(n, dtype=np.int64)
        self._label[order] = np.arange(n)
        self._order = order
        ei = self._label[graph.edges[:, 0]]
        ej = self._label[graph.edges[:, 1]]
        if edge_state is None:
            edge_state = EdgeState.pristine(graph.n_edges, params)
        if edge_state.n_edges != graph.n_edges:
            raise CircuitError("edge state size does not match the graph")
        cls = kernels.get_kernel(backend)
        self.backend = kernels.backend_name(cls)
        self._k = cls(n, len(free), ei, ej, np.array(edge_state.s, dtype=float),
                      params.v_threshold, params.g_off, params.g_on,
                      params.k_grow, params.k_decay, int(params.sub_steps), self.dt)

    def step(self, pinned_voltages) -> StepStats:
        pv = np.ascontiguousarray(pinned_voltages, dtype=float)
        if pv.shape != (len(self.pinned),):
            raise CircuitError(f"expected {len(self.pinned)} pinned voltages, got shape {pv.shape}")
        if not np.all(np.isfinite(pv)):
            raise CircuitError("pinned voltages must be finite")
        return StepStats(*self._k.step(pv))

    @property
    def voltages(self) -> np.ndarray:
        """Node voltages (original labels) from the start of the last step."""
        return np.asarray(self._k.voltages)[self._label]

    def voltages_at(self, nodes: np.ndarray) -> np.ndarray:
        return np.asarray(self._k.voltages)[self._label[nodes]]

    @property
    def edge_drops(self) -> np.ndarray:
        return np.array(self._k.drops)

    @property
    def edge_state(self) -> EdgeState:
        return EdgeState.from_s(np.array(self._k.s), self.params)

    @property
    def iterations(self) -> int:
        return int(self._k.last_iterations)

    def set_edge_state(self, edge_state: EdgeState) -> None:
        self._k.set_s(np.array(edge_state.s, dtype=float))
