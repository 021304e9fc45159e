"""Graph abstraction of a nanowire network: wires are nodes, junctions are edges."""
from __future__ import annotations

import heapq
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


class GraphError(ValueError):
    """Raised for infeasible or malformed network graphs."""


def _canonical_edges(edges, n_nodes: int) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n_nodes):
        raise GraphError(f"edge endpoint outside [0, {n_nodes})")
    if np.any(e[:, 0] == e[:, 1]):
        raise GraphError("self-loops are not allowed")
    e = np.sort(e, axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e = e[order]
    if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
        raise GraphError("duplicate edges are not allowed")
    return e


def _n_components(n_nodes: int, edges: np.ndarray) -> tuple[int, np.ndarray]:
    adj = coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_nodes, n_nodes)
    )
    return connected_components(adj, directed=False)


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected connected graph.

    ``edges`` is stored as an ``(m, 2)`` read-only int64 array with ``i < j``
    in every row and rows in ascending lexicographic order. Edge ``k`` in
    every per-edge array of the package refers to row ``k`` here.
    """

    n_nodes: int
    edges: np.ndarray
    generator_tag: str = "manual"
    seed: int | None = None
    _degree: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_nodes) < 1:
            raise GraphError("n_nodes must be positive")
        object.__setattr__(self, "n_nodes", int(self.n_nodes))
        e = _canonical_edges(self.edges, self.n_nodes)
        if len(e) > self.n_nodes * (self.n_nodes - 1) // 2:
            raise GraphError("more edges than a complete graph allows")
        if self.n_nodes > 1:
            n_comp, _ = _n_components(self.n_nodes, e)
            if n_comp != 1:
                raise GraphError(f"graph is not connected ({n_comp} components)")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        deg = np.bincount(e.ravel(), minlength=self.n_nodes)
        deg.setflags(write=False)
        object.__setattr__(self, "_degree", deg)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degree(self) -> np.ndarray:
        return self._degree

    def __eq__(self, other):
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return self.n_nodes == other.n_nodes and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n_nodes, self.edges.tobytes()))


def max_edges(n_nodes: int) -> int:
    return n_nodes * (n_nodes - 1) // 2


def density(graph: NetworkGraph) -> float:
    """Edge count over the complete-graph edge count."""
    if graph.n_nodes < 2:
        raise GraphError("density needs at least 2 nodes")
    return graph.n_edges / max_edges(graph.n_nodes)


def edges_for_density(n_nodes: int, frac: float) -> int:
    """Edge count closest to ``frac`` density, kept within the connected range."""
    m = int(round(frac * max_edges(n_nodes)))
    return min(max(m, n_nodes - 1), max_edges(n_nodes))


def _pair_index(i: np.ndarray, j: np.ndarray, n: int) -> np.ndarray:
    # row-major index of (i, j), i < j, within the strict upper triangle
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def _prufer_tree(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random labelled tree on ``n`` nodes via a random Pruefer code."""
    if n == 2:
        return np.array([[0, 1]], dtype=np.int64)
    code = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=np.int64)
    np.add.at(degree, code, 1)
    leaves = [int(v) for v in np.nonzero(degree == 1)[0]]
    heapq.heapify(leaves)
    out = np.empty((n - 1, 2), dtype=np.int64)
    for k, v in enumerate(code):
        leaf = heapq.heappop(leaves)
        out[k] = (leaf, v)
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, int(v))
    out[n - 2] = (heapq.heappop(leaves), heapq.heappop(leaves))
    return np.sort(out, axis=1)


def generate_random_graph(n_nodes: int, n_edges: int, seed: int) -> NetworkGraph:
    """Connected random graph with exactly ``n_edges`` edges.

    A uniform random spanning tree guarantees connectivity; the remaining
    edges are drawn uniformly without replacement from the unused pairs.
    """
    n, m = int(n_nodes), int(n_edges)
    if n < 2:
        raise GraphError("n_nodes must be at least 2")
    if m < n - 1:
        raise GraphError(
            f"{m} edges cannot connect {n} nodes (spanning tree needs {n - 1})"
        )
    if m > max_edges(n):
        raise GraphError(f"{m} edges exceed the complete graph on {n} nodes ({max_edges(n)})")
    rng = np.random.default_rng(seed)
    tree = _prufer_tree(n, rng)
    used = np.zeros(max_edges(n), dtype=bool)
    used[_pair_index(tree[:, 0], tree[:, 1], n)] = True
    extra = rng.choice(np.flatnonzero(~used), size=m - (n - 1), replace=False)
    used[extra] = True
    iu, ju = np.triu_indices(n, 1)
    keep = np.flatnonzero(used)
    edges = np.column_stack((iu[keep], ju[keep]))
    return NetworkGraph(n, edges, generator_tag="random-connected", seed=seed)


def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def _on_segment(ax, ay, bx, by, cx, cy):
    # c collinear with a-b: does it lie within the bounding box
    return (
        (np.minimum(ax, bx) <= cx)
        & (cx <= np.maximum(ax, bx))
        & (np.minimum(ay, by) <= cy)
        & (cy <= np.maximum(ay, by))
    )


def segments_intersect(p0: np.ndarray, p1: np.ndarray, q0: np.ndarray, q1: np.ndarray) -> np.ndarray:
    """Vectorised closed-segment intersection test for segment pairs (p, q)."""
    p0, p1, q0, q1 = (np.asarray(a, dtype=float) for a in (p0, p1, q0, q1))
    o1 = _orient(p0[..., 0], p0[..., 1], p1[..., 0], p1[..., 1], q0[..., 0], q0[..., 1])
    o2 = _orient(p0[..., 0], p0[..., 1], p1[..., 0], p1[..., 1], q1[..., 0], q1[..., 1])
    o3 = _orient(q0[..., 0], q0[..., 1], q1[..., 0], q1[..., 1], p0[..., 0], p0[..., 1])
    o4 = _orient(q0[..., 0], q0[..., 1], q1[..., 0], q1[..., 1], p1[..., 0], p1[..., 1])
    hit = (o1 != o2) & (o3 != o4) & (o1 != 0) & (o2 != 0) & (o3 != 0) & (o4 != 0)
    hit |= (o1 == 0) & _on_segment(p0[..., 0], p0[..., 1], p1[..., 0], p1[..., 1], q0[..., 0], q0[..., 1])
    hit |= (o2 == 0) & _on_segment(p0[..., 0], p0[..., 1], p1[..., 0], p1[..., 1], q1[..., 0], q1[..., 1])
    hit |= (o3 == 0) & _on_segment(q0[..., 0], q0[..., 1], q1[..., 0], q1[..., 1], p0[..., 0], p0[..., 1])
    hit |= (o4 == 0) & _on_segment(q0[..., 0], q0[..., 1], q1[..., 0], q1[..., 1], p1[..., 0], p1[..., 1])
    return hit


def intersection_edges(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """All intersecting segment pairs ``(i, j)``, ``i < j``.

    Candidate pairs come from a k-d tree over segment midpoints: two
    segments can only meet if their midpoints are within the sum of their
    half-lengths.
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    mid = 0.5 * (starts + ends)
    half = 0.5 * np.hypot(*(ends - starts).T)
    reach = 2.0 * half.max() if len(half) else 0.0
    pairs = cKDTree(mid).query_pairs(reach * (1 + 1e-12), output_type="ndarray")
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    i, j = pairs[:, 0], pairs[:, 1]
    hit = segments_intersect(starts[i], ends[i], starts[j], ends[j])
    return np.sort(pairs[hit], axis=1).astype(np.int64)


def graph_from_segments(starts: np.ndarray, ends: np.ndarray, *, tag="segments", seed=None) -> NetworkGraph:
    """Intersection graph of the segments, restricted to its largest component."""
    n = len(starts)
    edges = intersection_edges(starts, ends)
    if n == 0:
        raise GraphError("no segments given")
    _, labels = _n_components(n, edges) if len(edges) else (n, np.arange(n))
    sizes = np.bincount(labels)
    big = int(np.argmax(sizes))
    if sizes[big] < 2:
        raise GraphError(
            "largest connected wire cluster has fewer than 2 wires; "
            "increase n_wires or wire_length"
        )
    keep = np.flatnonzero(labels == big)
    relabel = np.full(n, -1, dtype=np.int64)
    relabel[keep] = np.arange(len(keep))
    e = relabel[edges]
    e = e[(e >= 0).all(axis=1)]
    return NetworkGraph(len(keep), e, generator_tag=tag, seed=seed)


def random_segments(n_wires: int, wire_length: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random fixed-length sticks: uniform centres in the unit square, uniform angle in [0, pi)."""
    rng = np.random.default_rng(seed)
    centres = rng.uniform(0.0, 1.0, size=(n_wires, 2))
    theta = rng.uniform(0.0, np.pi, size=n_wires)
    d = 0.5 * wire_length * np.column_stack((np.cos(theta), np.sin(theta)))
    return centres - d, centres + d


def generate_nanowire_spatial(n_wires: int, wire_length: float, seed: int) -> NetworkGraph:
    if n_wires < 2:
        raise GraphError("n_wires must be at least 2")
    if not 0.0 < wire_length <= 1.0:
        raise GraphError("wire_length must lie in (0, 1]")
    starts, ends = random_segments(n_wires, wire_length, seed)
    return graph_from_segments(starts, ends, tag="nanowire-spatial", seed=seed)


def write_edgelist(graph: NetworkGraph, path: str | os.PathLike) -> None:
    lines = [f"{graph.n_nodes} {graph.n_edges}"]
    lines += [f"{i} {j}" for i, j in graph.edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path: str | os.PathLike) -> NetworkGraph:
    rows = Path(path).read_text().split("\n")
    try:
        n, m = (int(v) for v in rows[0].split())
        body = [r for r in rows[1:] if r.strip()]
        edges = np.array([[int(v) for v in r.split()] for r in body], dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise GraphError(f"malformed edge-list file {path}: {exc}") from None
    if len(edges) != m:
        raise GraphError(f"header declares {m} edges, file has {len(edges)}")
    return NetworkGraph(n, edges, generator_tag="edgelist-file")
