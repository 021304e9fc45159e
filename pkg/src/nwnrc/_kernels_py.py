"""Pure-Python circuit kernel (numpy/scipy), used when the extension is absent.

Same interface and update rule as the compiled kernel; the linear system is
solved by dense Cholesky every step instead of warm-started CG.
"""
import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class CircuitKernel:
    def __init__(self, n_nodes, n_free, edge_i, edge_j, s0, v_threshold, g_off, g_on,
                 k_grow, k_decay, sub_steps, dt, method="direct"):
        self.n_nodes = int(n_nodes)
        self.n_free = int(n_free)
        self.ei = np.asarray(edge_i, dtype=np.int64)
        self.ej = np.asarray(edge_j, dtype=np.int64)
        self.n_edges = len(self.ei)
        self.v_threshold = float(v_threshold)
        self.g_off = float(g_off)
        self.g_on = float(g_on)
        self.k_grow = float(k_grow)
        self.k_decay = float(k_decay)
        self.sub_steps = int(sub_steps)
        self.dt = float(dt)
        self.delta = self.dt / self.sub_steps
        self.decay = math.exp(-self.k_decay * self.delta)
        self.method = "direct"
        n = self.n_nodes
        self._fi = self.ei * n + self.ej
        self._fj = self.ej * n + self.ei
        self.last_iterations = 0
        self.direct_solves = 0
        self.set_s(s0)

    def set_s(self, s):
        s = np.array(s, dtype=float)
        if s.shape != (self.n_edges,):
            raise ValueError("state size does not match the edge count")
        self.s = s
        self.g = self.g_off + (self.g_on - self.g_off) * s
        self.voltages = np.zeros(self.n_nodes)
        self.drops = np.zeros(self.n_edges)

    def _solve(self, v):
        n, nf, g = self.n_nodes, self.n_free, self.g
        if nf == 0:
            return
        if not np.any(v[nf:]):
            v[:nf] = 0.0
            return
        lap = (np.bincount(self._fi, -g, n * n) + np.bincount(self._fj, -g, n * n)).reshape(n, n)
        lap[np.diag_indices(n)] = np.bincount(self.ei, g, n) + np.bincount(self.ej, g, n)
        rhs = -(lap[:nf, nf:] @ v[nf:])
        v[:nf] = cho_solve(cho_factor(lap[:nf, :nf], lower=True, check_finite=False), rhs,
                           check_finite=False)
        self.direct_solves += 1

    def _evolve(self, drops):
        a = np.abs(drops)
        s = np.where(a > self.v_threshold,
                     self.s + self.k_grow * (a - self.v_threshold) * self.delta,
                     self.s * self.decay)
        self.s = np.clip(s, 0.0, 1.0)
        self.g = self.g_off + (self.g_on - self.g_off) * self.s

    def step(self, pinned_v):
        nf = self.n_free
        v = self.voltages
        v[nf:] = pinned_v
        self._solve(v)
        self.drops = v[self.ei] - v[self.ej]
        g0 = self.g
        act = float(np.count_nonzero(np.abs(self.drops) > self.v_threshold)) / max(self.n_edges, 1)
        self._evolve(self.drops)
        work = v.copy()
        for _ in range(1, self.sub_steps):
            self._solve(work)
            self._evolve(work[self.ei] - work[self.ej])
        rate = np.abs(self.g - g0) / self.dt / (self.g_on - self.g_off)
        if self.n_edges == 0:
            return act, 0.0, 0.0, self.g_off, 0.0
        # conductance moments through s, so an empty network reports g_off exactly
        span = self.g_on - self.g_off
        return (act, float(rate.mean()), float(rate.std()),
                self.g_off + span * float(self.s.mean()), span * float(self.s.std()))
