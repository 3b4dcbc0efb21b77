"""Exact binary minimisation of the unary + Potts + Robust P^n energy by s-t min-cut.

Source side of the cut is label +1, sink side is label -1. Each Robust P^n
clique adds two auxiliary nodes (one per dominant label); the constant
offsets produced by the construction are tracked so that
``energy == flow_value + offset``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy import energy_terms, total_energy

SOURCE = 0
SINK = 1
MAX_BRUTE_FORCE_NODES = 22


class FlowNetwork:
    """Residual network with paired arcs (arc ``e`` and its reverse ``e ^ 1``)."""

    def __init__(self, n_nodes=2):
        self.adj = [[] for _ in range(n_nodes)]
        self.head = []   # arc -> target node
        self.res = []    # arc -> residual capacity
        self.cap = []    # arc -> original capacity

    @property
    def n_nodes(self):
        return len(self.adj)

    @property
    def n_arcs(self):
        return len(self.head) // 2

    def add_node(self):
        self.adj.append([])
        return len(self.adj) - 1

    def add_arc(self, u, v, cap, rev_cap=0.0):
        if not (math.isfinite(cap) and math.isfinite(rev_cap)) or cap < 0 or rev_cap < 0:
            raise ValueError(f"invalid capacity {cap!r}/{rev_cap!r} on arc {u}->{v}")
        e = len(self.head)
        self.head += [v, u]
        self.res += [float(cap), float(rev_cap)]
        self.cap += [float(cap), float(rev_cap)]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def source_set(self, s=SOURCE):
        """Nodes reachable from ``s`` through arcs with positive residual capacity."""
        seen = [False] * self.n_nodes
        seen[s] = True
        queue = deque([s])
        head, res, adj = self.head, self.res, self.adj
        while queue:
            u = queue.popleft()
            for e in adj[u]:
                v = head[e]
                if not seen[v] and res[e] > 0:
                    seen[v] = True
                    queue.append(v)
        return np.array(seen)

    def cut_capacity(self, in_source):
        total = 0.0
        for e in range(0, len(self.head)):
            u = self.head[e ^ 1]
            if in_source[u] and not in_source[self.head[e]]:
                total += self.cap[e]
        return total


def max_flow(net, s=SOURCE, t=SINK):
    """Dinic's blocking-flow max-flow (shortest augmenting paths, fixed arc order).

    Returns (flow_value, augmentations). The network's residuals are updated in place.
    """
    n = net.n_nodes
    head, res, adj = net.head, net.res, net.adj
    flow = 0.0
    augments = 0
    while True:
        level = [-1] * n
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in adj[u]:
                v = head[e]
                if level[v] < 0 and res[e] > 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        if level[t] < 0:
            return flow, augments
        it = [0] * n
        path = []
        u = s
        while True:
            if u == t:
                b = min(res[e] for e in path)
                for e in path:
                    res[e] -= b
                    res[e ^ 1] += b
                flow += b
                augments += 1
                # retreat to the tail of the first saturated arc
                for i, e in enumerate(path):
                    if res[e] <= 0:
                        del path[i:]
                        break
                u = head[path[-1]] if path else s
                continue
            arcs = adj[u]
            lu = level[u] + 1
            i = it[u]
            while i < len(arcs):
                e = arcs[i]
                if res[e] > 0 and level[head[e]] == lu:
                    break
                i += 1
            it[u] = i
            if i < len(arcs):
                path.append(arcs[i])
                u = head[arcs[i]]
            else:
                if u == s:
                    break
                level[u] = -1
                e = path.pop()
                u = head[e ^ 1]
                it[u] += 1


@dataclass
class SolveResult:
    labeling: np.ndarray
    energy: float
    flow_value: float = float("nan")
    offset: float = 0.0
    stats: dict = field(default_factory=dict)

    def terms(self, pots):
        return energy_terms(pots, self.labeling)


def build_network(pots):
    """Flow network whose min cut equals the energy minus the returned offset."""
    n = pots.n_nodes
    net = FlowNetwork(n + 2)
    offset = 0.0
    for i in range(n):
        a, b = float(pots.unary_pos[i]), float(pots.unary_neg[i])
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"non-finite unary potential at node {i}")
        m = min(a, b)
        offset += m
        if a > m:
            net.add_arc(i + 2, SINK, a - m)
        if b > m:
            net.add_arc(SOURCE, i + 2, b - m)
    if pots.use_pairwise:
        for (i, j), w in zip(pots.edges.tolist(), pots.pair_weight.tolist()):
            if w > 0:
                net.add_arc(i + 2, j + 2, w, w)
    if pots.use_higher_order:
        for c, lam, q in zip(pots.cliques, pots.lam_max.tolist(), pots.q.tolist()):
            if c.size < 2 or lam <= 0:
                continue
            if not (math.isfinite(lam) and q > 0):
                raise ValueError("non-finite clique parameters")
            k = lam / q
            # the minority count never exceeds floor(n/2); capping keeps the
            # two-auxiliary construction exact when q > n/2
            gamma = min(lam, k * (c.size // 2))
            if gamma <= 0:
                continue
            m_pos = net.add_node()   # active when the clique is not all +1
            m_neg = net.add_node()   # active when the clique is not all -1
            net.add_arc(SOURCE, m_pos, gamma)
            net.add_arc(m_neg, SINK, gamma)
            for i in c.tolist():
                net.add_arc(m_pos, i + 2, k)
                net.add_arc(i + 2, m_neg, k)
            offset -= gamma
    return net, offset


def minimize(graph, pots):
    net, offset = build_network(pots)
    flow, augments = max_flow(net)
    in_s = net.source_set()
    labeling = np.where(in_s[2:pots.n_nodes + 2], 1, -1).astype(np.int8)
    energy = total_energy(graph, pots, labeling)
    stats = {"nodes": net.n_nodes, "arcs": net.n_arcs, "augmentations": augments}
    return SolveResult(labeling, energy, flow, offset, stats)


def brute_force_min(graph, pots):
    """Exhaustive minimum; ties go to the lexicographically smallest labeling (-1 < +1)."""
    n = pots.n_nodes
    if n > MAX_BRUTE_FORCE_NODES:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_NODES} nodes, got {n}")
    best_e, best_idx = math.inf, 0
    chunk = 1 << min(n, 16)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    for lo in range(0, 1 << n, chunk):
        idx = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(bool)  # True = +1
        e = np.where(bits, pots.unary_pos, pots.unary_neg).sum(1)
        if pots.use_pairwise:
            for (i, j), w in zip(pots.edges.tolist(), pots.pair_weight.tolist()):
                e = e + w * (bits[:, i] != bits[:, j])
        if pots.use_higher_order:
            for c, lam, q in zip(pots.cliques, pots.lam_max.tolist(), pots.q.tolist()):
                n_pos = bits[:, c].sum(1)
                minority = np.minimum(n_pos, c.size - n_pos)
                e = e + np.where(minority <= q, minority * (lam / q), lam)
        j = int(np.argmin(e))
        if e[j] < best_e:
            best_e, best_idx = float(e[j]), int(idx[j])
    labeling = np.where((best_idx >> shifts) & 1, 1, -1).astype(np.int8)
    return SolveResult(labeling, best_e, stats={"enumerated": 1 << n})
