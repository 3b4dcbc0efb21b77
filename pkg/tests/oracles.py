"""Independent reference implementations used only by the tests.

Nothing here imports the package's solver: the max-flow is a plain BFS
Edmonds-Karp on a dense capacity matrix and the energy is re-summed term by
term from the definitions with pure Python loops.
"""

import itertools
import math
from collections import deque

import numpy as np


def edmonds_karp(cap, s, t):
    """Max-flow value on a dense capacity matrix (list of lists, copied)."""
    n = len(cap)
    res = [row[:] for row in cap]
    flow = 0.0
    while True:
        parent = [-1] * n
        parent[s] = s
        q = deque([s])
        while q and parent[t] < 0:
            u = q.popleft()
            for v in range(n):
                if parent[v] < 0 and res[u][v] > 1e-15:
                    parent[v] = u
                    q.append(v)
        if parent[t] < 0:
            return flow
        aug = math.inf
        v = t
        while v != s:
            aug = min(aug, res[parent[v]][v])
            v = parent[v]
        v = t
        while v != s:
            res[parent[v]][v] -= aug
            res[v][parent[v]] += aug
            v = parent[v]
        flow += aug


def energy_by_definition(p, edges, weights, cliques, lam, q, labels, pairwise=True, higher=True):
    e = 0.0
    for pi, y in zip(p, labels):
        e += -math.log(pi) if y == 1 else -math.log(1.0 - pi)
    if pairwise:
        for (i, j), w in zip(edges, weights):
            if labels[i] != labels[j]:
                e += w
    if higher:
        for c, lm, qq in zip(cliques, lam, q):
            pos = sum(1 for i in c if labels[i] == 1)
            n = min(pos, len(c) - pos)
            e += n * lm / qq if n <= qq else lm
    return e


def enumerate_min(p, edges, weights, cliques, lam, q, pairwise=True, higher=True):
    best = (math.inf, None)
    for labels in itertools.product((-1, 1), repeat=len(p)):
        e = energy_by_definition(p, edges, weights, cliques, lam, q, labels, pairwise, higher)
        if e < best[0]:
            best = (e, labels)
    return best


def purity(labels, gt):
    """Fraction of pixels whose supervoxel's majority ground-truth label matches their own."""
    flat = labels.ravel()
    g = gt.ravel().astype(np.int64)
    n = flat.max() + 1
    pos = np.bincount(flat, g, n)
    tot = np.bincount(flat, minlength=n)
    majority = np.maximum(pos, tot - pos)
    return float(majority.sum() / flat.size)


def random_potentials(rng, n, n_cliques, use_pairwise=True, use_higher_order=True):
    """Random PotentialSet: sparse Potts edges, disjoint cliques covering the nodes."""
    from svseg.energy import PotentialSet

    p = rng.uniform(0.01, 0.99, n)
    m = int(rng.integers(0, 2 * n + 1))
    pairs = sorted({(int(min(a, b)), int(max(a, b))) for a, b in rng.integers(0, n, (m, 2)) if a != b})
    edges = np.array(pairs, np.int64).reshape(-1, 2)
    k = max(1, min(n_cliques, n))
    cuts = np.sort(rng.choice(np.arange(1, n), k - 1, replace=False)) if k > 1 else []
    cliques = tuple(np.sort(c) for c in np.split(rng.permutation(n), cuts))
    size = np.array([c.size for c in cliques], np.float64)
    lam = size * np.exp(-rng.uniform(0.0, 3.0, size.size))
    return PotentialSet(p, -np.log(p), -np.log1p(-p), edges, rng.uniform(0.0, 1.5, len(edges)),
                        cliques, lam, 0.1 * size, use_pairwise, use_higher_order)
