"""Independent oracles shared by several test modules."""

from itertools import product

import numpy as np

from vinedep.bicop import cdf


def prufer_trees(d):
    """Every labelled spanning tree on d nodes, decoded from Prufer sequences."""
    if d == 2:
        yield [(0, 1)]
        return
    for seq in product(range(d), repeat=d - 2):
        degree = [1] * d
        for s in seq:
            degree[s] += 1
        edges = []
        for s in seq:
            leaf = min(i for i in range(d) if degree[i] == 1)
            edges.append((min(leaf, s), max(leaf, s)))
            degree[leaf] -= 1
            degree[s] -= 1
        a, b = [i for i in range(d) if degree[i] == 1]
        edges.append((a, b))
        yield sorted(edges)


def brute_force_max_tree(weights):
    w = np.abs(np.asarray(weights))
    best, best_val = None, -np.inf
    for edges in prufer_trees(w.shape[0]):
        val = sum(w[i, j] for i, j in edges)
        if val > best_val + 1e-12:
            best, best_val = edges, val
    return best, best_val


def tau_standard_error(spec, u, v):
    """Asymptotic s.e. of the sample tau: sqrt((4/n) Var(4C(U,V) - 2U - 2V))."""
    g = 4 * cdf(spec, u, v) - 2 * u - 2 * v
    return float(np.sqrt(4 * np.var(g) / len(u)))
