"""Regular vines: sequential MST structure selection, fitting, density and simulation.

Variables are indexed 0..d-1 internally. Labels, JSON files and reports use
1-based indices (``"13|2"``) or column names.

An edge ``(x, y | D)`` couples the conditional pseudo-observations
``F(x | D)`` and ``F(y | D)``; ``x`` is the copula's first argument. Its
two h-transforms feed the next tree as ``F(x | D + y)`` and ``F(y | D + x)``.
Conditional pseudo-observations are kept in a dict keyed by
``(variable, frozenset(D))``.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import networkx as nx
import numpy as np

from . import select
from .bicop import (
    FIRST_GIVEN_SECOND,
    SECOND_GIVEN_FIRST,
    CopulaSpec,
    hfunc,
    hinv,
    logpdf,
    tail_dependence,
    theoretical_tau,
)
from .dependence import TAU_MODES, TauMatrix, kendall_tau
from .errors import DataError, EdgeFitError, VineDepError
from .marginals import PseudoObservations
from .runtime import parallel_map
from .select import EdgeFit


@dataclass(frozen=True)
class VineEdge:
    level: int
    node_a: int
    node_b: int
    conditioned: tuple
    conditioning: frozenset

    @property
    def variables(self):
        return frozenset(self.conditioned) | self.conditioning

    def label(self, names=None):
        """``"13|2"`` style label (1-based); column names when given."""
        if names is not None:
            pair = ",".join(names[i] for i in self.conditioned)
            cond = ",".join(names[i] for i in sorted(self.conditioning))
        else:
            idx = list(self.conditioned) + sorted(self.conditioning)
            sep = "," if max(idx) >= 9 else ""
            pair = sep.join(str(i + 1) for i in self.conditioned)
            cond = sep.join(str(i + 1) for i in sorted(self.conditioning))
        return f"{pair}|{cond}" if cond else pair


@dataclass(frozen=True)
class VineTree:
    level: int
    nodes: tuple
    edges: tuple

    def __post_init__(self):
        if len(self.edges) != len(self.nodes) - 1:
            raise VineDepError(f"tree {self.level}: {len(self.edges)} edges for {len(self.nodes)} nodes")
        g = nx.Graph()
        g.add_nodes_from(range(len(self.nodes)))
        g.add_edges_from((e.node_a, e.node_b) for e in self.edges)
        if not nx.is_tree(g):
            raise VineDepError(f"tree {self.level} is not a spanning tree")


@dataclass(frozen=True)
class RVineStructure:
    d: int
    trees: tuple

    def __post_init__(self):
        validate_structure(self)

    @property
    def edges(self):
        return tuple(e for t in self.trees for e in t.edges)


def validate_structure(structure):
    """Assert the R-vine conditions: node recursion, proximity, set sizes."""
    d, trees = structure.d, structure.trees
    if len(trees) != d - 1:
        raise VineDepError(f"expected {d - 1} trees, got {len(trees)}")
    for k, tree in enumerate(trees):
        if tree.level != k + 1:
            raise VineDepError("tree levels must be 1..d-1")
        if k == 0:
            if tuple(tree.nodes) != tuple(range(d)):
                raise VineDepError("first tree must span all variables")
        elif tuple(tree.nodes) != tuple(trees[k - 1].edges):
            raise VineDepError(f"tree {k + 1}: nodes are not the edges of tree {k}")
        for e in tree.edges:
            if len(e.variables) != k + 2 or len(e.conditioning) != k:
                raise VineDepError(f"edge {e.label()}: wrong set sizes for level {k + 1}")
            if k == 0:
                if set(e.conditioned) != {e.node_a, e.node_b}:
                    raise VineDepError("first-tree edge does not join its variables")
            else:
                a, b = tree.nodes[e.node_a], tree.nodes[e.node_b]
                if not _shares_node(a, b):
                    raise VineDepError(f"edge {e.label()} violates the proximity condition")
                if e.variables != a.variables | b.variables:
                    raise VineDepError(f"edge {e.label()}: sets do not match its parents")


def _shares_node(a: VineEdge, b: VineEdge):
    return bool({a.node_a, a.node_b} & {b.node_a, b.node_b})


def _mst(n_nodes, weighted_pairs):
    """Maximum spanning tree; ties resolve by candidate order (Kruskal)."""
    g = nx.Graph()
    g.add_nodes_from(range(n_nodes))
    for a, b, w in weighted_pairs:
        g.add_edge(a, b, weight=w)
    if not nx.is_connected(g):
        raise VineDepError("candidate graph is not connected")
    tree = nx.maximum_spanning_tree(g, algorithm="kruskal")
    return sorted((min(a, b), max(a, b)) for a, b in tree.edges())


def select_first_tree(taus: TauMatrix) -> VineTree:
    """Spanning tree over the variables maximizing the sum of |tau|."""
    vals = np.asarray(taus.values if isinstance(taus, TauMatrix) else taus, dtype=float)
    d = vals.shape[0]
    if d < 2:
        raise DataError("need at least 2 variables")
    pairs = [(i, j, abs(vals[i, j])) for i, j in combinations(range(d), 2)]
    edges = tuple(VineEdge(1, i, j, (i, j), frozenset()) for i, j in _mst(d, pairs))
    return VineTree(1, tuple(range(d)), edges)


def proximity_candidates(prev: VineTree):
    """Edges allowed in the next tree: pairs of ``prev`` edges sharing a node."""
    nodes = prev.edges
    out = []
    for a, b in combinations(range(len(nodes)), 2):
        ea, eb = nodes[a], nodes[b]
        if not _shares_node(ea, eb):
            continue
        va, vb = ea.variables, eb.variables
        (x,), (y,) = va - vb, vb - va
        out.append(VineEdge(prev.level + 1, a, b, (x, y), va & vb))
    return out


def extend_tree(prev: VineTree, cond, tau_mode="tau-b") -> VineTree:
    """Next tree by MST over |tau| of the conditional pseudo-observations.

    ``cond`` maps ``(variable, frozenset(conditioning))`` to arrays.
    """
    if len(prev.edges) < 2:
        raise VineDepError("extend_tree needs a tree with at least 2 edges")
    cands = proximity_candidates(prev)
    weighted = []
    for e in cands:
        x, y = e.conditioned
        t = kendall_tau(cond[(x, e.conditioning)], cond[(y, e.conditioning)], mode=tau_mode)
        weighted.append((e.node_a, e.node_b, abs(t)))
    chosen = set(_mst(len(prev.edges), weighted))
    edges = tuple(e for e in cands if (e.node_a, e.node_b) in chosen)
    return VineTree(prev.level + 1, tuple(prev.edges), edges)


@dataclass(frozen=True)
class VineConfig:
    families: Optional[tuple] = None
    tau_mode: str = "tau-b"
    truncate: Optional[int] = None

    def __post_init__(self):
        if self.tau_mode not in TAU_MODES:
            raise DataError(f"tau_mode must be one of {TAU_MODES}")
        if self.truncate is not None and int(self.truncate) < 0:
            raise DataError("truncate must be >= 0")


@dataclass(frozen=True)
class FittedVine:
    structure: RVineStructure
    edge_fits: dict
    edge_taus: dict
    edge_tails: dict
    total_loglik: float
    n_obs: int
    names: tuple = field(default=())

    @property
    def d(self):
        return self.structure.d

    @property
    def specs(self):
        return {e: f.spec for e, f in self.edge_fits.items()}

    @property
    def n_params(self):
        return sum(f.spec.n_params for f in self.edge_fits.values())


def _edge_inputs(e, cond):
    x, y = e.conditioned
    return cond[(x, e.conditioning)], cond[(y, e.conditioning)]


def _push_h(e, spec, ux, uy, cond):
    x, y = e.conditioned
    cond[(x, e.conditioning | {y})] = np.atleast_1d(hfunc(spec, ux, uy, FIRST_GIVEN_SECOND))
    cond[(y, e.conditioning | {x})] = np.atleast_1d(hfunc(spec, uy, ux, SECOND_GIVEN_FIRST))


def _base_cond(data):
    return {(j, frozenset()): data[:, j] for j in range(data.shape[1])}


def _as_matrix(u, d=None):
    data = u.data if isinstance(u, PseudoObservations) else np.atleast_2d(np.asarray(u, dtype=float))
    if d is not None and data.shape[1] != d:
        raise DataError(f"expected {d} columns, got {data.shape[1]}")
    return data


def _fit_edge(e, ux, uy, n, config, names):
    level = e.level
    try:
        if config.truncate is not None and level > config.truncate:
            return EdgeFit.independence()
        tau = kendall_tau(ux, uy, mode=config.tau_mode)
        if select.independence_test(tau, n):
            return EdgeFit.independence()
        cands = select.default_candidates(tau, config.families)
        return select.select_family_aic(ux, uy, cands, tau=tau)
    except VineDepError as exc:
        raise EdgeFitError(e.label(names), exc) from exc


def fit_sequential(u, config: Optional[VineConfig] = None, names=None) -> FittedVine:
    """Tree-by-tree selection and fitting (greedy; no global re-optimization)."""
    config = config or VineConfig()
    if isinstance(u, PseudoObservations):
        names = names or u.column_names
    data = _as_matrix(u)
    n, d = data.shape
    names = tuple(names) if names is not None else tuple(f"V{j + 1}" for j in range(d))
    if d < 2:
        raise DataError("need at least 2 columns")
    if n < 30 * d:
        raise DataError(f"need N >= 30*d = {30 * d} observations, got {n}")

    cond = _base_cond(data)
    trees, fits = [], {}
    tree = None
    for level in range(1, d):
        if level == 1:
            tau_m = np.eye(d)
            for i, j in combinations(range(d), 2):
                tau_m[i, j] = tau_m[j, i] = kendall_tau(data[:, i], data[:, j], mode=config.tau_mode)
            tree = select_first_tree(tau_m)
        else:
            tree = extend_tree(tree, cond, config.tau_mode)
        trees.append(tree)
        inputs = [_edge_inputs(e, cond) for e in tree.edges]
        level_fits = parallel_map(
            lambda args: _fit_edge(args[0], *args[1], n, config, names),
            list(zip(tree.edges, inputs)),
        )
        for e, (ux, uy), fit in zip(tree.edges, inputs, level_fits):
            fits[e] = fit
            if level < d - 1:
                _push_h(e, fit.spec, ux, uy, cond)
    return _assemble(RVineStructure(d, tuple(trees)), fits, n, names)


def structure_from_first_tree(d, first_edges) -> RVineStructure:
    """Complete a first tree to a full R-vine.

    Each higher tree is the first spanning tree found among the
    proximity-feasible edges (all weights equal). Handy for planting
    simulation models.
    """
    edges = tuple(VineEdge(1, min(i, j), max(i, j), (min(i, j), max(i, j)), frozenset()) for i, j in first_edges)
    tree = VineTree(1, tuple(range(d)), tuple(sorted(edges, key=lambda e: e.conditioned)))
    trees = [tree]
    while len(tree.edges) > 1:
        cands = proximity_candidates(tree)
        chosen = set(_mst(len(tree.edges), [(e.node_a, e.node_b, 0.0) for e in cands]))
        tree = VineTree(tree.level + 1, tuple(tree.edges), tuple(e for e in cands if (e.node_a, e.node_b) in chosen))
        trees.append(tree)
    return RVineStructure(d, tuple(trees))


def vine_from_specs(structure: RVineStructure, specs, names=None) -> FittedVine:
    """A FittedVine with given edge copulas (logliks set to 0).

    ``specs`` is a dict keyed by edge or a list in structure order.
    """
    if not isinstance(specs, dict):
        specs = dict(zip(structure.edges, specs))
    fits = {e: EdgeFit.from_loglik(specs[e], 0.0) for e in structure.edges}
    names = names or tuple(f"V{j + 1}" for j in range(structure.d))
    return _assemble(structure, fits, 0, names)


def _assemble(structure, fits, n, names):
    taus = {e: theoretical_tau(f.spec) for e, f in fits.items()}
    tails = {e: tail_dependence(f.spec) for e, f in fits.items()}
    total = float(sum(f.loglik for f in fits.values()))
    return FittedVine(structure, dict(fits), taus, tails, total, int(n), tuple(names))


def edge_logliks(structure: RVineStructure, specs: dict, u):
    """Per-observation log-density of every edge, in structure order."""
    data = _as_matrix(u, structure.d)
    cond = _base_cond(data)
    out = {}
    last = structure.d - 1
    for tree in structure.trees:
        for e in tree.edges:
            ux, uy = _edge_inputs(e, cond)
            spec = specs[e]
            out[e] = np.atleast_1d(logpdf(spec, ux, uy)) if spec.n_params else np.zeros(len(ux))
            if tree.level < last:
                _push_h(e, spec, ux, uy, cond)
    return out


def pointwise_loglik(structure, specs, u):
    per_edge = edge_logliks(structure, specs, u)
    return np.sum(np.vstack(list(per_edge.values())), axis=0)


def vine_loglik(vine: FittedVine, u) -> float:
    return float(np.sum(pointwise_loglik(vine.structure, vine.specs, u)))


def vine_density(vine: FittedVine, point) -> float:
    point = np.asarray(point, dtype=float).reshape(1, -1)
    if not np.all((point > 0) & (point < 1)):
        raise DataError("point must lie strictly inside the unit hypercube")
    return float(np.exp(pointwise_loglik(vine.structure, vine.specs, point)[0]))


def refit_parameters(vine: FittedVine, u) -> FittedVine:
    """Re-estimate every edge's parameters with structure and families fixed."""
    data = _as_matrix(u, vine.d)
    n = data.shape[0]
    cond = _base_cond(data)
    fits = {}
    last = vine.d - 1
    for tree in vine.structure.trees:
        for e in tree.edges:
            ux, uy = _edge_inputs(e, cond)
            old = vine.edge_fits[e].spec
            if old.n_params == 0:
                fit = EdgeFit.independence()
            else:
                try:
                    fit = select.fit_bicop_mle(ux, uy, old.family, old.rotation)
                except VineDepError as exc:
                    raise EdgeFitError(e.label(vine.names), exc) from exc
            fits[e] = fit
            if tree.level < last:
                _push_h(e, fit.spec, ux, uy, cond)
    return _assemble(vine.structure, fits, n, vine.names)


def with_specs(vine: FittedVine, specs: dict, u=None) -> FittedVine:
    """Same structure with new edge copulas; logliks evaluated on ``u`` if given."""
    if u is not None:
        per_edge = edge_logliks(vine.structure, specs, u)
        fits = {e: EdgeFit.from_loglik(specs[e], float(np.sum(per_edge[e]))) for e in vine.structure.edges}
        n = _as_matrix(u).shape[0]
    else:
        fits = {e: EdgeFit.from_loglik(specs[e], 0.0) for e in vine.structure.edges}
        n = vine.n_obs
    return _assemble(vine.structure, fits, n, vine.names)


def _peel_order(structure: RVineStructure):
    """Removal order of variables; each comes with its edge chain, level 1 first.

    The removed variable is a conditioned variable of the top edge of the
    remaining sub-vine and therefore sits in exactly one edge per level.
    """
    remaining = [list(t.edges) for t in structure.trees]
    order = []
    while remaining:
        top = remaining[-1][0]
        for w in top.conditioned:
            chain = [[e for e in lvl if w in e.conditioned] for lvl in remaining]
            if all(len(c) == 1 for c in chain):
                break
        else:  # pragma: no cover - impossible for a valid R-vine
            raise VineDepError("structure cannot be peeled")
        order.append((w, [c[0] for c in chain]))
        remaining = [[e for e in lvl if w not in e.variables] for lvl in remaining[:-1]]
    (first,) = set(range(structure.d)) - {w for w, _ in order}
    order.append((first, []))
    return order[::-1]


def vine_simulate(vine: FittedVine, n: int, seed=None) -> np.ndarray:
    """Inverse-Rosenblatt sampling; returns an ``n x d`` array (deterministic per seed)."""
    n = int(n)
    d = vine.d
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.empty((0, d))
    rng = np.random.default_rng(seed)
    w = rng.random((n, d))
    specs = vine.specs
    cond = {}
    out = np.empty((n, d))
    for step, (var, chain) in enumerate(_peel_order(vine.structure)):
        q = np.clip(w[:, step], 1e-10, 1 - 1e-10)
        for e in reversed(chain):
            x, y = e.conditioned
            other = y if x == var else x
            c = cond[(other, e.conditioning)]
            direction = FIRST_GIVEN_SECOND if x == var else SECOND_GIVEN_FIRST
            q = np.atleast_1d(hinv(specs[e], q, c, direction))
            cond[(var, e.conditioning)] = q
        cond[(var, frozenset())] = q
        out[:, var] = q
        for e in chain:
            ux, uy = _edge_inputs(e, cond)
            _push_h(e, specs[e], ux, uy, cond)
    return out


# ---- persistence and reports ----------------------------------------------


def _edge_record(vine, e):
    fit = vine.edge_fits[e]
    tail = vine.edge_tails[e]
    return {
        "conditioned": [i + 1 for i in e.conditioned],
        "conditioning": sorted(i + 1 for i in e.conditioning),
        "copula": fit.spec.to_dict(),
        "tau": vine.edge_taus[e],
        "lambda_lower": tail.lambda_lower,
        "lambda_upper": tail.lambda_upper,
        "loglik": fit.loglik,
    }


def vine_to_dict(vine: FittedVine):
    return {
        "d": vine.d,
        "names": list(vine.names),
        "trees": [
            {"level": t.level, "edges": [_edge_record(vine, e) for e in t.edges]}
            for t in vine.structure.trees
        ],
        "total_loglik": vine.total_loglik,
        "n_obs": vine.n_obs,
    }


def vine_to_json(vine: FittedVine, path=None) -> str:
    text = json.dumps(vine_to_dict(vine), indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def vine_from_dict(obj) -> FittedVine:
    try:
        d = int(obj["d"])
        names = tuple(obj.get("names") or [f"V{j + 1}" for j in range(d)])
        trees, fits = [], {}
        prev = None
        for k, tobj in enumerate(sorted(obj["trees"], key=lambda t: t["level"])):
            level = k + 1
            edges = []
            for eobj in tobj["edges"]:
                x, y = (int(i) - 1 for i in eobj["conditioned"])
                cset = frozenset(int(i) - 1 for i in eobj["conditioning"])
                if level == 1:
                    a, b = x, y
                else:
                    lookup = {ed.variables: idx for idx, ed in enumerate(prev.edges)}
                    a, b = lookup[cset | {x}], lookup[cset | {y}]
                e = VineEdge(level, a, b, (x, y), cset)
                edges.append(e)
                spec = CopulaSpec.from_dict(eobj["copula"])
                fits[e] = EdgeFit.from_loglik(spec, float(eobj.get("loglik", 0.0)))
            nodes = tuple(range(d)) if level == 1 else tuple(prev.edges)
            prev = VineTree(level, nodes, tuple(edges))
            trees.append(prev)
        structure = RVineStructure(d, tuple(trees))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc
    return _assemble(structure, fits, int(obj.get("n_obs", 0)), names)


def vine_from_json(path_or_text) -> FittedVine:
    text = path_or_text
    if not str(path_or_text).lstrip().startswith("{"):
        with open(path_or_text) as fh:
            text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}") from exc
    return vine_from_dict(obj)


REPORT_HEADER = ("Tree", "Pair", "Copula", "tau", "param1", "param2", "lambda_L", "lambda_U", "loglik")


def _fmt(x):
    return f"{x:.6g}"


def report_rows(vine: FittedVine):
    rows = []
    for t in vine.structure.trees:
        for e in t.edges:
            fit = vine.edge_fits[e]
            p = list(fit.spec.params) + [None, None]
            tail = vine.edge_tails[e]
            rows.append([
                str(t.level),
                e.label(vine.names),
                fit.spec.label(),
                _fmt(vine.edge_taus[e]),
                "" if p[0] is None else _fmt(p[0]),
                "" if p[1] is None else _fmt(p[1]),
                _fmt(tail.lambda_lower),
                _fmt(tail.lambda_upper),
                _fmt(fit.loglik),
            ])
    return rows


def report_csv(vine: FittedVine, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    writer.writerows(report_rows(vine))
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def report_markdown(vine: FittedVine) -> str:
    lines = [
        "| Tree | Dependence Pair | Copula | τ | Parameters | λ_L | λ_U |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in report_rows(vine):
        params = ", ".join(x for x in r[4:6] if x) or "-"
        lines.append(f"| {r[0]} | {r[1]} | {r[2]} | {r[3]} | {params} | {r[6]} | {r[7]} |")
    return "\n".join(lines) + "\n"


def tree_to_dot(vine: FittedVine, level: int) -> str:
    tree = vine.structure.trees[level - 1]
    if level == 1:
        node_labels = list(vine.names)
    else:
        node_labels = [e.label() for e in tree.nodes]
    lines = [f"graph T{level} {{"]
    for i, lab in enumerate(node_labels):
        lines.append(f'  n{i} [label="{lab}"];')
    for e in tree.edges:
        fit = vine.edge_fits[e]
        lines.append(
            f'  n{e.node_a} -- n{e.node_b} [label="{e.label()} {fit.spec.label()} '
            f'tau={vine.edge_taus[e]:.2f}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
