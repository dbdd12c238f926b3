"""PC-algorithm structure discovery with Fisher-Z tests and tier constraints.

Everything iterates in a fixed order (natural sort of variable names) so the
same data always yields the same graph.
"""
import itertools
import logging
import math
import re
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from causaldiet.errors import DataError, InsufficientDataError

logger = logging.getLogger(__name__)

ROLES = ("nutrient", "modulator", "biomarker", "outcome")
PROVENANCES = ("v-structure", "meek", "tier", "tie-break")
MIN_ROWS = 8
MAX_CONDITIONING = 4
CLAMP = 1.0 - 1e-12
_COND_LIMIT = 1e10
_RESID_EPS = 1e-10


def name_key(name):
    """Natural sort key: ``iauc_30 < iauc_60 < iauc_120``."""
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name))


def path_key(nodes):
    return tuple(name_key(n) for n in nodes)


@dataclass(frozen=True)
class VariableSpec:
    name: str
    role: str
    tier: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    def to_dict(self):
        return {"name": self.name, "role": self.role, "tier": self.tier}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["role"], int(d["tier"]))


STANDARD_VARIABLES = (
    VariableSpec("carbohydrates", "nutrient", 0),
    VariableSpec("protein", "nutrient", 0),
    VariableSpec("fat", "nutrient", 0),
    VariableSpec("fiber", "nutrient", 0),
    VariableSpec("met", "modulator", 0),
    VariableSpec("baseline", "modulator", 0),
    VariableSpec("iauc_30", "outcome", 2),
    VariableSpec("iauc_60", "outcome", 2),
    VariableSpec("iauc_120", "outcome", 2),
)


def validate_specs(specs):
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("variable names must be unique")
    top = max(s.tier for s in specs)
    for s in specs:
        if s.role == "outcome" and s.tier != top:
            raise ValueError(f"outcome {s.name} must have the maximum tier {top}")
    return tuple(specs)


class DataMatrix:
    """Standardized n x d data over an ordered variable list."""

    def __init__(self, variables, values):
        self.variables = tuple(variables)
        self.values = np.asarray(values, dtype=np.float64)
        self.index = {v.name: i for i, v in enumerate(self.variables)}

    @classmethod
    def from_columns(cls, columns, variables):
        variables = tuple(variables)
        cols = []
        for v in variables:
            col = np.asarray(columns[v.name], dtype=np.float64)
            if not np.all(np.isfinite(col)):
                raise DataError(f"column {v.name} has missing or non-finite values")
            sd = col.std()
            if sd <= 0:
                raise DataError(f"column {v.name} is constant")
            cols.append((col - col.mean()) / sd)
        return cls(variables, np.column_stack(cols))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def names(self):
        return [v.name for v in self.variables]

    @cached_property
    def corr(self):
        c = self.values.T @ self.values / self.n
        d = np.sqrt(np.diag(c))
        return c / np.outer(d, d)


class InconclusiveTest(Exception):
    """The conditioning design is singular or too small; the edge is kept."""


class CITest(NamedTuple):
    independent: bool
    p_value: float
    statistic: float
    inconclusive: bool = False


def partial_correlation(x, y, z, data):
    """Partial correlation of x and y given the set z, clamped to +/-(1 - 1e-12).

    If x or y is an exact linear function of z the conditional distribution is
    degenerate and 0 is returned (a constant is independent of everything).
    """
    if x == y or x in z or y in z:
        raise ValueError("x, y must be distinct and outside the conditioning set")
    c = data.corr
    i, j = data.index[x], data.index[y]
    if not z:
        r = c[i, j]
    else:
        k = [data.index[v] for v in z]
        czz = c[np.ix_(k, k)]
        if np.linalg.cond(czz) > _COND_LIMIT:
            raise InconclusiveTest(f"singular conditioning set {tuple(z)}")
        xy = [i, j]
        beta = np.linalg.solve(czz, c[np.ix_(k, xy)])
        resid = c[np.ix_(xy, xy)] - c[np.ix_(xy, k)] @ beta
        if resid[0, 0] <= _RESID_EPS or resid[1, 1] <= _RESID_EPS:
            return 0.0
        r = resid[0, 1] / math.sqrt(resid[0, 0] * resid[1, 1])
    return float(min(CLAMP, max(-CLAMP, r)))


def fisher_z_test(x, y, z, data, alpha=0.05):
    dof = data.n - len(z) - 3
    if dof <= 0:
        return CITest(False, math.nan, math.nan, inconclusive=True)
    try:
        r = partial_correlation(x, y, z, data)
    except InconclusiveTest:
        return CITest(False, math.nan, math.nan, inconclusive=True)
    stat = math.atanh(r) * math.sqrt(dof)
    p = math.erfc(abs(stat) / math.sqrt(2.0))
    return CITest(p > alpha, p, stat)


@dataclass(frozen=True)
class Skeleton:
    nodes: tuple
    adjacency: Mapping  # name -> frozenset of names
    sepsets: Mapping  # frozenset({x, y}) -> tuple
    forbidden: frozenset = frozenset()  # pairs excluded by background knowledge

    def adjacent(self, a, b):
        return b in self.adjacency[a]

    def edges(self):
        out = []
        for a in self.nodes:
            for b in self.adjacency[a]:
                if name_key(a) < name_key(b):
                    out.append((a, b))
        return sorted(out, key=path_key)


def pc_skeleton(data, alpha=0.05, max_conditioning=None, forbidden=(), sinks=()):
    """Skeleton phase: prune a complete graph with tests of growing order.

    ``forbidden`` pairs are absent from the start (background knowledge); they
    get no sepset because no test removed them. ``sinks`` are nodes known to
    have no children. When a sink is one end of the tested pair, the other
    sinks are left out of the conditioning set: a sink can only be a collider
    (or a collider's descendant) on a path, so dropping it from a separating
    set keeps the set separating.
    """
    names = sorted(data.names, key=name_key)
    d = len(names)
    cap = min(d - 2, MAX_CONDITIONING) if max_conditioning is None else max_conditioning
    modulators = {v.name for v in data.variables if v.role == "modulator"}
    forbidden = frozenset(frozenset(p) for p in forbidden)
    sinks = frozenset(sinks)
    adj = {v: {u for u in names if u != v and frozenset((u, v)) not in forbidden}
           for v in names}
    sepsets = {}
    level = 0
    while level <= cap:
        tested = False
        for x in names:
            for y in sorted(adj[x], key=name_key):
                if y not in adj[x]:
                    continue
                pool = (adj[x] | modulators) - {x, y}
                if x in sinks or y in sinks:
                    pool -= sinks
                pool = sorted(pool, key=name_key)
                if len(pool) < level:
                    continue
                tested = True
                for z in itertools.combinations(pool, level):
                    if fisher_z_test(x, y, z, data, alpha).independent:
                        adj[x].discard(y)
                        adj[y].discard(x)
                        sepsets[frozenset((x, y))] = tuple(z)
                        break
        if not tested:
            break
        level += 1
    return Skeleton(
        nodes=tuple(names),
        adjacency={v: frozenset(a) for v, a in adj.items()},
        sepsets=sepsets,
        forbidden=forbidden,
    )


class Edge(NamedTuple):
    source: str
    target: str
    provenance: str


class Dag:
    """Directed acyclic graph over named variables with per-edge provenance."""

    def __init__(self, variables, edges):
        self.variables = tuple(sorted(variables, key=lambda v: name_key(v.name)))
        self._spec = {v.name: v for v in self.variables}
        self.edges = tuple(sorted(edges, key=lambda e: path_key((e.source, e.target))))
        self._edge = {(e.source, e.target): e for e in self.edges}
        for e in self.edges:
            if e.source not in self._spec or e.target not in self._spec:
                raise ValueError(f"edge {e.source}->{e.target} references an unknown node")
            if e.provenance not in PROVENANCES:
                raise ValueError(f"unknown provenance {e.provenance!r}")
        self._order = self._topological_order()

    @property
    def names(self):
        return [v.name for v in self.variables]

    def spec(self, name):
        return self._spec[name]

    def __contains__(self, name):
        return name in self._spec

    def has_edge(self, u, v):
        return (u, v) in self._edge

    def parents(self, v):
        return [e.source for e in self.edges if e.target == v]

    def children(self, v):
        return [e.target for e in self.edges if e.source == v]

    def topological_order(self):
        return list(self._order)

    def _topological_order(self):
        indeg = {n: 0 for n in self._spec}
        for e in self.edges:
            indeg[e.target] += 1
        ready = sorted((n for n, k in indeg.items() if k == 0), key=name_key)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
                    ready.sort(key=name_key)
        if len(order) != len(self._spec):
            raise ValueError("graph contains a directed cycle")
        return order

    def adjacency_matrix(self, order=None):
        order = order or self.names
        idx = {n: i for i, n in enumerate(order)}
        a = np.zeros((len(order), len(order)), dtype=np.uint8)
        for e in self.edges:
            if e.source in idx and e.target in idx:
                a[idx[e.source], idx[e.target]] = 1
        return a

    def __eq__(self, other):
        return (isinstance(other, Dag) and self.variables == other.variables
                and self.edges == other.edges)

    def __repr__(self):
        arrows = ", ".join(f"{e.source}->{e.target}" for e in self.edges)
        return f"Dag([{arrows}])"

    def to_dict(self):
        return {
            "variables": [v.to_dict() for v in self.variables],
            "edges": [
                {"from": e.source, "to": e.target, "orientation_provenance": e.provenance}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            [VariableSpec.from_dict(v) for v in d["variables"]],
            [Edge(e["from"], e["to"], e["orientation_provenance"]) for e in d["edges"]],
        )


class _PartialDag:
    """Mixed graph used while orienting; refuses tier-violating or cyclic orientations."""

    def __init__(self, nodes, undirected, tiers):
        self.nodes = sorted(nodes, key=name_key)
        self.undirected = set(undirected)
        self.directed = {}
        self.tiers = tiers

    def adjacent(self, a, b):
        return (frozenset((a, b)) in self.undirected or (a, b) in self.directed
                or (b, a) in self.directed)

    def is_undirected(self, a, b):
        return frozenset((a, b)) in self.undirected

    def is_directed(self, a, b):
        return (a, b) in self.directed

    def _reaches(self, start, goal):
        stack, seen = [start], {start}
        while stack:
            n = stack.pop()
            if n == goal:
                return True
            for (u, v) in self.directed:
                if u == n and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def orient(self, u, v, provenance, check_tier=True):
        key = frozenset((u, v))
        if key not in self.undirected:
            return False
        if check_tier and self.tiers[u] > self.tiers[v]:
            logger.info("orientation %s->%s (%s) dropped: violates tier order", u, v, provenance)
            return False
        if self._reaches(v, u):
            logger.info("orientation %s->%s (%s) dropped: would create a cycle", u, v, provenance)
            return False
        self.undirected.discard(key)
        self.directed[(u, v)] = provenance
        return True

    def undirected_pairs(self):
        """Both orientations of every undirected edge, in deterministic order."""
        pairs = []
        for e in self.undirected:
            a, b = sorted(e, key=name_key)
            pairs.extend([(a, b), (b, a)])
        return sorted(pairs, key=path_key)


def _meek_once(g):
    for a, b in g.undirected_pairs():
        if not g.is_undirected(a, b):
            continue
        others = [c for c in g.nodes if c not in (a, b)]
        # R1: c -> a - b, c and b nonadjacent  =>  a -> b
        if any(g.is_directed(c, a) and not g.adjacent(c, b) for c in others):
            if g.orient(a, b, "meek"):
                return True
        # R2: a -> c -> b and a - b  =>  a -> b
        if any(g.is_directed(a, c) and g.is_directed(c, b) for c in others):
            if g.orient(a, b, "meek"):
                return True
        # R3: a - c -> b, a - d -> b, c and d nonadjacent  =>  a -> b
        mids = [c for c in others if g.is_undirected(a, c) and g.is_directed(c, b)]
        if any(not g.adjacent(c, d) for c, d in itertools.combinations(mids, 2)):
            if g.orient(a, b, "meek"):
                return True
        # R4: a - c -> d -> b, c and b nonadjacent, a adjacent to d  =>  a -> b
        for c in others:
            if not g.is_undirected(a, c) or g.adjacent(c, b):
                continue
            if any(g.is_directed(c, d) and g.is_directed(d, b) and g.adjacent(a, d)
                   for d in others if d != c):
                if g.orient(a, b, "meek"):
                    return True
    return False


def _meek_closure(g):
    while _meek_once(g):
        pass


def orient_edges(skeleton, variables):
    """Turn a skeleton into a DAG.

    Order of application: v-structures, Meek rules, tier order for edges that
    cross tiers, then natural name order for same-tier leftovers. Meek closure
    is re-run after every tier or tie-break orientation so no new unshielded
    collider is introduced.
    """
    tiers = {v.name: v.tier for v in variables}
    g = _PartialDag(skeleton.nodes, [frozenset(e) for e in skeleton.edges()], tiers)

    for z in g.nodes:
        nbrs = sorted(skeleton.adjacency[z], key=name_key)
        for x, y in itertools.combinations(nbrs, 2):
            pair = frozenset((x, y))
            if skeleton.adjacent(x, y) or pair in skeleton.forbidden:
                continue
            if z in skeleton.sepsets.get(pair, ()):
                continue
            for a in (x, y):
                if g.is_directed(a, z):
                    continue
                if g.is_directed(z, a):
                    logger.info("v-structure %s->%s<-%s conflicts with %s->%s; dropped",
                                x, z, y, z, a)
                    continue
                g.orient(a, z, "v-structure")
    _meek_closure(g)

    for a, b in g.undirected_pairs():
        if g.is_undirected(a, b) and tiers[a] < tiers[b]:
            g.orient(a, b, "tier")
            _meek_closure(g)

    while g.undirected:
        a, b = sorted(min(g.undirected, key=lambda e: path_key(sorted(e, key=name_key))),
                      key=name_key)
        # Only one direction can close a cycle in an acyclic partial graph.
        if not (g.orient(a, b, "tie-break", check_tier=False)
                or g.orient(b, a, "tie-break", check_tier=False)):
            raise AssertionError(f"cannot orient {a}-{b}")
        _meek_closure(g)

    edges = [Edge(u, v, p) for (u, v), p in g.directed.items()]
    return Dag(variables, edges)


def tier_fallback_dag(variables):
    """Every nutrient -> every outcome; used when there is too little data for PC."""
    nutrients = [v.name for v in variables if v.role == "nutrient"]
    outcomes = [v.name for v in variables if v.role == "outcome"]
    return Dag(variables, [Edge(a, b, "tier") for a in nutrients for b in outcomes])


def _columns(features, variables):
    if isinstance(features, Mapping):
        return {v.name: np.asarray(features[v.name], dtype=np.float64) for v in variables}
    from causaldiet.ingest import feature_columns
    return feature_columns(list(features), [v.name for v in variables])


def outcome_pairs(variables):
    """Pairs of outcome readouts; one horizon's iAUC does not cause another's."""
    outcomes = [v.name for v in variables if v.role == "outcome"]
    return [frozenset(p) for p in itertools.combinations(outcomes, 2)]


def discover(features, variables=STANDARD_VARIABLES, alpha=0.05, forbid_outcome_edges=True):
    """Standardize, run the PC skeleton search, orient.

    Constant columns become isolated nodes. With ``forbid_outcome_edges`` the
    outcome nodes are never adjacent to each other and, being sinks, are left
    out of the conditioning sets used to test edges into an outcome.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    variables = validate_specs(variables)
    cols = _columns(features, variables)
    n = len(next(iter(cols.values())))
    if n < MIN_ROWS:
        raise InsufficientDataError(f"discovery needs at least {MIN_ROWS} rows, got {n}")
    active = []
    for v in variables:
        if np.std(cols[v.name]) > 0:
            active.append(v)
        else:
            logger.warning("variable %s is constant; left isolated", v.name)
    data = DataMatrix.from_columns(cols, active)
    forbidden, sinks = (), ()
    if forbid_outcome_edges:
        # outcomes sit in the last tier and may not touch each other, so they are sinks
        forbidden = outcome_pairs(active)
        sinks = [v.name for v in active if v.role == "outcome"]
    dag = orient_edges(pc_skeleton(data, alpha, forbidden=forbidden, sinks=sinks), active)
    return Dag(variables, dag.edges)


def discover_or_fallback(features, variables=STANDARD_VARIABLES, alpha=0.05,
                         forbid_outcome_edges=True):
    try:
        return discover(features, variables, alpha, forbid_outcome_edges)
    except InsufficientDataError as exc:
        logger.warning("%s; using the tier-only fallback graph", exc)
        return tier_fallback_dag(validate_specs(variables))


def structural_hamming_distance(a, b):
    """Missing + extra + reversed edges between two DAGs (each pair counted once)."""
    ea = {(e.source, e.target) for e in a.edges}
    eb = {(e.source, e.target) for e in b.edges}
    pairs = {frozenset(p) for p in ea | eb}
    dist = 0
    for p in pairs:
        u, v = tuple(p)
        if ((u, v) in ea) != ((u, v) in eb) or ((v, u) in ea) != ((v, u) in eb):
            dist += 1
    return dist
