"""Linear structural causal models over a discovered DAG.

Fitting is per-node OLS on the DAG parents; queries (do-interventions, total
effects, response deltas) are exact propagations in topological order.
"""
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from causaldiet.discovery import STANDARD_VARIABLES, Dag, discover_or_fallback
from causaldiet.errors import InsufficientDataError

logger = logging.getLogger(__name__)

RIDGE_PENALTY = 1e-6


class LinearSCM:
    """Immutable linear-Gaussian SCM: x_v = intercept_v + sum_p w_pv x_p + eps_v."""

    def __init__(self, dag, coefficients, intercepts, noise_variance):
        self.dag = dag
        self.coefficients = {tuple(k): float(w) for k, w in coefficients.items()}
        self.intercepts = {k: float(v) for k, v in intercepts.items()}
        self.noise_variance = {k: float(v) for k, v in noise_variance.items()}
        edges = {(e.source, e.target) for e in dag.edges}
        if set(self.coefficients) != edges:
            raise ValueError("coefficients must cover exactly the DAG edges")
        names = set(dag.names)
        if set(self.intercepts) != names or set(self.noise_variance) != names:
            raise ValueError("intercepts and noise variances must cover every node")
        if any(v < 0 for v in self.noise_variance.values()):
            raise ValueError("noise variance must be non-negative")
        self._order = dag.topological_order()
        self._parents = {v: dag.parents(v) for v in self._order}

    def weight(self, source, target):
        return self.coefficients.get((source, target), 0.0)

    def parents(self, node):
        return list(self._parents[node])

    @property
    def order(self):
        return list(self._order)

    def to_dict(self):
        d = self.dag.to_dict()
        d["coefficients"] = [
            {"from": e.source, "to": e.target, "weight": self.coefficients[(e.source, e.target)]}
            for e in self.dag.edges
        ]
        d["intercepts"] = {n: self.intercepts[n] for n in self.dag.names}
        d["noise_variance"] = {n: self.noise_variance[n] for n in self.dag.names}
        return d

    @classmethod
    def from_dict(cls, d):
        dag = Dag.from_dict(d)
        coef = {(c["from"], c["to"]): c["weight"] for c in d["coefficients"]}
        return cls(dag, coef, d["intercepts"], d["noise_variance"])

    def __eq__(self, other):
        return isinstance(other, LinearSCM) and self.to_dict() == other.to_dict()


def _columns(data, names):
    if isinstance(data, Mapping):
        return {n: np.asarray(data[n], dtype=np.float64) for n in names}
    from causaldiet.ingest import feature_columns
    return feature_columns(list(data), names)


def _ols(x, y):
    """Coefficients of y on the columns of x (plus intercept); ridge when rank-deficient."""
    xm, ym = x.mean(axis=0), y.mean()
    xc, yc = x - xm, y - ym
    if np.linalg.matrix_rank(xc) < x.shape[1]:
        logger.warning("rank-deficient design; using ridge penalty %g", RIDGE_PENALTY)
        gram = xc.T @ xc + RIDGE_PENALTY * np.eye(x.shape[1])
        beta = np.linalg.solve(gram, xc.T @ yc)
    else:
        beta = np.linalg.lstsq(xc, yc, rcond=None)[0]
    return beta, ym - float(xm @ beta)


def fit_linear_scm(dag, data):
    """Per-node OLS on the DAG parents with an intercept; unbiased residual variance."""
    cols = _columns(data, dag.names)
    n = len(next(iter(cols.values())))
    coef, intercepts, noise = {}, {}, {}
    for node in dag.topological_order():
        y = cols[node]
        parents = dag.parents(node)
        if not parents:
            intercepts[node] = float(y.mean())
            noise[node] = float(y.var(ddof=1)) if n > 1 else 0.0
            continue
        if n < len(parents) + 2:
            raise InsufficientDataError(
                f"node {node} has {len(parents)} parents but only {n} rows")
        x = np.column_stack([cols[p] for p in parents])
        beta, b0 = _ols(x, y)
        resid = y - b0 - x @ beta
        intercepts[node] = float(b0)
        noise[node] = float(resid @ resid / (n - len(parents) - 1))
        for p, w in zip(parents, beta):
            coef[(p, node)] = float(w)
    return LinearSCM(dag, coef, intercepts, noise)


@dataclass(frozen=True)
class InterventionQuery:
    assignments: Mapping
    target: str
    covariates: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if set(self.assignments) & set(self.covariates):
            raise ValueError("assignment and covariate nodes must be disjoint")
        if self.target in self.assignments or self.target in self.covariates:
            raise ValueError("the target cannot be fixed")


class InterventionResult(NamedTuple):
    value: float
    reachable: bool  # False when no assigned node has a causal path to the target


def _propagate(scm, fixed):
    values = {}
    for node in scm._order:
        if node in fixed:
            values[node] = float(fixed[node])
        else:
            values[node] = scm.intercepts[node] + sum(
                scm.coefficients[(p, node)] * values[p] for p in scm._parents[node])
    return values


def do_intervention(query, scm):
    """E[target | do(assignments), covariates fixed]; noise has zero mean."""
    fixed = dict(query.covariates)
    fixed.update(query.assignments)
    unknown = set(fixed) - set(scm.intercepts)
    if unknown or query.target not in scm.intercepts:
        raise ValueError(f"unknown nodes in query: {sorted(unknown | {query.target})}")
    values = _propagate(scm, fixed)
    reachable = any(_reaches_unblocked(scm, a, query.target, set(fixed)) for a in query.assignments)
    if not reachable:
        logger.debug("target %s is not reachable from the assignments", query.target)
    return InterventionResult(values[query.target], reachable)


def _reaches_unblocked(scm, source, target, fixed):
    stack, seen = [source], {source}
    while stack:
        n = stack.pop()
        if n == target:
            return True
        for c in scm.dag.children(n):
            if c not in seen and c not in fixed:
                seen.add(c)
                stack.append(c)
    return False


def total_effect(scm, source, target):
    """Sum over directed paths source -> target of the product of edge weights."""
    if source not in scm.intercepts or target not in scm.intercepts:
        raise ValueError(f"unknown node {source!r} or {target!r}")
    effect = {n: 0.0 for n in scm._order}
    effect[source] = 1.0
    start = scm._order.index(source)
    for node in scm._order[start + 1:]:
        effect[node] = sum(scm.coefficients[(p, node)] * effect[p] for p in scm._parents[node])
    return effect[target]


def response_delta(scm, deltas, target):
    """Expected change of target when each node v is set to its value + deltas[v].

    Shifted nodes are held at their new values, so an upstream shift does not
    also flow through a downstream shifted node. With a single shifted node
    this is total_effect * delta.
    """
    unknown = (set(deltas) | {target}) - set(scm.intercepts)
    if unknown:
        raise ValueError(f"unknown nodes: {sorted(unknown)}")
    shift = {}
    for node in scm._order:
        if node in deltas:
            shift[node] = float(deltas[node])
        else:
            shift[node] = sum(scm.coefficients[(p, node)] * shift[p] for p in scm._parents[node])
    return shift[target]


def ancestral_sample(scm, n, seed, do=None):
    """Draw n rows (as a dict of columns) with Gaussian noise; ``do`` fixes nodes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    do = do or {}
    rng = np.random.default_rng(seed)
    out = {}
    for node in scm._order:
        if node in do:
            out[node] = np.full(n, float(do[node]))
            continue
        mean = np.full(n, scm.intercepts[node])
        for p in scm._parents[node]:
            mean += scm.coefficients[(p, node)] * out[p]
        sd = np.sqrt(scm.noise_variance[node])
        out[node] = mean + sd * rng.standard_normal(n) if sd > 0 else mean
    return out


def standardize_scm(scm, sds):
    """Rescale weights to standard-deviation units; a constant target gets weight 0."""
    coef = {}
    for (u, v), w in scm.coefficients.items():
        coef[(u, v)] = w * sds[u] / sds[v] if sds[v] > 0 else 0.0
    intercepts = {n: 0.0 for n in scm.intercepts}
    noise = {n: (scm.noise_variance[n] / sds[n] ** 2 if sds[n] > 0 else 0.0)
             for n in scm.noise_variance}
    return LinearSCM(scm.dag, coef, intercepts, noise)


def _minmax(values):
    if not values:
        return {}
    lo, hi = min(values.values()), max(values.values())
    if hi > lo:
        return {k: (v - lo) / (hi - lo) for k, v in values.items()}
    return {k: (0.0 if v == 0 else 1.0) for k, v in values.items()}


def usage_stats(features, variables=STANDARD_VARIABLES):
    """Historical usage R(v): column means min-max normalized within each role.

    Outcome nodes can only appear as path intermediates; they get R = 1 so an
    outcome -> outcome edge contributes its full weight.
    """
    names = [v.name for v in variables]
    cols = _columns(features, names)
    if len(next(iter(cols.values()))) == 0:
        raise ValueError("usage statistics need at least one row")
    usage = {}
    for role in ("nutrient", "modulator", "biomarker"):
        means = {v.name: float(np.mean(cols[v.name])) for v in variables if v.role == role}
        usage.update(_minmax(means))
    for v in variables:
        if v.role == "outcome":
            usage[v.name] = 1.0
    return usage


@dataclass(frozen=True, eq=False)
class PersonalCausalGraph:
    scm: LinearSCM
    user_id: str
    fitted_on: str
    usage: Mapping
    means: Mapping
    sds: Mapping

    def __post_init__(self):
        if self.fitted_on not in ("train_half", "full"):
            raise ValueError(f"fitted_on must be train_half or full, got {self.fitted_on!r}")
        missing = [v.name for v in self.scm.dag.variables
                   if v.role != "outcome" and v.name not in self.usage]
        if missing:
            raise ValueError(f"usage missing for {missing}")

    @property
    def dag(self):
        return self.scm.dag

    @cached_property
    def standardized_scm(self):
        """Same graph with unit-free weights w * sd(source) / sd(target)."""
        return standardize_scm(self.scm, self.sds)

    def to_dict(self):
        return {
            "user_id": self.user_id,
            "fitted_on": self.fitted_on,
            "scm": self.scm.to_dict(),
            "usage": dict(self.usage),
            "means": dict(self.means),
            "sds": dict(self.sds),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(LinearSCM.from_dict(d["scm"]), d["user_id"], d["fitted_on"],
                   d["usage"], d["means"], d["sds"])


def build_personal_graph(features, user_id, fitted_on, alpha=0.05,
                         variables=STANDARD_VARIABLES, dag: Optional[Dag] = None):
    """Discover (unless ``dag`` is given), fit, and attach usage and means."""
    names = [v.name for v in variables]
    cols = _columns(features, names)
    if dag is None:
        dag = discover_or_fallback(cols, variables, alpha)
    scm = fit_linear_scm(dag, cols)
    means = {n: float(np.mean(cols[n])) for n in names}
    sds = {n: float(np.std(cols[n], ddof=1)) if len(cols[n]) > 1 else 0.0 for n in names}
    return PersonalCausalGraph(scm, str(user_id), fitted_on, usage_stats(cols, variables),
                               means, sds)
