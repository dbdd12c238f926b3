"""Goal identification, causal path enumeration, path scoring and ranking.

Path score: S(p) = sum over edges (u, v) in p of W[u, v] * R(u), where W is the
fitted edge weight and R the historical-usage statistic of the edge source.
Node importance accumulates S(p) over every scored path for every node on
the path except the target.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from causaldiet import kernels
from causaldiet.discovery import name_key, path_key
from causaldiet.errors import GoalNotFound, ScoringError
from causaldiet.scm import total_effect

L_MAX = 3
P_MAX = 5
HORIZONS = (30, 60, 120)
GOAL_KEYWORDS = ("glucose spike", "sugar spike", "blood sugar", "blood glucose",
                 "postprandial", "glucose")
INCREASE_WORDS = ("raise", "increase", "boost", "higher")
STRONG, MODERATE = 0.5, 0.2

DISPLAY_NAMES = {
    "carbohydrates": "Carbohydrates",
    "protein": "Protein",
    "fat": "Fat",
    "fiber": "Fiber",
    "met": "Physical activity",
    "baseline": "Baseline glucose",
}
_PLURAL = {"carbohydrates"}


@dataclass(frozen=True)
class Goal:
    target: str
    direction: str = "decrease"
    horizon: int = 120

    def __post_init__(self):
        if self.direction not in ("decrease", "increase"):
            raise ValueError(f"direction must be decrease or increase, got {self.direction!r}")


def _outcomes(dag):
    return [v.name for v in dag.variables if v.role == "outcome"]


def _goal_prompt(query, targets):
    return ("Map the user query to one outcome variable.\n"
            f"Query: {query}\n"
            f"Outcomes: {', '.join(targets)}\n"
            "Answer with the variable name only.")


def identify_goal(query, dag, horizon=120, backend=None):
    """Keyword mapping from a free-text query to an outcome node and a direction."""
    targets = _outcomes(dag)
    text = (query or "").strip().lower()
    if not text:
        raise GoalNotFound(query or "", targets)
    direction = "increase" if any(w in text for w in INCREASE_WORDS) else "decrease"
    if any(k in text for k in GOAL_KEYWORDS):
        target = f"iauc_{horizon}"
        if target not in targets:
            raise GoalNotFound(query, targets)
        return Goal(target, direction, horizon)
    if backend is not None:
        answer = backend.render(_goal_prompt(query, targets)).strip()
        for t in sorted(targets, key=lambda s: -len(s)):
            if t in answer:
                return Goal(t, direction, int(t.rsplit("_", 1)[-1]) if t[-1].isdigit() else horizon)
    raise GoalNotFound(query, targets)


def extract_subgraph(dag, target):
    """Target plus the transitive closure of its ancestors."""
    if target not in dag:
        raise ValueError(f"unknown target {target!r}")
    keep, stack = {target}, [target]
    while stack:
        for p in dag.parents(stack.pop()):
            if p not in keep:
                keep.add(p)
                stack.append(p)
    return keep


@dataclass(frozen=True)
class CausalPath:
    nodes: tuple
    score: Optional[float] = None
    rank: Optional[int] = None

    def edges(self):
        return list(zip(self.nodes[:-1], self.nodes[1:]))

    @property
    def source(self):
        return self.nodes[0]

    def to_dict(self):
        return {"nodes": list(self.nodes), "score": self.score, "rank": self.rank}


def enumerate_paths(dag, target, l_max=L_MAX):
    """Every simple directed path ending at target with at most l_max edges.

    The DFS runs from each source node in turn; the output is sorted by node
    sequence (natural name order).
    """
    if target not in dag:
        raise ValueError(f"unknown target {target!r}")
    names = sorted(extract_subgraph(dag, target), key=name_key)
    adj = dag.adjacency_matrix(names)
    raw = kernels.simple_paths_to(adj, names.index(target), l_max)
    paths = [tuple(names[i] for i in p) for p in raw]
    return [CausalPath(p) for p in sorted(paths, key=path_key)]


def score_path(path, scm, usage):
    nodes = path.nodes if isinstance(path, CausalPath) else tuple(path)
    total = 0.0
    for u, v in zip(nodes[:-1], nodes[1:]):
        if (u, v) not in scm.coefficients:
            raise ScoringError(f"{u}->{v} is not an edge of the model")
        if u not in usage:
            raise ScoringError(f"no usage statistic for {u}")
        total += scm.coefficients[(u, v)] * usage[u]
    return total


def score_paths(paths, scm, usage):
    return [replace(p, score=score_path(p, scm, usage)) for p in paths]


@dataclass(frozen=True)
class PathRanking:
    paths: tuple
    importance: dict

    def to_dict(self):
        return {"paths": [p.to_dict() for p in self.paths],
                "importance": dict(self.importance)}

    @classmethod
    def from_dict(cls, d):
        paths = tuple(CausalPath(tuple(p["nodes"]), p["score"], p["rank"]) for p in d["paths"])
        return cls(paths, dict(d["importance"]))

    def factor_ranking(self):
        return sorted(self.importance, key=lambda v: (-self.importance[v], name_key(v)))


def node_importance(paths):
    imp = {}
    for p in paths:
        for v in p.nodes[:-1]:
            imp[v] = imp.get(v, 0.0) + p.score
    return dict(sorted(imp.items(), key=lambda kv: name_key(kv[0])))


def rank_paths(paths, goal, p_max=P_MAX):
    """Keep the top p_max scored paths.

    For a "decrease" goal the key is |S(p)| so strong glucose-lowering paths are
    not buried; for "increase" it is S(p). Ties fall back to node-sequence order.
    """
    if any(p.score is None for p in paths):
        raise ScoringError("rank_paths needs scored paths")
    if goal.direction == "decrease":
        def key(p):
            return (-abs(p.score), path_key(p.nodes))
    else:
        def key(p):
            return (-p.score, path_key(p.nodes))
    kept = sorted(paths, key=key)[:p_max]
    ranked = tuple(replace(p, rank=i + 1) for i, p in enumerate(kept))
    return PathRanking(ranked, node_importance(paths))


def extract_and_rank(graph, goal, l_max=L_MAX, p_max=P_MAX):
    """Enumerate, score and rank paths to the goal on a personal graph."""
    paths = score_paths(enumerate_paths(graph.dag, goal.target, l_max), graph.scm, graph.usage)
    return rank_paths(paths, goal, p_max)


def strength_word(effect):
    a = abs(effect)
    if a >= STRONG:
        return "strong"
    if a >= MODERATE:
        return "moderate"
    return "weak"


def summary_line(source, effect, rank):
    name = DISPLAY_NAMES.get(source, source.replace("_", " ").capitalize())
    verb = "have" if source in _PLURAL else "has"
    if effect > 0:
        return f"{name} {verb} a {strength_word(effect)} positive causal effect on glucose (ranked {rank})."
    return (f"{name} {verb} a {strength_word(effect)} negative effect, "
            f"reducing glucose spikes (ranked {rank}).")


def summary_factors(ranking, scm, target, limit=3):
    """(source, total effect) for up to ``limit`` distinct non-outcome path sources."""
    seen, out = set(), []
    for p in ranking.paths:
        s = p.source
        if s in seen or scm.dag.spec(s).role == "outcome":
            continue
        seen.add(s)
        effect = total_effect(scm, s, target)
        if effect == 0 or not np.isfinite(effect):
            continue
        out.append((s, effect))
        if len(out) == limit:
            break
    return out


def summarize_causal(ranking, scm, target, limit=3):
    factors = summary_factors(ranking, scm, target, limit)
    return "\n".join(summary_line(s, e, i + 1) for i, (s, e) in enumerate(factors))


def format_path(path, scm):
    """``Carbohydrates → iauc_120 (effect: +0.72)``; effect is the product of edge weights."""
    effect = 1.0
    for u, v in path.edges():
        effect *= scm.coefficients[(u, v)]
    names = " → ".join(DISPLAY_NAMES.get(n, n) for n in path.nodes)
    return f"{names} (effect: {effect:+.2f})"
