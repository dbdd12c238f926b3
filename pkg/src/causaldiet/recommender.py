"""Recommendation pipeline: goal, path ranking, retrieval, verification, response.

The recommender only ever sees a graph fitted on the training half of a
user's data. Text generation sits behind a small backend interface; the
default backend is a deterministic template.
"""
import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from causaldiet import path_reasoner as pr
from causaldiet.errors import BackendError
from causaldiet.food_retrieval import NUTRIENTS, BUDGET_KCAL, retrieve, retrieve_balanced
from causaldiet.scm import InterventionQuery, do_intervention, total_effect

MODES = ("full", "no_verification", "no_ranking", "no_graph")
CANDIDATE_BUDGET = 10

PROTOCOL_QUERIES = (
    "How can I prevent glucose spikes after my meals?",
    "What should I eat to keep my blood sugar stable?",
    "Suggest a meal that lowers my postprandial glucose response.",
    "Which food would reduce my glucose spike this afternoon?",
    "Recommend something to avoid a blood sugar spike after dinner.",
)

GUIDELINE = ("General guideline: build the meal around vegetables, legumes and whole grains, "
             "pair carbohydrates with protein or fiber, and limit refined sugars.")
DISCLAIMER = ("No food item could be verified against your personal causal graph, "
              "so this is general advice rather than a personalized recommendation.")
INSTRUCTION = ("You are a nutrition assistant. First explain the causal relationships in "
               "the personal graph, then recommend the food item below with its serving "
               "and nutrients, then state its predicted effect on the glucose response.")

SECTION = "### "


# --------------------------------------------------------------------------
# Text backends


class TemplateBackend:
    """Deterministic backend: fills a fixed response skeleton from the prompt sections."""

    name = "template"
    deterministic = True

    def render(self, prompt):
        sections = parse_prompt(prompt)
        if "Food data" not in sections:
            return ""
        food = dict(_kv_lines(sections["Food data"]))
        summary = " ".join(sections.get("Causal summary", "").split("\n")).strip()
        if food.get("Food", "none") == "none":
            return "\n\n".join([summary or "No personal causal factors could be used.",
                                food.get("Guideline", GUIDELINE), DISCLAIMER])
        explain = (f"Your personal causal graph shows: {summary}" if summary
                   else "No personal causal factors were used for this suggestion.")
        rec = (f"Recommendation: {food['Food']}, {food['Serving']}, "
               f"providing {food['Nutrients']}.")
        status = food.get("Verification", "unverified")
        if status == "accept":
            effect = (f"Predicted effect: the {food['Horizon']} glucose response is expected to "
                      f"be {food['Predicted iAUC']} mg/dL·min against a typical "
                      f"{food['Typical iAUC']} mg/dL·min.")
        else:
            effect = "Predicted effect: this item was not checked against your causal graph."
        return "\n\n".join([explain, rec, effect])


class HttpBackend:
    """Remote backend: POST ``{"prompt": ...}`` and read ``{"text": ...}``."""

    name = "http"
    deterministic = False

    def __init__(self, url, timeout=30.0):
        self.url = url
        self.timeout = timeout

    def render(self, prompt):
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise BackendError(f"text backend request failed: {exc}", prompt) from exc
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            raise BackendError("text backend returned no 'text' field", prompt)
        return payload["text"]


def parse_prompt(prompt):
    sections, current = {}, None
    for line in prompt.split("\n"):
        if line.startswith(SECTION):
            current = line[len(SECTION):].strip()
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return {k: "\n".join(v).strip() for k, v in sections.items()}


def _kv_lines(text):
    for line in text.split("\n"):
        m = re.match(r"^([^:]+):\s*(.*)$", line)
        if m:
            yield m.group(1).strip(), m.group(2).strip()


# --------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class RecommendationRequest:
    user_id: str
    query_text: str
    horizon: int = 120
    exclude: frozenset = field(default_factory=frozenset)
    budget_kcal: float = BUDGET_KCAL

    def __post_init__(self):
        if self.horizon not in pr.HORIZONS:
            raise ValueError(f"horizon must be one of {pr.HORIZONS}")
        if not self.budget_kcal > 0:
            raise ValueError("budget must be positive")


class TraceEntry(NamedTuple):
    candidate: str
    predicted: Optional[float]
    verdict: str  # accept | reject | unverified
    reason: str = ""

    def to_dict(self):
        return {"candidate": self.candidate, "predicted": self.predicted,
                "verdict": self.verdict, "reason": self.reason}


@dataclass(frozen=True)
class Recommendation:
    user_id: str
    query: str
    target: str
    horizon: int
    food: object  # ScaledFood or None on fallback
    predicted_iauc: Optional[float]
    typical_iauc: Optional[float]
    summary: str
    trace: tuple
    fallback_used: bool
    response: str = ""
    backend: str = "template"
    deterministic: bool = True
    mode: str = "full"

    @property
    def food_name(self):
        return self.food.name if self.food is not None else None

    @property
    def predicted_delta(self):
        if self.predicted_iauc is None or self.typical_iauc is None:
            return None
        return self.predicted_iauc - self.typical_iauc

    def to_dict(self):
        return {
            "summary": self.summary,
            "response": self.response,
            "food": self.food_name,
            "serving_g": self.food.serving_g if self.food is not None else None,
            "nutrients": dict(self.food.nutrients) if self.food is not None else None,
            "predicted_iauc": self.predicted_iauc,
            "typical_iauc": self.typical_iauc,
            "predicted_delta": self.predicted_delta,
            "trace": [t.to_dict() for t in self.trace],
            "fallback_used": self.fallback_used,
            "backend": {"name": self.backend, "deterministic": self.deterministic},
            "user_id": self.user_id,
            "query": self.query,
            "target": self.target,
            "horizon": self.horizon,
            "mode": self.mode,
        }


class Verdict(NamedTuple):
    verdict: str
    predicted: float
    reason: str


# --------------------------------------------------------------------------
# Verification


def context_covariates(graph):
    """Mean modulator values (activity, baseline glucose) from the fit data."""
    return {v.name: graph.means[v.name] for v in graph.dag.variables if v.role == "modulator"}


def typical_iauc(graph, target):
    """Predicted target for the user's historical mean meal in their mean context."""
    assign = {n: graph.means[n] for n in NUTRIENTS if n in graph.dag}
    return do_intervention(InterventionQuery(assign, target, context_covariates(graph)),
                           graph.scm).value


def predict_iauc(graph, nutrients, target):
    assign = {n: float(nutrients[n]) for n in NUTRIENTS if n in graph.dag}
    return do_intervention(InterventionQuery(assign, target, context_covariates(graph)),
                           graph.scm).value


def _reject_reason(graph, nutrients, goal):
    contrib = {}
    for n in NUTRIENTS:
        if n in graph.dag:
            contrib[n] = total_effect(graph.scm, n, goal.target) * (nutrients[n] - graph.means[n])
    sign = 1.0 if goal.direction == "decrease" else -1.0
    worst = max(sorted(contrib), key=lambda n: sign * contrib[n], default=None)
    if worst is None or sign * contrib[worst] <= 0:
        return "no improvement over the typical response"
    verb = "increase" if worst in pr._PLURAL else "increases"
    if goal.direction == "increase":
        verb = "decrease" if worst in pr._PLURAL else "decreases"
    return f"contradicts causal summary: {worst} {verb} glucose"


def verify_candidate(graph, candidate, goal, typical, margin=0.0):
    """Accept iff the predicted response beats the typical one strictly (by ``margin``)."""
    predicted = predict_iauc(graph, candidate.nutrients, goal.target)
    if goal.direction == "decrease":
        ok = predicted < typical - margin
    else:
        ok = predicted > typical + margin
    if ok:
        return Verdict("accept", predicted, "")
    return Verdict("reject", predicted, _reject_reason(graph, candidate.nutrients, goal))


# --------------------------------------------------------------------------
# Prompt and response


def _fmt_food_block(food, horizon, predicted, typical, verdict):
    nutrients = ", ".join(f"{n} {food.nutrients[n]:.1f} g" for n in NUTRIENTS)
    lines = [f"Food: {food.name}",
             f"Serving: {food.serving_g:.0f} g ({food.kcal:.0f} kcal)",
             f"Nutrients: {nutrients}",
             f"Horizon: {horizon}-minute"]
    if predicted is not None:
        lines.append(f"Predicted iAUC: {predicted:.1f}")
        lines.append(f"Typical iAUC: {typical:.1f}")
    lines.append(f"Verification: {verdict}")
    return "\n".join(lines)


def build_prompt(query, path_lines, summary, food_block):
    parts = [
        (f"{SECTION}Instruction", INSTRUCTION),
        (f"{SECTION}Query", query),
        (f"{SECTION}Causal paths", "\n".join(path_lines) or "(none)"),
        (f"{SECTION}Causal summary", summary),
        (f"{SECTION}Food data", food_block),
    ]
    return "\n".join(f"{h}\n{b}" for h, b in parts) + "\n"


def render_response(prompt, backend):
    try:
        return backend.render(prompt)
    except BackendError:
        raise
    except Exception as exc:
        raise BackendError(f"text backend failed: {exc}", prompt) from exc


# --------------------------------------------------------------------------
# Pipeline


def _no_ranking(paths, p_max):
    """Ablation: first p_max paths in enumeration order, importance = path counts."""
    kept = tuple(p.__class__(p.nodes, p.score, i + 1) for i, p in enumerate(paths[:p_max]))
    imp = {}
    for p in kept:
        for v in p.nodes[:-1]:
            imp[v] = imp.get(v, 0.0) + 1.0
    return pr.PathRanking(kept, imp)


def recommend(graph, db, request, backend=None, mode="full", l_max=pr.L_MAX,
              p_max=pr.P_MAX, k=CANDIDATE_BUDGET, margin=0.0):
    """Run the pipeline for one query on a train-half personal graph."""
    if graph.fitted_on != "train_half":
        raise ValueError("the recommender must use a graph fitted on the training half")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    backend = backend or TemplateBackend()
    goal = pr.identify_goal(request.query_text, graph.dag, request.horizon, backend)
    typical = typical_iauc(graph, goal.target)
    common = dict(user_id=request.user_id, query=request.query_text, target=goal.target,
                  horizon=goal.horizon, backend=backend.name,
                  deterministic=backend.deterministic, mode=mode)

    if mode == "no_graph":
        cands = retrieve_balanced(db, request.exclude, k=1, budget=request.budget_kcal)
        if not cands:
            return _fallback(request, backend, "", (), (), common, typical)
        food = cands[0].food
        block = _fmt_food_block(food, goal.horizon, None, None, "unverified")
        prompt = build_prompt(request.query_text, [], "", block)
        return Recommendation(food=food, predicted_iauc=None, typical_iauc=None, summary="",
                              trace=(TraceEntry(food.name, None, "unverified"),),
                              fallback_used=False,
                              response=render_response(prompt, backend), **common)

    view = graph.standardized_scm
    paths = pr.score_paths(pr.enumerate_paths(graph.dag, goal.target, l_max), view, graph.usage)
    if mode == "no_ranking":
        ranking = _no_ranking(paths, p_max)
    else:
        ranking = pr.rank_paths(paths, goal, p_max)
    summary = pr.summarize_causal(ranking, view, goal.target)
    path_lines = [f"Path {p.rank}: {pr.format_path(p, view)}" for p in ranking.paths]
    if not ranking.paths:
        return _fallback(request, backend, summary, path_lines, (), common, typical)

    cands = retrieve(db, ranking, graph.scm, goal, request.exclude, k=k,
                     budget=request.budget_kcal)
    trace = []
    for cand in cands:
        food = cand.food
        if mode == "no_verification":
            predicted = predict_iauc(graph, food.nutrients, goal.target)
            trace.append(TraceEntry(food.name, predicted, "unverified"))
            verdict = "unverified"
        else:
            v = verify_candidate(graph, food, goal, typical, margin)
            trace.append(TraceEntry(food.name, v.predicted, v.verdict, v.reason))
            if v.verdict != "accept":
                continue
            predicted, verdict = v.predicted, v.verdict
        block = _fmt_food_block(food, goal.horizon, predicted, typical, verdict)
        prompt = build_prompt(request.query_text, path_lines, summary, block)
        return Recommendation(food=food, predicted_iauc=predicted, typical_iauc=typical,
                              summary=summary, trace=tuple(trace), fallback_used=False,
                              response=render_response(prompt, backend), **common)
    return _fallback(request, backend, summary, path_lines, trace, common, typical)


def _fallback(request, backend, summary, path_lines, trace, common, typical):
    block = f"Food: none\nGuideline: {GUIDELINE}"
    prompt = build_prompt(request.query_text, list(path_lines), summary, block)
    return Recommendation(food=None, predicted_iauc=None, typical_iauc=typical,
                          summary=summary, trace=tuple(trace), fallback_used=True,
                          response=render_response(prompt, backend), **common)


def run_protocol(graph, db, backend=None, horizons=pr.HORIZONS, queries=PROTOCOL_QUERIES,
                 mode="full", **kwargs):
    """Five queries per horizon; foods already recommended to this user are excluded."""
    exclude = set()
    out = []
    for h in horizons:
        for q in queries:
            req = RecommendationRequest(graph.user_id, q, h, frozenset(exclude))
            rec = recommend(graph, db, req, backend, mode, **kwargs)
            if rec.food is not None:
                exclude.add(rec.food.name)
            out.append(rec)
    return out
