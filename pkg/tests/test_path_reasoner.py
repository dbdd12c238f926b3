import pytest

from causaldiet.discovery import STANDARD_VARIABLES, Dag, Edge
from causaldiet.errors import GoalNotFound, ScoringError
from causaldiet.path_reasoner import (CausalPath, Goal, PathRanking, enumerate_paths,
                                      extract_subgraph, format_path, identify_goal, rank_paths,
                                      score_path, score_paths, strength_word, summarize_causal)
from causaldiet.scm import LinearSCM

WEIGHTS = {("fiber", "carbohydrates"): -0.5, ("carbohydrates", "iauc_120"): 0.8,
           ("fiber", "iauc_120"): -0.4, ("met", "iauc_120"): -0.3,
           ("protein", "fat"): 0.2, ("fat", "iauc_120"): 0.1, ("baseline", "iauc_30"): 1.0}
USAGE = {"carbohydrates": 1.0, "fiber": 0.0, "protein": 0.5, "fat": 0.25, "met": 0.6,
         "baseline": 1.0, "iauc_30": 1.0, "iauc_60": 1.0, "iauc_120": 1.0}


@pytest.fixture
def scm():
    dag = Dag(STANDARD_VARIABLES, [Edge(u, v, "tier") for u, v in WEIGHTS])
    names = dag.names
    return LinearSCM(dag, WEIGHTS, {n: 0.0 for n in names}, {n: 1.0 for n in names})


@pytest.mark.parametrize("query,target,direction", [
    ("How can I reduce my glucose spikes?", "iauc_120", "decrease"),
    ("Lower my blood sugar after lunch", "iauc_120", "decrease"),
    ("I want to raise my glucose a bit", "iauc_120", "increase"),
])
def test_identify_goal(scm, query, target, direction):
    assert identify_goal(query, scm.dag) == Goal(target, direction, 120)


def test_identify_goal_horizon(scm):
    assert identify_goal("blood glucose", scm.dag, horizon=30).target == "iauc_30"


@pytest.mark.parametrize("query", ["", "   ", "what should I cook tonight"])
def test_identify_goal_not_found(scm, query):
    with pytest.raises(GoalNotFound):
        identify_goal(query, scm.dag)


def test_identify_goal_uses_backend(scm):
    class Echo:
        def render(self, prompt):
            return "iauc_60"
    assert identify_goal("what should I cook tonight", scm.dag, backend=Echo()).target == "iauc_60"


def test_subgraph(scm):
    assert extract_subgraph(scm.dag, "iauc_30") == {"iauc_30", "baseline"}


def test_enumerate_paths(scm):
    paths = [p.nodes for p in enumerate_paths(scm.dag, "iauc_120", 3)]
    assert paths == [
        ("carbohydrates", "iauc_120"),
        ("fat", "iauc_120"),
        ("fiber", "carbohydrates", "iauc_120"),
        ("fiber", "iauc_120"),
        ("met", "iauc_120"),
        ("protein", "fat", "iauc_120"),
    ]
    assert len(enumerate_paths(scm.dag, "iauc_120", 1)) == 4


# S(p) values computed by hand from WEIGHTS and USAGE
EXPECTED_S = {
    ("carbohydrates", "iauc_120"): 0.8,
    ("fat", "iauc_120"): 0.025,
    ("fiber", "carbohydrates", "iauc_120"): 0.8,
    ("fiber", "iauc_120"): 0.0,
    ("met", "iauc_120"): -0.18,
    ("protein", "fat", "iauc_120"): 0.125,
}


def test_score_paths(scm):
    for p in score_paths(enumerate_paths(scm.dag, "iauc_120"), scm, USAGE):
        assert p.score == pytest.approx(EXPECTED_S[p.nodes], abs=1e-12)


def test_score_path_errors(scm):
    with pytest.raises(ScoringError):
        score_path(("carbohydrates", "iauc_30"), scm, USAGE)
    with pytest.raises(ScoringError):
        score_path(("met", "iauc_120"), scm, {})


@pytest.mark.parametrize("direction,order", [
    ("decrease", [("carbohydrates", "iauc_120"), ("fiber", "carbohydrates", "iauc_120"),
                  ("met", "iauc_120"), ("protein", "fat", "iauc_120"), ("fat", "iauc_120")]),
    ("increase", [("carbohydrates", "iauc_120"), ("fiber", "carbohydrates", "iauc_120"),
                  ("protein", "fat", "iauc_120"), ("fat", "iauc_120"), ("fiber", "iauc_120")]),
])
def test_rank_paths(scm, direction, order):
    paths = score_paths(enumerate_paths(scm.dag, "iauc_120"), scm, USAGE)
    ranking = rank_paths(paths, Goal("iauc_120", direction), p_max=5)
    assert [p.nodes for p in ranking.paths] == order
    assert [p.rank for p in ranking.paths] == [1, 2, 3, 4, 5]
    imp = ranking.importance
    assert imp["carbohydrates"] == pytest.approx(1.6)
    assert imp["fiber"] == pytest.approx(0.8)
    assert imp["fat"] == pytest.approx(0.15)
    assert imp["protein"] == pytest.approx(0.125)
    assert imp["met"] == pytest.approx(-0.18)
    assert ranking.factor_ranking()[:2] == ["carbohydrates", "fiber"]
    assert PathRanking.from_dict(ranking.to_dict()) == ranking


def test_rank_needs_scores():
    with pytest.raises(ScoringError):
        rank_paths([CausalPath(("a", "b"))], Goal("b"))


@pytest.mark.parametrize("effect,word", [(0.5, "strong"), (-0.49, "moderate"), (0.2, "moderate"),
                                         (0.19, "weak"), (0.0, "weak")])
def test_strength_word(effect, word):
    assert strength_word(effect) == word


def test_summary_and_format(scm):
    paths = score_paths(enumerate_paths(scm.dag, "iauc_120"), scm, USAGE)
    ranking = rank_paths(paths, Goal("iauc_120"))
    assert summarize_causal(ranking, scm, "iauc_120").split("\n") == [
        "Carbohydrates have a strong positive causal effect on glucose (ranked 1).",
        "Fiber has a strong negative effect, reducing glucose spikes (ranked 2).",
        "Physical activity has a moderate negative effect, reducing glucose spikes (ranked 3).",
    ]
    path = CausalPath(("fiber", "carbohydrates", "iauc_120"))
    assert format_path(path, scm) == "Fiber → Carbohydrates → iauc_120 (effect: -0.40)"
