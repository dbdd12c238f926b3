"""Counterfactual evaluation against a full-data oracle graph.

For each user the recommender runs on a graph fitted to the first half of the
meals, while every recommendation is scored on an oracle fitted to all meals:

    reduction = typical - predicted,  MGR = mean reduction over records.
"""
import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from causaldiet.config import RunConfig
from causaldiet.food_retrieval import NUTRIENTS
from causaldiet.ingest import build_feature_table, split_half
from causaldiet.recommender import (MODES, PROTOCOL_QUERIES, TemplateBackend,
                                    context_covariates, run_protocol)
from causaldiet.scm import InterventionQuery, build_personal_graph, do_intervention

logger = logging.getLogger(__name__)

BOOTSTRAP_RESAMPLES = 10_000
TABLE_HEADER = ("method", "horizon", "mgr", "ci_lo", "ci_hi", "p_value")


def build_oracle(features, user_id, alpha=0.05):
    """Discover and fit on every row; never handed to the recommender."""
    return build_personal_graph(features, user_id, "full", alpha)


def counterfactual_iauc(oracle, nutrients, target, covariates=None):
    """Oracle prediction for a meal with the given nutrient grams."""
    if covariates is None:
        covariates = context_covariates(oracle)
    assign = {n: float(nutrients[n]) for n in NUTRIENTS if n in oracle.dag}
    return do_intervention(InterventionQuery(assign, target, covariates), oracle.scm).value


def typical_iauc(oracle, target):
    """Oracle prediction for the user's mean historical meal."""
    return counterfactual_iauc(oracle, oracle.means, target)


@dataclass(frozen=True)
class EvalRecord:
    user_id: str
    horizon: int
    query_index: int
    food: object  # food name or None
    hat_iauc: float
    bar_iauc: float
    fallback_used: bool

    @property
    def reduction(self):
        return self.bar_iauc - self.hat_iauc

    @property
    def key(self):
        return (self.user_id, self.horizon, self.query_index)

    def to_dict(self):
        return {"user_id": self.user_id, "horizon": self.horizon,
                "query_index": self.query_index, "food": self.food,
                "hat_iauc": self.hat_iauc, "bar_iauc": self.bar_iauc,
                "reduction": self.reduction, "fallback_used": self.fallback_used}

    @classmethod
    def from_dict(cls, d):
        return cls(d["user_id"], int(d["horizon"]), int(d["query_index"]), d["food"],
                   float(d["hat_iauc"]), float(d["bar_iauc"]), bool(d["fallback_used"]))


def score_recommendations(recs, oracle):
    """Turn protocol output into records. A fallback scores as the typical meal."""
    out = []
    per_horizon = {}
    for rec in recs:
        i = per_horizon.get(rec.horizon, 0)
        per_horizon[rec.horizon] = i + 1
        target = f"iauc_{rec.horizon}"
        bar = typical_iauc(oracle, target)
        hat = bar if rec.food is None else counterfactual_iauc(oracle, rec.food.nutrients, target)
        if not (np.isfinite(hat) and np.isfinite(bar)):
            raise ValueError(f"non-finite counterfactual for user {rec.user_id}")
        out.append(EvalRecord(rec.user_id, rec.horizon, i, rec.food_name, hat, bar,
                              rec.fallback_used))
    return out


def prepare_user(user, config):
    """Feature table, train-half graph and full-data oracle for one user."""
    features = build_feature_table(user, config.baseline_mode)
    train, full = split_half(features)
    graph = build_personal_graph(train, user.user_id, "train_half", config.alpha)
    oracle = build_oracle(full, user.user_id, config.alpha)
    return graph, oracle


def evaluate_user(user, db, config, modes=("full",)):
    """Records for each mode; graphs are built once and shared across modes."""
    graph, oracle = prepare_user(user, config)
    queries = PROTOCOL_QUERIES[:config.queries_per_user]
    out = {}
    for mode in modes:
        recs = run_protocol(graph, db, TemplateBackend(), config.horizons, queries, mode,
                            l_max=config.l_max, p_max=config.p_max, k=config.candidates,
                            margin=config.margin)
        out[mode] = score_recommendations(recs, oracle)
    return out


def _evaluate_star(args):
    return evaluate_user(*args)


def bootstrap_ci(values, seed, horizon, resamples=BOOTSTRAP_RESAMPLES, level=0.95):
    """Bias-corrected percentile bootstrap CI of the mean."""
    x = np.asarray(values, dtype=np.float64)
    m = float(x.mean())
    if np.all(x == x[0]):
        return m, m
    rng = np.random.default_rng([seed, horizon])
    means = x[rng.integers(0, x.size, size=(resamples, x.size))].mean(axis=1)
    prop = (np.sum(means < m) + 0.5 * np.sum(means == m)) / resamples
    prop = min(max(prop, 0.5 / resamples), 1 - 0.5 / resamples)
    z0 = stats.norm.ppf(prop)
    za = stats.norm.ppf((1 - level) / 2)
    lo_q, hi_q = stats.norm.cdf(2 * z0 + za), stats.norm.cdf(2 * z0 - za)
    lo, hi = np.quantile(means, [lo_q, hi_q])
    return min(float(lo), m), max(float(hi), m)


def paired_test(records_a, records_b):
    """Two-sided Wilcoxon signed-rank on matched reduction differences."""
    b = {r.key: r for r in records_b}
    if len(b) != len(records_b) or {r.key for r in records_a} != set(b):
        raise ValueError("record sets must match one-to-one on (user, horizon, query)")
    d = np.array([r.reduction - b[r.key].reduction for r in records_a])
    d = d[d != 0]
    if d.size == 0:
        return 1.0
    ties = np.unique(np.abs(d)).size < d.size
    method = "exact" if d.size <= 25 and not ties else "approx"
    return float(stats.wilcoxon(d, method=method).pvalue)


@dataclass(frozen=True)
class HorizonResult:
    horizon: int
    mgr: float
    ci_lo: float
    ci_hi: float
    n: int
    per_user: dict

    def to_dict(self):
        return {"horizon": self.horizon, "mgr": self.mgr, "ci_lo": self.ci_lo,
                "ci_hi": self.ci_hi, "n": self.n, "per_user": dict(self.per_user)}


@dataclass(frozen=True)
class EvalReport:
    mode: str
    seed: int
    horizons: tuple  # HorizonResult per horizon
    records: tuple

    def result(self, horizon):
        for h in self.horizons:
            if h.horizon == horizon:
                return h
        raise KeyError(horizon)

    def records_for(self, horizon):
        return [r for r in self.records if r.horizon == horizon]

    def to_dict(self):
        return {"mode": self.mode, "seed": self.seed,
                "horizons": [h.to_dict() for h in self.horizons],
                "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d):
        hs = tuple(HorizonResult(h["horizon"], h["mgr"], h["ci_lo"], h["ci_hi"], h["n"],
                                 dict(h["per_user"])) for h in d["horizons"])
        return cls(d["mode"], d["seed"], hs,
                   tuple(EvalRecord.from_dict(r) for r in d["records"]))


def mgr(records, mode="full", seed=0, resamples=BOOTSTRAP_RESAMPLES):
    """Mean reduction per horizon with a bootstrap CI and per-user means."""
    horizons = sorted({r.horizon for r in records})
    results = []
    for h in horizons:
        rs = [r for r in records if r.horizon == h]
        if len(rs) < 2:
            raise ValueError(f"need at least 2 records at horizon {h}, got {len(rs)}")
        red = np.array([r.reduction for r in rs])
        lo, hi = bootstrap_ci(red, seed, h, resamples)
        users = {}
        for r in rs:
            users.setdefault(r.user_id, []).append(r.reduction)
        per_user = {u: float(np.mean(v)) for u, v in sorted(users.items())}
        results.append(HorizonResult(h, float(red.mean()), lo, hi, len(rs), per_user))
    return EvalReport(mode, seed, tuple(results), tuple(records))


def run_experiment(users, db, modes=("full",), config=None, jobs=1):
    """Evaluate every user under each mode; returns {mode: EvalReport}."""
    config = config or RunConfig()
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    args = [(u, db, config, tuple(modes)) for u in users]
    if jobs == 1:
        per_user = [_evaluate_star(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            per_user = list(ex.map(_evaluate_star, args))
    reports = {}
    for m in modes:
        recs = [r for u in per_user for r in u[m]]
        reports[m] = mgr(recs, m, config.seed)
    return reports


def comparison_table(reports, reference="full"):
    """CSV rows ``method,horizon,mgr,ci_lo,ci_hi,p_value``; p is against ``reference``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    ref = reports.get(reference)
    for mode, rep in reports.items():
        for h in rep.horizons:
            if mode == reference or ref is None:
                p = "n/a"
            else:
                p = repr(paired_test(ref.records_for(h.horizon), rep.records_for(h.horizon)))
            w.writerow([mode, h.horizon, repr(h.mgr), repr(h.ci_lo), repr(h.ci_hi), p])
    return buf.getvalue()
