"""Seeded synthetic users with known ground-truth linear SCMs.

A user's glucose trace is a flat daily resting level plus, after each meal,
three back-to-back triangular excursions on [0, 30], [30, 60] and [60, 120]
minutes whose areas are the generated iAUC increments. The excursion sits on
the meal's baseline (mean of the preceding window, computed from the trace
built so far), so ingest's baseline and iAUC computations recover the
generated values up to smoothing error.
"""
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from scipy import stats

from causaldiet.discovery import STANDARD_VARIABLES, Dag, Edge, VariableSpec
from causaldiet.errors import GenerationError
from causaldiet.ingest import (BASELINE_WINDOWS, HORIZONS, ActivitySample, GlucoseSample,
                               MealEvent, MealFeatureRow, UserDataset)
from causaldiet.scm import LinearSCM

START = datetime(2024, 1, 1)
DAY = 24 * 60
MEAL_JITTER = 20
PEAK_CAP = 300.0
ACTIVITY_STEP = 15

NUTRIENT_DISTRIBUTION = {
    "carbohydrates": (55.0, 20.0),
    "protein": (25.0, 10.0),
    "fat": (20.0, 8.0),
    "fiber": (6.0, 3.0),
}
MET_LEVEL = (1.6, 0.3)
MET_SAMPLE_SD = 0.2
RESTING_LEVEL = (95.0, 5.0)
OUTCOME_MEAN = {30: 600.0, 60: 900.0, 120: 1200.0}
OUTCOME_SCALE = {30: 150.0, 60: 250.0, 120: 350.0}
NOISE_FRACTION = 0.35
CARB_RANGE = (0.4, 0.9)
FIBER_RANGE = (-0.7, -0.2)
MET_RANGE = (-0.4, -0.1)

_EXOGENOUS = ("met", "baseline")


@dataclass(frozen=True)
class GeneratorSpec:
    truth: LinearSCM
    meal_distribution: dict = field(default_factory=lambda: dict(NUTRIENT_DISTRIBUTION))
    days: int = 10
    meals_per_day: int = 3
    seed: int = 0
    baseline_mode: str = "pre24h"

    def __post_init__(self):
        if self.days * self.meals_per_day < 8:
            raise ValueError("days * meals_per_day must be at least 8")
        if not 1 <= self.meals_per_day <= 5:
            raise ValueError("meals_per_day must be between 1 and 5")
        if any(sd < 0 for _, sd in self.meal_distribution.values()):
            raise ValueError("meal distribution standard deviations must be >= 0")
        names = set(self.truth.dag.names)
        expected = {v.name for v in STANDARD_VARIABLES}
        if names != expected:
            raise ValueError(f"truth must be over {sorted(expected)}")
        for v in _EXOGENOUS:
            if self.truth.parents(v):
                raise ValueError(f"{v} is generated by the trace and cannot have parents")
        if self.baseline_mode not in BASELINE_WINDOWS:
            raise ValueError(f"unknown baseline mode {self.baseline_mode!r}")


def meal_slots(meals_per_day):
    """Minutes after midnight: 07:30, 12:30, 18:30 for three meals, evenly spread otherwise."""
    if meals_per_day == 3:
        return (450, 750, 1110)
    if meals_per_day == 1:
        return (750,)
    step = (1140 - 450) / (meals_per_day - 1)
    return tuple(int(round(450 + i * step)) for i in range(meals_per_day))


def cohort_truth(b_carbs, b_fiber, b_met, noise=True):
    """Per-horizon linear model in standardized units, as a raw-unit LinearSCM.

    iauc_h = m_h + S_h (b_c z_c + b_f z_f + b_m z_met) + e_h
    with z = (x - mean) / sd, S = 150/250/350 and noise sd = 0.35 S.
    Protein and fat have no effect.
    """
    mc, sc = NUTRIENT_DISTRIBUTION["carbohydrates"]
    mf, sf = NUTRIENT_DISTRIBUTION["fiber"]
    mm, sm = MET_LEVEL
    coef, intercepts, noise_var = {}, {}, {}
    for h in HORIZONS:
        y = f"iauc_{h}"
        s = OUTCOME_SCALE[h]
        coef[("carbohydrates", y)] = s * b_carbs / sc
        coef[("fiber", y)] = s * b_fiber / sf
        coef[("met", y)] = s * b_met / sm
        intercepts[y] = OUTCOME_MEAN[h] - s * (b_carbs * mc / sc + b_fiber * mf / sf
                                               + b_met * mm / sm)
        noise_var[y] = (NOISE_FRACTION * s) ** 2 if noise else 0.0
    for n, (m, sd) in NUTRIENT_DISTRIBUTION.items():
        intercepts[n], noise_var[n] = m, sd ** 2
    intercepts["met"], noise_var["met"] = mm, sm ** 2
    intercepts["baseline"], noise_var["baseline"] = RESTING_LEVEL[0], RESTING_LEVEL[1] ** 2
    edges = [Edge(u, v, "tier") for (u, v) in coef]
    return LinearSCM(Dag(STANDARD_VARIABLES, edges), coef, intercepts, noise_var)


def random_effects(rng):
    return (float(rng.uniform(*CARB_RANGE)), float(rng.uniform(*FIBER_RANGE)),
            float(rng.uniform(*MET_RANGE)))


def _tent(tau, start, end, height):
    mid = 0.5 * (start + end)
    half = 0.5 * (end - start)
    return np.clip(height * (1.0 - np.abs(tau - mid) / half), 0.0, None)


def excursion(areas):
    """1-minute excursion over [0, 120] whose cumulative areas at 30/60/120 are ``areas``."""
    a30, a60, a120 = areas
    heights = (2 * a30 / 30, 2 * (a60 - a30) / 30, 2 * (a120 - a60) / 60)
    if max(heights) > PEAK_CAP:
        raise GenerationError(f"excursion peak {max(heights):.1f} exceeds the cap {PEAK_CAP}")
    tau = np.arange(0.0, 121.0)
    return (_tent(tau, 0, 30, heights[0]) + _tent(tau, 30, 60, heights[1])
            + _tent(tau, 60, 120, heights[2]))


def _truncated_normal(rng, mean, sd, size):
    if sd == 0:
        return np.full(size, max(mean, 0.0))
    a = (0.0 - mean) / sd
    return stats.truncnorm.rvs(a, np.inf, loc=mean, scale=sd, size=size, random_state=rng)


def simulate_user(spec, user_id="user_00"):
    """Return (dataset, latent feature rows) for one synthetic user."""
    rng = np.random.default_rng(spec.seed)
    truth = spec.truth
    days = spec.days

    met_levels = np.clip(rng.normal(*MET_LEVEL, size=days), 1.0, None)
    steps = DAY // ACTIVITY_STEP
    activity, day_met = [], []
    for d in range(days):
        vals = np.round(np.clip(met_levels[d] + rng.normal(0, MET_SAMPLE_SD, steps), 0.5, None), 3)
        vals = [float(v) for v in vals]
        day_met.append(sum(vals) / len(vals))
        for i, v in enumerate(vals):
            activity.append(ActivitySample(START + timedelta(days=d, minutes=i * ACTIVITY_STEP), v))

    resting = np.round(rng.normal(*RESTING_LEVEL, size=days), 2)
    trace = np.repeat(resting, DAY)

    slots = meal_slots(spec.meals_per_day)
    n_meals = days * len(slots)
    jitter = rng.integers(-MEAL_JITTER, MEAL_JITTER + 1, size=n_meals)
    times = [d * DAY + s for d in range(days) for s in slots]
    times = [t + int(j) for t, j in zip(times, jitter)]

    nutrients = [v.name for v in truth.dag.variables if v.role == "nutrient"]
    order = truth.order
    draws = {n: _truncated_normal(rng, *spec.meal_distribution[n], n_meals)
             for n in nutrients if not truth.parents(n)}
    noise = {n: rng.standard_normal(n_meals) for n in order}

    window = BASELINE_WINDOWS[spec.baseline_mode]
    meals, latent = [], []
    for k, t in enumerate(times):
        vals = {"met": day_met[t // DAY], "baseline": float(trace[max(0, t - window):t].mean())}
        for n in order:
            if n in vals:
                continue
            if n in draws:
                v = float(draws[n][k])
            else:
                v = truth.intercepts[n] + sum(truth.coefficients[(p, n)] * vals[p]
                                              for p in truth.parents(n))
                v = max(v + math.sqrt(truth.noise_variance[n]) * noise[n][k], 0.0)
            vals[n] = round(v, 1) if n in nutrients else v
        areas, running = [], 0.0
        for h in HORIZONS:
            running = max(running, vals[f"iauc_{h}"])
            areas.append(running)
        trace[t:t + 121] = np.round(vals["baseline"] + excursion(areas), 2)

        stamp = START + timedelta(minutes=t)
        meal = MealEvent.from_macros(stamp, vals["carbohydrates"], vals["protein"],
                                     vals["fat"], vals["fiber"])
        meals.append(meal)
        latent.append(MealFeatureRow(
            meal_time=stamp, carbohydrates_g=meal.carbohydrates_g, protein_g=meal.protein_g,
            fat_g=meal.fat_g, fiber_g=meal.fiber_g, calories_kcal=meal.calories_kcal,
            daily_met=vals["met"], baseline_glucose=vals["baseline"],
            iauc_30=areas[0], iauc_60=areas[1], iauc_120=areas[2],
            minutes_since_last_meal=float(t - times[k - 1]) if k else None,
        ))

    glucose = tuple(GlucoseSample(START + timedelta(minutes=i), float(g))
                    for i, g in enumerate(trace))
    return UserDataset(user_id, glucose, tuple(meals), tuple(activity)), latent


def generate_user(spec, user_id="user_00"):
    return simulate_user(spec, user_id)[0]


def user_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def default_cohort(n_users=20, seed=0, days=10):
    """Users with heterogeneous carbohydrate, fiber and activity effects."""
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    out = []
    for i in range(n_users):
        s = user_seed(seed, i)
        truth = cohort_truth(*random_effects(np.random.default_rng([s, 1])))
        spec = GeneratorSpec(truth, days=days, seed=s)
        out.append((generate_user(spec, f"user_{i:02d}"), truth))
    return out


# --------------------------------------------------------------------------
# Benchmarks for discovery and estimation


BENCHMARK_VARIABLES = (
    VariableSpec("carbohydrates", "nutrient", 0),
    VariableSpec("protein", "nutrient", 0),
    VariableSpec("fat", "nutrient", 0),
    VariableSpec("fiber", "nutrient", 0),
    VariableSpec("iauc_30", "outcome", 1),
    VariableSpec("iauc_60", "outcome", 1),
)
BENCHMARK_EDGES = (
    ("carbohydrates", "iauc_30", 1), ("fiber", "iauc_30", -1), ("fiber", "protein", -1),
    ("protein", "iauc_60", 1), ("fat", "iauc_60", 1), ("carbohydrates", "iauc_60", 1),
)


def six_variable_truth(seed):
    """Six-node linear-Gaussian SCM; effect magnitudes in [0.4, 0.9], unit noise."""
    rng = np.random.default_rng([seed, 6])
    coef = {(u, v): s * float(rng.uniform(0.4, 0.9)) for u, v, s in BENCHMARK_EDGES}
    dag = Dag(BENCHMARK_VARIABLES, [Edge(u, v, "tier") for u, v, _ in BENCHMARK_EDGES])
    names = dag.names
    return LinearSCM(dag, coef, {n: 0.0 for n in names}, {n: 1.0 for n in names})


def random_linear_scm(rng, n_nodes, edge_prob=0.4):
    """Random DAG over v0..v{n-1} (random causal order) with random weights."""
    names = [f"v{i}" for i in range(n_nodes)]
    perm = rng.permutation(n_nodes)
    coef = {}
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < edge_prob:
                w = rng.uniform(0.2, 1.0) * rng.choice((-1.0, 1.0))
                coef[(names[perm[i]], names[perm[j]])] = float(w)
    variables = [VariableSpec(n, "nutrient", 0) for n in names]
    dag = Dag(variables, [Edge(u, v, "tie-break") for u, v in coef])
    intercepts = {n: float(rng.normal()) for n in names}
    noise = {n: float(rng.uniform(0.5, 1.5)) for n in names}
    return LinearSCM(dag, coef, intercepts, noise)
