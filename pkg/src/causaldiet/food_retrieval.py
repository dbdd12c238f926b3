"""Food-nutrient knowledge base, 500-kcal serving normalization and ranking."""
import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from causaldiet.errors import DataError, ParseError
from causaldiet.ingest import read_text
from causaldiet.scm import total_effect

FOOD_HEADER = ("name", "kcal_per_100g", "carbs_g", "protein_g", "fat_g", "fiber_g")
# CSV column -> graph variable
NUTRIENT_COLUMNS = {"carbs_g": "carbohydrates", "protein_g": "protein",
                    "fat_g": "fat", "fiber_g": "fiber"}
NUTRIENTS = tuple(NUTRIENT_COLUMNS.values())
BUDGET_KCAL = 500.0
# Reference energy split for the graph-free ablation (carbohydrate, protein, fat).
BALANCED_SPLIT = {"carbohydrates": 0.50, "protein": 0.20, "fat": 0.30}


@dataclass(frozen=True)
class FoodItem:
    name: str
    kcal_per_100g: float
    nutrients_per_100g: dict  # variable name -> grams

    def __post_init__(self):
        if not self.kcal_per_100g > 0:
            raise DataError(f"{self.name}: kcal_per_100g must be positive")
        if any(g < 0 or not math.isfinite(g) for g in self.nutrients_per_100g.values()):
            raise DataError(f"{self.name}: nutrient grams must be finite and non-negative")


@dataclass(frozen=True)
class ScaledFood:
    food: FoodItem
    serving_g: float
    nutrients: dict
    kcal: float

    @property
    def name(self):
        return self.food.name

    def to_dict(self):
        return {"name": self.name, "serving_g": self.serving_g, "nutrients": dict(self.nutrients)}


class Candidate(NamedTuple):
    food: ScaledFood
    score: float

    def to_dict(self):
        d = self.food.to_dict()
        d["score"] = self.score
        return d


def load_food_db(source):
    """Parse the food CSV; rejects duplicate names and non-positive energy."""
    reader = csv.reader(io.StringIO(read_text(source)))
    header = tuple(h.strip() for h in next(reader, ()))
    if header != FOOD_HEADER:
        raise ParseError(f"bad header {','.join(header)!r}, expected {','.join(FOOD_HEADER)}", 1)
    items, seen = [], set()
    for line, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(FOOD_HEADER):
            raise ParseError(f"expected {len(FOOD_HEADER)} fields, got {len(fields)}", line)
        name = fields[0].strip()
        try:
            nums = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        if name in seen:
            raise DataError(f"line {line}: duplicate food {name!r}")
        seen.add(name)
        try:
            items.append(FoodItem(name, nums[0], dict(zip(NUTRIENTS, nums[1:]))))
        except DataError as exc:
            raise DataError(f"line {line}: {exc}") from None
    if not items:
        raise DataError("food database is empty")
    return items


def default_food_db():
    return load_food_db(resources.files("causaldiet").joinpath("data/foods.csv").read_bytes())


def format_food_db(items):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FOOD_HEADER)
    for f in items:
        w.writerow([f.name, repr(f.kcal_per_100g)]
                   + [repr(f.nutrients_per_100g[n]) for n in NUTRIENTS])
    return buf.getvalue()


def normalize_to_kcal(food, budget=BUDGET_KCAL):
    serving = 100.0 * budget / food.kcal_per_100g
    nutrients = {n: g * serving / 100.0 for n, g in food.nutrients_per_100g.items()}
    return ScaledFood(food, serving, nutrients, float(budget))


def _eligible(db, exclude, budget):
    exclude = set(exclude or ())
    return [normalize_to_kcal(f, budget) for f in db if f.name not in exclude]


def _top(scored, k):
    scored.sort(key=lambda c: (-c.score, c.food.name))
    return scored[:k] if k is not None else scored


def nutrient_weights(ranking, scm, goal):
    """Signed weight per nutrient on a kept path: -sign(total effect) * |Imp|.

    The sign flips when the goal is to raise the target.
    """
    flip = 1.0 if goal.direction == "decrease" else -1.0
    on_paths = {v for p in ranking.paths for v in p.nodes[:-1]}
    weights = {}
    for v, imp in ranking.importance.items():
        if v not in on_paths or scm.dag.spec(v).role != "nutrient":
            continue
        effect = total_effect(scm, v, goal.target)
        weights[v] = -flip * float(np.sign(effect)) * abs(imp)
    return weights


def score_food(food, weights):
    return sum(w * food.nutrients.get(v, 0.0) for v, w in weights.items())


def retrieve(db, ranking, scm, goal, exclude=(), k=10, budget=BUDGET_KCAL, weights=None):
    """Rank foods by the sign-weighted concentration of the impactful nutrients.

    ``weights`` overrides the importance-derived nutrient weights (used by the
    ablations). Ties are broken by food name.
    """
    if weights is None:
        weights = nutrient_weights(ranking, scm, goal)
    scored = [Candidate(f, score_food(f, weights)) for f in _eligible(db, exclude, budget)]
    return _top(scored, k)


def energy_split(food):
    kcal = {"carbohydrates": 4 * food.nutrients["carbohydrates"],
            "protein": 4 * food.nutrients["protein"],
            "fat": 9 * food.nutrients["fat"]}
    total = sum(kcal.values())
    return {n: (v / total if total > 0 else 0.0) for n, v in kcal.items()}


def retrieve_balanced(db, exclude=(), k=10, budget=BUDGET_KCAL):
    """Graph-free ranking: closeness of the energy split to a generic balanced plate."""
    scored = []
    for f in _eligible(db, exclude, budget):
        split = energy_split(f)
        scored.append(Candidate(f, -sum(abs(split[n] - BALANCED_SPLIT[n]) for n in BALANCED_SPLIT)))
    return _top(scored, k)
