"""Parse per-user CGM, meal and activity CSVs and derive per-meal feature rows."""
import csv
import dataclasses
import io
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from causaldiet import kernels
from causaldiet.errors import (
    BaselineUnavailable,
    DataError,
    EmptyTableError,
    IAUCUnavailable,
    InsufficientDataError,
    ParseError,
)

logger = logging.getLogger(__name__)

HORIZONS = (30, 60, 120)
BASELINE_WINDOWS = {"pre24h": 24 * 60, "pre120min": 120}
SMOOTHING_WINDOW = 5

CGM_HEADER = ("timestamp", "glucose_mg_dl")
MEAL_HEADER = ("timestamp", "carbs_g", "protein_g", "fat_g", "fiber_g")
MEAL_HEADER_KCAL = MEAL_HEADER + ("calories_kcal",)
ACTIVITY_HEADER = ("timestamp", "met")

CGM_FILE = "cgm.csv"
MEALS_FILE = "meals.csv"
ACTIVITY_FILE = "activity.csv"

# graph variable name -> MealFeatureRow field
VARIABLE_FIELDS = {
    "carbohydrates": "carbohydrates_g",
    "protein": "protein_g",
    "fat": "fat_g",
    "fiber": "fiber_g",
    "met": "daily_met",
    "baseline": "baseline_glucose",
    "iauc_30": "iauc_30",
    "iauc_60": "iauc_60",
    "iauc_120": "iauc_120",
}
NUTRIENTS = ("carbohydrates", "protein", "fat", "fiber")


class GlucoseSample(NamedTuple):
    timestamp: datetime
    glucose: float


class ActivitySample(NamedTuple):
    timestamp: datetime
    met: float


@dataclass(frozen=True)
class MealEvent:
    timestamp: datetime
    carbohydrates_g: float
    protein_g: float
    fat_g: float
    fiber_g: float
    calories_kcal: float

    @classmethod
    def from_macros(cls, timestamp, carbohydrates_g, protein_g, fat_g, fiber_g):
        return cls(timestamp, carbohydrates_g, protein_g, fat_g, fiber_g,
                   calories_from_macros(carbohydrates_g, protein_g, fat_g))


@dataclass(frozen=True)
class MealFeatureRow:
    meal_time: datetime
    carbohydrates_g: float
    protein_g: float
    fat_g: float
    fiber_g: float
    calories_kcal: float
    daily_met: float
    baseline_glucose: float
    iauc_30: float
    iauc_60: float
    iauc_120: float
    minutes_since_last_meal: Optional[float] = None

    def value(self, variable):
        return getattr(self, VARIABLE_FIELDS[variable])


FEATURE_COLUMNS = tuple(f.name for f in dataclasses.fields(MealFeatureRow))


@dataclass(frozen=True)
class UserDataset:
    user_id: str
    glucose: tuple = ()
    meals: tuple = ()
    activity: tuple = ()
    features: tuple = field(default=())


def calories_from_macros(carbohydrates_g, protein_g, fat_g):
    return 4.0 * carbohydrates_g + 4.0 * protein_g + 9.0 * fat_g


# --------------------------------------------------------------------------
# CSV parsing


def read_text(source):
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_text(encoding="utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def _rows(source, headers):
    """Yield (line_number, fields, header) after checking the header exactly."""
    reader = csv.reader(io.StringIO(read_text(source)))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    if header not in headers:
        expected = " or ".join(",".join(h) for h in headers)
        raise ParseError(f"bad header {','.join(header)!r}, expected {expected}", line=1)
    for line_no, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", line=line_no)
        yield line_no, [f.strip() for f in fields], header


def _timestamp(text, line_no):
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(f"bad timestamp {text!r}", line=line_no) from None
    if ts.tzinfo is not None:
        raise ParseError(f"timestamp {text!r} carries a timezone", line=line_no)
    return ts


def _number(text, line_no, name):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"bad {name} value {text!r}", line=line_no) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {name} value {text!r}", line=line_no)
    return value


def _collapse(stamped, what):
    """Average values sharing a timestamp; input must already be in time order."""
    out = []
    prev_ts = None
    bucket = []
    for line_no, ts, value in stamped:
        if prev_ts is not None and ts < prev_ts:
            raise DataError(f"line {line_no}: {what} timestamps not in ascending order")
        if ts != prev_ts and bucket:
            out.append((prev_ts, sum(bucket) / len(bucket)))
            bucket = []
        bucket.append(value)
        prev_ts = ts
    if bucket:
        out.append((prev_ts, sum(bucket) / len(bucket)))
    return out


def parse_cgm_csv(source):
    """Parse ``timestamp,glucose_mg_dl`` into time-ordered GlucoseSample tuples."""
    stamped = []
    for line_no, (ts, value), _ in _rows(source, [CGM_HEADER]):
        g = _number(value, line_no, "glucose")
        if g < 0:
            raise DataError(f"line {line_no}: negative glucose {g}")
        stamped.append((line_no, _timestamp(ts, line_no), g))
    return [GlucoseSample(ts, g) for ts, g in _collapse(stamped, "glucose")]


def parse_activity_csv(source):
    stamped = []
    for line_no, (ts, value), _ in _rows(source, [ACTIVITY_HEADER]):
        met = _number(value, line_no, "met")
        if met <= 0:
            raise DataError(f"line {line_no}: MET must be positive, got {met}")
        stamped.append((line_no, _timestamp(ts, line_no), met))
    return [ActivitySample(ts, m) for ts, m in _collapse(stamped, "activity")]


def parse_meals_csv(source):
    """Parse the meal log; calories are derived from 4/4/9 when the column is absent."""
    meals = []
    for line_no, fields, header in _rows(source, [MEAL_HEADER, MEAL_HEADER_KCAL]):
        ts = _timestamp(fields[0], line_no)
        carbs, protein, fat, fiber = (
            _number(v, line_no, name) for v, name in zip(fields[1:5], header[1:5])
        )
        if min(carbs, protein, fat, fiber) < 0:
            raise DataError(f"line {line_no}: negative nutrient mass")
        derived = calories_from_macros(carbs, protein, fat)
        if len(fields) == 6:
            kcal = _number(fields[5], line_no, "calories_kcal")
            if kcal < 0:
                raise DataError(f"line {line_no}: negative calories")
            if derived > 0 and abs(kcal - derived) > 0.1 * derived:
                logger.warning("line %d: calories %.1f deviate >10%% from 4/4/9 estimate %.1f",
                               line_no, kcal, derived)
        else:
            kcal = derived
        if meals and ts <= meals[-1].timestamp:
            raise DataError(f"line {line_no}: meal timestamps must be strictly increasing")
        meals.append(MealEvent(ts, carbs, protein, fat, fiber, kcal))
    return meals


def _fmt(x):
    return repr(float(x))


def _write_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def format_cgm_csv(samples):
    return _write_csv(CGM_HEADER, ((s.timestamp.isoformat(), _fmt(s.glucose)) for s in samples))


def format_activity_csv(samples):
    return _write_csv(ACTIVITY_HEADER, ((s.timestamp.isoformat(), _fmt(s.met)) for s in samples))


def format_meals_csv(meals):
    return _write_csv(MEAL_HEADER_KCAL, (
        (m.timestamp.isoformat(), _fmt(m.carbohydrates_g), _fmt(m.protein_g), _fmt(m.fat_g),
         _fmt(m.fiber_g), _fmt(m.calories_kcal))
        for m in meals
    ))


def format_features_csv(rows):
    def cells(row):
        for name in FEATURE_COLUMNS:
            v = getattr(row, name)
            if isinstance(v, datetime):
                yield v.isoformat()
            elif v is None:
                yield ""
            else:
                yield _fmt(v)

    return _write_csv(FEATURE_COLUMNS, (list(cells(r)) for r in rows))


def parse_features_csv(source):
    rows = []
    for line_no, fields, _ in _rows(source, [FEATURE_COLUMNS]):
        values = {"meal_time": _timestamp(fields[0], line_no)}
        for name, text in zip(FEATURE_COLUMNS[1:], fields[1:]):
            if name == "minutes_since_last_meal" and text == "":
                values[name] = None
            else:
                values[name] = _number(text, line_no, name)
        rows.append(MealFeatureRow(**values))
    return rows


def load_user_dir(path, user_id=None):
    """Read the three CSV streams of one user directory (features left empty)."""
    path = Path(path)
    return UserDataset(
        user_id=user_id or path.name,
        glucose=tuple(parse_cgm_csv(path / CGM_FILE)),
        meals=tuple(parse_meals_csv(path / MEALS_FILE)),
        activity=tuple(parse_activity_csv(path / ACTIVITY_FILE)),
    )


def write_user_dir(path, user):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / CGM_FILE).write_text(format_cgm_csv(user.glucose), encoding="utf-8")
    (path / MEALS_FILE).write_text(format_meals_csv(user.meals), encoding="utf-8")
    (path / ACTIVITY_FILE).write_text(format_activity_csv(user.activity), encoding="utf-8")


# --------------------------------------------------------------------------
# Signal processing


def rolling_mean(series, window=SMOOTHING_WINDOW):
    return kernels.rolling_mean(np.asarray(series, dtype=np.float64), window)


def rolling_std(series, window=SMOOTHING_WINDOW):
    return kernels.rolling_std(np.asarray(series, dtype=np.float64), window)


def to_minutes(timestamps):
    """Minutes since the Unix epoch (naive timestamps treated as UTC wall time)."""
    arr = np.array(list(timestamps), dtype="datetime64[s]")
    return arr.astype(np.int64) / 60.0


class GlucoseSeries:
    """Array view of a glucose stream; build once per user for repeated lookups."""

    def __init__(self, minutes, values):
        self.minutes = np.ascontiguousarray(minutes, dtype=np.float64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls(to_minutes(s.timestamp for s in samples), [s.glucose for s in samples])


def _as_series(glucose):
    return glucose if isinstance(glucose, GlucoseSeries) else GlucoseSeries.from_samples(glucose)


def _minute(ts):
    return float(to_minutes([ts])[0])


def compute_baseline(glucose, meal_time, mode="pre24h"):
    """Mean glucose over ``[meal_time - W, meal_time)``."""
    try:
        window = BASELINE_WINDOWS[mode]
    except KeyError:
        raise ValueError(f"unknown baseline mode {mode!r}") from None
    series = _as_series(glucose)
    t0 = _minute(meal_time)
    lo = np.searchsorted(series.minutes, t0 - window, side="left")
    hi = np.searchsorted(series.minutes, t0, side="left")
    if hi <= lo:
        raise BaselineUnavailable(f"no glucose samples in the {mode} window before {meal_time}")
    return float(series.values[lo:hi].mean())


def compute_iauc(glucose, meal_time, horizon, baseline):
    """Incremental AUC (mg/dL*min) of the smoothed trace above ``baseline``.

    Integrates samples in ``[meal_time, meal_time + horizon]``; at least two
    samples must fall after the meal and the recording must reach the horizon.
    """
    series = _as_series(glucose)
    t0 = _minute(meal_time)
    t1 = t0 + horizon
    if series.minutes.shape[0] == 0 or series.minutes[-1] < t1:
        raise IAUCUnavailable(f"recording ends before {horizon} min after {meal_time}")
    lo = np.searchsorted(series.minutes, t0, side="left")
    after = np.searchsorted(series.minutes, t0, side="right")
    hi = np.searchsorted(series.minutes, t1, side="right")
    if hi - after < 2:
        raise IAUCUnavailable(f"fewer than 2 samples within {horizon} min after {meal_time}")
    return kernels.smoothed_positive_area(
        series.minutes[lo:hi] - t0, series.values[lo:hi], float(baseline), SMOOTHING_WINDOW
    )


def _daily_met(activity):
    by_day = {}
    for s in activity:
        by_day.setdefault(s.timestamp.date(), []).append(s.met)
    return {day: sum(v) / len(v) for day, v in by_day.items()}


def build_feature_table(user, baseline_mode="pre24h"):
    """One MealFeatureRow per meal with a baseline and all three iAUC horizons."""
    if not user.glucose or not user.meals or not user.activity:
        raise DataError(f"user {user.user_id}: glucose, meals and activity are all required")
    series = GlucoseSeries.from_samples(user.glucose)
    daily = _daily_met(user.activity)
    overall_met = sum(s.met for s in user.activity) / len(user.activity)
    rows = []
    prev_meal = None
    for meal in user.meals:
        since = None
        if prev_meal is not None:
            since = (meal.timestamp - prev_meal.timestamp).total_seconds() / 60.0
        prev_meal = meal
        try:
            baseline = compute_baseline(series, meal.timestamp, baseline_mode)
            iaucs = [compute_iauc(series, meal.timestamp, h, baseline) for h in HORIZONS]
        except InsufficientDataError as exc:
            logger.info("user %s: meal at %s excluded: %s", user.user_id, meal.timestamp, exc)
            continue
        met = daily.get(meal.timestamp.date())
        if met is None:
            logger.warning("user %s: no MET on %s, using overall mean", user.user_id,
                           meal.timestamp.date())
            met = overall_met
        rows.append(MealFeatureRow(
            meal_time=meal.timestamp,
            carbohydrates_g=meal.carbohydrates_g,
            protein_g=meal.protein_g,
            fat_g=meal.fat_g,
            fiber_g=meal.fiber_g,
            calories_kcal=meal.calories_kcal,
            daily_met=met,
            baseline_glucose=baseline,
            iauc_30=iaucs[0],
            iauc_60=iaucs[1],
            iauc_120=iaucs[2],
            minutes_since_last_meal=since,
        ))
    if not rows:
        raise EmptyTableError(f"user {user.user_id}: no eligible meals")
    return rows


def featurize(user, baseline_mode="pre24h"):
    return dataclasses.replace(user, features=tuple(build_feature_table(user, baseline_mode)))


def split_half(features: Sequence[MealFeatureRow]):
    """Return (first ceil(n/2) rows, all rows)."""
    rows = list(features)
    if len(rows) < 4:
        raise InsufficientDataError(f"need at least 4 feature rows to split, got {len(rows)}")
    return rows[:math.ceil(len(rows) / 2)], rows


def feature_columns(rows, variables=None):
    """Column arrays keyed by graph variable name."""
    variables = variables or list(VARIABLE_FIELDS)
    return {v: np.array([r.value(v) for r in rows], dtype=np.float64) for v in variables}
