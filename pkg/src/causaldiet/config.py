"""Run configuration shared by the CLI and the experiment runner."""
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from causaldiet.errors import UsageError
from causaldiet.ingest import BASELINE_WINDOWS, HORIZONS


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.05
    l_max: int = 3
    p_max: int = 5
    baseline_mode: str = "pre24h"
    budget_kcal: float = 500.0
    horizons: tuple = HORIZONS
    queries_per_user: int = 5
    candidates: int = 10
    margin: float = 0.0
    seed: int = 0
    data_dir: Optional[str] = None
    food_db: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if not 0.0 < self.alpha < 1.0:
            raise UsageError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.l_max < 1 or self.p_max < 1:
            raise UsageError("l_max and p_max must be >= 1")
        if self.baseline_mode not in BASELINE_WINDOWS:
            raise UsageError(f"baseline_mode must be one of {sorted(BASELINE_WINDOWS)}")
        if not self.budget_kcal > 0:
            raise UsageError("budget_kcal must be positive")
        if not self.horizons or any(h not in HORIZONS for h in self.horizons):
            raise UsageError(f"horizons must be a non-empty subset of {HORIZONS}")
        if not 1 <= self.queries_per_user <= 5:
            raise UsageError("queries_per_user must be between 1 and 5")
        if self.candidates < 1:
            raise UsageError("candidates must be >= 1")
        if self.margin < 0:
            raise UsageError("margin must be non-negative")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["horizons"] = list(self.horizons)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise UsageError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise UsageError("config file must hold a JSON object")
        return cls.from_dict(d)

    def replace(self, **overrides):
        values = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **values)
