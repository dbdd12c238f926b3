import json

import pytest

from causaldiet.config import RunConfig
from causaldiet.errors import UsageError


def test_defaults_round_trip():
    cfg = RunConfig()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    assert (cfg.alpha, cfg.l_max, cfg.p_max, cfg.budget_kcal) == (0.05, 3, 5, 500.0)


@pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.5}, {"l_max": 0}, {"p_max": 0},
                                {"baseline_mode": "weekly"}, {"queries_per_user": 6},
                                {"candidates": 0}, {"margin": -1.0}])
def test_invalid(kw):
    with pytest.raises(UsageError):
        RunConfig(**kw)


def test_load_and_replace(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"alpha": 0.01, "seed": 4}))
    cfg = RunConfig.load(p).replace(seed=None, p_max=2)
    assert (cfg.alpha, cfg.seed, cfg.p_max) == (0.01, 4, 2)
    p.write_text(json.dumps({"alhpa": 0.01}))
    with pytest.raises(UsageError):
        RunConfig.load(p)
