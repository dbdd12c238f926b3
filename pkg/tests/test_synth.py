import numpy as np
import pytest

from causaldiet.errors import GenerationError
from causaldiet.ingest import build_feature_table
from causaldiet.scm import total_effect
from causaldiet.synth import (BENCHMARK_EDGES, GeneratorSpec, cohort_truth, default_cohort,
                              excursion, meal_slots, random_linear_scm, simulate_user,
                              six_variable_truth)


def test_excursion_areas():
    e = excursion((600.0, 900.0, 1200.0))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (e[1:] + e[:-1]))])
    assert cum[[30, 60, 120]] == pytest.approx([600.0, 900.0, 1200.0])
    assert e[0] == 0 and e[120] == 0


def test_excursion_cap():
    with pytest.raises(GenerationError):
        excursion((6000.0, 6000.0, 6000.0))


@pytest.mark.parametrize("k,expected", [(1, (750,)), (3, (450, 750, 1110)),
                                        (2, (450, 1140))])
def test_meal_slots(k, expected):
    assert meal_slots(k) == expected


def test_cohort_truth_effects():
    scm = cohort_truth(0.5, -0.4, -0.2)
    # one sd of carbohydrates moves iauc_120 by 0.5 * 350
    assert total_effect(scm, "carbohydrates", "iauc_120") * 20.0 == pytest.approx(175.0)
    assert total_effect(scm, "protein", "iauc_120") == 0.0
    assert scm.noise_variance["iauc_30"] == pytest.approx((0.35 * 150) ** 2)


def test_ingest_recovers_latent_features():
    spec = GeneratorSpec(cohort_truth(0.6, -0.4, -0.2), days=6, seed=11)
    user, latent = simulate_user(spec)
    rows = build_feature_table(user)
    assert len(rows) == len(latent)
    for r, l in zip(rows, latent):
        assert r.baseline_glucose == pytest.approx(l.baseline_glucose, abs=0.01)
        assert r.daily_met == pytest.approx(l.daily_met, abs=1e-9)
        assert r.carbohydrates_g == l.carbohydrates_g
        for h in (30, 60, 120):
            assert getattr(r, f"iauc_{h}") == pytest.approx(getattr(l, f"iauc_{h}"), rel=1e-3)


def test_determinism():
    a = default_cohort(2, seed=5, days=4)
    b = default_cohort(2, seed=5, days=4)
    assert [u for u, _ in a] == [u for u, _ in b]
    assert a[0][0] != default_cohort(1, seed=6, days=4)[0][0]


@pytest.mark.parametrize("kw", [{"days": 2}, {"meals_per_day": 0}, {"baseline_mode": "x"}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        GeneratorSpec(cohort_truth(0.5, -0.5, -0.2), **kw)


def test_benchmarks():
    scm = six_variable_truth(3)
    assert len(scm.coefficients) == len(BENCHMARK_EDGES)
    assert all(0.4 <= abs(w) <= 0.9 for w in scm.coefficients.values())
    r = random_linear_scm(np.random.default_rng(0), 7)
    assert len(r.dag.names) == 7
