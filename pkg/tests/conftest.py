import pytest

from causaldiet.food_retrieval import default_food_db
from causaldiet.synth import default_cohort


@pytest.fixture(scope="session")
def food_db():
    return default_food_db()


@pytest.fixture(scope="session")
def small_cohort():
    return default_cohort(n_users=4, seed=3, days=10)


ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (passed, detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'} | {detail}")
