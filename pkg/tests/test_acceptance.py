"""All ten acceptance criteria at their stated tolerances and runtime budgets.

Each check prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Checks 7-10 train agents and take minutes.
"""
import pytest

from semcom_alloc.checks import ALL_CHECKS, run_check

RESULTS = {}


CASES = [pytest.param(n, id=f"{n:02d}-{name.replace(' ', '-')}", marks=[pytest.mark.slow] if n >= 7 else [])
         for n, name, *_ in ALL_CHECKS]


@pytest.mark.parametrize("number", CASES)
def test_criterion(number):
    result = run_check(number)
    RESULTS[number] = result.line()
    print(result.line())
    assert result.passed, result.line()
    assert result.within_budget, result.line()
