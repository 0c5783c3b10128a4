"""The ten acceptance criteria at their stated tolerances.

Each test runs one criterion of the shared suite, prints its pass/fail
line and, on failure, the checks that missed.  The lines are repeated in
the terminal summary.  Sampled quantities use the production settings,
so the whole module takes a while on one core.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from epac.acceptance import TITLES, Suite, SuiteSettings


@pytest.fixture(scope="module")
def suite():
    return Suite(SuiteSettings())


@pytest.mark.parametrize("number", sorted(TITLES), ids=lambda n: f"criterion_{n}")
def test_criterion(suite, number):
    (res,) = suite.run(only=[number])
    ACCEPTANCE_LINES.append(res.line())
    print(res.line())
    for check in res.checks:
        print(check.line())
    assert not res.skipped
    assert not res.error, res.error
    assert res.passed, "\n".join(c.line() for c in res.failures())
