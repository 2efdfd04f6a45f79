"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is
printed in the terminal summary (and by running this file directly)."""

import pytest

from recurrence_ldp.acceptance import CRITERIA

RESULTS = {}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    res = CRITERIA[number]()
    RESULTS[number] = res
    print(res.line())
    assert res.passed, res.line()


if __name__ == "__main__":
    for k in sorted(CRITERIA):
        print(CRITERIA[k]().line(), flush=True)
