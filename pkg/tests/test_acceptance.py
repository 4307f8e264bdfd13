"""Acceptance criteria 1-9 at their stated tolerances.

One PASS/FAIL line per criterion is printed in the terminal summary.
"""

import pytest

from polaronlab import acceptance


@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(number, request):
    report = acceptance.CRITERIA[number]()
    request.config.acceptance_lines[number] = f"{report.line()} | tolerances {report.tolerances}"
    print(report.line())
    assert report.passed, report.summary
