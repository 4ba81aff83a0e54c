"""Every acceptance criterion at its stated tolerance and time limit.

Each test prints one PASS/FAIL line; the lines are repeated together in the
terminal summary."""

import pytest

from hecke_groupoid.acceptance import CRITERIA, default_config, run_criterion


@pytest.mark.parametrize("number", [c.number for c in CRITERIA], ids=lambda n: f"criterion{n}")
def test_criterion(number, acceptance_log):
    res = run_criterion(number, default_config())
    line = res.line()
    print(line)
    acceptance_log.append(line)
    assert res.passed, res.detail
    assert res.in_time, f"{res.seconds:.1f} s exceeds {res.limit} s"
