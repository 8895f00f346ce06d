"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import pytest

from mfcloads.validation import CHECKS, run_check


@pytest.mark.parametrize("index", range(1, len(CHECKS) + 1),
                         ids=[name.split(" ", 1)[1].replace(" ", "_") for name, _ in CHECKS])
def test_criterion(index, capsys):
    res = run_check(index)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.detail
