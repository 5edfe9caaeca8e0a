"""The ten acceptance criteria at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (visible even under output
capture).  Run ``python tests/test_acceptance.py`` for the same lines
without pytest.

Criterion 2 is expected to fail: on the circle the transfer operator of the
doubling map with the SRB weight sends ``e_k`` to ``e_{k/2}`` for even ``k``
and to zero otherwise, so its spectrum on smooth functions is ``{1, 0}``,
not the ladder ``{1, 1/2, 1/4, ...}``.  The xfail is strict, so the test
turns red if the criterion ever starts passing.
"""
import sys

import pytest

from gibbstorus.acceptance import CRITERIA

EXPECTED_RED = {2: "resonance ladder does not exist for the doubling map on the circle"}


def _params():
    out = []
    for i, fn in enumerate(CRITERIA, start=1):
        marks = [pytest.mark.xfail(strict=True, reason=EXPECTED_RED[i])] if i in EXPECTED_RED else []
        out.append(pytest.param(fn, id=f"criterion_{i}", marks=marks))
    return out


@pytest.mark.parametrize("criterion", _params())
def test_criterion(criterion, capsys):
    result = criterion()
    with capsys.disabled():
        print(f"\n{result.line()}  {result.values}")
    assert result.passed, result.line()


if __name__ == "__main__":
    failed = 0
    for fn in CRITERIA:
        r = fn()
        print(r.line(), flush=True)
        failed += not r.passed
    sys.exit(1 if failed else 0)
