"""The ten acceptance criteria at their stated tolerances, one line each.

Run directly (``python tests/test_acceptance.py``) for the bare table.
"""

import sys

import pytest

from ionheat import reproduce

SEED = 0
CHECKS = reproduce.acceptance_checks(SEED, fast=False)


@pytest.mark.parametrize("key, name, check", CHECKS, ids=[f"criterion_{c[0]}" for c in CHECKS])
def test_criterion(key, name, check, capsys):
    row = reproduce.run_check(key, name, check)
    with capsys.disabled():
        print("\n" + row.line(), flush=True)
    assert row.passed, row.line()


if __name__ == "__main__":
    rows = reproduce.acceptance_rows(SEED)
    for r in rows:
        print(r.line())
    sys.exit(0 if all(r.passed for r in rows) else 1)
