"""One check per acceptance criterion; each prints a single PASS/FAIL line."""
import pytest

from holder_bounds import reproduce

from conftest import ACCEPTANCE_LINES


@pytest.fixture(scope="module")
def rows():
    return {row.number: row for row in reproduce.run(workers=1)}


@pytest.mark.parametrize("number", sorted(reproduce.KEYS), ids=lambda k: f"{k:02d}-{reproduce.KEYS[k]}")
def test_criterion(rows, number):
    row = rows[number]
    line = f"criterion {number:2d} ({row.key}): {'PASS' if row.passed else 'FAIL'}  {row.detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert row.passed, row.detail
