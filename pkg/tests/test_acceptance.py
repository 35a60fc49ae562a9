"""Every acceptance criterion at its stated tolerance, across the desk sigma0 grid.

Each criterion is one verification suite; the suite rows carry the
tolerances from the criteria table, with ``tol_scale = 1``.
"""

import pytest

from gcalc.pde import GParams
from gcalc.verify import SuiteConfig, run_suite
from conftest import ACCEPTANCE_LINES, SIGMA0_GRID

CRITERIA = [
    (1, "moments", "moment table"),
    (2, "convexity", "convex/concave dichotomy"),
    (3, "chapman", "semigroup rule"),
    (4, "oracle", "PDE vs lattice oracle"),
    (5, "domination", "domination of classical values"),
    (6, "conditional", "conditional calculus"),
    (7, "qv", "quadratic variation"),
    (8, "isometry", "Ito integral identities"),
    (9, "ito", "Ito formula"),
    (10, "sde", "SDE Picard and Euler"),
    (11, "axioms", "axioms and inequalities"),
]


@pytest.mark.parametrize("number,suite,title", CRITERIA, ids=[f"c{n:02d}-{s}" for n, s, _ in CRITERIA])
def test_criterion(number, suite, title):
    failures = []
    rows = 0
    worst = 0.0
    for s0 in SIGMA0_GRID:
        rep = run_suite(suite, SuiteConfig(GParams(s0)))
        rows += len(rep.rows)
        for r in rep.rows:
            if r.tolerance > 0:
                worst = max(worst, r.abs_error / r.tolerance)
            if not r.passed:
                failures.append(f"s0={s0:g} {r.check_id} {r.quantity}: err={r.abs_error:.3g} tol={r.tolerance:.3g}")
    status = "PASS" if not failures else "FAIL"
    line = f"criterion {number}: {status} {title} ({rows} rows, worst err/tol {worst:.2f})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert rows > 0
    assert not failures, "\n".join(failures)
