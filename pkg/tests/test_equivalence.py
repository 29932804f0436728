import io

import numpy as np
import pytest
from hypothesis import given

from linfbsde.core import CoeffMatrix
from linfbsde.criteria import check_monotonicity, leading_minors, symmetrize
from linfbsde.dominating import f_eval, l_poly
from linfbsde.equivalence import (
    EmptyGate,
    equiv_B,
    equiv_C,
    equiv_D,
    equiv_remark35,
    feasible_p,
    feasible_q,
    write_feasible_csv,
)
from linfbsde.reference import COUPLED_EXAMPLE

from .conftest import coeff_matrices, reals
from .test_dominating import expand_l


def all_variants(c: CoeffMatrix, p: float, q: float):
    return [
        equiv_B(c, p),
        equiv_C(c, q),
        equiv_remark35(c, "B", p),
        equiv_remark35(c, "C", q),
        equiv_D(c, p, q),
    ]


@given(coeff_matrices, reals, reals)
def test_variants_share_l_and_s3(c, p, q):
    ref = expand_l(c)
    scale = max(1.0, np.abs(ref).sum())
    for e in all_variants(c, p, q):
        assert np.allclose(expand_l(e.matrix), ref, rtol=0, atol=1e-10 * scale * (1 + abs(p) + abs(q)) ** 2)
        assert e.matrix.s3 == c.s3


@given(coeff_matrices, reals, reals, reals)
def test_variants_share_f_values(c, p, q, y):
    if abs(1 - c.s3 * y) < 1e-3:
        return
    ref = f_eval(c, y)
    for e in all_variants(c, p, q):
        assert f_eval(e.matrix, y) == pytest.approx(ref, rel=1e-7, abs=1e-7 * (1 + abs(p) + abs(q)) ** 2 * (1 + y * y) ** 2)


@given(coeff_matrices, reals, reals)
def test_d_is_c_after_b(c, p, q):
    assert equiv_D(c, p, q).matrix == equiv_C(equiv_B(c, p).matrix, q).matrix


def test_zero_parameters_are_identity():
    c = COUPLED_EXAMPLE.coeffs
    for e in all_variants(c, 0.0, 0.0):
        assert e.matrix == c


def test_remark_rejects_unknown_variant():
    with pytest.raises(ValueError):
        equiv_remark35(COUPLED_EXAMPLE.coeffs, "D", 1.0)


def test_coupled_example_b1_minors_are_the_printed_polynomials():
    c = COUPLED_EXAMPLE.coeffs
    for p in np.linspace(-5, 5, 41):
        d = leading_minors(symmetrize(equiv_B(c, p).matrix).array())
        assert d[1] == pytest.approx(4 * p - 9 / 4, abs=1e-9)
        # the half-weighted symmetrisation carries an overall factor 1/4
        assert 4 * d[2] == pytest.approx(-2 * p**3 + 4 * p**2 + 11 * p - 8, abs=1e-9)


def test_coupled_example_feasible_p():
    c, h = COUPLED_EXAMPLE.coeffs, COUPLED_EXAMPLE.h
    pts = feasible_p(c, h, -5, 5, 0.01)
    params = np.array([pt.param for pt in pts])
    assert np.any(np.isclose(params, 1.0, atol=1e-12))
    # oracle: the same sign pattern evaluated on the closed forms
    grid = np.round(np.arange(-500, 501) * 0.01, 12)
    ok = (4 * grid - 9 / 4 > 1e-9) & ((-2 * grid**3 + 4 * grid**2 + 11 * grid - 8) / 4 > 1e-9)
    assert np.array_equal(params, grid[ok])


def test_coupled_example_b1_certificate():
    v = check_monotonicity(equiv_B(COUPLED_EXAMPLE.coeffs, 1.0).matrix, COUPLED_EXAMPLE.h)
    assert v.well_posed and v.criterion == "Lemma2.2(ii)"
    assert v.value("beta1") >= 1 - 1e-9
    assert v.value("beta2") >= 1 / 6 - 1e-9


def test_gate_rejects_wrong_signs():
    c = COUPLED_EXAMPLE.coeffs  # f1 = -2
    with pytest.raises(EmptyGate):
        feasible_p(c, 1.0)
    with pytest.raises(EmptyGate):
        feasible_q(c, 0.0)


def test_feasible_q_points_pass_monotonicity():
    c, h = COUPLED_EXAMPLE.coeffs, COUPLED_EXAMPLE.h
    for pt in feasible_q(c, h, -5, 5, 0.05):
        assert check_monotonicity(equiv_C(c, pt.param).matrix, h).well_posed


def test_csv_layout():
    pts = feasible_p(COUPLED_EXAMPLE.coeffs, COUPLED_EXAMPLE.h, 0.9, 1.1, 0.1)
    buf = io.StringIO()
    write_feasible_csv(pts, "p", buf)
    rows = buf.getvalue().strip().splitlines()
    assert rows[0] == "param,value,det2,det3,verdict"
    assert len(rows) == len(pts) + 1
    assert rows[1].startswith("p,0.9,")
