import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linfbsde.core import CoeffMatrix, LinearFBSDE, LQProblem
from linfbsde.criteria import NDegenerate
from linfbsde.lq import (
    LQOptions,
    OptimalControlLaw,
    Unsolvable,
    build_hamiltonian,
    construction_discrepancy,
    field_gain,
    optimal_law,
    reference_params,
    simulate_cost,
    solve_lq,
    stationarity_check,
)
from linfbsde.reference import LQ_EXAMPLE, PRINTED_HAMILTONIAN
from linfbsde.solver import build_field, path_normals

nonzero = st.floats(0.2, 5) | st.floats(-5, -0.2)
small = st.floats(-5, 5)


def hamiltonian_oracle(lq: LQProblem, x: float, y: float, z: float):
    """Drifts and diffusion of the maximum-principle system, with the control
    eliminated through the stationarity condition B y + D z + S x + N u = 0."""
    u = -(lq.S * x + lq.B * y + lq.D * z) / lq.N
    dx = lq.A * x + lq.B * u
    sx = lq.C * x + lq.D * u
    gen = lq.A * y + lq.C * z + lq.R * x + lq.S * u  # -dy = gen dt - z dW
    return dx, sx, gen


@given(small, small, small, small, small, small, nonzero, small, small, small, small)
def test_hamiltonian_matches_maximum_principle(A, B, C, D, R, S, N, Q, x, y, z):
    lq = LQProblem(A, B, C, D, R, S, N, Q)
    fb = build_hamiltonian(lq)
    c = fb.coeffs
    th = np.array([x, y, z])
    want = hamiltonian_oracle(lq, x, y, z)
    got = (np.array(c.b) @ th, np.array(c.s) @ th, np.array(c.f) @ th)
    assert np.allclose(got, want, rtol=1e-9, atol=1e-9 * (1 + np.abs(want).max()))
    assert fb.h == Q


def test_closing_example_law_and_discrepancy():
    law = optimal_law(LQ_EXAMPLE)
    assert (law.kx, law.ky, law.kz) == (2.0, 1.0, 2.0)
    assert law.render() == "u = 2x + y + 2z"
    built = build_hamiltonian(LQ_EXAMPLE)
    assert built.coeffs.f == (5.0, 3.0, 5.0)
    assert built.coeffs.s == (5.0, 2.0, 4.0)
    assert construction_discrepancy(LQ_EXAMPLE, PRINTED_HAMILTONIAN) == {"b3": -4.0}


def test_render_signs():
    assert OptimalControlLaw(-1.5, 0, 1).render() == "u = -1.5x + z"
    assert OptimalControlLaw(0, 0, 0).render() == "u = 0"


def test_zero_n_is_rejected():
    with pytest.raises(NDegenerate):
        build_hamiltonian(LQProblem(1, 1, 1, 1, 1, 1, 0, 1))


def test_cost_is_exactly_quadratic_in_eps():
    n, dt = 50, 0.02
    dW = np.stack([path_normals(3, i, n) for i in range(200)]) * np.sqrt(dt)
    gain = np.full(n, 0.7)
    v = np.ones(n)
    js = [simulate_cost(LQ_EXAMPLE, gain, v, e, dW, dt) for e in (-0.2, -0.1, 0.0, 0.1, 0.2)]
    # fourth differences vanish for a quadratic
    assert abs(js[0] - 4 * js[1] + 6 * js[2] - 4 * js[3] + js[4]) < 1e-10 * max(map(abs, js))


@pytest.fixture(scope="module")
def built_gain():
    fb = build_hamiltonian(LQ_EXAMPLE)
    return field_gain(optimal_law(LQ_EXAMPLE), build_field(fb, 1e-2))


def test_optimal_law_is_stationary(built_gain):
    rep = stationarity_check(LQ_EXAMPLE, built_gain, directions=("one", "ramp", "square"), n_paths=2000, dt=1e-2)
    assert rep.passed
    for s in rep.shrink.values():
        assert 5 <= s <= 20


def test_corrupted_law_is_not_stationary(built_gain):
    assert not stationarity_check(LQ_EXAMPLE, built_gain + 1.0, n_paths=2000, dt=1e-2).passed


def test_printed_system_law_is_not_stationary():
    fld = build_field(PRINTED_HAMILTONIAN, 1e-2)
    gain = field_gain(optimal_law(LQ_EXAMPLE), fld)
    assert not stationarity_check(LQ_EXAMPLE, gain, n_paths=2000, dt=1e-2).passed


def test_direct_and_transformed_routes_agree():
    direct = solve_lq(LQ_EXAMPLE, LQOptions(n_paths=200, dt=1e-2, seed=1, transform="never"))
    via = solve_lq(LQ_EXAMPLE, LQOptions(n_paths=200, dt=1e-2, seed=1, transform="always"))
    assert direct.direct and not via.direct
    assert via.transformed.verdict.well_posed
    assert np.allclose(direct.gain[:-1], via.gain[:-1], rtol=1e-6)


def test_printed_route_reproduces_the_closing_example():
    opts = LQOptions(n_paths=200, dt=1e-2, seed=1, override=PRINTED_HAMILTONIAN, transform="always",
                     params=reference_params(PRINTED_HAMILTONIAN))
    sol = solve_lq(LQ_EXAMPLE, opts)
    assert sol.transformed.params.n == pytest.approx(-0.658, abs=1e-3)
    assert sol.chain[-1].criterion == "Prop4.2(i)"
    # the law evaluated on recovered paths is linear feedback: same ratio on every path
    ratio = sol.u[:, :-1] / sol.x[:, :-1]
    assert np.allclose(ratio, ratio[0], rtol=1e-8)
    direct = field_gain(sol.law, build_field(PRINTED_HAMILTONIAN, 1e-2))
    assert np.allclose(sol.gain[:-1], direct[:-1], rtol=1e-6)


def test_undecided_system_without_transform_is_unsolvable():
    bad = LinearFBSDE(CoeffMatrix(1, 0, 0, 0, 1, 0, 0, 0, 0), 0.0)
    with pytest.raises(Unsolvable):
        solve_lq(LQ_EXAMPLE, LQOptions(n_paths=10, dt=1e-2, override=bad, transform="never"))
    with pytest.raises(Unsolvable):
        solve_lq(LQ_EXAMPLE, LQOptions(n_paths=10, dt=1e-2, override=bad, transform="auto"))
