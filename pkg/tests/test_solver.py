import io
import json
import math

import numpy as np
import pytest

from linfbsde import solver
from linfbsde.core import CoeffMatrix, LinearFBSDE
from linfbsde.reference import COUPLED_EXAMPLE, PRINTED_TRANSFORMED
from linfbsde.solver import (
    NotWellPosedNumerically,
    build_field,
    path_normals,
    simulate,
    solve_and_verify,
    summary_json,
    verify_bsde,
    write_paths_csv,
)


@pytest.fixture(scope="module")
def coupled_field():
    return build_field(COUPLED_EXAMPLE, 5e-4)


def test_z_ratio_formula(coupled_field):
    c = COUPLED_EXAMPLE.coeffs
    u = coupled_field.u
    assert np.allclose(coupled_field.z_ratio * (1 - c.s3 * u), u * (c.s1 + c.s2 * u))


def test_terminal_residual_is_exactly_zero(coupled_field):
    sr = simulate(COUPLED_EXAMPLE, coupled_field, 500, 1e-3, 1)
    assert sr.terminal_residual.max_abs == 0.0


def test_mean_matches_euler_product(coupled_field):
    # E[X_{k+1}] = E[X_k] (1 + a_k dt) exactly for the Euler scheme
    c, dt = COUPLED_EXAMPLE.coeffs, 1e-3
    sr = simulate(COUPLED_EXAMPLE, coupled_field, 4000, dt, 3)
    u, z = coupled_field.u[::2], coupled_field.z_ratio[::2]
    a = c.b1 + c.b2 * u[:-1] + c.b3 * z[:-1]
    expected = float(np.prod(1 + a * dt))
    se = math.sqrt(sr.var_XT / sr.n_paths)
    assert abs(sr.mean_XT - expected) < 4 * se


def test_residual_shrinks_with_dt():
    sr, half, rep = solve_and_verify(COUPLED_EXAMPLE, 2000, 2e-3, 11)
    assert rep.passed, rep.detail
    assert rep.ratio >= solver.HALVING_RATIO
    assert sr.bsde_residual.mean_abs <= solver.RESIDUAL_C * math.sqrt(sr.dt) * sr.scale


def test_wrong_field_fails_verification(coupled_field):
    bad = coupled_field.shifted(COUPLED_EXAMPLE, 0.05)
    sr = simulate(COUPLED_EXAMPLE, bad, 2000, 2e-3, 11)
    half = simulate(COUPLED_EXAMPLE, bad, 2000, 1e-3, 11)
    assert not verify_bsde(sr, half).passed


def test_reruns_are_bit_identical(coupled_field):
    a = simulate(COUPLED_EXAMPLE, coupled_field, 300, 1e-3, 5, keep_paths=True)
    b = simulate(COUPLED_EXAMPLE, coupled_field, 300, 1e-3, 5, keep_paths=True)
    assert a == b
    assert np.array_equal(a.paths.X, b.paths.X)


def test_blocking_does_not_change_paths(coupled_field, monkeypatch):
    a = simulate(COUPLED_EXAMPLE, coupled_field, 100, 1e-3, 5, keep_paths=True)
    monkeypatch.setattr(solver, "BLOCK", 7)
    b = simulate(COUPLED_EXAMPLE, coupled_field, 100, 1e-3, 5, keep_paths=True)
    assert np.array_equal(a.paths.X, b.paths.X)
    assert a == b


def test_streams_are_per_path():
    assert np.array_equal(path_normals(1, 3, 10), path_normals(1, 3, 10))
    assert not np.array_equal(path_normals(1, 3, 10), path_normals(1, 4, 10))
    assert not np.array_equal(path_normals(1, 3, 10), path_normals(2, 3, 10))
    # a longer draw extends the shorter one
    assert np.array_equal(path_normals(1, 3, 20)[:10], path_normals(1, 3, 10))


def test_grid_must_refine_simulation_grid(coupled_field):
    with pytest.raises(ValueError):
        simulate(COUPLED_EXAMPLE, coupled_field, 10, 3e-3, 1)
    with pytest.raises(ValueError):
        simulate(COUPLED_EXAMPLE, coupled_field, 10, 0.3, 1)


def test_ill_posed_system_is_refused():
    f = LinearFBSDE(CoeffMatrix(1, 0, 0, 0, 5, 0, 0, 0, 0), 1.0, 1.0, 5.0)
    with pytest.raises(NotWellPosedNumerically):
        build_field(f, 1e-3)


def test_transformed_instance_verifies():
    sr, half, rep = solve_and_verify(PRINTED_TRANSFORMED, 2000, 2e-3, 4)
    assert rep.passed, rep.detail
    assert sr.n_aborted == 0


def test_outputs(coupled_field):
    sr = simulate(COUPLED_EXAMPLE, coupled_field, 3, 0.1, 1, keep_paths=True)
    buf = io.StringIO()
    write_paths_csv(sr.paths, buf, max_paths=2)
    rows = buf.getvalue().strip().splitlines()
    assert rows[0] == "path_id,t,X,Y,Z"
    assert len(rows) == 1 + 2 * 11
    rec = json.loads(summary_json(sr))
    assert rec["n_paths"] == 3 and rec["terminal_residual"]["max_abs"] == 0.0
