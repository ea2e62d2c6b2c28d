import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from hypothesis import given, settings, strategies as st

from lwelasto.assembly import assemble_scalar_mass
from lwelasto.solver import SolverConfig, SolverError, cg_solve
from lwelasto.space import build_space


def _spd(n, seed, density=0.2):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=density, random_state=rng)
    return (A @ A.T + n * sp.identity(n)).tocsr()


@given(st.integers(2, 60), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_matches_direct_solve(n, seed):
    A = _spd(n, seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    x, rep = cg_solve(A, b)
    ref = sla.spsolve(A.tocsc(), b)
    assert np.allclose(x, ref, rtol=1e-9, atol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) + 1e-14


def test_multiple_columns(cube3):
    M = assemble_scalar_mass(build_space(cube3, 2))
    B = np.random.default_rng(0).standard_normal((M.shape[0], 3))
    X, rep = cg_solve(M, B)
    for j in range(3):
        xj, _ = cg_solve(M, B[:, j])
        assert np.allclose(X[:, j], xj, rtol=1e-10, atol=1e-14)
    assert rep.iterations > 0


def test_zero_rhs_returns_zero():
    A = _spd(10, 3)
    x, rep = cg_solve(A, np.zeros(10), SolverConfig(atol=0.0))
    assert np.all(x == 0) and rep.iterations == 0


def test_warm_start_converges_immediately():
    A = _spd(30, 5)
    b = np.ones(30)
    x, _ = cg_solve(A, b)
    _, rep = cg_solve(A, b, x0=x)
    assert rep.iterations <= 1


def test_non_convergence_raises_with_history():
    A = _spd(50, 7)
    with pytest.raises(SolverError) as info:
        cg_solve(A, np.ones(50), SolverConfig(rtol=1e-14, atol=0.0, maxiter=2))
    assert len(info.value.residual_history) >= 2


def test_rejects_bad_operator():
    A = sp.diags([1.0, -1.0, 2.0]).tocsr()
    with pytest.raises(SolverError):
        cg_solve(A, np.ones(3))
    with pytest.raises(ValueError):
        cg_solve(sp.identity(3).tocsr(), np.ones(4))
    with pytest.raises(ValueError):
        SolverConfig(rtol=0.0)
