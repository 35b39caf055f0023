import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrcfie.solvers import (PrecondKind, SingularMatrixError, bicgstab, coarse_block_preconditioner,
                            condition_number, dense_lu_memory, direct_solve, full_lu_preconditioner,
                            gmres, identity_preconditioner, iterative_solve, jacobi_preconditioner,
                            largest_singular_value, near_field_lu_preconditioner, read_history_csv,
                            singular_extremes, smallest_singular_value, write_history_csv)


def random_system(n, seed=0, shift=None):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a += (shift if shift is not None else 2 * np.sqrt(n)) * np.eye(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return a, b


def true_residual(a, x, b):
    return np.linalg.norm(a @ x - b) / np.linalg.norm(b)


@pytest.mark.parametrize("method", ["GMRES", "BiCGStab"])
def test_identity_converges_in_one_iteration(method):
    b = np.arange(1.0, 11.0)
    r = iterative_solve(method, np.eye(10), b, tol=1e-12)
    assert r.converged and r.iterations == 1
    assert np.allclose(r.solution, b)


@pytest.mark.parametrize("method", ["GMRES", "BiCGStab"])
def test_random_system_matches_direct(method):
    a, b = random_system(50)
    x = direct_solve(a, b)
    r = iterative_solve(method, a, b, tol=1e-8)
    assert r.converged and true_residual(a, r.solution, b) <= 1e-8
    assert np.linalg.norm(r.solution - x) / np.linalg.norm(x) < 1e-7 * condition_number(a)


def test_reported_residual_is_true_residual():
    a, b = random_system(60, seed=3)
    m = jacobi_preconditioner(a)
    for r in (gmres(a, b, 1e-13, m=m), bicgstab(a, b, 1e-13, m=m)):
        assert r.converged
        assert true_residual(a, r.solution, b) == pytest.approx(r.final_residual, rel=1e-6, abs=1e-15)
        assert r.final_residual <= 1e-13


def test_gmres_without_restart_is_monotone():
    a, b = random_system(40, seed=4, shift=1.0)
    r = gmres(a, b, tol=1e-10, restart=40, max_iter=40)
    h = np.array(r.residual_history)
    assert np.all(np.diff(h) <= 1e-14)
    # full GMRES terminates in at most n steps
    assert r.converged and r.iterations <= 40


def test_non_convergence_reported_at_max_iter():
    a, b = random_system(80, seed=5, shift=0.0)
    r = gmres(a, b, tol=1e-12, max_iter=7, restart=5)
    assert not r.converged and r.iterations == 7
    assert len(r.residual_history) == 8
    r = bicgstab(a, b, tol=1e-12, max_iter=3)
    assert not r.converged and r.iterations == 3


def test_permutation_invariance():
    a, b = random_system(30, seed=6)
    p = np.random.default_rng(7).permutation(30)
    r1 = gmres(a, b, tol=1e-10)
    r2 = gmres(a[np.ix_(p, p)], b[p], tol=1e-10)
    assert np.allclose(r2.solution, r1.solution[p], atol=1e-8)
    assert r1.iterations == r2.iterations


def test_deterministic():
    a, b = random_system(40, seed=8)
    r1, r2 = gmres(a, b, 1e-8), gmres(a, b, 1e-8)
    assert np.array_equal(r1.solution, r2.solution)
    assert r1.residual_history == r2.residual_history


def test_zero_rhs_and_bad_arguments():
    a, _ = random_system(10)
    r = gmres(a, np.zeros(10))
    assert r.converged and r.iterations == 0 and np.all(r.solution == 0)
    with pytest.raises(ValueError):
        gmres(a, np.ones(10), tol=0)
    with pytest.raises(ValueError):
        iterative_solve("CG", a, np.ones(10))


def test_condition_number_examples():
    assert condition_number(np.eye(5)) == pytest.approx(1.0)
    assert condition_number(np.diag([1.0, 10.0])) == pytest.approx(10.0)
    assert condition_number(np.zeros((2, 2))) == np.inf


def test_power_and_inverse_iteration_estimates():
    a, _ = random_system(200, seed=9, shift=5.0)
    smax, smin = singular_extremes(a)
    assert largest_singular_value(a) == pytest.approx(smax, rel=0.05)
    assert smallest_singular_value(a) == pytest.approx(smin, rel=0.05)


def test_preconditioners_on_exact_inverse():
    a, b = random_system(40, seed=10)
    lu = full_lu_preconditioner(a)
    assert lu.kind is PrecondKind.FULL_LU
    assert np.allclose(lu(a @ b), b)
    assert gmres(a, b, 1e-10, m=lu).iterations <= 2
    every = coarse_block_preconditioner(a, np.arange(40))
    assert gmres(a, b, 1e-10, m=every).iterations <= 2
    assert every.memory <= dense_lu_memory(40) + a.shape[0] * 16


def test_coarse_block_structure():
    a, b = random_system(30, seed=11)
    mask = np.zeros(30, bool)
    mask[:10] = True
    m = coarse_block_preconditioner(a, mask)
    x = m(b)
    assert np.allclose(a[:10, :10] @ x[:10], b[:10])
    assert np.allclose(x[10:], b[10:] / np.diag(a)[10:])
    assert m.memory < dense_lu_memory(30)
    # empty coarse set is plain Jacobi
    assert np.allclose(coarse_block_preconditioner(a, np.zeros(30, bool))(b), jacobi_preconditioner(a)(b))


def test_coarse_block_ilu0_exact_on_dense_block():
    # with nothing dropped, ILU(0) of a full block is the exact LU
    a, b = random_system(20, seed=12)
    m = coarse_block_preconditioner(a, np.arange(20), mode="ILU0", drop=0.0)
    assert m.kind is PrecondKind.COARSE_BLOCK_ILU0
    assert np.allclose(a @ m(b), b)
    with pytest.raises(ValueError):
        coarse_block_preconditioner(a, np.arange(5), mode="QR")


def test_singular_inputs_raise():
    s = np.ones((4, 4))
    with pytest.raises(SingularMatrixError, match="pivot"):
        full_lu_preconditioner(s)
    with pytest.raises(SingularMatrixError):
        direct_solve(s, np.ones(4))
    with pytest.raises(SingularMatrixError):
        jacobi_preconditioner(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(SingularMatrixError):
        coarse_block_preconditioner(s, np.arange(4))


def test_near_field_lu_sparsity():
    # a 1-D chain: unknowns one apart, radius 1.5 keeps the tridiagonal part
    n = 30
    a, b = random_system(n, seed=13)
    centers = np.c_[np.arange(n), np.zeros(n), np.zeros(n)].astype(float)
    m = near_field_lu_preconditioner(a, centers, 1.5)
    tri = np.triu(np.tril(a, 1), -1)
    assert np.allclose(tri @ m(b), b)
    assert m.memory < dense_lu_memory(n)


def test_history_csv_round_trip(tmp_path):
    hist = [1.0, 0.3, 1.234567890123e-5]
    p = tmp_path / "h.csv"
    write_history_csv(hist, p)
    assert read_history_csv(p) == hist
    assert p.read_text().splitlines()[0] == "iteration,relative_residual"


def test_identity_preconditioner_copies():
    m = identity_preconditioner(3)
    x = np.ones(3)
    y = m(x)
    y[0] = 5
    assert x[0] == 1


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 25), seed=st.integers(0, 10_000))
def test_gmres_meets_tolerance(n, seed):
    a, b = random_system(n, seed=seed)
    r = gmres(a, b, tol=1e-9, max_iter=5 * n, restart=n)
    assert r.converged and true_residual(a, r.solution, b) <= 1e-9
