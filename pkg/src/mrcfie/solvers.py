"""Krylov solvers, preconditioners and conditioning diagnostics.

Both Krylov methods are left preconditioned but stop on, and record, the
unpreconditioned residual ``|b - A x| / |b|`` so iteration counts are
comparable across preconditioners.
"""

from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 1000
DEFAULT_RESTART = 200
ILU_DROP = 1e-3


class PrecondKind(str, Enum):
    IDENTITY = "Identity"
    JACOBI = "Jacobi"
    FULL_LU = "FullLU"
    NEAR_FIELD_LU = "NearFieldLU"
    COARSE_BLOCK_LU = "CoarseBlockLU"
    COARSE_BLOCK_ILU0 = "CoarseBlockILU0"


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class Preconditioner:
    """Fixed linear map approximating ``A^-1``; ``memory`` counts factor bytes."""

    kind: PrecondKind
    n: int
    solve: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    memory: int = 0
    coarse: np.ndarray | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.solve(x)


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_history: list
    iterations: int
    converged: bool
    wall_time: float
    precond_memory: int = 0
    method: str = ""
    reason: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    def write_history(self, path: str | Path) -> None:
        write_history_csv(self.residual_history, path)


def write_history_csv(history, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relative_residual"])
        for i, r in enumerate(history):
            w.writerow([i, repr(float(r))])


def read_history_csv(path: str | Path) -> list[float]:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return [float(r["relative_residual"]) for r in rows]


# ---------------------------------------------------------------------------
# preconditioners
# ---------------------------------------------------------------------------

def _dense(a) -> np.ndarray:
    return np.asarray(getattr(a, "entries", a))


def identity_preconditioner(n: int) -> Preconditioner:
    return Preconditioner(PrecondKind.IDENTITY, n, lambda x: np.array(x, copy=True))


def jacobi_preconditioner(a) -> Preconditioner:
    a = _dense(a)
    d = np.diag(a).copy()
    if np.any(d == 0):
        raise SingularMatrixError("zero diagonal entry in Jacobi preconditioner")
    inv = 1.0 / d
    return Preconditioner(PrecondKind.JACOBI, len(d), lambda x: inv * x, memory=inv.nbytes)


def _lu(a: np.ndarray, what: str):
    with warnings.catch_warnings():
        # singularity is reported below as SingularMatrixError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.size and pivots.min() <= np.finfo(float).eps * pivots.max() * len(pivots):
        k = int(np.argmin(pivots))
        raise SingularMatrixError(f"{what} is singular: pivot {k} = {pivots[k]:.3e}")
    return lu, piv


def full_lu_preconditioner(a) -> Preconditioner:
    a = _dense(a)
    lu, piv = _lu(a, "matrix")
    return Preconditioner(PrecondKind.FULL_LU, len(a), lambda x: sla.lu_solve((lu, piv), x),
                          memory=lu.nbytes + piv.nbytes)


def _sparse_lu_memory(lu) -> int:
    nnz = lu.L.nnz + lu.U.nnz
    return int(nnz * (16 + 4) + 2 * 4 * lu.shape[0])


def near_field_lu_preconditioner(a, centers: np.ndarray, radius: float) -> Preconditioner:
    """Sparse LU of ``A`` restricted to pairs of unknowns closer than ``radius``.

    ``centers`` are representative points of the unknowns (edge midpoints
    for RWGs).
    """
    from scipy.spatial import cKDTree

    a = _dense(a)
    pairs = cKDTree(centers).query_pairs(radius, output_type="ndarray")
    n = len(a)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
    near = sparse.csc_matrix((a[rows, cols], (rows, cols)), shape=(n, n))
    try:
        lu = splu(near)
    except RuntimeError as exc:
        raise SingularMatrixError(f"near-field block is singular: {exc}") from exc
    return Preconditioner(PrecondKind.NEAR_FIELD_LU, n, lu.solve, memory=_sparse_lu_memory(lu))


def _ilu0(a: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """In-place dense ILU(0) restricted to ``mask`` (diagonal always kept)."""
    a = np.where(mask, a, 0.0)
    n = len(a)
    for i in range(1, n):
        ks = np.flatnonzero(mask[i, :i])
        for k in ks:
            if a[k, k] == 0:
                raise SingularMatrixError(f"zero pivot {k} in ILU(0)")
            a[i, k] /= a[k, k]
            cols = np.flatnonzero(mask[i, k + 1:]) + k + 1
            a[i, cols] -= a[i, k] * a[k, cols]
    if np.any(np.diag(a) == 0):
        raise SingularMatrixError("zero pivot in ILU(0)")
    return a


def coarse_block_preconditioner(a, coarse: np.ndarray, mode: str = "LU",
                                drop: float = ILU_DROP) -> Preconditioner:
    """Factor the coarse diagonal block; Jacobi on the remaining unknowns.

    ``coarse`` is an index array or boolean mask (typically MR columns at
    the stop level).  ``mode="ILU0"`` drops coarse-block entries below
    ``drop`` times their row maximum and runs ILU(0) on what remains.
    """
    a = _dense(a)
    n = len(a)
    idx = np.flatnonzero(coarse) if np.asarray(coarse).dtype == bool else np.asarray(coarse, dtype=int)
    idx = np.unique(idx)
    rest = np.setdiff1d(np.arange(n), idx)
    block = a[np.ix_(idx, idx)]
    d = np.diag(a)[rest]
    if np.any(d == 0):
        raise SingularMatrixError("zero diagonal outside the coarse block")
    inv_d = 1.0 / d
    mode = mode.upper()
    if mode == "LU":
        lu, piv = _lu(block, "coarse block")
        memory = lu.nbytes + piv.nbytes + inv_d.nbytes

        def solve_block(x):
            return sla.lu_solve((lu, piv), x)
        kind = PrecondKind.COARSE_BLOCK_LU
    elif mode == "ILU0":
        rowmax = np.abs(block).max(axis=1, keepdims=True)
        mask = np.abs(block) >= drop * rowmax
        np.fill_diagonal(mask, True)
        f = _ilu0(block.astype(complex), mask)
        lower = np.tril(f, -1) + np.eye(len(f))
        upper = np.triu(f)
        nnz = int(mask.sum())
        memory = nnz * (16 + 4) + 4 * (len(f) + 1) + inv_d.nbytes

        def solve_block(x):
            y = sla.solve_triangular(lower, x, lower=True, unit_diagonal=True)
            return sla.solve_triangular(upper, y, lower=False)
        kind = PrecondKind.COARSE_BLOCK_ILU0
    else:
        raise ValueError(f"mode must be LU or ILU0, got {mode!r}")

    def solve(x):
        out = np.empty(n, dtype=np.result_type(x, a))
        if idx.size:
            out[idx] = solve_block(x[idx])
        out[rest] = inv_d * x[rest]
        return out
    return Preconditioner(kind, n, solve, memory=int(memory), coarse=idx)


def dense_lu_memory(n: int) -> int:
    """Bytes of a dense complex LU factor with pivots."""
    return 16 * n * n + 4 * n


# ---------------------------------------------------------------------------
# Krylov methods
# ---------------------------------------------------------------------------

def _as_apply(a) -> Callable:
    if callable(a) and not isinstance(a, np.ndarray):
        return a
    mat = _dense(a)
    return lambda x: mat @ x


def gmres(a_apply, b, tol=1e-4, max_iter=DEFAULT_MAX_ITER, restart=DEFAULT_RESTART,
          m: Preconditioner | None = None, x0=None) -> SolveReport:
    """Restarted GMRES on ``M^-1 A x = M^-1 b`` with true-residual stopping.

    The unpreconditioned products ``A v_j`` are kept so the true residual of
    each iterate, ``r0 - W y``, costs O(N k) rather than a matrix product.
    """
    t0 = time.perf_counter()
    apply = _as_apply(a_apply)
    b = np.asarray(b, dtype=complex)
    n = b.size
    m = m or identity_preconditioner(n)
    if tol <= 0:
        raise ValueError("tol must be positive")
    bnorm = np.linalg.norm(b)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    if bnorm == 0:
        return SolveReport(np.zeros(n, complex), [0.0], 0, True, time.perf_counter() - t0,
                           m.memory, "GMRES")
    r = b - apply(x)
    hist = [np.linalg.norm(r) / bnorm]
    it = 0
    reason = ""
    restart = max(1, min(restart, n))
    while hist[-1] >= tol and it < max_iter:
        z = m(r)
        beta = np.linalg.norm(z)
        if beta == 0:
            reason = "preconditioned residual vanished"
            break
        v = np.zeros((restart + 1, n), dtype=complex)
        w = np.zeros((restart, n), dtype=complex)
        h = np.zeros((restart + 1, restart), dtype=complex)
        cs = np.zeros(restart, dtype=complex)
        sn = np.zeros(restart, dtype=complex)
        g = np.zeros(restart + 1, dtype=complex)
        g[0] = beta
        v[0] = z / beta
        k_done = 0
        y = np.zeros(0)
        for j in range(restart):
            w[j] = apply(v[j])
            u = m(w[j])
            for i in range(j + 1):        # modified Gram-Schmidt, twice
                hij = np.vdot(v[i], u)
                h[i, j] += hij
                u = u - hij * v[i]
            for i in range(j + 1):
                hij = np.vdot(v[i], u)
                h[i, j] += hij
                u = u - hij * v[i]
            h[j + 1, j] = np.linalg.norm(u)
            lucky = h[j + 1, j] <= 1e-14 * beta
            if not lucky:
                v[j + 1] = u / h[j + 1, j]
            for i in range(j):
                tmp = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
                h[i + 1, j] = -np.conj(sn[i]) * h[i, j] + cs[i] * h[i + 1, j]
                h[i, j] = tmp
            # complex Givens rotation zeroing h[j+1, j]; cs is real
            a_, b_ = h[j, j], h[j + 1, j]
            den = np.hypot(abs(a_), abs(b_))
            if abs(a_) == 0:
                cs[j], sn[j] = 0.0, 1.0
            else:
                cs[j] = abs(a_) / den
                sn[j] = (a_ / abs(a_)) * np.conj(b_) / den
            h[j, j] = cs[j] * a_ + sn[j] * b_
            h[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            k_done = j + 1
            it += 1
            y = sla.solve_triangular(h[:k_done, :k_done], g[:k_done])
            res = np.linalg.norm(r - w[:k_done].T @ y) / bnorm
            hist.append(res)
            if res < tol or it >= max_iter:
                break
            if lucky:
                reason = "Krylov space exhausted"
                break
        x = x + v[:k_done].T @ y
        r = b - apply(x)
        true = np.linalg.norm(r) / bnorm
        if hist[-1] < tol and true >= tol:
            logger.debug("GMRES recurrence residual %.3e but true %.3e; continuing", hist[-1], true)
        hist[-1] = true
    converged = bool(hist[-1] < tol)
    if not converged and not reason:
        reason = f"no convergence in {max_iter} iterations"
    return SolveReport(x, [float(h) for h in hist], len(hist) - 1, converged,
                       time.perf_counter() - t0, m.memory, "GMRES", reason)


def bicgstab(a_apply, b, tol=1e-4, max_iter=DEFAULT_MAX_ITER,
             m: Preconditioner | None = None, x0=None) -> SolveReport:
    """BiCGStab on ``M^-1 A x = M^-1 b`` tracking the true residual."""
    t0 = time.perf_counter()
    apply = _as_apply(a_apply)
    b = np.asarray(b, dtype=complex)
    n = b.size
    m = m or identity_preconditioner(n)
    if tol <= 0:
        raise ValueError("tol must be positive")
    bnorm = np.linalg.norm(b)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    if bnorm == 0:
        return SolveReport(np.zeros(n, complex), [0.0], 0, True, time.perf_counter() - t0,
                           m.memory, "BiCGStab")
    r_true = b - apply(x)
    r = m(r_true)
    r_hat = r.copy()
    hist = [np.linalg.norm(r_true) / bnorm]
    rho = alpha = omega = 1.0 + 0j
    v = np.zeros(n, dtype=complex)
    p = np.zeros(n, dtype=complex)
    av = np.zeros(n, dtype=complex)
    reason = ""
    it = 0
    while hist[-1] >= tol and it < max_iter:
        rho_new = np.vdot(r_hat, r)
        if abs(rho_new) < 1e-300:
            reason = "breakdown: rho = 0"
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        ap = apply(p)
        v = m(ap)
        den = np.vdot(r_hat, v)
        if abs(den) < 1e-300:
            reason = "breakdown: r_hat . v = 0"
            break
        alpha = rho / den
        s = r - alpha * v
        r_true = r_true - alpha * ap
        it += 1
        if np.linalg.norm(r_true) / bnorm < tol:
            x = x + alpha * p
            hist.append(np.linalg.norm(r_true) / bnorm)
            break
        av = apply(s)
        t = m(av)
        tt = np.vdot(t, t)
        if tt == 0:
            reason = "breakdown: t = 0"
            x = x + alpha * p
            hist.append(np.linalg.norm(r_true) / bnorm)
            break
        omega = np.vdot(t, s) / tt
        x = x + alpha * p + omega * s
        r = s - omega * t
        r_true = r_true - omega * av
        hist.append(np.linalg.norm(r_true) / bnorm)
        if omega == 0:
            reason = "breakdown: omega = 0"
            break
    final = np.linalg.norm(b - apply(x)) / bnorm
    hist[-1] = final
    converged = bool(final < tol)
    if not converged and not reason:
        reason = f"no convergence in {max_iter} iterations"
    return SolveReport(x, [float(h) for h in hist], len(hist) - 1, converged,
                       time.perf_counter() - t0, m.memory, "BiCGStab", reason)


def iterative_solve(method: str, a_apply, b, tol: float = 1e-4, max_iter: int = DEFAULT_MAX_ITER,
                    restart: int = DEFAULT_RESTART, m: Preconditioner | None = None) -> SolveReport:
    method = method.upper()
    if method == "GMRES":
        return gmres(a_apply, b, tol, max_iter, restart, m)
    if method == "BICGSTAB":
        return bicgstab(a_apply, b, tol, max_iter, m)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# direct methods and diagnostics
# ---------------------------------------------------------------------------

def direct_solve(a, b) -> np.ndarray:
    """Partial-pivoted LU solve."""
    a = _dense(a)
    lu, piv = _lu(a, "matrix")
    return sla.lu_solve((lu, piv), b)


def condition_number(a) -> float:
    """2-norm condition number from the full singular value spectrum."""
    s = sla.svdvals(_dense(a))
    if s[-1] == 0:
        return np.inf
    return float(s[0] / s[-1])


def singular_extremes(a) -> tuple[float, float]:
    s = sla.svdvals(_dense(a))
    return float(s[0]), float(s[-1])


def smallest_singular_value(a, iters: int = 30, seed: int = 0, rtol: float = 1e-10) -> float:
    """``sigma_min`` by inverse iteration on ``A^H A`` with one LU of ``A``."""
    a = _dense(a)
    lu, piv = sla.lu_factor(a)
    x = np.random.default_rng(seed).standard_normal(len(a)).astype(complex)
    x /= np.linalg.norm(x)
    est = np.inf
    for _ in range(iters):
        y = sla.lu_solve((lu, piv), sla.lu_solve((lu, piv), x, trans=2))
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return np.inf
        new = 1.0 / np.sqrt(nrm)
        x = y / nrm
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return float(est)


def largest_singular_value(a, iters: int = 100, seed: int = 0, rtol: float = 1e-10) -> float:
    """``sigma_max`` by power iteration on ``A^H A``."""
    a = _dense(a)
    x = np.random.default_rng(seed).standard_normal(a.shape[1]).astype(complex)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = a.conj().T @ (a @ x)
        nrm = np.linalg.norm(y)
        new = np.sqrt(nrm)
        x = y / nrm
        if abs(new - est) <= rtol * new:
            return float(new)
        est = new
    return float(est)
