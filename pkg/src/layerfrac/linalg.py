"""Sparse assembly helpers and a PCG solver with a lagged factorization."""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


class SparsityPattern:
    """Fixed CSR pattern for repeated assembly of element contributions.

    ``rows``/``cols`` list every element-level entry (duplicates allowed);
    entries whose row or column is negative are dropped. ``assemble`` turns a
    flat array of element values, in the same order, into a CSR matrix.
    """

    def __init__(self, rows: np.ndarray, cols: np.ndarray, n: int):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        self.keep = np.flatnonzero((rows >= 0) & (cols >= 0))
        keys = rows[self.keep].astype(np.int64) * n + cols[self.keep]
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.n = n
        self.nnz = len(uniq)
        r = uniq // n
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(r, minlength=n), out=self.indptr[1:])

    def assemble(self, values: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=np.asarray(values).ravel()[self.keep], minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def scatter_add(index: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(np.asarray(index).ravel(), weights=np.asarray(values).ravel(), minlength=n)


def factorize(K: sp.spmatrix):
    return spla.splu(
        K.tocsc(),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


def pcg(A, b, precond, x0=None, rtol=1e-8, maxiter=100):
    """Preconditioned conjugate gradients. Returns ``(x, converged, iterations)``."""
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), True, 0
    target = rtol * bnorm
    if np.linalg.norm(r) <= target:
        return x, True, 0
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            return x, False, it
        step = rz / pAp
        x += step * p
        r -= step * Ap
        if np.linalg.norm(r) <= target:
            return x, True, it
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, False, maxiter


class LaggedSolver:
    """Solve SPD systems by PCG preconditioned with a factorization of an earlier matrix.

    The factorization is refreshed only when PCG fails to reach ``rtol``
    within ``maxiter`` iterations, so consecutive systems that differ by a
    local update (a few damaged or yielding elements) cost a handful of
    back-substitutions instead of a new factorization.
    """

    def __init__(self, maxiter: int = 25):
        self.maxiter = maxiter
        self._lu = None
        self.n_factorizations = 0
        self.n_iterations = 0

    def reset(self):
        self._lu = None

    def approximate(self, K: sp.csr_matrix, b: np.ndarray, maxiter: int, rtol: float = 1e-3) -> np.ndarray:
        """At most ``maxiter`` PCG iterations with the current factorization, never refactoring
        (except when there is none yet). Every PCG iterate lowers the quadratic energy, so the
        result is a descent step even when it is far from converged."""
        if self._lu is None or self._lu.shape[0] != K.shape[0]:
            self._lu = factorize(K)
            self.n_factorizations += 1
        x, _, its = pcg(K, b, self._lu.solve, rtol=rtol, maxiter=maxiter)
        self.n_iterations += its
        return x

    def solve(self, K: sp.csr_matrix, b: np.ndarray, rtol: float = 1e-8, x0=None) -> np.ndarray:
        if self._lu is not None and self._lu.shape[0] == K.shape[0]:
            x, ok, its = pcg(K, b, self._lu.solve, x0=x0, rtol=rtol, maxiter=self.maxiter)
            self.n_iterations += its
            if ok:
                return x
        self._lu = factorize(K)
        self.n_factorizations += 1
        x, ok, its = pcg(K, b, self._lu.solve, x0=None, rtol=rtol, maxiter=self.maxiter)
        self.n_iterations += its
        if not ok:
            res = np.linalg.norm(K @ x - b) / max(np.linalg.norm(b), 1e-300)
            raise LinearSolveError(f"linear solve did not converge: relative residual {res:.3e}")
        return x
