"""Linear operators (dense and matrix-free) and the spectral utilities built on them.

All routines are pure given their seed: no shared mutable state, safe for
concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError
from .rng import TAG_POWER, TAG_PROBES, keyed_rng

# Singular values below s1 * RANK_CUTOFF are treated as zero; this defines the
# numerical rank everywhere in the package.
RANK_CUTOFF = 1e-12


class LinearOperator:
    """A forward map together with its adjoint.

    The operator maps R^cols -> R^rows.  ``apply`` and ``apply_adjoint``
    accept a single vector or a matrix of column vectors.  Dense operators
    carry their matrix; matrix-free ones only the callables.
    """

    def __init__(self, rows: int, cols: int, apply: Callable, apply_adjoint: Callable,
                 representation: str, matrix=None):
        if representation not in ("dense", "matrix-free"):
            raise ValueError(f"unknown representation {representation!r}")
        self.rows = int(rows)
        self.cols = int(cols)
        self._apply = apply
        self._apply_adjoint = apply_adjoint
        self.representation = representation
        self._matrix = matrix

    @classmethod
    def from_dense(cls, A) -> "LinearOperator":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise ValueError("expected a 2-d array")
        return cls(A.shape[0], A.shape[1], lambda x: A @ x, lambda y: A.T @ y,
                   "dense", matrix=A)

    @classmethod
    def from_sparse(cls, S) -> "LinearOperator":
        S = sp.csr_matrix(S)
        St = sp.csr_matrix(S.T)
        return cls(S.shape[0], S.shape[1], lambda x: S @ x, lambda y: St @ y,
                   "matrix-free", matrix=S)

    @classmethod
    def from_functions(cls, rows: int, cols: int, apply: Callable,
                       apply_adjoint: Callable) -> "LinearOperator":
        def blocked(fn, length):
            def wrapped(x):
                x = np.asarray(x, dtype=float)
                if x.ndim == 1:
                    return np.asarray(fn(x), dtype=float)
                return np.column_stack([np.asarray(fn(x[:, j]), dtype=float)
                                        for j in range(x.shape[1])])
            return wrapped
        return cls(rows, cols, blocked(apply, cols), blocked(apply_adjoint, rows),
                   "matrix-free")

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.cols:
            raise ValueError(f"expected leading dimension {self.cols}, got {x.shape[0]}")
        return self._apply(x)

    def apply_adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.rows:
            raise ValueError(f"expected leading dimension {self.rows}, got {y.shape[0]}")
        return self._apply_adjoint(y)

    def to_dense(self) -> np.ndarray:
        if self._matrix is not None:
            if sp.issparse(self._matrix):
                return self._matrix.toarray()
            return np.asarray(self._matrix)
        return self.apply(np.eye(self.cols))


def as_operator(A) -> LinearOperator:
    """Coerce an ndarray, sparse matrix or LinearOperator into a LinearOperator."""
    if isinstance(A, LinearOperator):
        return A
    if sp.issparse(A):
        return LinearOperator.from_sparse(A)
    return LinearOperator.from_dense(A)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Truncated SVD: nonincreasing positive singular values and orthonormal vectors."""

    left_vectors: np.ndarray   # (n, r)
    singular_values: np.ndarray  # (r,)
    right_vectors: np.ndarray  # (m, r)
    rank: int

    @property
    def U(self):
        return self.left_vectors

    @property
    def s(self):
        return self.singular_values

    @property
    def V(self):
        return self.right_vectors


def svd(A) -> SpectralDecomposition:
    """Full SVD of a dense operator, truncated at the relative rank cutoff."""
    op = as_operator(A)
    if op.representation != "dense":
        raise ValueError("svd requires a dense operator")
    M = op.to_dense()
    if not np.all(np.isfinite(M)):
        raise ValueError("operator has non-finite entries")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > s[0] * RANK_CUTOFF)) if s.size and s[0] > 0 else 0
    return SpectralDecomposition(np.ascontiguousarray(U[:, :r]),
                                 np.ascontiguousarray(s[:r]),
                                 np.ascontiguousarray(Vt[:r].T), r)


def power_iteration(A, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0):
    """Power method on A^T A from a seeded Gaussian start vector.

    Returns (lam, v, iterations, rayleighs) where lam estimates the largest
    eigenvalue of A^T A and rayleighs is the (nondecreasing) quotient history.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = as_operator(A)
    rng = keyed_rng(seed, TAG_POWER)
    v = rng.standard_normal(op.cols)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("degenerate start vector")
    v = v / nv
    rayleighs = []
    lam = 0.0
    for k in range(1, max_iter + 1):
        z = op.apply_adjoint(op.apply(v))
        lam = float(v @ z)
        rayleighs.append(lam)
        resid = float(np.linalg.norm(z - lam * v))
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            raise ValueError("operator annihilates the start vector")
        v = z / nz
        if resid <= tol * max(lam, np.finfo(float).tiny):
            return lam, v, k, rayleighs
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations",
        last_iterate=lam, iterations=max_iter, trail=rayleighs)


def largest_eigenvalue(A, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue of A^T A (the squared operator norm of A)."""
    lam, _, _, _ = power_iteration(A, tol=tol, max_iter=max_iter, seed=seed)
    return lam


def cg_normal(A, B, alpha: float, tol: float = 1e-8, max_iter: int | None = None,
              x0=None):
    """Solve (A^T A + alpha I) X = B by conjugate gradients, vectorized over columns.

    B may be a vector or an (m, p) block of right-hand sides; convergence is
    the per-column relative residual against ||B_j||.  Returns (X, iterations).
    """
    op = as_operator(A)
    B = np.asarray(B, dtype=float)
    single = B.ndim == 1
    Bm = B[:, None] if single else B
    if max_iter is None:
        max_iter = 10 * min(op.rows, op.cols)

    if op.representation == "dense" and op._matrix is not None:
        gram = op._matrix.T @ op._matrix

        def normal_apply(X):
            return gram @ X + alpha * X
    else:
        def normal_apply(X):
            return op.apply_adjoint(op.apply(X)) + alpha * X

    X = np.zeros_like(Bm) if x0 is None else np.array(x0, dtype=float, copy=True)
    if single and X.ndim == 1:
        X = X[:, None]
    bnorm = np.maximum(np.linalg.norm(Bm, axis=0), np.finfo(float).tiny)
    R = Bm - normal_apply(X) if np.any(X) else Bm.copy()
    P = R.copy()
    rs = np.sum(R * R, axis=0)
    it = 0
    for it in range(1, max_iter + 1):
        rel = np.sqrt(rs) / bnorm
        if np.max(rel) <= tol:
            break
        active = rel > tol
        Q = normal_apply(P)
        pq = np.sum(P * Q, axis=0)
        a = np.where(active & (pq > 0), rs / np.where(pq > 0, pq, 1.0), 0.0)
        X += a * P
        R -= a * Q
        rs_new = np.sum(R * R, axis=0)
        beta = np.where(rs > 0, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        P = R + beta * P
        rs = rs_new
    else:
        raise ConvergenceError(
            f"cg on the normal equations did not reach tol={tol} in {max_iter} iterations",
            last_iterate=X[:, 0] if single else X, iterations=max_iter)
    return (X[:, 0] if single else X), it


def _probe_block(rows: int, probes: int, seed: int, distribution: str) -> np.ndarray:
    rng = keyed_rng(seed, TAG_PROBES)
    if distribution == "gaussian":
        return rng.standard_normal((rows, probes))
    if distribution == "rademacher":
        return 2.0 * rng.integers(0, 2, size=(rows, probes)) - 1.0
    raise ValueError(f"unknown probe distribution {distribution!r}")


def influence_probe_stats(A, alpha: float, probes: int, seed: int,
                          solve_tol: float = 1e-8, distribution: str = "gaussian",
                          x0=None, max_iter: int | None = None):
    """One batch of probe solves, shared by the influence estimators.

    Draws p probe vectors z, solves (A^T A + alpha I) w = A^T z for each, and
    returns a dict with the averaged quadratic forms:

    - ``frob_sq``:   mean ||A w||^2, estimating the squared Frobenius norm of
      the influence operator A (A^T A + alpha I)^{-1} A^T,
    - ``trace``:     mean <z, A w>, estimating its trace,
    - ``noise_amp``: mean ||w||^2, estimating tr((A^T A + alpha I)^{-2} A^T A),
    - ``W``:         the solve block, reusable as a warm start at a nearby alpha.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if probes < 1:
        raise ValueError("need at least one probe")
    op = as_operator(A)
    Z = _probe_block(op.rows, probes, seed, distribution)
    Bt = op.apply_adjoint(Z)
    W, iters = cg_normal(op, Bt, alpha, tol=solve_tol, max_iter=max_iter, x0=x0)
    AW = op.apply(W)
    frob_sq = float(np.mean(np.sum(AW * AW, axis=0)))
    trace = float(np.mean(np.sum(Z * AW, axis=0)))
    noise_amp = float(np.mean(np.sum(W * W, axis=0)))
    return {"frob_sq": frob_sq, "trace": trace, "noise_amp": noise_amp,
            "W": W, "iterations": iters}


def frobenius_sq_influence(A, alpha: float, probes: int, seed: int,
                           solve_tol: float = 1e-8, distribution: str = "gaussian") -> float:
    """Probe-averaged estimate of ||A (A^T A + alpha I)^{-1} A^T||_F^2.

    The estimator averages ||A w_i||^2 over i.i.d. probes, so it is unbiased
    for the squared Frobenius norm of the influence operator.
    """
    stats = influence_probe_stats(A, alpha, probes, seed, solve_tol=solve_tol,
                                  distribution=distribution)
    return stats["frob_sq"]


def trace_influence(A, alpha: float, probes: int, seed: int,
                    solve_tol: float = 1e-8, distribution: str = "gaussian") -> float:
    """Probe-averaged estimate of tr(A (A^T A + alpha I)^{-1} A^T).

    Uses the quadratic form z^T A w with the same solves as the Frobenius
    estimator; valid because the influence operator is symmetric PSD.
    """
    stats = influence_probe_stats(A, alpha, probes, seed, solve_tol=solve_tol,
                                  distribution=distribution)
    return stats["trace"]
