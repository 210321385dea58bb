"""Kronecker-structured space-time operators and the linear solvers built on them.

Space-time vectors are stored time-major: entry ``m * N + n`` belongs to
time basis function ``m`` and space basis function ``n``.  Reshaping such a
vector to ``(M, N)`` therefore gives one row per time function, and
``(A_t kron A_x) v`` equals ``vec(A_t V A_x^T)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MEMORY_BUDGET = 20_000_000  # stored nonzeros of an expanded operator


class SolverError(RuntimeError):
    """A linear solve failed; ``residual`` holds the relative residual reached."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


def _as_sparse(A) -> sp.csr_matrix:
    return A.tocsr() if sp.issparse(A) else sp.csr_matrix(np.atleast_2d(A))


def kron_apply(A_t, A_x, X: np.ndarray) -> np.ndarray:
    """Apply ``A_t kron A_x`` to a vector or to the columns of a matrix."""
    mt, nt = A_t.shape
    mx, nx = A_x.shape
    if X.shape[0] != nt * nx:
        raise ValueError(f"dimension mismatch: operator has {nt * nx} columns, got {X.shape[0]} rows")
    if X.ndim == 1:
        V = X.reshape(nt, nx)
        W = (A_x @ V.T).T
        return np.asarray(A_t @ W).reshape(-1)
    k = X.shape[1]
    V = X.reshape(nt, nx, k).transpose(1, 0, 2).reshape(nx, nt * k)
    W = np.asarray(A_x @ V).reshape(mx, nt, k).transpose(1, 0, 2).reshape(nt, mx * k)
    return np.asarray(A_t @ W).reshape(mt * mx, k)


@dataclass(frozen=True)
class KronSum:
    """``sum_i w_i (A_t^i kron A_x^i)`` with sparse factors, applied matrix-free."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(w), _as_sparse(At), _as_sparse(Ax)) for w, At, Ax in self.terms)
        if not terms:
            raise ValueError("KronSum needs at least one term")
        shapes = {(At.shape[0] * Ax.shape[0], At.shape[1] * Ax.shape[1]) for _, At, Ax in terms}
        if len(shapes) != 1:
            raise ValueError(f"incompatible Kronecker terms with shapes {sorted(shapes)}")
        object.__setattr__(self, "terms", terms)

    @property
    def shape(self) -> tuple:
        _, At, Ax = self.terms[0]
        return (At.shape[0] * Ax.shape[0], At.shape[1] * Ax.shape[1])

    @property
    def space_shape(self) -> tuple:
        return self.terms[0][2].shape

    def __matmul__(self, X):
        return kron_matvec(self, X)

    def __add__(self, other: "KronSum") -> "KronSum":
        return KronSum(self.terms + other.terms)

    def scaled(self, c: float) -> "KronSum":
        return KronSum(tuple((c * w, At, Ax) for w, At, Ax in self.terms))

    @property
    def T(self) -> "KronSum":
        return KronSum(tuple((w, At.T, Ax.T) for w, At, Ax in self.terms))

    def nnz_bound(self) -> int:
        return sum(At.nnz * Ax.nnz for _, At, Ax in self.terms)

    def to_sparse(self) -> sp.csr_matrix:
        out = None
        for w, At, Ax in self.terms:
            term = w * sp.kron(At, Ax, format="csr")
            out = term if out is None else out + term
        out = out.tocsr()
        out.sum_duplicates()
        out.eliminate_zeros()
        return out


def kron_matvec(op: KronSum, v: np.ndarray) -> np.ndarray:
    """``op @ v`` without forming any Kronecker product."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != op.shape[1]:
        raise ValueError(f"dimension mismatch: operator is {op.shape}, vector has {v.shape[0]} rows")
    out = None
    for w, At, Ax in op.terms:
        term = kron_apply(At, Ax, v)
        out = w * term if out is None else out + w * term
    return out


# ---------------------------------------------------------------------------
# Structured solvers


class KronDiagSolver:
    """Inverse of ``diag(d) kron A_x`` via one sparse factorization of ``A_x``."""

    def __init__(self, time_diagonal: np.ndarray, A_x):
        self.d = np.asarray(time_diagonal, dtype=float)
        if np.any(self.d <= 0.0):
            raise SolverError("time factor must have a positive diagonal")
        self.n = A_x.shape[0]
        self._lu = spla.splu(sp.csc_matrix(A_x))

    @classmethod
    def from_kronsum(cls, op: KronSum) -> "KronDiagSolver":
        if len(op.terms) != 1:
            raise ValueError("need a single Kronecker term")
        w, At, Ax = op.terms[0]
        if (At - sp.diags(At.diagonal())).count_nonzero():
            raise ValueError("time factor is not diagonal")
        return cls(w * At.diagonal(), Ax)

    def solve(self, R: np.ndarray) -> np.ndarray:
        P, n = self.d.size, self.n
        if R.ndim == 1:
            X = self._lu.solve(np.ascontiguousarray(R.reshape(P, n).T))
            return (X / self.d).T.reshape(-1)
        k = R.shape[1]
        V = R.reshape(P, n, k).transpose(1, 0, 2).reshape(n, P * k)
        X = self._lu.solve(np.ascontiguousarray(V)).reshape(n, P, k) / self.d[None, :, None]
        return X.transpose(1, 0, 2).reshape(P * n, k)


def _tridiagonal_bands(T) -> tuple:
    T = sp.csr_matrix(T)
    offsets = T.tocoo()
    if offsets.nnz and np.max(np.abs(offsets.row - offsets.col)) > 1:
        raise ValueError("time factor is not tridiagonal")
    return T.diagonal(-1), T.diagonal(0), T.diagonal(1)


class ModalKronSolver:
    """Exact inverse of ``sum_i T_i kron M (M^{-1} A)^{k_i}`` for tridiagonal ``T_i``.

    ``M`` must be diagonal and ``A`` symmetric positive definite.  With the
    generalized eigenpairs ``A V = M V diag(lam)``, ``V^T M V = I``, every
    spatial factor becomes ``M V diag(lam^k) V^T M``, so the operator splits
    into one tridiagonal time system per spatial mode.
    """

    def __init__(self, time_factors, powers, M_x, A_x):
        mass = M_x.diagonal() if sp.issparse(M_x) else np.diag(M_x)
        A = A_x.toarray() if sp.issparse(A_x) else np.asarray(A_x)
        lam, V = la.eigh(A, np.diag(mass))
        if lam[0] <= 0.0:
            raise SolverError("spatial operator is not positive definite")
        self.V = V
        self.lam = lam
        bands = [_tridiagonal_bands(T) for T in time_factors]
        m = bands[0][1].size
        lower = np.zeros((m - 1, lam.size))
        diag = np.zeros((m, lam.size))
        upper = np.zeros((m - 1, lam.size))
        for (lo, di, up), k in zip(bands, powers):
            s = lam ** k
            lower += lo[:, None] * s
            diag += di[:, None] * s
            upper += up[:, None] * s
        self._factor(lower, diag, upper)
        self.m = m

    def _factor(self, lower, diag, upper):
        # Thomas algorithm, vectorized across modes; SPD so no pivoting
        m = diag.shape[0]
        c = np.zeros_like(upper)
        d = np.zeros_like(diag)
        d[0] = diag[0]
        for i in range(m - 1):
            c[i] = upper[i] / d[i]
            d[i + 1] = diag[i + 1] - lower[i] * c[i]
        if np.any(d <= 0.0):
            raise SolverError("modal time systems are not positive definite")
        self._lower, self._c, self._d = lower, c, d

    def _solve_modes(self, Rm: np.ndarray) -> np.ndarray:
        lower, c, d = self._lower, self._c, self._d
        m = d.shape[0]
        x = np.empty_like(Rm)
        extra = (slice(None),) + (None,) * (Rm.ndim - 2)
        x[0] = Rm[0] / d[0][extra]
        for i in range(1, m):
            x[i] = (Rm[i] - lower[i - 1][extra] * x[i - 1]) / d[i][extra]
        for i in range(m - 2, -1, -1):
            x[i] -= c[i][extra] * x[i + 1]
        return x

    def solve(self, r: np.ndarray) -> np.ndarray:
        n = self.lam.size
        if r.ndim == 1:
            R = r.reshape(self.m, n) @ self.V
            return (self._solve_modes(R) @ self.V.T).reshape(-1)
        k = r.shape[1]
        R = np.einsum("mnk,nj->mjk", r.reshape(self.m, n, k), self.V, optimize=True)
        X = self._solve_modes(R)
        return np.einsum("mjk,nj->mnk", X, self.V, optimize=True).reshape(self.m * n, k)


class BlockDiagTimePreconditioner:
    """``sum_i w_i diag(A_t^i) kron A_x^i``: one sparse factorization per time index."""

    def __init__(self, op: KronSum):
        M = op.terms[0][1].shape[0]
        self.n = op.space_shape[0]
        self._lus = []
        for m in range(M):
            block = None
            for w, At, Ax in op.terms:
                c = w * At[m, m]
                if c != 0.0:
                    block = c * Ax if block is None else block + c * Ax
            self._lus.append(spla.splu(sp.csc_matrix(block)))

    def solve(self, r: np.ndarray) -> np.ndarray:
        R = r.reshape(len(self._lus), self.n)
        return np.concatenate([lu.solve(row) for lu, row in zip(self._lus, R)])


# ---------------------------------------------------------------------------
# Iterative and direct drivers


def pcg(apply_A, b: np.ndarray, tol: float = DEFAULT_TOL, precond=None,
        maxiter: int | None = None, x0: np.ndarray | None = None, ref_norm: float | None = None):
    """Preconditioned conjugate gradients.

    Stops once ``||b - A x|| <= tol * ref_norm`` (``ref_norm`` defaults to
    ``||b||``).  Returns ``(x, iterations, relative_residual)``.
    """
    n = b.size
    maxiter = maxiter or max(10 * n, 100)
    ref = float(np.linalg.norm(b)) if ref_norm is None else float(ref_norm)
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - apply_A(x) if x0 is not None else b.copy()
    if ref == 0.0:
        return np.zeros(n), 0, 0.0
    res = np.linalg.norm(r)
    if res <= tol * ref:
        return x, 0, res / ref
    z = precond(r) if precond else r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        curv = p @ Ap
        if curv <= 0.0:
            raise SolverError(f"negative curvature p^T A p = {curv:.3e}: operator not SPD", res / ref)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r)
        if res <= tol * ref:
            return x, it, res / ref
        z = precond(r) if precond else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {maxiter} iterations", res / ref)


def _direct(A: sp.spmatrix, rhs: np.ndarray, tol: float, lu=None) -> np.ndarray:
    lu = lu or spla.splu(sp.csc_matrix(A))
    x = lu.solve(rhs)
    ref = np.linalg.norm(rhs)
    for _ in range(3):
        r = rhs - A @ x
        if np.linalg.norm(r) <= tol * ref:
            return x
        x += lu.solve(r)
    r = np.linalg.norm(rhs - A @ x) / ref
    if r > tol:
        raise SolverError(f"direct solve residual {r:.3e} above tolerance {tol:.1e}", r)
    return x


def solve_spd(op, rhs: np.ndarray, tol: float = DEFAULT_TOL, method: str = "auto",
              precond=None, memory_budget: int = DEFAULT_MEMORY_BUDGET, maxiter: int | None = None):
    """Solve ``op x = rhs`` for a symmetric positive definite operator.

    ``op`` is a sparse matrix or a :class:`KronSum`.  ``method='auto'``
    factorizes the expanded matrix when its nonzero bound fits
    ``memory_budget`` and otherwise runs CG preconditioned with the
    time-diagonal block preconditioner (or ``precond`` if given).
    """
    rhs = np.asarray(rhs, dtype=float)
    if op.shape[0] != op.shape[1] or op.shape[0] != rhs.shape[0]:
        raise ValueError(f"dimension mismatch: operator {op.shape}, rhs {rhs.shape}")
    if not np.any(rhs):
        return np.zeros_like(rhs)
    is_kron = isinstance(op, KronSum)
    nnz = op.nnz_bound() if is_kron else op.nnz
    if method == "auto":
        method = "direct" if nnz <= memory_budget else "cg"
    if method == "direct":
        A = op.to_sparse() if is_kron else sp.csr_matrix(op)
        return _direct(A, rhs, tol)
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    if precond is None and is_kron:
        precond = BlockDiagTimePreconditioner(op).solve
    x, it, res = pcg(lambda v: op @ v, rhs, tol, precond, maxiter)
    log.debug("solve_spd: CG converged in %d iterations (relres %.2e)", it, res)
    return x


@dataclass(frozen=True)
class BlockSaddleOperator:
    """Symmetric block operator ``[[A, B^T], [B, -C]]``."""

    A: KronSum
    B: KronSum
    C: KronSum

    def __post_init__(self):
        if self.B.shape != (self.C.shape[0], self.A.shape[1]):
            raise ValueError("block dimensions do not match")

    @property
    def sizes(self) -> tuple:
        return self.A.shape[0], self.C.shape[0]

    def matvec(self, y: np.ndarray, p: np.ndarray) -> tuple:
        return (self.A @ y + self.B.T @ p, self.B @ y - self.C @ p)

    def to_sparse(self) -> sp.csr_matrix:
        B = self.B.to_sparse()
        return sp.bmat([[self.A.to_sparse(), B.T], [B, -self.C.to_sparse()]], format="csr")

    def schur_apply(self, y: np.ndarray, c_solve) -> np.ndarray:
        """``(A + B^T C^{-1} B) y``."""
        return self.A @ y + self.B.T @ c_solve(self.B @ y)


def solve_saddle(op: BlockSaddleOperator, rhs: tuple, tol: float = DEFAULT_TOL,
                 method: str = "schur", precond=None, c_solver=None, maxiter: int | None = None):
    """Solve ``[[A, B^T], [B, -C]] (y, p) = (r1, r2)``.

    ``method='schur'`` eliminates ``p = C^{-1}(B y - r2)`` and runs PCG on
    ``A + B^T C^{-1} B``; ``method='direct'`` factorizes the assembled
    indefinite matrix.  Either way the block residual is at most
    ``tol * ||(r1, r2)||``.
    """
    r1, r2 = (np.asarray(r, dtype=float) for r in rhs)
    ny, npp = op.sizes
    if r1.shape != (ny,) or r2.shape != (npp,):
        raise ValueError(f"rhs blocks must have lengths {ny} and {npp}")
    ref = float(np.hypot(np.linalg.norm(r1), np.linalg.norm(r2)))
    if ref == 0.0:
        return np.zeros(ny), np.zeros(npp)
    if method == "direct":
        x = _direct(op.to_sparse(), np.concatenate([r1, r2]), tol)
        return x[:ny], x[ny:]
    if method != "schur":
        raise ValueError(f"unknown saddle method {method!r}")
    if c_solver is None:
        try:
            c_solver = KronDiagSolver.from_kronsum(op.C)
        except ValueError:
            C = op.C.to_sparse()
            lu = spla.splu(sp.csc_matrix(C))
            c_solver = type("C", (), {"solve": staticmethod(lu.solve)})()
    if precond is None:
        precond = BlockDiagTimePreconditioner(op.A).solve
    b = r1 + op.B.T @ c_solver.solve(r2)
    y, it, res = pcg(lambda v: op.schur_apply(v, c_solver.solve), b, tol, precond, maxiter, ref_norm=ref)
    p = c_solver.solve(op.B @ y - r2)
    log.debug("solve_saddle: Schur CG converged in %d iterations (relres %.2e)", it, res)
    return y, p
