"""Energy inner product of the discrete space-time trial space W_d.

With ``A = T_t kron M_x + M_t kron A_x``, ``B = Z_t kron M_x`` and
``C = M_psi kron A_x`` (all at the reference parameter) the W_d Gram
matrix is the Schur complement ``G = A + B^T C^{-1} B``.  Storing the lift
``C^{-1} B y`` next to every trial vector ``y`` turns ``u^T G v`` into two
sparse quadratic forms.
"""

from __future__ import annotations

import numpy as np

from .hifi import assemble_system, coupling
from .kron_ops import DEFAULT_TOL, BlockSaddleOperator, KronDiagSolver, KronSum, solve_saddle
from .problem import SeparableProblem


def gram_direct(problem: SeparableProblem) -> KronSum:
    t = problem.time
    return KronSum(((1.0, t.T_t, problem.M_x), (1.0, t.M_t, problem.A_bar)))


def gram_lift(problem: SeparableProblem) -> KronSum:
    return KronSum(((1.0, problem.time.M_psi, problem.A_bar),))


def w_inner(problem: SeparableProblem, u, u_lift, v, v_lift):
    """``(u, v)_{W_d}`` from trial vectors and their reference lifts.

    Works column-wise on matrices, returning ``U^T G V``.
    """
    u, u_lift, v, v_lift = (np.asarray(a, dtype=float) for a in (u, u_lift, v, v_lift))
    if u.shape[0] != problem.N * problem.M or u_lift.shape[0] != problem.N * problem.P:
        raise ValueError("dimension mismatch between vectors and the space-time grid")
    if u.shape[0] != v.shape[0] or u_lift.shape[0] != v_lift.shape[0]:
        raise ValueError("dimension mismatch between arguments")
    return u.T @ (gram_direct(problem) @ v) + u_lift.T @ (gram_lift(problem) @ v_lift)


def w_norm(problem: SeparableProblem, u, u_lift) -> float:
    return float(np.sqrt(max(np.asarray(w_inner(problem, u, u_lift, u, u_lift)).item(), 0.0)))


def b_d(problem: SeparableProblem, mu, u, v) -> float:
    """``b_d(mu; u, v)`` through Riesz lifts at ``mu`` (one C-solve)."""
    op, _ = assemble_system(problem, mu)
    c = KronDiagSolver.from_kronsum(op.C)
    return float(u @ (op.A @ v) + (op.B @ u) @ c.solve(op.B @ v))


def reference_operator(problem: SeparableProblem) -> BlockSaddleOperator:
    return BlockSaddleOperator(A=gram_direct(problem), B=coupling(problem), C=gram_lift(problem))


def gram_solve(problem: SeparableProblem, r: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``G^{-1} r``: the y-part of the reference saddle system with right-hand side ``(r, 0)``."""
    y, _ = solve_saddle(reference_operator(problem), (r, np.zeros(problem.N * problem.P)), tol=tol,
                        precond=problem.gram_solver.solve, c_solver=problem.lift_solver)
    return y


def riesz_check(problem: SeparableProblem, mu, phi: np.ndarray) -> float:
    """Defect of the discrete Riesz lift of ``phi`` (pairings with the Q_d basis).

    Solves ``(M_psi kron A_x(mu)) r = phi`` and returns
    ``max_q |int (r, q)_{V(mu)} - phi_q|``.
    """
    op, _ = assemble_system(problem, mu)
    r = KronDiagSolver.from_kronsum(op.C).solve(phi)
    return float(np.max(np.abs(op.C @ r - phi))) if phi.size else 0.0


def residual_vector(problem: SeparableProblem, mu, y: np.ndarray) -> np.ndarray:
    """Entries ``l_d(mu; w_i) - b_d(mu; y, w_i)`` over the W_d basis."""
    op, (f1, f2) = assemble_system(problem, mu)
    c = KronDiagSolver.from_kronsum(op.C)
    return f1 - op.A @ y - op.B.T @ c.solve(op.B @ y - f2)


def residual_riesz_norm(problem: SeparableProblem, mu, y: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """W_d norm of the Riesz representer of the residual at ``y``."""
    r = residual_vector(problem, mu, y)
    return float(np.sqrt(max(r @ gram_solve(problem, r, tol), 0.0)))
