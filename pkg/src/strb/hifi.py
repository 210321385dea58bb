"""High-fidelity space-time solver for the least-squares saddle-point system."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .kron_ops import DEFAULT_TOL, BlockSaddleOperator, KronDiagSolver, KronSum, solve_saddle
from .problem import SeparableProblem, evaluate_operator
from .storage import StorageError, read_arrays, write_arrays

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Snapshot:
    """Space-time solution at one parameter.

    ``y_lift`` is ``(M_psi kron A_x(mu_ref))^{-1} (Z_t kron M_x) y``, the
    reference-parameter lift that makes W_d inner products cheap.
    """

    mu: np.ndarray
    y: np.ndarray
    p: np.ndarray
    y_lift: np.ndarray
    residual: float = 0.0


def coupling(problem: SeparableProblem) -> KronSum:
    return KronSum(((1.0, problem.time.Z_t, problem.M_x),))


def lift(problem: SeparableProblem, y: np.ndarray) -> np.ndarray:
    """Reference lift of one vector or of the columns of a matrix."""
    return problem.lift_solver.solve(coupling(problem) @ y)


def assemble_system(problem: SeparableProblem, mu) -> tuple:
    """Saddle operator and right-hand side ``(rhs_y, rhs_p)`` at ``mu``."""
    ev = evaluate_operator(problem, mu)
    t = problem.time
    A = KronSum(((1.0, t.T_t, problem.M_x), (1.0, t.M_t, ev.A_x)))
    C = KronSum(((1.0, t.M_psi, ev.A_x),))
    op = BlockSaddleOperator(A=A, B=coupling(problem), C=C)
    rhs_y = np.kron(t.R0_t, ev.R0_x) + ev.F1
    return op, (rhs_y, ev.F2.copy())


def block_residual(op: BlockSaddleOperator, rhs: tuple, y, p) -> float:
    r1, r2 = op.matvec(y, p)
    ref = np.hypot(np.linalg.norm(rhs[0]), np.linalg.norm(rhs[1]))
    res = np.hypot(np.linalg.norm(r1 - rhs[0]), np.linalg.norm(r2 - rhs[1]))
    return float(res / ref) if ref else float(res)


def solve_hifi(problem: SeparableProblem, mu, tol: float = DEFAULT_TOL, method: str = "schur") -> Snapshot:
    mu = problem.box.check(mu)
    op, rhs = assemble_system(problem, mu)
    c_solver = KronDiagSolver.from_kronsum(op.C)
    y, p = solve_saddle(op, rhs, tol=tol, method=method,
                        precond=problem.gram_solver.solve, c_solver=c_solver)
    res = block_residual(op, rhs, y, p)
    return Snapshot(mu=mu.copy(), y=y, p=p, y_lift=lift(problem, y), residual=res)


def check_y_only_equation(problem: SeparableProblem, mu, snapshot: Snapshot) -> float:
    """Max over the W_d basis of ``|b_d(mu; y, w_i) - l_d(mu; w_i)|``.

    The Riesz lifts are taken at ``mu`` itself, so this checks the
    equivalence of the saddle and the y-only formulations.
    """
    op, (f1, f2) = assemble_system(problem, mu)
    c_solver = KronDiagSolver.from_kronsum(op.C)
    z = c_solver.solve(op.B @ snapshot.y - f2)
    defect = op.A @ snapshot.y + op.B.T @ z - f1
    return float(np.max(np.abs(defect)))


def save_snapshots(path, snapshots, meta: dict | None = None) -> None:
    arrays = {}
    for i, s in enumerate(snapshots):
        arrays[f"{i}/mu"] = s.mu
        arrays[f"{i}/y"] = s.y
        arrays[f"{i}/p"] = s.p
        arrays[f"{i}/y_lift"] = s.y_lift
        arrays[f"{i}/residual"] = np.array([s.residual])
    write_arrays(path, {"kind": "snapshots", "count": len(snapshots), **(meta or {})}, arrays)


def load_snapshots(path) -> tuple:
    meta, arrays = read_arrays(path)
    if meta.get("kind") != "snapshots":
        raise StorageError(f"{path}: not a snapshot archive")
    out = []
    for i in range(int(meta["count"])):
        try:
            out.append(Snapshot(
                mu=arrays[f"{i}/mu"], y=arrays[f"{i}/y"], p=arrays[f"{i}/p"],
                y_lift=arrays[f"{i}/y_lift"], residual=float(arrays[f"{i}/residual"][0]),
            ))
        except KeyError as exc:
            raise StorageError(f"{path}: snapshot {i} incomplete") from exc
    return out, meta
