"""A posteriori error estimators in the W_d norm.

Two families bound the reduced-basis error ``||y_d - y_rb||_{W_d}``:

* ``eta_star``: the exact dual norm of the residual divided by a
  coercivity lower bound.  Needs one reference Gram solve and one
  ``C(mu)`` solve per parameter.
* ``eta_c``: an offline-online decomposable upper bound of the same
  quantity.  The scaled residual ``(I kron A_x(mu) M_x^{-1}) r`` is affine
  in the parameter, ``s(mu) - S(mu) B_W u_y``, and its norm is measured in
  the reference operator

      K = L_t kron A + M_t kron A M^{-1} A M^{-1} A + T_t kron A M^{-1} A

  (``A = A_x(mu_ref)``, ``M = M_x`` lumped, ``L_t = Z_t^T M_psi^{-1} Z_t``),
  at the price of an extra factor ``1 / c_c(mu)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kron_ops import DEFAULT_TOL, KronSum, ModalKronSolver, kron_apply
from .problem import ParameterModel, SeparableProblem, min_theta_bounds
from .wspace import residual_riesz_norm, w_inner

log = logging.getLogger(__name__)

MAX_GRAM_COLUMNS = 4000
_CHUNK = 256


class EstimatorMemoryError(MemoryError):
    pass


def residual_norm_operator(problem: SeparableProblem) -> KronSum:
    """The reference operator ``K`` as a Kronecker sum (for checks and small cases)."""
    t, A = problem.time, problem.A_bar
    Minv = sp.diags(1.0 / problem.space.mass_diagonal)
    AMA = (A @ Minv @ A).tocsr()
    return KronSum(((1.0, t.time_stiffness, A), (1.0, t.M_t, AMA @ Minv @ A), (1.0, t.T_t, AMA)))


def residual_norm_solver(problem: SeparableProblem) -> ModalKronSolver:
    t = problem.time
    return ModalKronSolver([t.time_stiffness, t.M_t, t.T_t], [1, 3, 2], problem.M_x, problem.A_bar)


def estimator_sizes(params: ParameterModel) -> tuple:
    """``(Q_s, Q_S)`` for the decomposed residual."""
    qa, qf, qy = params.Q_A, params.Q_f, params.Q_y
    return qa * qy + qa * qf + qf, 1 + qa * qa + qa


def theta_s(params: ParameterModel, mu) -> np.ndarray:
    """Coefficients of the affine residual load parts, in table order."""
    c = params.coefficients
    ta, tf, ty = c.theta_A(mu), c.theta_f(mu), c.theta_y0(mu)
    lead = ta.shape[:-1]
    parts = [
        (ty[..., :, None] * ta[..., None, :]).reshape(lead + (-1,)),  # q = j*Q_A + i
        (tf[..., :, None] * ta[..., None, :]).reshape(lead + (-1,)),
        tf,
    ]
    return np.concatenate(parts, axis=-1)


def theta_S(params: ParameterModel, mu) -> np.ndarray:
    """Coefficients of the affine residual operator parts, in table order."""
    ta = params.coefficients.theta_A(mu)
    lead = ta.shape[:-1]
    pairs = (ta[..., :, None] * ta[..., None, :]).reshape(lead + (-1,))  # j-major: theta_j * theta_i
    return np.concatenate([np.ones(lead + (1,)), pairs, ta], axis=-1)


def index_maps(params: ParameterModel) -> tuple:
    """Labels of every flat index of ``s`` and ``S`` (0-based affine indices)."""
    qa, qf, qy = params.Q_A, params.Q_f, params.Q_y
    s_idx = [("y0", i, j) for j in range(qy) for i in range(qa)]
    s_idx += [("f1", i, j) for j in range(qf) for i in range(qa)]
    s_idx += [("f2", i, None) for i in range(qf)]
    S_idx = [("time_stiffness", None, None)]
    S_idx += [("mass", i, j) for j in range(qa) for i in range(qa)]
    S_idx += [("terminal", i, None) for i in range(qa)]
    return s_idx, S_idx


class AffineResidual:
    """The parts ``s_q`` and ``S_q`` of ``s(mu) = sum theta_s^q s_q`` and ``S(mu) = sum theta_S^q S_q``."""

    def __init__(self, problem: SeparableProblem):
        self.problem = problem
        Minv = sp.diags(1.0 / problem.space.mass_diagonal)
        self.AqMinv = [(A @ Minv).tocsr() for A in problem.A_q]
        self.pair = {}
        for j, Aj in enumerate(problem.A_q):
            for i, AiM in enumerate(self.AqMinv):
                self.pair[i, j] = (AiM @ Aj).tocsr()

    def vectors(self) -> np.ndarray:
        pb, t = self.problem, self.problem.time
        cols = []
        for R in pb.R0x_q:
            for AiM in self.AqMinv:
                cols.append(np.kron(t.R0_t, AiM @ R))
        eye_t = sp.identity(pb.M, format="csr")
        for F1 in pb.F1_q:
            for AiM in self.AqMinv:
                cols.append(kron_apply(eye_t, AiM, F1))
        ZtMinv = (t.Z_t.T @ sp.diags(1.0 / t.psi_integrals)).tocsr()
        eye_x = sp.identity(pb.N, format="csr")
        for F2 in pb.F2_q:
            cols.append(kron_apply(ZtMinv, eye_x, F2))
        if not cols:
            return np.zeros((pb.N * pb.M, 0))
        return np.column_stack(cols)

    def operator_terms(self):
        """Yield ``(A_t, A_x)`` for every ``S_q`` in table order."""
        pb, t = self.problem, self.problem.time
        qa = len(pb.A_q)
        yield t.time_stiffness, pb.M_x
        for j in range(qa):
            for i in range(qa):
                yield t.M_t, self.pair[i, j]
        for Ai in pb.A_q:
            yield t.T_t, Ai

    def operator(self, mu) -> KronSum:
        th = theta_S(self.problem.params, mu)
        return KronSum(tuple((w, At, Ax) for w, (At, Ax) in zip(th, self.operator_terms())))

    def load(self, mu) -> np.ndarray:
        return self.vectors() @ theta_s(self.problem.params, mu)

    def columns(self, B_W: np.ndarray) -> np.ndarray:
        """The matrix ``(s_1, ..., s_Qs, S_1 B_W, ..., S_QS B_W)``."""
        blocks = [self.vectors()]
        if B_W.shape[1]:
            blocks += [kron_apply(At, Ax, B_W) for At, Ax in self.operator_terms()]
        return np.column_stack(blocks) if len(blocks) > 1 else blocks[0]


@dataclass(frozen=True)
class EstimatorOffline:
    """Dense Gram ``G = R^T K^{-1} R`` of the affine residual columns."""

    gram: np.ndarray
    L: int
    Q_s: int
    Q_S: int

    def residual_coefficients(self, params: ParameterModel, mu, u_y: np.ndarray) -> np.ndarray:
        """``r(mu) = (theta_s(mu), -theta_S^1(mu) u_y, ..., -theta_S^QS(mu) u_y)``; batched over rows."""
        ts = theta_s(params, mu)
        tS = theta_S(params, mu)
        u_y = np.asarray(u_y, dtype=float)
        prod = -(tS[..., :, None] * u_y[..., None, :])
        return np.concatenate([ts, prod.reshape(prod.shape[:-2] + (-1,))], axis=-1)


def build_estimator_offline(problem: SeparableProblem, B_W: np.ndarray,
                            max_columns: int = MAX_GRAM_COLUMNS) -> EstimatorOffline:
    Q_s, Q_S = estimator_sizes(problem.params)
    L = B_W.shape[1]
    ncols = Q_s + Q_S * L
    if ncols > max_columns:
        raise EstimatorMemoryError(
            f"estimator Gram needs {ncols} columns ({ncols ** 2 * 8 / 2 ** 20:.0f} MiB), above the "
            f"cap of {max_columns}; reduce the basis size L or the number of affine terms")
    R = AffineResidual(problem).columns(B_W)
    solver = residual_norm_solver(problem)
    G = np.empty((ncols, ncols))
    for start in range(0, ncols, _CHUNK):
        stop = min(start + _CHUNK, ncols)
        G[:, start:stop] = R.T @ solver.solve(R[:, start:stop])
    G = 0.5 * (G + G.T)
    return EstimatorOffline(gram=G, L=L, Q_s=Q_s, Q_S=Q_S)


@dataclass(frozen=True)
class EstimateReport:
    mu: np.ndarray
    eta_abs: float
    eta_rel: float
    certified: bool
    c_c: float
    alpha: float
    eps_abs: float | None = None


def _relative(eta_abs, y_rb_norm):
    eta_abs = np.asarray(eta_abs, dtype=float)
    y_rb_norm = np.asarray(y_rb_norm, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(y_rb_norm > 0.0, 2.0 * eta_abs / y_rb_norm,
                       np.where(eta_abs > 0.0, np.inf, 0.0))
    return rel


def eta_c_values(params: ParameterModel, offline: EstimatorOffline, mus, u_y, y_rb_norm,
                 alpha_scale: float = 1.0) -> tuple:
    """Vectorized ``(eta_c_abs, eta_c_rel)`` for rows of ``mus`` and ``u_y``."""
    r = offline.residual_coefficients(params, mus, u_y)
    quad = np.einsum("...i,...i->...", r @ offline.gram, r)
    cc, _, alpha = min_theta_bounds(params, mus)
    eta_abs = np.sqrt(np.maximum(quad, 0.0)) / (cc * alpha * alpha_scale)
    return eta_abs, _relative(eta_abs, y_rb_norm)


def eta_c(model, offline: EstimatorOffline, mu, u_y, y_rb_norm, alpha_scale: float = 1.0) -> EstimateReport:
    params = model.params
    mu = params.box.check(mu)
    eta_abs, eta_rel = eta_c_values(params, offline, mu, u_y, y_rb_norm, alpha_scale)
    cc, _, alpha = min_theta_bounds(params, mu)
    return EstimateReport(mu=mu, eta_abs=float(eta_abs), eta_rel=float(eta_rel),
                          certified=bool(eta_rel <= 1.0), c_c=float(cc), alpha=float(alpha))


def eta_c_direct(problem: SeparableProblem, mu, y_rb: np.ndarray, solver=None) -> float:
    """``eta_c_abs`` from the assembled scaled residual (no Gram); used for checking."""
    aff = AffineResidual(problem)
    rhat = aff.load(mu) - aff.operator(mu) @ y_rb
    solver = solver or residual_norm_solver(problem)
    cc, _, alpha = min_theta_bounds(problem.params, mu)
    return float(np.sqrt(max(rhat @ solver.solve(rhat), 0.0)) / (cc * alpha))


def eta_star(problem: SeparableProblem, mu, y_rb: np.ndarray, y_rb_norm: float,
             tol: float = DEFAULT_TOL, alpha_scale: float = 1.0) -> EstimateReport:
    mu = problem.box.check(mu)
    rnorm = residual_riesz_norm(problem, mu, y_rb, tol)
    cc, _, alpha = min_theta_bounds(problem.params, mu)
    eta_abs = rnorm / (alpha * alpha_scale)
    eta_rel = float(_relative(eta_abs, y_rb_norm))
    return EstimateReport(mu=mu, eta_abs=float(eta_abs), eta_rel=eta_rel,
                          certified=bool(eta_rel <= 1.0), c_c=float(cc), alpha=float(alpha))


def true_error(problem: SeparableProblem, snapshot, y_rb: np.ndarray, y_rb_lift: np.ndarray) -> tuple:
    """``(eps_abs, eps_rel)`` of a reconstructed reduced solution against a snapshot."""
    d, dl = snapshot.y - y_rb, snapshot.y_lift - y_rb_lift
    eps = float(np.sqrt(max(w_inner(problem, d, dl, d, dl), 0.0)))
    ref = float(np.sqrt(max(w_inner(problem, snapshot.y, snapshot.y_lift, snapshot.y, snapshot.y_lift), 0.0)))
    if ref == 0.0:
        return eps, (np.inf if eps > 0.0 else 0.0)
    return eps, eps / ref
