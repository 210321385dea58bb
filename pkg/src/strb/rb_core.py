"""Reduced spaces, projected affine operators and the online solve.

The reduced trial space for ``y`` is spanned by the columns of ``B_W``
and the one for the multiplier by ``B_Q``, the reference lifts of the
same columns.  The reduced saddle system has size ``2L`` and assembles
from ``Q_A + 1`` projected operator parts and ``Q_y + Q_f`` load parts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .estimators import EstimatorOffline, build_estimator_offline
from .hifi import coupling, lift
from .kron_ops import kron_apply
from .problem import ParameterModel, SeparableProblem
from .storage import StorageError, read_arrays, write_arrays
from .wspace import gram_direct, gram_lift

log = logging.getLogger(__name__)


class ReducedSolveError(np.linalg.LinAlgError):
    """The reduced saddle matrix is singular (a degenerate basis)."""


@dataclass(frozen=True)
class ReducedBasis:
    """``B_W`` (``N*M x L``) and its lift ``B_Q`` (``N*P x L``)."""

    B_W: np.ndarray
    B_Q: np.ndarray

    def __post_init__(self):
        if self.B_W.ndim != 2 or self.B_Q.ndim != 2 or self.B_W.shape[1] != self.B_Q.shape[1]:
            raise ValueError("B_W and B_Q must be matrices with the same number of columns")

    @property
    def L(self) -> int:
        return self.B_W.shape[1]

    @classmethod
    def from_pod(cls, pod_result) -> "ReducedBasis":
        return cls(pod_result.basis, pod_result.basis_lift)

    @classmethod
    def from_columns(cls, problem: SeparableProblem, B_W: np.ndarray) -> "ReducedBasis":
        B_W = np.atleast_2d(np.asarray(B_W, dtype=float).T).T
        return cls(B_W, lift(problem, B_W))


def lift_defect(problem: SeparableProblem, basis: ReducedBasis) -> float:
    """Relative defect of ``(M_psi kron A_ref) B_Q = (Z_t kron M_x) B_W``."""
    lhs = gram_lift(problem) @ basis.B_Q
    rhs = coupling(problem) @ basis.B_W
    scale = np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs) / scale) if scale else float(np.linalg.norm(lhs))


def reduced_gram(problem: SeparableProblem, basis: ReducedBasis) -> np.ndarray:
    G = basis.B_W.T @ (gram_direct(problem) @ basis.B_W) + basis.B_Q.T @ (gram_lift(problem) @ basis.B_Q)
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class ReducedModel:
    """Offline data of the reduced saddle system.

    ``S_parts[q]`` are the projected operator parts (``Q_A`` parametrized
    ones followed by the constant one), ``s_parts[q]`` the projected load
    parts (initial-value parts followed by source parts).  The basis is
    kept for reconstruction but never touched by :func:`solve_online`.
    """

    params: ParameterModel
    S_parts: np.ndarray
    s_parts: np.ndarray
    G_rb: np.ndarray
    basis: ReducedBasis | None = None
    estimator: EstimatorOffline | None = None
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.G_rb.shape[0]

    @property
    def Q_S(self) -> int:
        return self.S_parts.shape[0]

    @property
    def Q_s(self) -> int:
        return self.s_parts.shape[0]

    def theta_S(self, mu) -> np.ndarray:
        ta = self.params.coefficients.theta_A(mu)
        return np.concatenate([ta, np.ones(ta.shape[:-1] + (1,))], axis=-1)

    def theta_s(self, mu) -> np.ndarray:
        c = self.params.coefficients
        return np.concatenate([c.theta_y0(mu), c.theta_f(mu)], axis=-1)

    def assemble(self, mu) -> tuple:
        """``(S_rb(mu), s_rb(mu))``; batched over leading axes of ``mu``."""
        S = np.einsum("...q,qij->...ij", self.theta_S(mu), self.S_parts)
        s = np.einsum("...q,qi->...i", self.theta_s(mu), self.s_parts)
        return S, s


def build_reduced_model(problem: SeparableProblem, basis: ReducedBasis,
                        with_estimator: bool = True, meta: dict | None = None) -> ReducedModel:
    t = problem.time
    BW, BQ = basis.B_W, basis.B_Q
    L = basis.L
    parts = []
    for Aq in problem.A_q:
        S = np.zeros((2 * L, 2 * L))
        S[:L, :L] = BW.T @ kron_apply(t.M_t, Aq, BW)
        S[L:, L:] = -(BQ.T @ kron_apply(t.M_psi, Aq, BQ))
        parts.append(S)
    S = np.zeros((2 * L, 2 * L))
    S[:L, :L] = BW.T @ kron_apply(t.T_t, problem.M_x, BW)
    Bc = BQ.T @ kron_apply(t.Z_t, problem.M_x, BW)
    S[L:, :L] = Bc
    S[:L, L:] = Bc.T
    parts.append(S)
    S_parts = np.array([0.5 * (P + P.T) for P in parts])

    loads = []
    for R in problem.R0x_q:
        loads.append(np.concatenate([BW.T @ np.kron(t.R0_t, R), np.zeros(L)]))
    for F1, F2 in zip(problem.F1_q, problem.F2_q):
        loads.append(np.concatenate([BW.T @ F1, BQ.T @ F2]))
    s_parts = np.array(loads).reshape(len(loads), 2 * L)

    est = build_estimator_offline(problem, BW) if with_estimator else None
    return ReducedModel(params=problem.params, S_parts=S_parts, s_parts=s_parts,
                        G_rb=reduced_gram(problem, basis), basis=basis, estimator=est,
                        meta=dict(meta or {}))


@dataclass(frozen=True)
class OnlineSolution:
    mu: np.ndarray
    u_y: np.ndarray
    u_p: np.ndarray
    y_rb_norm: float


def _norm_rb(G, u_y):
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", u_y, G, u_y), 0.0))


def solve_online(model: ReducedModel, mu) -> OnlineSolution:
    mu = model.params.box.check(mu)
    S, s = model.assemble(mu)
    try:
        u = la.solve(S, s, assume_a="sym", check_finite=True)
    except la.LinAlgError as exc:
        raise ReducedSolveError(f"reduced system singular at mu={mu.tolist()}; basis degenerate") from exc
    L = model.L
    return OnlineSolution(mu=mu, u_y=u[:L], u_p=u[L:], y_rb_norm=float(_norm_rb(model.G_rb, u[:L])))


def solve_online_batch(model: ReducedModel, mus) -> tuple:
    """Vectorized online solves; returns ``(U_y, U_p, y_rb_norms)`` with one row per parameter."""
    mus = np.atleast_2d(model.params.box.check(mus))
    S, s = model.assemble(mus)
    try:
        u = np.linalg.solve(S, s[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ReducedSolveError("reduced system singular for some parameter; basis degenerate") from exc
    L = model.L
    return u[:, :L], u[:, L:], _norm_rb(model.G_rb, u[:, :L])


def reconstruct(basis: ReducedBasis, u_y, u_p) -> tuple:
    """``(y_rb, p_rb, y_rb_lift)`` in high-fidelity coefficients."""
    u_y, u_p = np.asarray(u_y, dtype=float), np.asarray(u_p, dtype=float)
    if u_y.shape[-1] != basis.L or u_p.shape[-1] != basis.L:
        raise ValueError(f"expected {basis.L} reduced coefficients")
    return basis.B_W @ u_y, basis.B_Q @ u_p, basis.B_Q @ u_y


def save_model(path, model: ReducedModel, include_basis: bool = True) -> None:
    arrays = {"S_parts": model.S_parts, "s_parts": model.s_parts, "G_rb": model.G_rb}
    if include_basis and model.basis is not None:
        arrays["B_W"] = model.basis.B_W
        arrays["B_Q"] = model.basis.B_Q
    est_meta = None
    if model.estimator is not None:
        arrays["estimator_gram"] = model.estimator.gram
        est_meta = {"L": model.estimator.L, "Q_s": model.estimator.Q_s, "Q_S": model.estimator.Q_S}
    meta = {"kind": "reduced_model", "params": model.params.to_dict(), "estimator": est_meta,
            "L": model.L, **model.meta}
    write_arrays(path, meta, arrays)


def load_model(path) -> ReducedModel:
    meta, arrays = read_arrays(path)
    if meta.get("kind") != "reduced_model":
        raise StorageError(f"{path}: not a reduced model archive")
    try:
        basis = ReducedBasis(arrays["B_W"], arrays["B_Q"]) if "B_W" in arrays else None
        est = None
        if meta.get("estimator"):
            e = meta["estimator"]
            est = EstimatorOffline(gram=arrays["estimator_gram"], L=int(e["L"]),
                                   Q_s=int(e["Q_s"]), Q_S=int(e["Q_S"]))
        extra = {k: v for k, v in meta.items() if k not in ("kind", "params", "estimator", "L")}
        return ReducedModel(params=ParameterModel.from_dict(meta["params"]),
                            S_parts=arrays["S_parts"], s_parts=arrays["s_parts"],
                            G_rb=arrays["G_rb"], basis=basis, estimator=est, meta=extra)
    except KeyError as exc:
        raise StorageError(f"{path}: missing entry {exc}") from exc
