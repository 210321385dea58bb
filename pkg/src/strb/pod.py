"""Space-time POD in the W_d inner product (method of snapshots)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .wspace import w_inner

RANK_TOL = 1e-12


@dataclass(frozen=True)
class PodResult:
    """W_d-orthonormal modes with their lifts and the correlation spectrum.

    ``eigenvalues`` lists the whole spectrum of ``K_ij = (s_i, s_j)/l``,
    nonincreasing and clamped at zero; only the first ``L`` modes are kept.
    """

    basis: np.ndarray
    basis_lift: np.ndarray
    eigenvalues: np.ndarray

    @property
    def L(self) -> int:
        return self.basis.shape[1]


def snapshot_matrices(snapshots) -> tuple:
    Y = np.column_stack([s.y for s in snapshots])
    Yl = np.column_stack([s.y_lift for s in snapshots])
    return Y, Yl


def pod(problem, snapshots, L: int, rank_tol: float = RANK_TOL) -> PodResult:
    """Leading ``L`` POD modes of ``snapshots`` (a list of Snapshot or a ``(Y, Y_lift)`` pair).

    Modes with eigenvalue at or below ``rank_tol * lambda_1`` are dropped
    even when ``L`` asks for them.
    """
    Y, Yl = snapshots if isinstance(snapshots, tuple) else snapshot_matrices(snapshots)
    n = Y.shape[1] if Y.ndim == 2 else 0
    if n == 0:
        raise ValueError("POD needs at least one snapshot")
    if L < 1:
        raise ValueError("POD needs L >= 1")
    if L > n:
        raise ValueError(f"cannot retain {L} modes from {n} snapshots")
    K = w_inner(problem, Y, Yl, Y, Yl) / n
    K = 0.5 * (K + K.T)
    lam, V = la.eigh(K)
    lam, V = lam[::-1], V[:, ::-1]
    if lam[0] <= 0.0:
        raise ValueError("all snapshots are zero")
    if lam[-1] < -1e-12 * lam[0]:
        raise ValueError(f"correlation matrix not PSD (lambda_min = {lam[-1]:.3e})")
    lam = np.maximum(lam, 0.0)
    keep = min(L, int(np.sum(lam > rank_tol * lam[0])))
    coeff = V[:, :keep] / np.sqrt(n * lam[:keep])
    return PodResult(basis=Y @ coeff, basis_lift=Yl @ coeff, eigenvalues=lam)
