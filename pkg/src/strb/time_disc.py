"""One-dimensional temporal finite elements.

The trial space in time is spanned by continuous piecewise linear hat
functions ``chi_m`` (one per node), the test space for the multiplier by
piecewise constant indicators ``psi_p`` (one per element).  All integrals
are evaluated in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class TimeGrid:
    """Partition ``0 = t_0 < t_1 < ... < t_{M-1} = T`` of the time interval."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("time grid must start at t = 0")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("time grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def final_time(self) -> float:
        return float(self.nodes[-1])

    @property
    def num_nodes(self) -> int:
        """Number of CG1 basis functions (``M``)."""
        return self.nodes.size

    @property
    def num_elements(self) -> int:
        """Number of DG0 basis functions (``P``)."""
        return self.nodes.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)


def build_time_grid(T: float, num_elements: int) -> TimeGrid:
    """Uniform grid on ``[0, T]`` with ``num_elements`` intervals."""
    if not T > 0.0:
        raise ValueError(f"final time must be positive, got {T!r}")
    if int(num_elements) != num_elements or num_elements < 1:
        raise ValueError(f"need at least one time element, got {num_elements!r}")
    nodes = np.linspace(0.0, float(T), int(num_elements) + 1)
    nodes[-1] = float(T)
    return TimeGrid(nodes)


@dataclass(frozen=True)
class TimeMatrices:
    """Temporal matrices of the space-time discretization.

    Attributes
    ----------
    T_t : (M, M) terminal evaluation ``chi_j(T) chi_i(T)``
    M_t : (M, M) CG1 mass matrix
    M_psi : (P, P) DG0 mass matrix (diagonal)
    Z_t : (P, M) coupling ``int (chi_j)_t psi_i``
    R0_t : (M,) initial evaluation ``chi_m(0)``
    chi_integrals : (M,) ``int chi_m``
    psi_integrals : (P,) ``int psi_p``
    """

    grid: TimeGrid
    T_t: sp.csr_matrix
    M_t: sp.csr_matrix
    M_psi: sp.csr_matrix
    Z_t: sp.csr_matrix
    R0_t: np.ndarray
    chi_integrals: np.ndarray
    psi_integrals: np.ndarray

    @property
    def time_stiffness(self) -> sp.csr_matrix:
        """``Z_t^T (M_psi)^{-1} Z_t``, the CG1 stiffness matrix in time."""
        inv = sp.diags(1.0 / self.M_psi.diagonal())
        return (self.Z_t.T @ inv @ self.Z_t).tocsr()


def assemble_time_matrices(grid: TimeGrid) -> TimeMatrices:
    M = grid.num_nodes
    P = grid.num_elements
    k = grid.widths

    diag = np.zeros(M)
    diag[:-1] += k / 3.0
    diag[1:] += k / 3.0
    off = k / 6.0
    M_t = sp.diags([off, diag, off], [-1, 0, 1], shape=(M, M), format="csr")

    M_psi = sp.diags(k, 0, shape=(P, P), format="csr")

    rows = np.repeat(np.arange(P), 2)
    cols = np.column_stack([np.arange(P), np.arange(1, P + 1)]).ravel()
    vals = np.tile([-1.0, 1.0], P)
    Z_t = sp.csr_matrix((vals, (rows, cols)), shape=(P, M))

    T_t = sp.csr_matrix(([1.0], ([M - 1], [M - 1])), shape=(M, M))

    R0_t = np.zeros(M)
    R0_t[0] = 1.0

    chi = np.zeros(M)
    chi[:-1] += k / 2.0
    chi[1:] += k / 2.0

    return TimeMatrices(
        grid=grid,
        T_t=T_t,
        M_t=M_t,
        M_psi=M_psi,
        Z_t=Z_t,
        R0_t=R0_t,
        chi_integrals=chi,
        psi_integrals=k.copy(),
    )
