"""Parameter-separable parabolic problems and the thermal block benchmark."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .kron_ops import KronDiagSolver, ModalKronSolver
from .space_fem import SpaceMatrices, assemble_space_matrices, build_thermal_block_mesh
from .time_disc import TimeMatrices, assemble_time_matrices, build_time_grid


class ParameterError(ValueError):
    """A parameter lies outside the admissible box or has the wrong length."""


@dataclass(frozen=True)
class ParameterBox:
    """Admissible set ``prod_i [lower_i, upper_i]``.

    ``log_scale`` flags components that are sampled (and midpointed)
    geometrically.
    """

    lower: tuple
    upper: tuple
    log_scale: tuple = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise ValueError("parameter box bounds are inconsistent")
        logs = tuple(bool(v) for v in self.log_scale) or (False,) * len(lo)
        if len(logs) != len(lo):
            raise ValueError("log_scale must have one flag per component")
        if any(flag and a <= 0.0 for flag, a in zip(logs, lo)):
            raise ValueError("log-scaled components need positive bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "log_scale", logs)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, mu, rtol: float = 1e-12) -> bool:
        mu = np.asarray(mu, dtype=float)
        if mu.shape[-1] != self.dim:
            return False
        lo, hi = np.array(self.lower), np.array(self.upper)
        slack = rtol * np.maximum(np.abs(lo), np.abs(hi))
        return bool(np.all((mu >= lo - slack) & (mu <= hi + slack)))

    def check(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if mu.shape[-1:] != (self.dim,):
            raise ParameterError(f"expected {self.dim} parameter components, got shape {mu.shape}")
        if not self.contains(mu):
            raise ParameterError(f"parameter {mu.tolist()} outside {list(zip(self.lower, self.upper))}")
        return mu

    def midpoint(self) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        geo = np.sqrt(np.where(self.log_scale, lo * hi, 1.0))
        return np.where(self.log_scale, geo, 0.5 * (lo + hi))


@dataclass(frozen=True)
class AffineCoefficients:
    """Coefficient functions that are single parameter components or constant one.

    Each entry of ``A``, ``f`` and ``y0`` is a component index into the
    parameter vector, or ``None`` for the constant function 1.  Keeping
    the coefficients in this form makes them serializable, so an online
    process can evaluate them without the high-fidelity problem.
    """

    A: tuple
    f: tuple = ()
    y0: tuple = ()

    @staticmethod
    def _eval(spec, mu):
        mu = np.asarray(mu, dtype=float)
        cols = [np.ones(mu.shape[:-1]) if i is None else mu[..., i] for i in spec]
        if not cols:
            return np.zeros(mu.shape[:-1] + (0,))
        return np.stack(cols, axis=-1)

    def theta_A(self, mu):
        return self._eval(self.A, mu)

    def theta_f(self, mu):
        return self._eval(self.f, mu)

    def theta_y0(self, mu):
        return self._eval(self.y0, mu)

    def to_dict(self) -> dict:
        return {"A": list(self.A), "f": list(self.f), "y0": list(self.y0)}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineCoefficients":
        return cls(A=tuple(d["A"]), f=tuple(d.get("f", ())), y0=tuple(d.get("y0", ())))


@dataclass(frozen=True)
class ParameterModel:
    """Everything the online phase needs to know about the parameters."""

    box: ParameterBox
    coefficients: AffineCoefficients
    reference: np.ndarray

    @property
    def Q_A(self) -> int:
        return len(self.coefficients.A)

    @property
    def Q_f(self) -> int:
        return len(self.coefficients.f)

    @property
    def Q_y(self) -> int:
        return len(self.coefficients.y0)

    def theta_ratios(self, mu) -> np.ndarray:
        ref = self.coefficients.theta_A(self.reference)
        th = self.coefficients.theta_A(mu)
        if np.any(th <= 0.0):
            raise ParameterError("diffusion coefficients must be positive")
        return th / ref

    def to_dict(self) -> dict:
        return {
            "lower": list(self.box.lower),
            "upper": list(self.box.upper),
            "log_scale": list(self.box.log_scale),
            "reference": np.asarray(self.reference).tolist(),
            "coefficients": self.coefficients.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterModel":
        return cls(
            box=ParameterBox(d["lower"], d["upper"], d.get("log_scale", ())),
            coefficients=AffineCoefficients.from_dict(d["coefficients"]),
            reference=np.asarray(d["reference"], dtype=float),
        )


@dataclass(frozen=True)
class ThetaBounds:
    """Range of ``theta_A^q(mu) / theta_A^q(mu_ref)`` over the parameter box."""

    lower: np.ndarray
    upper: np.ndarray


def theta_bounds(params: ParameterModel) -> ThetaBounds:
    lo, hi = [], []
    ref = params.coefficients.theta_A(params.reference)
    for q, idx in enumerate(params.coefficients.A):
        if idx is None:
            lo.append(1.0 / ref[q])
            hi.append(1.0 / ref[q])
        else:
            lo.append(params.box.lower[idx] / ref[q])
            hi.append(params.box.upper[idx] / ref[q])
    out = ThetaBounds(np.array(lo), np.array(hi))
    if np.any(out.lower <= 0.0):
        raise ParameterError("diffusion coefficients are not positive on the whole box")
    return out


def min_theta_bounds(params, mu) -> tuple:
    """Min-theta coercivity/continuity bounds in the reference energy norm.

    Returns ``(c_c_LB, c_s_UB, alpha_LB)``; broadcasts over leading axes
    of ``mu``.  Accepts a :class:`ParameterModel` or a problem.
    """
    params = getattr(params, "params", params)
    ratios = params.theta_ratios(mu)
    cc = ratios.min(axis=-1)
    cs = ratios.max(axis=-1)
    return cc, cs, np.minimum(cc, 1.0 / cs)


@dataclass(frozen=True)
class OperatorEval:
    A_x: sp.csr_matrix
    F1: np.ndarray
    F2: np.ndarray
    R0_x: np.ndarray


@dataclass(frozen=True)
class SeparableProblem:
    """Affine parts of ``A(mu)``, ``f(mu)`` and ``y_0(mu)`` on a space-time grid.

    ``F1_q`` (length ``N*M``) and ``F2_q`` (length ``N*P``) are the
    load vectors tested with hat functions and indicators in time,
    ``R0x_q`` the H-projections of the initial data parts.
    """

    params: ParameterModel
    space: SpaceMatrices
    time: TimeMatrices
    A_q: tuple
    F1_q: tuple = ()
    F2_q: tuple = ()
    R0x_q: tuple = ()
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.A_q) != self.params.Q_A:
            raise ValueError("number of stiffness parts does not match theta_A")
        if len(self.F1_q) != self.params.Q_f or len(self.F2_q) != self.params.Q_f:
            raise ValueError("number of load parts does not match theta_f")
        if len(self.R0x_q) != self.params.Q_y:
            raise ValueError("number of initial-value parts does not match theta_y0")

    @property
    def N(self) -> int:
        return self.space.N

    @property
    def M(self) -> int:
        return self.time.grid.num_nodes

    @property
    def P(self) -> int:
        return self.time.grid.num_elements

    @property
    def M_x(self) -> sp.csr_matrix:
        return self.space.M_x

    @property
    def box(self) -> ParameterBox:
        return self.params.box

    @property
    def mu_bar(self) -> np.ndarray:
        return self.params.reference

    def stiffness(self, mu) -> sp.csr_matrix:
        theta = self.params.coefficients.theta_A(mu)
        A = sum(t * Aq for t, Aq in zip(theta, self.A_q))
        return sp.csr_matrix(A)

    @cached_property
    def A_bar(self) -> sp.csr_matrix:
        return self.stiffness(self.mu_bar)

    @cached_property
    def lift_solver(self) -> KronDiagSolver:
        """Inverse of ``M_psi kron A_x(mu_ref)`` (one factorization of ``A_x(mu_ref)``)."""
        return KronDiagSolver(self.time.psi_integrals, self.A_bar)

    @cached_property
    def gram_solver(self) -> ModalKronSolver:
        """Exact inverse of the W_d Gram ``T_t kron M_x + M_t kron A + L_t kron M_x A^{-1} M_x`` at mu_ref."""
        t = self.time
        return ModalKronSolver([t.T_t, t.M_t, t.time_stiffness], [0, 1, -1], self.M_x, self.A_bar)


def evaluate_operator(problem: SeparableProblem, mu) -> OperatorEval:
    mu = problem.box.check(mu)
    c = problem.params.coefficients
    th_f = c.theta_f(mu)
    th_y = c.theta_y0(mu)
    F1 = np.zeros(problem.N * problem.M)
    F2 = np.zeros(problem.N * problem.P)
    for t, a, b in zip(th_f, problem.F1_q, problem.F2_q):
        F1 += t * a
        F2 += t * b
    R0 = np.zeros(problem.N)
    for t, r in zip(th_y, problem.R0x_q):
        R0 += t * r
    return OperatorEval(A_x=problem.stiffness(mu), F1=F1, F2=F2, R0_x=R0)


THERMAL_BLOCK_BOX = ParameterBox(
    lower=(0.1,) * 8 + (-1.0,),
    upper=(10.0,) * 8 + (1.0,),
    log_scale=(True,) * 8 + (False,),
)


def make_thermal_block(vertices_per_side: int = 13, time_elements: int = 30, T: float = 3.0,
                       box: ParameterBox | None = None, reference=None) -> SeparableProblem:
    """Thermal block: eight parametrized diffusivities, one fixed block, Neumann flux on the bottom.

    ``mu[:8]`` are the diffusivities of blocks 1..8, ``mu[8]`` scales the
    constant-in-time boundary flux on the bottom edge; ``y_0 = 0``.
    """
    mesh = build_thermal_block_mesh(vertices_per_side)
    space = assemble_space_matrices(mesh)
    tm = assemble_time_matrices(build_time_grid(T, time_elements))
    g = space.boundary_loads["bottom"]
    params = ParameterModel(
        box=box or THERMAL_BLOCK_BOX,
        coefficients=AffineCoefficients(A=tuple(range(8)) + (None,), f=(8,), y0=()),
        reference=np.ones(9) if reference is None else np.asarray(reference, float),
    )
    params.box.check(params.reference)
    return SeparableProblem(
        params=params,
        space=space,
        time=tm,
        A_q=space.A_q,
        F1_q=(np.kron(tm.chi_integrals, g),),
        F2_q=(np.kron(tm.psi_integrals, g),),
        R0x_q=(),
        config={
            "kind": "thermal_block",
            "vertices_per_side": int(vertices_per_side),
            "time_elements": int(time_elements),
            "final_time": float(T),
        },
    )


def problem_from_config(cfg: dict) -> SeparableProblem:
    """Build a problem from the ``[problem]`` / ``[parameters]`` config tables."""
    prob = cfg.get("problem", cfg)
    kind = prob.get("kind", "thermal_block")
    if kind != "thermal_block":
        raise ValueError(f"unknown problem kind {kind!r}")
    pars = cfg.get("parameters", {})
    box = None
    if "lower" in pars or "upper" in pars:
        box = ParameterBox(
            pars.get("lower", THERMAL_BLOCK_BOX.lower),
            pars.get("upper", THERMAL_BLOCK_BOX.upper),
            pars.get("log_scale", THERMAL_BLOCK_BOX.log_scale),
        )
    return make_thermal_block(
        vertices_per_side=int(prob.get("vertices_per_side", 13)),
        time_elements=int(prob.get("time_elements", 30)),
        T=float(prob.get("final_time", 3.0)),
        box=box,
        reference=pars.get("reference"),
    )
