"""Parameter sampling, validation runs and their CSV reports."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import eta_c_values, eta_star, true_error
from .hifi import solve_hifi
from .kron_ops import DEFAULT_TOL
from .problem import ParameterBox
from .rb_core import ReducedModel, reconstruct, solve_online_batch

log = logging.getLogger(__name__)

VALIDATION_SCHEMA = "# schema strb-validation v1"
DECAY_SCHEMA = "# schema strb-decay v1"


@dataclass(frozen=True)
class SamplingSpec:
    lower: tuple
    upper: tuple
    log_scale: tuple
    count: int
    seed: int = 0

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.log_scale)):
            raise ValueError("sampling bounds and scales must have equal length")
        if self.count < 0:
            raise ValueError("sample count must be nonnegative")
        for a, b, lg in zip(self.lower, self.upper, self.log_scale):
            if a > b:
                raise ValueError(f"invalid bounds [{a}, {b}]")
            if lg and a <= 0.0:
                raise ValueError(f"log-uniform sampling needs positive bounds, got [{a}, {b}]")

    @classmethod
    def from_box(cls, box: ParameterBox, count: int, seed: int = 0) -> "SamplingSpec":
        return cls(box.lower, box.upper, box.log_scale, count, seed)


def sample_parameters(spec: SamplingSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """``count x d`` samples; log-scaled components are ``exp(uniform(log a, log b))``."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    lo, hi = np.array(spec.lower, dtype=float), np.array(spec.upper, dtype=float)
    logs = np.array(spec.log_scale, dtype=bool)
    a = np.where(logs, np.log(np.where(logs, lo, 1.0)), lo)
    b = np.where(logs, np.log(np.where(logs, hi, 1.0)), hi)
    u = rng.uniform(a, b, size=(spec.count, len(lo)))
    return np.clip(np.where(logs, np.exp(u), u), lo, hi)


def training_and_validation(box: ParameterBox, n_train: int, n_val: int, seed: int) -> tuple:
    """Independent training and validation sets from one seed."""
    s_train, s_val = np.random.SeedSequence(seed).spawn(2)
    train = sample_parameters(SamplingSpec.from_box(box, n_train), np.random.default_rng(s_train))
    val = sample_parameters(SamplingSpec.from_box(box, n_val), np.random.default_rng(s_val))
    return train, val


@dataclass(frozen=True)
class ValidationRow:
    mu: np.ndarray
    eps_abs: float
    eps_rel: float
    eta_star_abs: float
    eta_star_rel: float
    eta_c_abs: float
    eta_c_rel: float
    certified_star: bool
    certified_c: bool

    @property
    def eff_star(self) -> float:
        return _eff(self.eta_star_abs, self.eps_abs)

    @property
    def eff_c(self) -> float:
        return _eff(self.eta_c_abs, self.eps_abs)


def _eff(eta, eps):
    if eps > 0.0:
        return eta / eps
    return np.inf if eta > 0.0 else 1.0


@dataclass
class ValidationReport:
    L: int
    rows: list
    timings: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def aggregates(self) -> dict:
        out = {}
        for name in ("eps_abs", "eps_rel", "eta_star_abs", "eta_c_abs", "eff_star", "eff_c"):
            v = self.column(name)
            out[name] = {"mean": float(v.mean()), "median": float(np.median(v)), "max": float(v.max())}
        return out

    def violations(self, slack: float = 1e-8) -> list:
        """Rows breaking ``eps <= eta_star <= eta_c`` by more than ``slack`` (relative)."""
        bad = []
        for k, r in enumerate(self.rows):
            if r.eps_abs > r.eta_star_abs * (1 + slack) or r.eta_star_abs > r.eta_c_abs * (1 + slack):
                bad.append(k)
            elif r.certified_star and r.eps_rel > r.eta_star_rel * (1 + slack):
                bad.append(k)
            elif r.certified_c and r.eps_rel > r.eta_c_rel * (1 + slack):
                bad.append(k)
        return bad


def hifi_reference(problem, mus, tol: float = DEFAULT_TOL) -> tuple:
    """High-fidelity solutions for ``mus`` and the mean wall time per solve."""
    t0 = time.perf_counter()
    snaps = [solve_hifi(problem, mu, tol) for mu in mus]
    return snaps, (time.perf_counter() - t0) / max(len(snaps), 1)


def run_validation(problem, model: ReducedModel, mus, snapshots=None, tol: float = DEFAULT_TOL,
                   alpha_scale: float = 1.0) -> ValidationReport:
    """True errors and both estimators on ``mus``.

    ``snapshots`` may hold precomputed solutions for ``mus`` (reused
    across basis sizes); ``alpha_scale`` multiplies the coercivity bound
    and exists only for fault injection.
    """
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    timings = {}
    if snapshots is None:
        snapshots, timings["hifi_per_solve"] = hifi_reference(problem, mus, tol)
    t0 = time.perf_counter()
    Uy, Up, norms = solve_online_batch(model, mus)
    eta_c_abs, eta_c_rel = eta_c_values(model.params, model.estimator, mus, Uy, norms, alpha_scale)
    timings["online_total"] = time.perf_counter() - t0
    rows = []
    t0 = time.perf_counter()
    for k, (mu, snap) in enumerate(zip(mus, snapshots)):
        y, _, y_lift = reconstruct(model.basis, Uy[k], Up[k])
        eps_abs, eps_rel = true_error(problem, snap, y, y_lift)
        st = eta_star(problem, mu, y, norms[k], tol, alpha_scale)
        rows.append(ValidationRow(
            mu=mu, eps_abs=eps_abs, eps_rel=eps_rel,
            eta_star_abs=st.eta_abs, eta_star_rel=st.eta_rel,
            eta_c_abs=float(eta_c_abs[k]), eta_c_rel=float(eta_c_rel[k]),
            certified_star=st.certified, certified_c=bool(eta_c_rel[k] <= 1.0),
        ))
    timings["eta_star_total"] = time.perf_counter() - t0
    return ValidationReport(L=model.L, rows=rows, timings=timings)


def _write(path, schema: str, header: list, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(schema + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_csv(path) -> tuple:
    """``(schema line, header, rows as lists of str)`` of a report written here."""
    with open(path, newline="") as fh:
        schema = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        header = next(reader)
        return schema, header, list(reader)


def write_validation_csv(path, report: ValidationReport) -> None:
    d = len(report.rows[0].mu) if report.rows else 0
    header = [f"mu_{i + 1}" for i in range(d)] + [
        "L", "eps_abs", "eps_rel", "eta_star_abs", "eta_star_rel", "eta_c_abs", "eta_c_rel",
        "eff_star", "eff_c", "certified_star_rel", "certified_c_rel"]
    rows = []
    for r in report.rows:
        rows.append([repr(float(x)) for x in r.mu] + [
            report.L, repr(r.eps_abs), repr(r.eps_rel), repr(r.eta_star_abs), repr(r.eta_star_rel),
            repr(r.eta_c_abs), repr(r.eta_c_rel), repr(float(r.eff_star)), repr(float(r.eff_c)),
            int(r.certified_star), int(r.certified_c)])
    _write(path, VALIDATION_SCHEMA, header, rows)


def decay_rows(reports) -> list:
    """One summary row per basis size, sorted by ``L``."""
    out = []
    for rep in sorted(reports, key=lambda r: r.L):
        eps = rep.column("eps_abs")
        out.append({
            "L": rep.L,
            "mean_eps_abs": float(eps.mean()), "max_eps_abs": float(eps.max()),
            "mean_eta_star_abs": float(rep.column("eta_star_abs").mean()),
            "mean_eta_c_abs": float(rep.column("eta_c_abs").mean()),
            "mean_eff_star": float(rep.column("eff_star").mean()),
            "mean_eff_c": float(rep.column("eff_c").mean()),
        })
    Ls = [r["L"] for r in out]
    if len(set(Ls)) != len(Ls):
        raise ValueError("decay reports must have distinct basis sizes")
    return out


def write_decay_csv(path, rows: list) -> None:
    header = ["L", "mean_eps_abs", "max_eps_abs", "mean_eta_star_abs", "mean_eta_c_abs",
              "mean_eff_star", "mean_eff_c"]
    _write(path, DECAY_SCHEMA, header, [[r[h] if h == "L" else repr(r[h]) for h in header] for r in rows])
