"""POD-greedy training: estimator-steered snapshot selection with POD recompression."""

from __future__ import annotations

import hashlib
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import eta_c_values, eta_star
from .hifi import load_snapshots, save_snapshots, solve_hifi
from .kron_ops import DEFAULT_TOL
from .pod import pod
from .rb_core import ReducedBasis, ReducedModel, build_reduced_model, reconstruct, save_model, solve_online_batch
from .storage import StorageError

log = logging.getLogger(__name__)

ESTIMATORS = ("eta_c_abs", "eta_c_rel", "eta_star_abs", "eta_star_rel")
STATE_FILE = "greedy_state.strb"
MODEL_FILE = "model.strb"
_EXPENSIVE_TRAIN_SIZE = 100


@dataclass(frozen=True)
class GreedyConfig:
    train: np.ndarray
    tol: float = 1e-3
    L1: int = 1
    L2: int = 2
    max_rounds: int = 19
    estimator: str = "eta_c_abs"
    certify_estimator: str = "eta_star_abs"
    mu_start: np.ndarray | None = None
    hifi_tol: float = DEFAULT_TOL

    def __post_init__(self):
        train = np.atleast_2d(np.asarray(self.train, dtype=float))
        object.__setattr__(self, "train", train)
        if train.shape[0] == 0:
            raise ValueError("training set is empty")
        if self.L1 < 1 or self.L2 < 1:
            raise ValueError("L1 and L2 must be at least 1")
        if not self.tol > 0.0:
            raise ValueError("stopping tolerance must be positive")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be nonnegative")
        for name in (self.estimator, self.certify_estimator):
            if name not in ESTIMATORS:
                raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
        if self.estimator.startswith("eta_star") and train.shape[0] > _EXPENSIVE_TRAIN_SIZE:
            warnings.warn(f"selecting with {self.estimator} costs one high-fidelity residual per "
                          f"training parameter ({train.shape[0]} per round)", RuntimeWarning, stacklevel=2)


@dataclass
class GreedyState:
    """Mutable driver state: snapshot archive, basis size, history, unused training indices."""

    snapshots: list
    L: int
    remaining: np.ndarray
    history: list = field(default_factory=list)
    finished: str | None = None

    @property
    def rounds(self) -> int:
        return sum(1 for h in self.history if h["selected"])

    @property
    def selected(self) -> list:
        return [i for h in self.history for i in h["selected"]]


def estimate_all(problem, model: ReducedModel, mus: np.ndarray, estimator: str,
                 tol: float = DEFAULT_TOL) -> np.ndarray:
    """Values of ``estimator`` for every row of ``mus`` with the current reduced model."""
    if len(mus) == 0:
        return np.zeros(0)
    Uy, Up, norms = solve_online_batch(model, mus)
    if estimator.startswith("eta_c"):
        ab, rel = eta_c_values(model.params, model.estimator, mus, Uy, norms)
    else:
        ab, rel = np.empty(len(mus)), np.empty(len(mus))
        for k, mu in enumerate(mus):
            y, _, _ = reconstruct(model.basis, Uy[k], Up[k])
            rep = eta_star(problem, mu, y, norms[k], tol)
            ab[k], rel[k] = rep.eta_abs, rep.eta_rel
    return ab if estimator.endswith("abs") else rel


def select_top(values: np.ndarray, count: int) -> np.ndarray:
    """Positions of the ``count`` largest values; ties go to the lowest position."""
    order = np.argsort(-values, kind="stable")
    return order[:count]


def model_from_snapshots(problem, snapshots, L: int, with_estimator: bool = True,
                         meta: dict | None = None) -> ReducedModel:
    res = pod(problem, snapshots, min(L, len(snapshots)))
    if res.L < L:
        log.warning("POD kept %d of %d requested modes (rank deficient archive)", res.L, L)
    return build_reduced_model(problem, ReducedBasis.from_pod(res), with_estimator=with_estimator, meta=meta)


def model_at_round(problem, state: GreedyState, r: int, config: GreedyConfig,
                   with_estimator: bool = True) -> ReducedModel:
    """The reduced model the driver held after ``r`` completed rounds."""
    if not 0 <= r <= state.rounds:
        raise ValueError(f"round {r} not in 0..{state.rounds}")
    n = 1 + sum(len(h["selected"]) for h in state.history[: r + 1])
    return model_from_snapshots(problem, state.snapshots[:n], 1 + r * config.L1, with_estimator)


def train_digest(train: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(train, dtype="<f8").tobytes()).hexdigest()


def save_state(directory, state: GreedyState, config: GreedyConfig, model: ReducedModel | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "L": state.L,
        "remaining": [int(i) for i in state.remaining],
        "history": state.history,
        "finished": state.finished,
        "config": {"tol": config.tol, "L1": config.L1, "L2": config.L2, "max_rounds": config.max_rounds,
                   "estimator": config.estimator, "certify_estimator": config.certify_estimator,
                   "hifi_tol": config.hifi_tol, "train_size": int(config.train.shape[0]),
                   "train_sha256": train_digest(config.train)},
    }
    save_snapshots(directory / STATE_FILE, state.snapshots, {"greedy": meta})
    if model is not None:
        save_model(directory / MODEL_FILE, model)


def load_state(path) -> tuple:
    """``(GreedyState, stored config dict)`` from a checkpoint file or its directory."""
    path = Path(path)
    if path.is_dir():
        path = path / STATE_FILE
    snaps, meta = load_snapshots(path)
    g = meta.get("greedy")
    if g is None:
        raise StorageError(f"{path}: no greedy state in archive")
    state = GreedyState(snapshots=snaps, L=int(g["L"]), remaining=np.array(g["remaining"], dtype=int),
                        history=list(g["history"]), finished=g.get("finished"))
    return state, g["config"]


def run_greedy(problem, config: GreedyConfig, state: GreedyState | None = None,
               checkpoint_dir=None, model: ReducedModel | None = None) -> tuple:
    """Run (or resume) the POD-greedy loop; returns ``(model, state)``."""
    train = config.train
    for mu in train:
        problem.box.check(mu)
    if state is None:
        mu1 = problem.mu_bar if config.mu_start is None else problem.box.check(config.mu_start)
        if any(np.array_equal(mu1, mu) for mu in train):
            raise ValueError("the start parameter must not belong to the training set")
        t0 = time.perf_counter()
        first = solve_hifi(problem, mu1, config.hifi_tol)
        state = GreedyState(snapshots=[first], L=1, remaining=np.arange(len(train)))
        state.history.append({"round": 0, "L": 1, "n_snapshots": 1, "selected": [],
                              "selected_values": [], "max_estimator": None,
                              "t_hifi": time.perf_counter() - t0, "t_offline": 0.0, "t_select": 0.0})
    if model is None or model.L != min(state.L, len(state.snapshots)):
        model = model_from_snapshots(problem, state.snapshots, state.L)
    if checkpoint_dir is not None:
        save_state(checkpoint_dir, state, config, model)

    while state.finished is None:
        t0 = time.perf_counter()
        rem = state.remaining
        values = estimate_all(problem, model, train[rem], config.estimator, config.hifi_tol)
        t_select = time.perf_counter() - t0
        vmax = float(values.max()) if values.size else 0.0
        state.history[-1]["max_estimator"] = vmax
        log.info("round %d: L=%d |Z|=%d max %s=%.3e", state.rounds, state.L, len(state.snapshots),
                 config.estimator, vmax)
        if not values.size:
            state.finished = "training set exhausted"
        elif vmax <= config.tol:
            state.finished = "tolerance reached"
        elif state.rounds >= config.max_rounds:
            state.finished = "maximum number of rounds"
        if state.finished:
            if checkpoint_dir is not None:
                save_state(checkpoint_dir, state, config, model)
            break

        pick = select_top(values, config.L2)
        chosen = [int(i) for i in rem[pick]]
        state.remaining = np.delete(rem, pick)
        state.L += config.L1
        t1 = time.perf_counter()
        new = [solve_hifi(problem, train[i], config.hifi_tol) for i in chosen]
        t_hifi = time.perf_counter() - t1
        state.snapshots.extend(new)
        t2 = time.perf_counter()
        model = model_from_snapshots(problem, state.snapshots, state.L)
        state.history.append({
            "round": state.rounds + 1, "L": state.L, "n_snapshots": len(state.snapshots),
            "selected": chosen, "selected_values": [float(values[k]) for k in pick],
            "max_estimator": None, "t_hifi": t_hifi, "t_offline": time.perf_counter() - t2,
            "t_select": t_select,
        })
        if checkpoint_dir is not None:
            save_state(checkpoint_dir, state, config, model)
    return model, state
