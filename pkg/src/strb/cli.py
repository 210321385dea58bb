"""Command-line interface: ``strb offline | online | validate``.

Exit codes: 0 success, 2 configuration error, 3 I/O or integrity error,
4 certification violation, 1 any other failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_CERT = 0, 1, 2, 3, 4
ESTIMATOR_CHOICES = ("eta_c_abs", "eta_c_rel", "eta_star_abs", "eta_star_rel")
TRAINING_SCHEMA = "# schema strb-training v1"
ONLINE_SCHEMA = "# schema strb-online v1"

log = logging.getLogger("strb")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file overriding the profile defaults")
    common.add_argument("--profile", default="desk", help="desk (default) or paper")
    common.add_argument("--seed", type=int, help="seed for training and validation sampling")
    common.add_argument("--threads", type=int, help="BLAS/OpenMP thread count")
    common.add_argument("--tol", type=float, help="greedy stopping tolerance for the selection estimator")
    common.add_argument("--solver-tol", type=float, help="high-fidelity solver tolerance")
    common.add_argument("--estimator", choices=ESTIMATOR_CHOICES, help="greedy selection estimator")
    common.add_argument("--out", type=Path, default=Path("strb_out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="strb", description="Certified space-time reduced basis runs.")
    sub = p.add_subparsers(dest="command", required=True)
    off = sub.add_parser("offline", parents=[common], help="train a reduced model with the POD-greedy loop")
    off.add_argument("--resume", type=Path, metavar="CHECKPOINT",
                     help="greedy checkpoint file (or its directory) to continue from")
    on = sub.add_parser("online", parents=[common], help="evaluate a stored reduced model")
    on.add_argument("--model", type=Path, help="model file (default OUT/model.strb)")
    on.add_argument("--mu", action="append", default=[], help="comma-separated parameter; repeatable")
    on.add_argument("--mu-file", type=Path, help="CSV with one parameter per row ('#' starts comments)")
    val = sub.add_parser("validate", parents=[common], help="compare estimators with true errors")
    val.add_argument("--model", type=Path, help="model file (default OUT/model.strb)")
    val.add_argument("--resume", type=Path, metavar="CHECKPOINT",
                     help="greedy checkpoint used for the decay report (default OUT/greedy_state.strb)")
    val.add_argument("--no-decay", action="store_true", help="skip the per-round decay report")
    val.add_argument("--inflate-alpha", type=float, default=1.0, help=argparse.SUPPRESS)
    return p


def _settings(args):
    from .config import load_config

    cfg = load_config(args.config, args.profile)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if args.tol is not None:
        cfg["greedy"]["tol"] = args.tol
    if args.solver_tol is not None:
        cfg["solver"]["tol"] = args.solver_tol
    if args.estimator is not None:
        cfg["greedy"]["estimator"] = args.estimator
    return cfg


def _write_csv(path: Path, schema: str, header: list, rows: list) -> None:
    import csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(schema + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _problem_and_sets(cfg):
    from .bench import training_and_validation
    from .config import ConfigError
    from .problem import ParameterError, problem_from_config

    try:
        problem = problem_from_config(cfg)
        train, val = training_and_validation(problem.box, cfg["greedy"]["train_size"],
                                             cfg["validation"]["size"], cfg["run"]["seed"])
    except ParameterError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return problem, train, val


def _greedy_config(cfg, problem, train):
    from .config import ConfigError
    from .greedy import GreedyConfig

    g = cfg["greedy"]
    start = g.get("start", "reference")
    if start == "reference":
        mu1 = None
    elif start == "midpoint":
        mu1 = problem.box.midpoint()
    else:
        mu1 = start
    if isinstance(mu1, str):
        raise ConfigError(f"[greedy] start must be 'reference', 'midpoint' or a parameter list, got {mu1!r}")
    try:
        return GreedyConfig(train=train, tol=g["tol"], L1=g["L1"], L2=g["L2"], max_rounds=g["max_rounds"],
                            estimator=g["estimator"], certify_estimator=g["certify_estimator"],
                            mu_start=mu1, hifi_tol=cfg["solver"]["tol"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_offline(args) -> int:
    import dataclasses

    from .config import ConfigError
    from .greedy import MODEL_FILE, load_state, run_greedy, save_state, train_digest
    from .rb_core import load_model, save_model

    cfg = _settings(args)
    problem, train, _ = _problem_and_sets(cfg)
    gcfg = _greedy_config(cfg, problem, train)
    out = args.out
    state = model = None
    if args.resume is not None:
        state, stored = load_state(args.resume)
        if stored.get("train_sha256") not in (None, train_digest(train)):
            raise ConfigError(f"checkpoint {args.resume} was trained on a different training set "
                              "(check --seed, --profile and the config file)")
        mfile = (args.resume if args.resume.is_dir() else args.resume.parent) / MODEL_FILE
        if mfile.is_file():
            model = load_model(mfile)
        state.finished = None
        log.info("resuming after round %d with L=%d", state.rounds, state.L)
    model, state = run_greedy(problem, gcfg, state=state, checkpoint_dir=out, model=model)
    meta = {"problem": problem.config, "seed": cfg["run"]["seed"], "rounds": state.rounds,
            "finished": state.finished, "n_snapshots": len(state.snapshots)}
    model = dataclasses.replace(model, meta=meta)
    save_state(out, state, gcfg, model)
    save_model(out / MODEL_FILE, model)

    d = problem.box.dim
    rows = []
    for h in state.history:
        base = [h["round"], h["L"], h["n_snapshots"], repr(h["max_estimator"])]
        times = [repr(h["t_hifi"]), repr(h["t_offline"]), repr(h["t_select"])]
        if not h["selected"]:
            mu = state.snapshots[0].mu
            rows.append(base + [-1, ""] + [repr(float(x)) for x in mu] + times)
        for idx, v in zip(h["selected"], h["selected_values"]):
            rows.append(base + [idx, repr(v)] + [repr(float(x)) for x in train[idx]] + times)
    header = ["round", "L", "n_snapshots", "max_estimator", "selected_index", "selected_value"]
    header += [f"mu_{i + 1}" for i in range(d)] + ["t_hifi", "t_offline", "t_select"]
    _write_csv(out / "training_log.csv", TRAINING_SCHEMA, header, rows)
    print(f"offline: L={model.L}, {len(state.snapshots)} snapshots, {state.rounds} rounds "
          f"({state.finished}); wrote {out / MODEL_FILE}")
    return EXIT_OK


def _read_mu_file(path: Path) -> list:
    import csv

    from .config import ConfigError

    if not path.is_file():
        raise ConfigError(f"parameter file not found: {path}")
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(line for line in fh if not line.lstrip().startswith("#")):
            if not row:
                continue
            try:
                out.append([float(x) for x in row])
            except ValueError:
                if out:
                    raise ConfigError(f"{path}: non-numeric parameter row {row}") from None
    return out


def cmd_online(args) -> int:
    import time

    import numpy as np

    from .config import ConfigError
    from .estimators import eta_c_values
    from .rb_core import load_model, solve_online

    model = load_model(args.model or args.out / "model.strb")
    if model.estimator is None:
        raise ConfigError("model file has no estimator data")
    mus = []
    for s in args.mu:
        try:
            mus.append([float(x) for x in s.split(",")])
        except ValueError:
            raise ConfigError(f"cannot parse parameter {s!r}") from None
    if args.mu_file is not None:
        mus += _read_mu_file(args.mu_file)
    if not mus:
        mus = [list(model.params.reference)]
    d, L = model.params.box.dim, model.L
    rows, flagged = [], 0
    for mu in mus:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (d,) or not model.params.box.contains(mu):
            flagged += 1
            shown = list(mu[:d]) + [float("nan")] * max(0, d - mu.size)
            rows.append([repr(float(x)) for x in shown] + [0] + ["nan"] * (L + 5))
            continue
        t0 = time.perf_counter()
        sol = solve_online(model, mu)
        ab, rel = eta_c_values(model.params, model.estimator, mu, sol.u_y, sol.y_rb_norm)
        wall = time.perf_counter() - t0
        rows.append([repr(float(x)) for x in mu] + [1] + [repr(float(u)) for u in sol.u_y] + [
            repr(sol.y_rb_norm), repr(float(ab)), repr(float(rel)), int(rel <= 1.0), repr(wall)])
    header = [f"mu_{i + 1}" for i in range(d)] + ["in_domain"] + [f"u_y_{j + 1}" for j in range(L)]
    header += ["y_rb_norm", "eta_c_abs", "eta_c_rel", "certified_c_rel", "wall_time"]
    path = args.out / "online.csv"
    _write_csv(path, ONLINE_SCHEMA, header, rows)
    if flagged:
        print(f"warning: {flagged} parameter(s) outside the parameter domain were flagged", file=sys.stderr)
    print(f"online: {len(rows)} rows written to {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .bench import decay_rows, hifi_reference, run_validation, write_decay_csv, write_validation_csv
    from .config import ConfigError
    from .greedy import STATE_FILE, load_state, model_at_round
    from .plotting import plot_decay, plot_validation
    from .rb_core import load_model

    cfg = _settings(args)
    problem, train, val = _problem_and_sets(cfg)
    model = load_model(args.model or args.out / "model.strb")
    stored = model.meta.get("problem")
    if stored is not None and stored != problem.config:
        raise ConfigError(f"model was trained for {stored}, config describes {problem.config}")
    if model.basis is None or model.estimator is None:
        raise ConfigError("model file lacks the basis or estimator data needed for validation")
    if not args.inflate_alpha > 0.0:
        raise ConfigError("--inflate-alpha must be positive")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    snaps, t_hifi = hifi_reference(problem, val, cfg["solver"]["tol"])
    report = run_validation(problem, model, val, snaps, cfg["solver"]["tol"], args.inflate_alpha)
    report.timings["hifi_per_solve"] = t_hifi
    write_validation_csv(out / "validation.csv", report)
    plot_validation(report, out / "validation.png")

    ckpt = args.resume or (args.out / STATE_FILE)
    if not args.no_decay and Path(ckpt).exists():
        state, _ = load_state(ckpt)
        gcfg = _greedy_config(cfg, problem, train)
        reports = [run_validation(problem, model_at_round(problem, state, r, gcfg), val, snaps,
                                  cfg["solver"]["tol"], args.inflate_alpha)
                   for r in range(state.rounds + 1)]
        rows = decay_rows(reports)
        write_decay_csv(out / "decay.csv", rows)
        plot_decay(rows, out / "decay.png")

    agg = report.aggregates()
    print(f"validate: L={report.L}, mean eps={agg['eps_abs']['mean']:.3e}, "
          f"median eff(eta_star)={agg['eff_star']['median']:.2f}, "
          f"median eff(eta_c)={agg['eff_c']['median']:.2f}")
    bad = report.violations()
    if bad:
        print(f"certification violated on {len(bad)} of {len(report.rows)} validation parameters: "
              f"rows {bad}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


COMMANDS = {"offline": cmd_offline, "online": cmd_online, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_CONFIG
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    from .config import ConfigError
    from .problem import ParameterError
    from .storage import StorageError

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StorageError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - top-level diagnostic
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
