import numpy as np
import pytest

from _problems import TOY_BOX, random_parameters
from strb.bench import (
    DECAY_SCHEMA,
    VALIDATION_SCHEMA,
    SamplingSpec,
    ValidationReport,
    ValidationRow,
    decay_rows,
    read_csv,
    run_validation,
    sample_parameters,
    training_and_validation,
    write_decay_csv,
    write_validation_csv,
)
from strb.greedy import model_from_snapshots
from strb.hifi import solve_hifi
from strb.problem import THERMAL_BLOCK_BOX


def test_sampling_is_deterministic():
    spec = SamplingSpec.from_box(THERMAL_BLOCK_BOX, 50, seed=7)
    a, b = sample_parameters(spec), sample_parameters(spec)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_parameters(SamplingSpec.from_box(THERMAL_BLOCK_BOX, 50, seed=8)))
    assert all(THERMAL_BLOCK_BOX.contains(mu) for mu in a)


def test_log_uniform_median_and_uniform_mean():
    n = 10_000
    X = sample_parameters(SamplingSpec.from_box(THERMAL_BLOCK_BOX, n, seed=0))
    assert np.all(np.abs(np.median(X[:, :8], axis=0) - 1.0) <= 0.1)
    # log10 of a log-uniform sample on [0.1, 10] is uniform on [-1, 1]
    assert np.all(np.abs(np.log10(X[:, :8]).mean(axis=0)) <= 3 * np.sqrt(1 / 3 / n))
    assert abs(X[:, 8].mean()) <= 3 * np.sqrt(1 / 3 / n)


@pytest.mark.parametrize("kwargs", [
    dict(lower=(1.0,), upper=(0.0,), log_scale=(False,)),
    dict(lower=(0.0,), upper=(1.0,), log_scale=(True,)),
    dict(lower=(0.0, 1.0), upper=(1.0,), log_scale=(False,)),
])
def test_invalid_sampling_specs(kwargs):
    with pytest.raises(ValueError):
        SamplingSpec(count=3, **kwargs)
    with pytest.raises(ValueError):
        SamplingSpec((0.0,), (1.0,), (False,), count=-1)


def test_training_and_validation_are_independent_and_seeded():
    t1, v1 = training_and_validation(THERMAL_BLOCK_BOX, 30, 10, seed=3)
    t2, v2 = training_and_validation(THERMAL_BLOCK_BOX, 30, 10, seed=3)
    assert np.array_equal(t1, t2) and np.array_equal(v1, v2)
    assert t1.shape == (30, 9) and v1.shape == (10, 9)
    assert not np.isin(v1, t1).any()


@pytest.fixture(scope="module")
def report(toy_larger):
    snaps = [solve_hifi(toy_larger, toy_larger.mu_bar)]
    snaps += [solve_hifi(toy_larger, mu) for mu in random_parameters(TOY_BOX, 2, seed=50)]
    model = model_from_snapshots(toy_larger, snaps, 3)
    val = np.vstack([toy_larger.mu_bar, random_parameters(TOY_BOX, 5, seed=51)])
    return run_validation(toy_larger, model, val, tol=1e-12)


def test_validation_rows(report):
    assert report.L == 3 and len(report.rows) == 6
    for r in report.rows:
        assert r.eps_abs <= r.eta_star_abs * (1 + 1e-8) + 1e-14
        assert r.eta_star_abs <= r.eta_c_abs * (1 + 1e-8)
        if r.eps_abs > 1e-12:
            assert r.eff_star >= 1 - 1e-6 and r.eff_c >= 1 - 1e-6
    assert report.violations() == []
    assert {"online_total", "eta_star_total", "hifi_per_solve"} <= set(report.timings)


def test_reference_parameter_nearly_reproduced(report):
    assert report.rows[0].eps_rel <= 1e-8


def test_aggregates_are_exact(report):
    agg = report.aggregates()
    eps = [r.eps_abs for r in report.rows]
    assert agg["eps_abs"]["mean"] == pytest.approx(sum(eps) / len(eps), rel=1e-15)
    assert agg["eps_abs"]["max"] == max(eps)
    assert agg["eff_c"]["median"] == pytest.approx(float(np.median([r.eff_c for r in report.rows])))


def test_violations_detect_broken_chain():
    good = ValidationRow(np.zeros(2), 1.0, 0.1, 2.0, 0.4, 3.0, 0.6, True, True)
    low = ValidationRow(np.zeros(2), 1.0, 0.1, 0.5, 0.1, 3.0, 0.6, True, True)
    swapped = ValidationRow(np.zeros(2), 1.0, 0.1, 3.0, 0.4, 2.0, 0.6, True, True)
    rel = ValidationRow(np.zeros(2), 1.0, 0.5, 2.0, 0.4, 3.0, 0.6, True, False)
    assert ValidationReport(3, [good, low, swapped, rel]).violations() == [1, 2, 3]


def test_effectivity_edge_cases():
    row = ValidationRow(np.zeros(1), 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, True, True)
    assert row.eff_star == 1.0 and row.eff_c == np.inf


def test_validation_csv(tmp_path, report):
    path = tmp_path / "v.csv"
    write_validation_csv(path, report)
    schema, header, rows = read_csv(path)
    assert schema == VALIDATION_SCHEMA
    assert header[:6] == [f"mu_{i}" for i in range(1, 7)]
    assert header[6:] == ["L", "eps_abs", "eps_rel", "eta_star_abs", "eta_star_rel", "eta_c_abs", "eta_c_rel",
                          "eff_star", "eff_c", "certified_star_rel", "certified_c_rel"]
    assert len(rows) == 6
    for row, r in zip(rows, report.rows):
        assert float(row[header.index("eps_abs")]) == r.eps_abs
        assert np.array_equal(np.array(row[:6], dtype=float), r.mu)
        assert row[header.index("certified_c_rel")] in ("0", "1")


def test_decay_rows_and_csv(tmp_path, report):
    other = ValidationReport(1, report.rows[:2])
    rows = decay_rows([report, other])
    assert [r["L"] for r in rows] == [1, 3]
    with pytest.raises(ValueError):
        decay_rows([report, report])
    path = tmp_path / "d.csv"
    write_decay_csv(path, rows)
    schema, header, body = read_csv(path)
    assert schema == DECAY_SCHEMA
    assert header == ["L", "mean_eps_abs", "max_eps_abs", "mean_eta_star_abs", "mean_eta_c_abs",
                      "mean_eff_star", "mean_eff_c"]
    Ls = [int(b[0]) for b in body]
    assert all(a < b for a, b in zip(Ls, Ls[1:]))
    assert float(body[1][1]) == pytest.approx(report.aggregates()["eps_abs"]["mean"], rel=1e-15)
