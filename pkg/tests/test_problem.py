import numpy as np
import pytest
import scipy.linalg as la

from _problems import random_parameters
from strb.problem import (
    THERMAL_BLOCK_BOX,
    AffineCoefficients,
    ParameterBox,
    ParameterError,
    ParameterModel,
    evaluate_operator,
    make_thermal_block,
    min_theta_bounds,
    problem_from_config,
    theta_bounds,
)
from strb.space_fem import assemble_stiffness


@pytest.fixture(scope="module")
def tb():
    return make_thermal_block(vertices_per_side=7, time_elements=3, T=3.0)


def direct_stiffness(problem, mu):
    """Reassemble A_x(mu) from the piecewise constant coefficient field."""
    mesh = problem.space.mesh
    kappa = np.append(np.asarray(mu)[:8], 1.0)[mesh.subdomains - 1]
    free = problem.space.free
    return assemble_stiffness(mesh, kappa)[free][:, free].toarray()


def test_reference_stiffness_is_plain_laplacian(tb):
    mesh = tb.space.mesh
    free = tb.space.free
    lap = assemble_stiffness(mesh, np.ones(mesh.triangles.shape[0]))[free][:, free].toarray()
    np.testing.assert_allclose(tb.A_bar.toarray(), lap, atol=1e-13)
    np.testing.assert_allclose(evaluate_operator(tb, tb.mu_bar).A_x.toarray(), tb.A_bar.toarray())


def test_thermal_block_box_and_counts(tb):
    assert tb.box.dim == 9
    assert tb.box.lower == (0.1,) * 8 + (-1.0,)
    assert tb.box.upper == (10.0,) * 8 + (1.0,)
    assert (tb.params.Q_A, tb.params.Q_f, tb.params.Q_y) == (9, 1, 0)
    np.testing.assert_array_equal(tb.mu_bar, np.ones(9))
    mu = np.linspace(0.2, 9.0, 9)
    mu[8] = 0.5
    np.testing.assert_array_equal(tb.params.coefficients.theta_A(mu), np.append(mu[:8], 1.0))
    np.testing.assert_array_equal(tb.params.coefficients.theta_f(mu), [0.5])


def test_load_is_separable(tb):
    g = tb.space.boundary_loads["bottom"]
    chi = tb.time.chi_integrals
    F1 = tb.F1_q[0].reshape(tb.M, tb.N)
    for m in range(tb.M):
        np.testing.assert_allclose(F1[m], chi[m] * g, rtol=1e-14)
    F2 = tb.F2_q[0].reshape(tb.P, tb.N)
    for p in range(tb.P):
        np.testing.assert_allclose(F2[p], tb.time.grid.widths[p] * g, rtol=1e-14)
    # time integral of the hat functions adds up to T
    assert tb.F1_q[0].sum() == pytest.approx(3.0 * g.sum(), rel=1e-13)


def test_zero_flux_gives_zero_loads(tb):
    mu = np.ones(9)
    mu[8] = 0.0
    ev = evaluate_operator(tb, mu)
    assert not ev.F1.any() and not ev.F2.any() and not ev.R0_x.any()


def test_affine_reconstruction_for_random_parameters(tb):
    for mu in random_parameters(tb.box, 100, seed=11):
        direct = direct_stiffness(tb, mu)
        affine = evaluate_operator(tb, mu).A_x.toarray()
        assert np.abs(affine - direct).max() <= 1e-12 * np.abs(direct).max()


def test_outside_box_rejected(tb):
    mu = np.ones(9)
    mu[0] = 20.0
    with pytest.raises(ParameterError):
        evaluate_operator(tb, mu)
    with pytest.raises(ParameterError):
        evaluate_operator(tb, np.ones(8))


def test_min_theta_examples(tb):
    np.testing.assert_allclose(min_theta_bounds(tb, tb.mu_bar), (1.0, 1.0, 1.0))
    mu = np.ones(9)
    mu[0], mu[1] = 0.5, 2.0
    np.testing.assert_allclose(min_theta_bounds(tb, mu), (0.5, 2.0, 0.5))
    mu[1] = 1.0
    mu[0] = 4.0
    np.testing.assert_allclose(min_theta_bounds(tb, mu), (1.0, 4.0, 0.25))


def test_min_theta_batched(tb):
    mus = random_parameters(tb.box, 7, seed=1)
    cc, cs, alpha = min_theta_bounds(tb, mus)
    for i, mu in enumerate(mus):
        assert (cc[i], cs[i], alpha[i]) == tuple(min_theta_bounds(tb, mu))


def test_min_theta_sandwich_against_generalized_eigenvalues(tb):
    assert tb.space.mesh.num_vertices <= 50
    Abar = tb.A_bar.toarray()
    for mu in random_parameters(tb.box, 20, seed=5):
        lam = la.eigh(evaluate_operator(tb, mu).A_x.toarray(), Abar, eigvals_only=True)
        cc, cs, _ = min_theta_bounds(tb, mu)
        assert cc <= lam.min() * (1 + 1e-10)
        assert lam.max() <= cs * (1 + 1e-10)


def test_theta_bounds_over_box(tb):
    b = theta_bounds(tb.params)
    np.testing.assert_allclose(b.lower, [0.1] * 8 + [1.0])
    np.testing.assert_allclose(b.upper, [10.0] * 8 + [1.0])


def test_nonpositive_theta_rejected():
    params = ParameterModel(ParameterBox((-1.0,), (1.0,)), AffineCoefficients(A=(0,)), np.ones(1))
    with pytest.raises(ParameterError):
        theta_bounds(params)
    with pytest.raises(ParameterError):
        min_theta_bounds(params, np.array([-0.5]))


def test_box_validation():
    with pytest.raises(ValueError):
        ParameterBox((1.0,), (0.0,))
    with pytest.raises(ValueError):
        ParameterBox((0.0,), (1.0,), (True,))
    with pytest.raises(ValueError):
        ParameterBox((0.1, 0.1), (1.0, 1.0), (True,))
    box = ParameterBox((0.1, -1.0), (10.0, 1.0), (True, False))
    np.testing.assert_allclose(box.midpoint(), [1.0, 0.0])
    assert box.contains([10.0, 1.0]) and not box.contains([10.1, 0.0])


def test_parameter_model_round_trip(tb):
    back = ParameterModel.from_dict(tb.params.to_dict())
    assert back.box == tb.box
    assert back.coefficients == tb.params.coefficients
    np.testing.assert_array_equal(back.reference, tb.params.reference)


def test_reference_outside_box_rejected():
    with pytest.raises(ParameterError):
        make_thermal_block(4, 2, reference=np.full(9, 20.0))


def test_problem_from_config():
    pb = problem_from_config({"problem": {"vertices_per_side": 4, "time_elements": 2, "final_time": 1.0},
                              "parameters": {"lower": [0.5] * 8 + [-1.0], "upper": [2.0] * 8 + [1.0]}})
    assert pb.N == 12 and pb.M == 3 and pb.P == 2
    assert pb.box.upper[0] == 2.0
    assert pb.config["vertices_per_side"] == 4
    with pytest.raises(ValueError):
        problem_from_config({"problem": {"kind": "heat_sink"}})
    assert THERMAL_BLOCK_BOX.dim == 9
