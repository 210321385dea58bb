import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from _problems import TOY_BOX, random_parameters
from strb.estimators import (
    AffineResidual,
    EstimatorMemoryError,
    build_estimator_offline,
    estimator_sizes,
    eta_c,
    eta_c_direct,
    eta_c_values,
    eta_star,
    index_maps,
    residual_norm_operator,
    theta_S,
    theta_s,
    true_error,
)
from strb.hifi import Snapshot, assemble_system, lift, solve_hifi
from strb.kron_ops import KronDiagSolver, kron_apply
from strb.pod import pod
from strb.problem import make_thermal_block, min_theta_bounds
from strb.rb_core import ReducedBasis, build_reduced_model, reconstruct, solve_online
from strb.wspace import w_norm

TOL = 1e-10


@pytest.fixture(scope="module")
def tb():
    return make_thermal_block(4, 3)


@pytest.fixture(scope="module")
def reduced(toy_larger):
    snaps = [solve_hifi(toy_larger, mu, tol=1e-12) for mu in random_parameters(TOY_BOX, 3, seed=31)]
    basis = ReducedBasis.from_pod(pod(toy_larger, snaps, 2))
    return basis, build_reduced_model(toy_larger, basis)


def test_thermal_block_sizes(tb):
    assert estimator_sizes(tb.params) == (10, 91)
    off = build_estimator_offline(tb, np.zeros((tb.N * tb.M, 0)))
    assert off.gram.shape == (10, 10)
    lam = np.linalg.eigvalsh(off.gram)
    assert lam.min() >= -1e-10 * lam.max()


def test_index_maps_follow_the_table(tb, toy):
    for pb in (tb, toy):
        s_idx, S_idx = index_maps(pb.params)
        Q_s, Q_S = estimator_sizes(pb.params)
        assert (len(s_idx), len(S_idx)) == (Q_s, Q_S)
        mu = random_parameters(pb.box, 1, seed=2)[0]
        ta = pb.params.coefficients.theta_A(mu)
        tS, ts = theta_S(pb.params, mu), theta_s(pb.params, mu)
        qa = pb.params.Q_A
        assert S_idx[0][0] == "time_stiffness" and tS[0] == 1.0
        for i in range(qa):
            for j in range(qa):
                q = j * qa + i + 1
                assert S_idx[q] == ("mass", i, j)
                assert tS[q] == ta[i] * ta[j]
            assert S_idx[i + qa * qa + 1] == ("terminal", i, None)
            assert tS[i + qa * qa + 1] == ta[i]
        tf, ty = pb.params.coefficients.theta_f(mu), pb.params.coefficients.theta_y0(mu)
        for q, (kind, i, j) in enumerate(s_idx):
            expected = {"y0": lambda: ty[j] * ta[i], "f1": lambda: tf[j] * ta[i], "f2": lambda: tf[i]}[kind]()
            assert ts[q] == expected


def test_toy_sizes(toy):
    assert estimator_sizes(toy.params) == (4 * 1 + 4 * 2 + 2, 1 + 16 + 4)


def test_residual_operator_is_scaled_schur_complement(toy):
    mu = random_parameters(TOY_BOX, 1, seed=3)[0]
    aff = AffineResidual(toy)
    op, _ = assemble_system(toy, mu)
    c = KronDiagSolver.from_kronsum(op.C)
    AMinv = (toy.stiffness(mu) @ sp.diags(1.0 / toy.space.mass_diagonal)).tocsr()
    v = np.random.default_rng(0).standard_normal(toy.N * toy.M)
    ref = kron_apply(sp.identity(toy.M), AMinv, op.schur_apply(v, c.solve))
    np.testing.assert_allclose(aff.operator(mu) @ v, ref, rtol=1e-11, atol=1e-12 * np.abs(ref).max())


def test_hifi_solution_satisfies_residual_system(toy):
    for mu in random_parameters(TOY_BOX, 3, seed=4):
        s = solve_hifi(toy, mu, tol=TOL)
        aff = AffineResidual(toy)
        load = aff.load(mu)
        assert np.linalg.norm(aff.operator(mu) @ s.y - load) <= 10 * TOL * np.linalg.norm(load)


def test_residual_norm_operator_spd(toy):
    K = residual_norm_operator(toy).to_sparse().toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    assert np.linalg.eigvalsh(K).min() > 0.0


def test_gram_matches_explicit_contraction(toy_larger, reduced):
    basis, model = reduced
    R = AffineResidual(toy_larger).columns(basis.B_W)
    K = residual_norm_operator(toy_larger).to_sparse().tocsc()
    G = R.T @ spla.spsolve(K, R)
    off = model.estimator
    assert off.gram.shape == (off.Q_s + off.Q_S * basis.L,) * 2
    assert np.abs(off.gram - G).max() <= 1e-9 * np.abs(G).max()
    np.testing.assert_array_equal(off.gram, off.gram.T)
    lam = np.linalg.eigvalsh(off.gram)
    assert lam.min() >= -1e-10 * lam.max()


def test_zero_data_gives_zero_estimator(tb):
    s = solve_hifi(tb, tb.mu_bar)
    basis = ReducedBasis.from_columns(tb, s.y)
    model = build_reduced_model(tb, basis)
    mu = random_parameters(tb.box, 1, seed=5)[0]
    mu[8] = 0.0
    sol = solve_online(model, mu)
    rep = eta_c(model, model.estimator, mu, sol.u_y, sol.y_rb_norm)
    assert rep.eta_abs == 0.0 and rep.certified


def test_offline_online_fidelity(toy_larger, reduced):
    basis, model = reduced
    for mu in random_parameters(TOY_BOX, 10, seed=6):
        sol = solve_online(model, mu)
        y, _, _ = reconstruct(basis, sol.u_y, sol.u_p)
        fast = eta_c(model, model.estimator, mu, sol.u_y, sol.y_rb_norm).eta_abs
        assert fast == pytest.approx(eta_c_direct(toy_larger, mu, y), rel=1e-8)


def test_vectorized_values_match_single(reduced):
    _, model = reduced
    mus = random_parameters(TOY_BOX, 4, seed=7)
    sols = [solve_online(model, mu) for mu in mus]
    U = np.array([s.u_y for s in sols])
    norms = np.array([s.y_rb_norm for s in sols])
    ab, rel = eta_c_values(model.params, model.estimator, mus, U, norms)
    for k, mu in enumerate(mus):
        rep = eta_c(model, model.estimator, mu, sols[k].u_y, sols[k].y_rb_norm)
        assert ab[k] == pytest.approx(rep.eta_abs, rel=1e-12)
        assert rel[k] == pytest.approx(rep.eta_rel, rel=1e-12)
        assert rep.certified == (rep.eta_rel <= 1.0)


def test_eta_star_of_exact_solution(toy):
    mu = random_parameters(TOY_BOX, 1, seed=8)[0]
    s = solve_hifi(toy, mu, tol=TOL)
    _, rhs = assemble_system(toy, mu)
    scale = np.hypot(*map(np.linalg.norm, rhs))
    rep = eta_star(toy, mu, s.y, w_norm(toy, s.y, s.y_lift), tol=TOL)
    assert rep.eta_abs <= 10 * TOL * scale / rep.alpha
    assert rep.certified


def test_guarantee_chain(toy_larger, reduced):
    basis, model = reduced
    for mu in random_parameters(TOY_BOX, 20, seed=9):
        s = solve_hifi(toy_larger, mu, tol=1e-12)
        sol = solve_online(model, mu)
        y, _, yl = reconstruct(basis, sol.u_y, sol.u_p)
        eps_abs, eps_rel = true_error(toy_larger, s, y, yl)
        star = eta_star(toy_larger, mu, y, sol.y_rb_norm, tol=1e-12)
        c = eta_c(model, model.estimator, mu, sol.u_y, sol.y_rb_norm)
        slack = 1e-8 * max(1.0, eps_abs)
        assert eps_abs <= star.eta_abs + slack
        assert star.eta_abs <= c.eta_abs + slack
        if star.certified:
            assert eps_rel <= star.eta_rel + 1e-8
        if c.certified:
            assert eps_rel <= c.eta_rel + 1e-8


def test_relative_estimator_with_zero_reduced_norm(reduced):
    _, model = reduced
    mu = random_parameters(TOY_BOX, 1, seed=10)[0]
    rep = eta_c(model, model.estimator, mu, np.zeros(model.L), 0.0)
    assert rep.eta_abs > 0 and rep.eta_rel == np.inf and not rep.certified


def test_alpha_scale_inflates(reduced):
    _, model = reduced
    mu = random_parameters(TOY_BOX, 1, seed=11)[0]
    sol = solve_online(model, mu)
    a = eta_c(model, model.estimator, mu, sol.u_y, sol.y_rb_norm)
    b = eta_c(model, model.estimator, mu, sol.u_y, sol.y_rb_norm, alpha_scale=0.5)
    assert b.eta_abs == pytest.approx(2 * a.eta_abs, rel=1e-14)
    cc, _, alpha = min_theta_bounds(model.params, mu)
    assert (a.c_c, a.alpha) == (cc, alpha)


def test_true_error_examples(toy):
    mu = random_parameters(TOY_BOX, 1, seed=12)[0]
    s = solve_hifi(toy, mu)
    assert true_error(toy, s, s.y, s.y_lift) == (0.0, 0.0)
    eps, rel = true_error(toy, s, 0 * s.y, 0 * s.y_lift)
    assert eps > 0 and rel == pytest.approx(1.0, rel=1e-14)
    zero = Snapshot(mu, 0 * s.y, 0 * s.p, 0 * s.y_lift)
    assert true_error(toy, zero, s.y, s.y_lift)[1] == np.inf
    assert true_error(toy, zero, 0 * s.y, 0 * s.y_lift) == (0.0, 0.0)


def test_true_error_triangle_inequality(toy):
    s = solve_hifi(toy, toy.mu_bar)
    rng = np.random.default_rng(13)
    for _ in range(10):
        y1, y2 = (s.y + rng.standard_normal(s.y.size) for _ in range(2))
        l1, l2 = lift(toy, y1), lift(toy, y2)
        e1, _ = true_error(toy, s, y1, l1)
        e2, _ = true_error(toy, s, y2, l2)
        assert e1 <= e2 + w_norm(toy, y2 - y1, l2 - l1) + 1e-12


def test_memory_cap(toy):
    B = np.zeros((toy.N * toy.M, 3))
    Q_s, Q_S = estimator_sizes(toy.params)
    with pytest.raises(EstimatorMemoryError, match=str(Q_s + 3 * Q_S)):
        build_estimator_offline(toy, B, max_columns=50)
