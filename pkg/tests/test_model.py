import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ekimf.core import SpdMatrix
from ekimf.errors import RankDeficient
from ekimf.model import (ForwardModel, NonlinearPart, Prior, apply_forward, check_orthogonality,
                         gamma_projector, hessian_contract, jacobian_forward, loss, posterior_unnormalized,
                         probe_points, solve_u_dagger)


def weakly_nonlinear(amplitude=0.3, seed=11, L=2, K=4):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(K, L))
    x = rng.normal(size=(K, K))
    gamma = x @ x.T + np.eye(K)
    y = rng.normal(size=K)
    return ForwardModel(A, gamma, y, NonlinearPart.random(A, gamma, amplitude, seed + 1))


def canonical():
    return ForwardModel([[1.0]], [[1.0]], [1.0]), Prior([0.0], [[1.0]])


# --- apply_forward / jacobian ---------------------------------------------

def test_identity_forward():
    model = ForwardModel(np.eye(2), np.eye(2), [0.0, 0.0])
    np.testing.assert_array_equal(apply_forward(model, [1.0, 2.0]), [1.0, 2.0])


def test_zero_amplitude_is_linear():
    model = weakly_nonlinear(amplitude=0.0)
    u = np.random.default_rng(0).normal(size=(100, 2))
    np.testing.assert_array_equal(apply_forward(model, u), u @ model.A.T)
    np.testing.assert_array_equal(jacobian_forward(model, u[0]), model.A)


def test_square_invertible_A_leaves_no_room_for_nonlinearity():
    A = np.eye(2)
    part = NonlinearPart.random(A, np.eye(2), amplitude=1.0, seed=3)
    np.testing.assert_allclose(part.projector, 0.0, atol=1e-15)
    model = ForwardModel(A, np.eye(2), [0.0, 0.0], part)
    u = np.array([0.7, -1.3])
    np.testing.assert_allclose(apply_forward(model, u), A @ u, atol=1e-15)


def test_batched_forward_matches_pointwise():
    model = weakly_nonlinear()
    u = np.random.default_rng(1).normal(size=(7, 2))
    batch = apply_forward(model, u)
    for i in range(7):
        np.testing.assert_allclose(batch[i], apply_forward(model, u[i]), rtol=0, atol=1e-14)


def test_jacobian_linear_is_A():
    model, _ = canonical()
    np.testing.assert_array_equal(jacobian_forward(model, [3.0]), [[1.0]])


def test_jacobian_matches_central_differences():
    model = weakly_nonlinear(amplitude=0.5)
    rng = np.random.default_rng(2)
    for _ in range(20):
        u = rng.normal(size=2) * 2
        step = 1e-5 * (1 + np.abs(u))
        fd = np.empty_like(model.A)
        for i in range(2):
            e = np.zeros(2)
            e[i] = step[i]
            fd[:, i] = (apply_forward(model, u + e) - apply_forward(model, u - e)) / (2 * step[i])
        assert np.max(np.abs(fd - jacobian_forward(model, u))) <= 1e-6


def test_jacobian_tends_to_A_as_amplitude_vanishes():
    model = weakly_nonlinear(amplitude=1.0)
    u = np.array([0.4, 0.9])
    gaps = [np.max(np.abs(jacobian_forward(model.with_amplitude(a), u) - model.A)) for a in (1e-1, 1e-3, 1e-6)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-5


def test_hessian_contraction_matches_differences():
    model = weakly_nonlinear(amplitude=0.5)
    rng = np.random.default_rng(4)
    u, w = rng.normal(size=2), rng.normal(size=4)
    step = 1e-5
    fd = np.empty((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        fd[:, i] = (jacobian_forward(model, u + e) - jacobian_forward(model, u - e)).T @ w / (2 * step)
    hc = hessian_contract(model, u, w)
    np.testing.assert_allclose(hc, hc.T, atol=1e-15)
    np.testing.assert_allclose(hc, fd, atol=1e-7)
    np.testing.assert_array_equal(hessian_contract(canonical()[0], [0.0], [1.0]), [[0.0]])


# --- the weak-nonlinearity assumption --------------------------------------

def test_projector_properties():
    model = weakly_nonlinear()
    P = model.nonlinearity.projector
    assert np.max(np.abs(P @ model.A)) <= 1e-10
    assert np.max(np.abs(P @ P - P)) <= 1e-10
    assert np.max(np.abs(model.A.T @ model.gamma.solve(P))) <= 1e-10


def test_orthogonality_on_probe_points():
    model = weakly_nonlinear(amplitude=0.4)
    prior = Prior(np.zeros(2), np.eye(2))
    probes = probe_points(prior, 1000, seed=0)
    assert check_orthogonality(model, probes) <= 1e-8
    rng = np.random.default_rng(5)
    m = model.nonlinearity(probes)
    v = rng.normal(size=(1000, 2))
    lhs = np.abs(np.sum((m @ model.gamma.solve(model.A)) * v, axis=1))
    assert np.all(lhs <= 1e-8 * np.linalg.norm(v, axis=1))


def test_bound_dominates_value_plus_gradient():
    model = weakly_nonlinear(amplitude=0.4)
    u = probe_points(Prior(np.zeros(2), 4 * np.eye(2)), 1000, seed=1)
    m = model.nonlinearity
    worst = max(np.linalg.norm(m(x)) + np.linalg.norm(m.jacobian(x), 2) for x in u)
    assert worst <= model.M


def test_probe_points_reproducible():
    prior = Prior([0.0, 1.0], np.eye(2))
    np.testing.assert_array_equal(probe_points(prior, 10, 3), probe_points(prior, 10, 3))


# --- u_dagger --------------------------------------------------------------

def test_u_dagger_invertible_A():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    x = rng.normal(size=(3, 3))
    gamma = x @ x.T + np.eye(3)
    y = rng.normal(size=3)
    u, r = solve_u_dagger(A, gamma, y)
    np.testing.assert_allclose(u, np.linalg.solve(A, y), atol=1e-10)
    np.testing.assert_allclose(r, 0.0, atol=1e-10)


def test_u_dagger_by_hand():
    u, r = solve_u_dagger([[1.0], [0.0]], np.eye(2), [2.0, 3.0])
    np.testing.assert_allclose(u, [2.0])
    np.testing.assert_allclose(r, [0.0, 3.0])


def test_consistent_data_has_zero_residual():
    model = weakly_nonlinear()
    u_true = np.array([0.3, -0.8])
    _, r = solve_u_dagger(model.A, model.gamma, model.A @ u_true)
    assert np.max(np.abs(r)) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 3))
def test_u_dagger_decomposition(seed, L, extra):
    K = L + extra
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(K, L))
    x = rng.normal(size=(K, K))
    gamma = x @ x.T + np.eye(K)
    y = rng.normal(size=K)
    u, r = solve_u_dagger(A, gamma, y)
    assert np.max(np.abs(A @ u + r - y)) <= 1e-12 * max(1.0, np.max(np.abs(y)))
    assert np.max(np.abs(r @ np.linalg.solve(gamma, A))) <= 1e-10


def test_rank_deficient_rejected():
    with pytest.raises(RankDeficient):
        ForwardModel([[1.0, 2.0], [2.0, 4.0]], np.eye(2), [1.0, 1.0])
    with pytest.raises(RankDeficient):
        ForwardModel([[1.0, 0.0]], [[1.0]], [1.0])
    with pytest.raises(RankDeficient):
        solve_u_dagger([[1.0, 1.0], [1.0, 1.0]], np.eye(2), [0.0, 1.0])
    with pytest.raises(RankDeficient):
        gamma_projector([[0.0], [0.0]], np.eye(2))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        ForwardModel(np.eye(2), np.eye(3), [0.0, 0.0])


# --- loss / posterior ------------------------------------------------------

def test_loss_zero_at_exact_fit():
    model = weakly_nonlinear()
    u = np.array([0.1, 0.2])
    assert loss(model.with_data(apply_forward(model, u)), u) == pytest.approx(0.0, abs=1e-28)


def test_loss_canonical_by_hand():
    model, _ = canonical()
    assert loss(model, [0.0]) == 0.5


def test_loss_scales_inversely_with_gamma():
    model = weakly_nonlinear(amplitude=0.0)
    u = np.array([1.5, -0.5])
    doubled = ForwardModel(model.A, 2 * model.gamma.matrix, model.y)
    assert loss(doubled, u) == pytest.approx(0.5 * loss(model, u), rel=1e-12)


def test_loss_at_u_dagger_is_residual_energy():
    model = weakly_nonlinear(amplitude=0.0)
    r = model.r
    assert loss(model, model.u_dagger) == pytest.approx(0.5 * r @ model.gamma.solve(r), rel=1e-12)


def test_loss_nonnegative_and_batched():
    model = weakly_nonlinear()
    u = np.random.default_rng(7).normal(size=(50, 2))
    vals = loss(model, u)
    assert vals.shape == (50,) and np.all(vals >= 0)
    assert vals[3] == pytest.approx(loss(model, u[3]), rel=1e-14)


def test_posterior_at_t0_is_prior_density():
    model, prior = canonical()
    for u in (-1.0, 0.0, 2.5):
        assert posterior_unnormalized(model, prior, [u], 0.0) == pytest.approx(
            np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi), rel=1e-14)


def test_posterior_at_t1_proportional_to_conjugate_posterior():
    model, prior = canonical()
    u = np.linspace(-3, 3, 13)
    p = posterior_unnormalized(model, prior, u[:, None], 1.0)
    post = np.exp(-(u - 0.5) ** 2)  # N(1/2, 1/2) up to a constant
    ratio = p / post
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_posterior_positive_and_rejects_negative_time():
    model = weakly_nonlinear()
    prior = Prior(np.zeros(2), np.eye(2))
    assert posterior_unnormalized(model, prior, [3.0, -4.0], 2.0) > 0
    with pytest.raises(ValueError):
        posterior_unnormalized(model, prior, [0.0, 0.0], -0.1)


def test_prior_logpdf_matches_scipy():
    from scipy.stats import multivariate_normal

    cov = np.array([[1.0, 0.3], [0.3, 1.5]])
    prior = Prior([0.2, -0.1], SpdMatrix(cov))
    u = np.random.default_rng(8).normal(size=(5, 2))
    np.testing.assert_allclose(prior.logpdf(u), multivariate_normal([0.2, -0.1], cov).logpdf(u), rtol=1e-12)
