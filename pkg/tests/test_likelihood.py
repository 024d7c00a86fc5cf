import numpy as np
import pytest

from peerqml.data_operator import Dataset, GroupData
from peerqml.errors import CollinearityError, DomainError
from peerqml.likelihood import (
    Delta,
    Theta,
    beta_gls,
    check_admissible,
    concentrated_loglik,
    hessian,
    log_likelihood,
    moment_chi,
    moment_chi_matrix,
    moment_nu,
    optimal_weight_phi,
    parameter_names,
    profile_loglik,
    score,
    solve_normal_equations,
    within_concentrated,
    within_hessian,
    within_log_likelihood,
    within_score,
)

from .data import (
    assert_close_scaled,
    central_difference,
    dataset,
    dense_log_likelihood,
    random_dataset,
    random_delta,
    simulated,
    two_category_dataset,
)

DATASETS = [(0, 1), (1, 2), (2, 1), (3, 3), (4, 2)]


def test_parameter_names():

    assert parameter_names(2, ["const", "x1_1"]) == [
        "lambda",
        "sigma_alpha2",
        "sigma_eps2_1",
        "sigma_eps2_2",
        "beta_const",
        "beta_x1_1",
    ]


def test_delta_vector_layout():

    delta = Delta(Theta(0.3, 0.2, [1.0, 2.0]), [4.0, 5.0])
    values = delta.to_vector()

    np.testing.assert_allclose(values, [0.3, 0.2, 1.0, 2.0, 4.0, 5.0])
    np.testing.assert_allclose(
        Delta.from_vector(values, 2).beta, delta.beta
    )


@pytest.mark.parametrize(
    "theta",
    [Theta(1.0, 0.1, [1.0]), Theta(0.1, -0.1, [1.0]), Theta(0.1, 0.1, [0.0])],
)
def test_check_admissible(theta):

    with pytest.raises(DomainError):
        check_admissible(theta)


@pytest.mark.parametrize(
    "y,expected",
    [
        ([0.0, 0.0], -np.log(2 * np.pi)),
        ([1.0, 0.0], -np.log(2 * np.pi) - 0.5),
    ],
)
def test_log_likelihood_standard_normal_pair(y, expected):

    d = Dataset([GroupData.from_characteristics("a", 1, y)])
    delta = Delta(Theta(0.0, 0.0, [1.0]), [0.0])

    assert log_likelihood(d, delta) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("seed,J", DATASETS)
def test_log_likelihood_matches_dense(seed, J):

    d = random_dataset(seed=seed, J=J)
    for k in range(4):
        delta = random_delta(100 * seed + k, J, d.k_z)
        assert log_likelihood(d, delta) == pytest.approx(
            dense_log_likelihood(d, delta), rel=1e-10
        )


@pytest.mark.parametrize("seed,J", DATASETS)
def test_score_matches_finite_differences(seed, J):

    d = random_dataset(seed=seed, J=J)
    for k in range(4):
        delta = random_delta(100 * seed + k, J, d.k_z)
        numeric = central_difference(
            lambda x: log_likelihood(d, Delta.from_vector(x, J)),
            delta.to_vector(),
        )
        assert_close_scaled(score(d, delta), numeric, rtol=1e-6)


@pytest.mark.parametrize("seed,J", DATASETS)
def test_hessian_matches_finite_differences(seed, J):

    d = random_dataset(seed=seed, J=J)
    for k in range(4):
        delta = random_delta(100 * seed + k, J, d.k_z)
        numeric = central_difference(
            lambda x: score(d, Delta.from_vector(x, J)), delta.to_vector()
        )
        h = hessian(d, delta)
        assert_close_scaled(h, numeric, rtol=1e-5)
        np.testing.assert_array_equal(h, h.T)


def test_score_moment_identity(two_category_dataset):

    d = two_category_dataset
    delta = random_delta(11, d.J, d.k_z)

    weighted = sum(
        optimal_weight_phi(g.m, g.category, delta)
        @ moment_chi(g, delta).stack()
        for g in d.groups
    )
    s = score(d, delta)

    assert np.max(np.abs(s + weighted)) / np.max(np.abs(s)) < 1e-8


def test_moment_chi_matrix_rows(dataset):

    delta = random_delta(12, dataset.J, dataset.k_z)
    chi = moment_chi_matrix(dataset, delta)

    assert chi.shape == (dataset.R, 2 + 2 * dataset.k_z)
    for r in (0, 5, dataset.R - 1):
        np.testing.assert_allclose(
            chi[r], moment_chi(dataset.groups[r], delta).stack(), atol=1e-12
        )


def test_beta_gls_zeroes_beta_score(two_category_dataset):

    d = two_category_dataset
    theta = random_delta(13, d.J, d.k_z).theta
    s = score(d, Delta(theta, beta_gls(d, theta)))

    assert np.max(np.abs(s[2 + d.J :])) < 1e-9


def test_concentrated_loglik_is_maximum_over_beta(dataset):

    theta = random_delta(14, dataset.J, dataset.k_z).theta
    beta = beta_gls(dataset, theta)
    value = concentrated_loglik(dataset, theta)

    assert value == pytest.approx(
        log_likelihood(dataset, Delta(theta, beta)) / dataset.N
    )
    for shift in np.eye(dataset.k_z) * 0.01:
        shifted = log_likelihood(dataset, Delta(theta, beta + shift))
        assert shifted / dataset.N < value


@pytest.mark.parametrize("seed,J", DATASETS[:3])
def test_profile_loglik_derivatives(seed, J):

    d = random_dataset(seed=seed, J=J)
    theta = random_delta(seed, J, d.k_z).theta

    value, gradient, hess, beta = profile_loglik(d, theta, with_hessian=True)

    def q(x):
        return concentrated_loglik(d, Theta.from_vector(x))

    def grad(x):
        return profile_loglik(d, Theta.from_vector(x))[1]

    assert value == pytest.approx(q(theta.to_vector()))
    assert_close_scaled(
        gradient, central_difference(q, theta.to_vector()), rtol=1e-6
    )
    assert_close_scaled(
        hess, central_difference(grad, theta.to_vector()), rtol=1e-5
    )
    np.testing.assert_allclose(beta, beta_gls(d, theta))


def test_solve_normal_equations_collinear():

    with pytest.raises(CollinearityError):
        solve_normal_equations(np.ones((2, 2)), np.ones(2))


def test_solve_normal_equations_without_variation():

    with pytest.raises(CollinearityError):
        solve_normal_equations(np.diag([1.0, 0.0]), np.ones(2))


def test_moment_nu_has_zero_mean():

    data = simulated(
        "baseline", seed=3, R=5000, covariates=False, beta=[0.0]
    )
    theta = data.truth.theta

    values = [moment_nu(g, theta) for g in data.dataset.groups]

    assert np.mean(values) == pytest.approx(0.0, abs=0.06)


def test_within_score_and_hessian(dataset):

    columns = [1, 2]
    x0 = np.array([0.3, 0.8, 0.5, -0.2])

    def f(x):
        return within_log_likelihood(dataset, x[0], x[1], x[2:], columns)

    def g(x):
        return within_score(dataset, x[0], x[1], x[2:], columns)

    assert_close_scaled(g(x0), central_difference(f, x0), rtol=1e-6)
    assert_close_scaled(
        within_hessian(dataset, x0[0], x0[1], x0[2:], columns),
        central_difference(g, x0),
        rtol=1e-5,
    )


def test_within_score_moment_form(dataset):

    columns = [1, 2]
    lam, sigma2 = 0.3, 1.4
    beta_w = np.array([0.7, -0.4])

    beta = np.zeros(dataset.k_z)
    beta[columns] = beta_w
    delta = Delta(Theta(lam, 0.5, [sigma2]), beta)

    expected = np.zeros(2 + len(columns))
    for g in dataset.groups:
        chi = moment_chi(g, delta)
        phi = optimal_weight_phi(g.m, g.category, delta)
        # within row of phi: chi_w and the z_dot moments
        expected[0] -= phi[0, 0] * chi.chi_w
        expected[0] -= phi[0, 2 : 2 + dataset.k_z] @ chi.chi_zw
        expected[1] += chi.chi_w / (2 * sigma2**2)
        expected[2:] += chi.chi_zw[columns] / sigma2

    actual = within_score(dataset, lam, sigma2, beta_w, columns)

    assert_close_scaled(actual, expected, rtol=1e-10)


def test_within_concentrated_maximizes(dataset):

    columns = [1, 2]
    value, sigma2, beta_w = within_concentrated(dataset, 0.2, columns)

    assert value == pytest.approx(
        within_log_likelihood(dataset, 0.2, sigma2, beta_w, columns)
    )
    score_at = within_score(dataset, 0.2, sigma2, beta_w, columns)
    np.testing.assert_allclose(score_at[1:], 0.0, atol=1e-8)
    assert (
        within_log_likelihood(dataset, 0.2, 1.1 * sigma2, beta_w, columns)
        < value
    )
