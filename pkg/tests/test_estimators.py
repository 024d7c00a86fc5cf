import json
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

import peerqml as pq
from peerqml.errors import (
    CategoryError,
    CollinearityError,
    ConfigError,
    DegenerateTestError,
    DimensionError,
    DomainError,
    IdentificationError,
    OutOfRangeError,
    WeakIdentificationError,
)
from peerqml.estimators import (
    CvMoments,
    FitOptions,
    fit_cmle,
    fit_graham_cv,
    fit_qmle,
    population_cv_moments,
    population_moments,
    solve_graham_cv,
    solve_within_wald,
)
from peerqml.inference import wald_test
from peerqml.io import write_json
from peerqml.likelihood import (
    Theta,
    concentrated_loglik,
    log_likelihood,
    profile_loglik,
    score,
    within_score,
)

from .data import simulated

LAMBDAS = [-0.5, 0.0, 0.5, 0.9]


def test_fit_options_validation():

    with pytest.raises(ConfigError) as err:
        FitOptions(grad_tol=0.0)

    assert err.value.path == "fit.grad_tol"


def test_fit_options_unknown_key():

    with pytest.raises(ConfigError) as err:
        FitOptions.from_dict({"max_iter": 10, "tolerance": 1e-3})

    assert err.value.path == "fit.tolerance"


def test_fit_options_bad_value():

    with pytest.raises(ConfigError):
        FitOptions.from_dict({"multistart": "many"})


def test_fit_options_round_trip():

    opts = FitOptions(multistart=3, sigma_eps2_bounds=(1e-4, 10.0))

    assert FitOptions.from_dict(opts.to_dict()) == opts


@pytest.fixture(scope="module")
def baseline():
    return simulated("baseline", seed=1, R=200).dataset


@pytest.fixture(scope="module")
def baseline_qmle(baseline):
    return fit_qmle(baseline)


def test_fit_qmle_baseline(baseline, baseline_qmle):

    e = baseline_qmle

    assert e.converged
    assert e.names == pq.parameter_names(1, baseline.z_names)
    assert abs(e.delta.theta.lam - 0.5) < 0.15
    assert np.all(np.isfinite(e.std_err))
    assert np.all(e.std_err > 0)
    assert e.loglik == pytest.approx(log_likelihood(baseline, e.delta))


def test_fit_qmle_first_order_condition(baseline, baseline_qmle):

    _, _, _, beta = profile_loglik(baseline, baseline_qmle.delta.theta)
    gradient = score(baseline, baseline_qmle.delta)

    assert np.max(np.abs(gradient)) < FitOptions().grad_tol
    np.testing.assert_allclose(beta, baseline_qmle.delta.beta)


def test_fit_qmle_threads_do_not_change_result(baseline, baseline_qmle):

    e = fit_qmle(baseline, FitOptions(workers=2))

    assert np.array_equal(e.values, baseline_qmle.values)


def test_fit_qmle_scale_equivariance(baseline, baseline_qmle):

    scaled = pq.Dataset(
        [replace(g, y=3.0 * g.y) for g in baseline.groups],
        J=baseline.J,
        schema=baseline.schema,
    )
    e = fit_qmle(scaled)

    factor = np.concatenate(
        [[1.0, 9.0], np.full(baseline.J, 9.0), np.full(baseline.k_z, 3.0)]
    )
    np.testing.assert_allclose(
        e.values, factor * baseline_qmle.values, rtol=1e-6
    )
    np.testing.assert_allclose(
        e.std_err, factor * baseline_qmle.std_err, rtol=1e-5
    )


def test_fit_qmle_row_and_group_order(baseline):

    frame = baseline.to_frame()
    order = np.random.default_rng(8).permutation(len(frame))

    a = fit_qmle(pq.build_dataset(frame, J=baseline.J))
    b = fit_qmle(pq.build_dataset(frame.iloc[order], J=baseline.J))

    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.std_err, b.std_err)


def test_fit_qmle_beats_lattice():

    d = simulated("baseline", seed=9, R=50).dataset
    e = fit_qmle(d)

    lattice = max(
        concentrated_loglik(d, Theta(lam, sigma_alpha2, [sigma_eps2]))
        for lam in np.linspace(-0.95, 0.95, 25)
        for sigma_alpha2 in np.linspace(0.0, 1.2, 25)
        for sigma_eps2 in np.linspace(0.2, 2.5, 25)
    )

    assert e.loglik / d.N >= lattice - 1e-12


def test_qmle_more_precise_than_cmle(baseline, baseline_qmle):

    cmle = fit_cmle(baseline)

    assert baseline_qmle.std_err[0] < cmle.std_err[0]


def test_estimate_outputs(baseline_qmle):

    ds = baseline_qmle.to_dataset()
    assert list(ds["parameter"].values) == baseline_qmle.names
    assert ds["estimate"].attrs["long_name"] == "point estimate"
    assert ds.attrs["estimator"] == "qmle"

    document = json.loads(write_json(baseline_qmle.to_dict()))
    assert document["estimator"] == "qmle"
    assert document["identification"]["identified"] is True
    assert set(document["parameters"]) == set(baseline_qmle.names)


def test_fit_qmle_heteroscedastic_fixed_size():

    d = simulated("hetero_fixed_size", seed=2, R=1600).dataset
    e = fit_qmle(d)

    assert e.converged
    assert abs(e.delta.theta.lam - 0.5) < 0.15
    np.testing.assert_allclose(e.delta.theta.sigma_eps2, [0.5, 1.5], atol=0.3)


def test_fit_qmle_not_identified():

    d = simulated(
        "baseline", seed=3, R=50, size_dist={"kind": "fixed", "m": 4}
    ).dataset

    with pytest.raises(IdentificationError):
        fit_qmle(d)


def test_fit_qmle_options_type(baseline):

    with pytest.raises(TypeError):
        fit_qmle(baseline, {"multistart": 1})


def test_fit_cmle_baseline():

    d = simulated("baseline", seed=4, R=400).dataset
    e = fit_cmle(d)

    assert e.converged
    assert e.dropped == ["const", "x3_1"]
    assert abs(e.delta.theta.lam - 0.5) < 0.3

    values = dict(zip(e.names, e.values))
    assert np.isnan(values["sigma_alpha2"])
    assert np.isnan(values["beta_const"])
    assert np.isnan(values["beta_x3_1"])
    assert np.isfinite(values["beta_x1_1"])
    assert np.isfinite(e.std_err[0])

    std_err = dict(zip(e.names, e.std_err))
    assert np.isfinite(values["sigma_eps2_1"])
    assert np.isnan(std_err["sigma_eps2_1"])
    with pytest.raises(DegenerateTestError):
        wald_test(e, "sigma_eps2_1", 1.0)
    assert wald_test(e, "lambda", 0.5).pvalue > 0

    beta_w = e.values[[4, 5]]
    lam, sigma2 = e.delta.theta.lam, values["sigma_eps2_1"]
    gradient = within_score(d, lam, sigma2, beta_w, [1, 2])
    assert np.max(np.abs(gradient)) < FitOptions().grad_tol


def test_fit_cmle_pools_categories():

    d = simulated("hetero_halves", seed=5, R=200).dataset

    with pytest.warns(RuntimeWarning, match="pools"):
        e = fit_cmle(d)

    sigma_eps2 = e.delta.theta.sigma_eps2
    assert sigma_eps2[0] == sigma_eps2[1]


def test_fit_cmle_without_within_variation():

    groups = [
        pq.GroupData.from_characteristics(f"g{r}", 1, np.full(m, float(r)))
        for r, m in enumerate([2, 3, 4, 5])
    ]

    with pytest.raises(CollinearityError):
        fit_cmle(pq.Dataset(groups))


def test_fit_cmle_needs_size_variation():

    d = simulated(
        "baseline", seed=6, R=50, size_dist={"kind": "fixed", "m": 4}
    ).dataset

    with pytest.raises(IdentificationError):
        fit_cmle(d)


@pytest.mark.parametrize("spec", ["leave_out_mean", "full_mean"])
@pytest.mark.parametrize("lam", LAMBDAS)
def test_solve_graham_cv_population(spec, lam):

    moments = population_cv_moments([3, 5], lam, (0.5, 1.5), 0.25, None, spec)
    result = solve_graham_cv(moments, spec=spec)

    assert result.lam == pytest.approx(lam, abs=1e-10)
    assert result.sigma_alpha2 == pytest.approx(0.25, abs=1e-10)
    assert result.sizes == [3, 5]


def test_solve_graham_cv_full_mean_without_shared_size():

    lam = 0.3
    rows = []
    for m, j, variance in [(3, 1, 0.5), (5, 2, 1.5)]:
        varw, varb = population_moments(m, lam, variance, 0.25, "full_mean")
        rows.append(
            {
                "m": m,
                "category": j,
                "count": 50,
                "ybar2": float(varb),
                "yy_within": float((m - 1) * varw),
            }
        )

    result = solve_graham_cv(CvMoments(pd.DataFrame(rows)), "full_mean")

    assert result.lam == pytest.approx(lam, abs=1e-10)
    assert result.sizes == []


def test_solve_graham_cv_equal_variances():

    moments = population_cv_moments([3, 5], 0.5, (1.0, 1.0), 0.25)

    with pytest.raises(WeakIdentificationError):
        solve_graham_cv(moments)


def test_solve_graham_cv_needs_two_categories():

    moments = population_cv_moments([3, 5], 0.5, (1.0,), 0.25)

    with pytest.raises(CategoryError):
        solve_graham_cv(moments)


def test_solve_graham_cv_unknown_spec():

    moments = population_cv_moments([3], 0.5, (0.5, 1.5), 0.25)

    with pytest.raises(ValueError):
        solve_graham_cv(moments, spec="median")


def test_fit_graham_cv_simulated():

    d = simulated(
        "hetero_fixed_size", seed=7, R=4000, covariates=False
    ).dataset
    result = fit_graham_cv(d)

    assert abs(result.lam - 0.5) < 0.1
    assert result.sizes == [4]
    assert result.to_dict()["parameters"]["lambda"]["estimate"] == result.lam


def test_fit_graham_cv_with_covariates():

    d = simulated("hetero_fixed_size", seed=8, R=20).dataset

    with pytest.raises(DimensionError):
        fit_graham_cv(d)


def test_fit_graham_cv_single_category():

    d = simulated("baseline", seed=9, R=20, covariates=False).dataset

    with pytest.raises(CategoryError):
        fit_graham_cv(d)


def test_cv_moments_table():

    d = simulated(
        "hetero_fixed_size", seed=10, R=40, covariates=False
    ).dataset
    table = CvMoments.from_dataset(d).table

    assert list(table["m"]) == [4, 4]
    assert list(table["category"]) == [1, 2]
    assert table["count"].sum() == 40


@pytest.mark.parametrize("lam", LAMBDAS)
def test_solve_within_wald_population(lam):

    varw_r, _ = population_moments(3, lam, 0.7, 0.25)
    varw_s, _ = population_moments(5, lam, 0.7, 0.25)

    assert solve_within_wald(varw_r, varw_s, 3, 5) == pytest.approx(
        lam, abs=1e-10
    )


def test_solve_within_wald_equal_sizes():

    with pytest.raises(DomainError):
        solve_within_wald(1.0, 1.0, 4, 4)


def test_solve_within_wald_non_positive_variance():

    with pytest.raises(DomainError):
        solve_within_wald(0.0, 1.0, 3, 5)


def test_solve_within_wald_no_root():

    with pytest.raises(OutOfRangeError):
        solve_within_wald(1000.0, 1.0, 3, 5)


def test_population_moments_full_mean():

    varw, varb = population_moments(4, 0.5, 0.8, 0.2, "full_mean")

    assert varw == pytest.approx(0.8)
    assert varb == pytest.approx((0.2 + 0.8 / 4) / 0.25)
