import numpy as np
import pandas as pd
import pytest

from peerqml.errors import DomainError
from peerqml.monte_carlo import (
    emit_table,
    robust_std,
    run_mc,
    summarize_replications,
)
from peerqml.simulate import design_preset

from .data import slow


def test_robust_std():

    assert robust_std([1.0, 2.0, 3.0, 4.0, 5.0]) == pytest.approx(2 / 1.35)


def test_robust_std_normal_sample():

    values = np.random.default_rng(0).standard_normal(200000)

    assert robust_std(values) == pytest.approx(1.0, abs=0.01)


def test_robust_std_empty():

    with pytest.raises(DomainError):
        robust_std([])


def test_summarize_replications():

    replications = pd.DataFrame(
        {
            "estimator": "qmle",
            "status": ["converged", "converged", "converged", "failed"],
            "boundary": [False, True, False, False],
            "est_lambda": [0.4, 0.5, 0.6, np.nan],
            "se_lambda": [0.1, 0.2, 0.3, np.nan],
            "rej_lambda": [0.0, 1.0, 0.0, np.nan],
        }
    )

    summary = summarize_replications(
        "qmle", replications, ["lambda", "sigma_alpha2"], [0.5, 0.25]
    )
    stats = summary.stats.sel(parameter="lambda")

    assert summary.reps_total == 4
    assert summary.reps_converged == 3
    assert summary.reps_boundary == 1
    assert summary.reps_failed == 1
    assert float(stats["median"]) == pytest.approx(0.5)
    assert float(stats["std_dev"]) == pytest.approx(0.1)
    assert float(stats["est_std_dev"]) == pytest.approx(0.2)
    assert float(stats["rejection_rate"]) == pytest.approx(1 / 3)
    assert float(stats["true_value"]) == 0.5
    median = summary.stats["median"].sel(parameter="sigma_alpha2")
    assert np.isnan(float(median))


@pytest.fixture(scope="module")
def small_mc():
    return run_mc(
        design_preset("baseline", R=60),
        estimators=("qmle", "cmle"),
        reps=4,
        master_seed=3,
        threads=1,
    )


def test_run_mc_counts(small_mc):

    assert list(small_mc) == ["qmle", "cmle"]
    for summary in small_mc.values():
        assert summary.reps_total == 4
        assert len(summary.replications) == 4
        assert list(summary.replications["rep"]) == [0, 1, 2, 3]
        assert summary.stats.sizes["parameter"] == 7


def test_run_mc_independent_of_processes(small_mc):

    parallel = run_mc(
        design_preset("baseline", R=60),
        estimators=("qmle", "cmle"),
        reps=4,
        master_seed=3,
        threads=2,
    )

    for name, summary in small_mc.items():
        pd.testing.assert_frame_equal(
            summary.replications, parallel[name].replications
        )


def test_run_mc_variance_contrast():

    summaries = run_mc(
        design_preset("hetero_fixed_size", R=200, covariates=False),
        estimators=("cv",),
        reps=3,
        threads=1,
    )
    summary = summaries["cv"]

    assert summary.reps_total == 3
    assert "est_lambda" in summary.replications


def test_run_mc_needs_replications():

    with pytest.raises(DomainError):
        run_mc(design_preset("baseline"), reps=0, threads=1)


def test_run_mc_unknown_estimator():

    with pytest.raises(ValueError):
        run_mc(design_preset("baseline"), estimators=("ols",), threads=1)


def test_emit_table_markdown(small_mc):

    text = emit_table(small_mc)

    assert "### qmle" in text
    assert "### cmle" in text
    assert "| Median |" in text
    assert "| Rob.Std.Dev. |" in text
    # sigma_alpha2 is not estimated by the within likelihood
    cmle_block = text.split("### cmle")[1]
    assert "sigma_alpha2" not in cmle_block


def test_emit_table_csv(small_mc):

    lines = emit_table(small_mc, fmt="csv").splitlines()

    assert lines[0].startswith("estimator,statistic,lambda")
    assert len(lines) == 1 + 2 * 5


def test_emit_table_unknown_format(small_mc):

    with pytest.raises(ValueError):
        emit_table(small_mc, fmt="latex")


def lambda_stats(summary):
    return summary.stats.sel(parameter="lambda")


@slow
def test_acceptance_baseline():

    summaries = run_mc(
        design_preset("baseline", R=100),
        estimators=("qmle", "cmle"),
        reps=2000,
    )
    qmle = lambda_stats(summaries["qmle"])
    cmle = lambda_stats(summaries["cmle"])

    assert abs(float(qmle["median"]) - 0.498) <= 0.010
    assert float(qmle["rob_std_dev"]) == pytest.approx(0.049, rel=0.15)
    assert 0.035 <= float(qmle["rejection_rate"]) <= 0.080
    assert abs(float(cmle["median"]) - 0.524) <= 0.03


@slow
def test_acceptance_x1_equals_x2():

    summaries = run_mc(
        design_preset("baseline_x1_eq_x2", R=50),
        estimators=("qmle", "cmle"),
        reps=2000,
    )

    assert 0.55 <= float(lambda_stats(summaries["cmle"])["median"]) <= 0.64
    assert abs(float(lambda_stats(summaries["qmle"])["median"]) - 0.501) <= (
        0.015
    )


@slow
def test_acceptance_student_t():

    summaries = run_mc(
        design_preset("student_t6", R=400),
        estimators=("qmle", "cmle"),
        reps=2000,
    )

    rejection = float(lambda_stats(summaries["qmle"])["rejection_rate"])
    assert 0.040 <= rejection <= 0.075
    assert float(lambda_stats(summaries["cmle"])["rejection_rate"]) > 0.10


@slow
def test_acceptance_heteroscedastic_fixed_size():

    summaries = run_mc(
        design_preset("hetero_fixed_size", R=1600), reps=1000
    )
    qmle = lambda_stats(summaries["qmle"])

    assert abs(float(qmle["median"]) - 0.499) <= 0.01
    assert float(qmle["rob_std_dev"]) == pytest.approx(0.033, rel=0.20)


@slow
def test_acceptance_standard_errors():

    summaries = run_mc(design_preset("baseline", R=400), reps=2000)
    qmle = lambda_stats(summaries["qmle"])

    assert float(qmle["est_std_dev"]) == pytest.approx(
        float(qmle["std_dev"]), rel=0.15
    )


@slow
def test_acceptance_qmle_more_efficient_than_cmle():

    summaries = run_mc(
        design_preset("baseline", R=200),
        estimators=("qmle", "cmle"),
        reps=2000,
    )

    assert float(lambda_stats(summaries["qmle"])["std_dev"]) <= float(
        lambda_stats(summaries["cmle"])["std_dev"]
    )
