"""Monte Carlo harness for the peer effects estimators

"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
import xarray as xr

from .data_attributes import LoadAttributes
from .errors import DegenerateTestError, DomainError, NonConvergenceError
from .estimators import FitOptions, fit_cmle, fit_graham_cv, fit_qmle
from .inference import wald_test
from .likelihood import parameter_names
from .simulate import derive_seed, gen_dataset

module_logger = logging.getLogger("peerqml.monte_carlo")
module_logger.debug("loading monte_carlo")

ESTIMATORS = ("qmle", "cmle", "cv")

STATISTICS = {
    "median": "Median",
    "rob_std_dev": "Rob.Std.Dev.",
    "std_dev": "Std.Dev.",
    "est_std_dev": "Est.Std.Dev.",
    "rejection_rate": "Rej.",
}


@dataclass(eq=False)
class McSummary:
    """Summary of the replications of one estimator

    Parameters
    ----------
    estimator : str

    stats : xarray.Dataset
        median, rob_std_dev, std_dev, est_std_dev, rejection_rate
        and true_value along the ``parameter`` dimension

    replications : pd.DataFrame
        one row per replication with estimates (``est_*``),
        standard errors (``se_*``) and Wald rejections (``rej_*``)

    """

    estimator: str
    stats: xr.Dataset
    replications: pd.DataFrame
    reps_total: int
    reps_converged: int
    reps_boundary: int
    reps_failed: int

    def to_dict(self):
        return {
            "estimator": self.estimator,
            "reps_total": self.reps_total,
            "reps_converged": self.reps_converged,
            "reps_boundary": self.reps_boundary,
            "reps_failed": self.reps_failed,
            "statistics": {
                name: self.stats[name].to_series().to_dict()
                for name in list(STATISTICS) + ["true_value"]
            },
        }


def robust_std(values):
    """Interquartile range divided by 1.35

    Quartiles use linear interpolation between order statistics.

    """

    values = np.asarray(values, dtype=float)
    if values.size == 0:
        module_logger.error("robust_std() of an empty vector")
        raise DomainError("robust_std needs at least one value")

    q25, q75 = np.percentile(values, [25, 75])

    return (q75 - q25) / 1.35


def _fit_one(name, dataset, truth_names, truth, opts, cv_spec):
    """Fit one estimator on one simulated dataset"""

    row = {"estimator": name, "status": "converged", "boundary": False}

    if name == "cv":
        try:
            result = fit_graham_cv(dataset, spec=cv_spec)
        except ValueError as err:
            module_logger.warning(f"cv failed: {err}")
            row["status"] = "failed"
            return row
        row["est_lambda"] = result.lam
        row["est_sigma_alpha2"] = result.sigma_alpha2
        return row

    fit = fit_qmle if name == "qmle" else fit_cmle
    try:
        estimate = fit(dataset, opts)
    except NonConvergenceError as err:
        row["status"] = "nonconverged"
        estimate = err.best
        if estimate is None:
            return row
    except ValueError as err:
        module_logger.warning(f"{name} failed: {err}")
        row["status"] = "failed"
        return row

    row["boundary"] = estimate.boundary_sigma_alpha
    values = estimate.values
    std_err = estimate.std_err
    for i, parameter in enumerate(estimate.names):
        row[f"est_{parameter}"] = values[i]
        row[f"se_{parameter}"] = std_err[i]
        try:
            test = wald_test(
                estimate, parameter, truth[truth_names.index(parameter)]
            )
            row[f"rej_{parameter}"] = float(test.reject05)
        except DegenerateTestError:
            row[f"rej_{parameter}"] = np.nan

    return row


def _replicate(job):
    """Simulate one dataset and fit every requested estimator"""

    design, estimators, opts, cv_spec, k, seed = job

    data = gen_dataset(design, seed)
    names = parameter_names(design.J, data.dataset.z_names)
    truth = data.truth.to_vector()

    rows = []
    for name in estimators:
        row = _fit_one(name, data.dataset, names, truth, opts, cv_spec)
        row.update({"rep": k, "seed": seed})
        rows.append(row)

    return rows


def summarize_replications(estimator, replications, names, truth):
    """Median, robust and sample standard deviations and rejection rates

    Only converged replications enter the statistics.

    Parameters
    ----------
    estimator : str

    replications : pd.DataFrame
        rows of a single estimator

    names : list of str
        parameter names

    truth : np.ndarray
        true parameter values, in the order of names

    Returns
    -------
    McSummary

    """

    converged = replications[replications["status"] == "converged"]

    def column(prefix, name):
        key = f"{prefix}_{name}"
        if key not in converged:
            return np.array([])
        return np.sort(converged[key].dropna().to_numpy(dtype=float))

    stats = {key: [] for key in STATISTICS}
    for name in names:
        values = column("est", name)
        std_err = column("se", name)
        rejections = column("rej", name)

        if values.size == 0:
            for key in STATISTICS:
                stats[key].append(np.nan)
            continue

        stats["median"].append(np.median(values))
        stats["rob_std_dev"].append(robust_std(values))
        stats["std_dev"].append(
            np.std(values, ddof=1) if values.size > 1 else 0.0
        )
        stats["est_std_dev"].append(
            np.median(std_err) if std_err.size else np.nan
        )
        stats["rejection_rate"].append(
            rejections.mean() if rejections.size else np.nan
        )

    ds = xr.Dataset(
        {
            key: ("parameter", np.array(values, dtype=float))
            for key, values in stats.items()
        }
    )
    ds["true_value"] = ("parameter", np.asarray(truth, dtype=float))
    ds = ds.assign_coords(parameter=list(names))
    LoadAttributes(
        ds,
        title="Monte Carlo summary",
        extra={"estimator": estimator, "reps": len(replications)},
    )

    return McSummary(
        estimator=estimator,
        stats=ds,
        replications=replications.reset_index(drop=True),
        reps_total=len(replications),
        reps_converged=len(converged),
        reps_boundary=int(converged["boundary"].sum()),
        reps_failed=int((replications["status"] != "converged").sum()),
    )


def run_mc(
    design,
    estimators=("qmle",),
    reps=1000,
    master_seed=0,
    threads=None,
    opts=None,
    cv_spec="leave_out_mean",
):
    """Run a Monte Carlo experiment

    Replication k simulates a dataset with seed
    derive_seed(master_seed, k) and fits every requested estimator
    on it. Results do not depend on the number of threads.

    Parameters
    ----------
    design : Design

    estimators : sequence of str
        subset of ``qmle``, ``cmle`` and ``cv``

    reps : int

    master_seed : int

    threads : int, optional
        worker processes, all logical cores by default, 1 runs
        the replications inline

    opts : FitOptions, optional

    cv_spec : str
        peer mean specification of the variance contrast estimator

    Returns
    -------
    dict
        estimator name to McSummary

    """

    if int(reps) < 1:
        module_logger.error(f"run_mc() with reps={reps}")
        raise DomainError("reps must be at least 1")

    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        module_logger.error(f"unknown estimators: {sorted(unknown)}")
        raise ValueError(f"estimators must be among {ESTIMATORS}")

    opts = FitOptions() if opts is None else opts
    threads = (os.cpu_count() or 1) if threads is None else int(threads)
    estimators = tuple(estimators)

    jobs = [
        (design, estimators, opts, cv_spec, k, derive_seed(master_seed, k))
        for k in range(int(reps))
    ]
    module_logger.info(f"running {len(jobs)} replications on {threads}")

    if threads == 1:
        results = [_replicate(job) for job in jobs]
    else:
        chunksize = max(1, len(jobs) // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replicate, jobs, chunksize=chunksize))

    frame = pd.DataFrame([row for rows in results for row in rows])

    names = parameter_names(design.J, design.schema.z_names)
    truth = design.delta_true.to_vector()

    summaries = {}
    for name in estimators:
        rows = frame[frame["estimator"] == name]
        summary = summarize_replications(name, rows, names, truth)
        module_logger.info(
            f"{name}: {summary.reps_converged}/{summary.reps_total} converged"
        )
        summaries[name] = summary

    return summaries


def _table_frame(summaries):

    blocks = []
    for name, summary in summaries.items():
        stats = summary.stats
        block = pd.DataFrame(
            {
                label: stats[key].to_series()
                for key, label in STATISTICS.items()
            }
        ).T
        block.index = pd.MultiIndex.from_product(
            [[name], block.index], names=["estimator", "statistic"]
        )
        blocks.append(block)

    return pd.concat(blocks).rename_axis(columns=None)


def emit_table(summaries, fmt="markdown"):
    """Render Monte Carlo summaries as a table

    Parameters
    ----------
    summaries : dict
        estimator name to McSummary

    fmt : str
        ``markdown`` (3 decimals, one block per estimator, parameters
        an estimator does not cover are left out) or ``csv`` (17
        significant digits, rows (estimator, statistic), columns
        parameters)

    Returns
    -------
    str

    """

    frame = _table_frame(summaries)

    if fmt == "csv":
        return frame.to_csv(float_format="%.17g")

    if fmt != "markdown":
        module_logger.error(f"unknown table format: {fmt}")
        raise ValueError("fmt must be markdown or csv")

    lines = []
    for name, block in frame.groupby(level="estimator", sort=False):
        block = block.droplevel("estimator").dropna(axis=1, how="all")
        columns = list(block.columns)
        lines.append(f"### {name}")
        lines.append("")
        lines.append("| | " + " | ".join(columns) + " |")
        lines.append("|---" * (len(columns) + 1) + "|")
        for label, row in block.iterrows():
            cells = ["" if np.isnan(v) else f"{v:.3f}" for v in row]
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
        lines.append("")

    return "\n".join(lines)
