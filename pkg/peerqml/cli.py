"""Console script for peerqml

Exit codes: 0 success, 1 not identified (identify), 2 usage, schema
or parse error, 3 input/output error, 4 identification failure,
5 non-convergence.

"""

import logging
from pathlib import Path

import click
import pandas as pd

from .data_attributes import package_version
from .data_operator import check_identification
from .errors import (
    CollinearityError,
    ConfigError,
    IdentificationError,
    NonConvergenceError,
    OutOfRangeError,
    WeakIdentificationError,
)
from .estimators import (
    PEER_MEANS,
    FitOptions,
    fit_cmle,
    fit_graham_cv,
    fit_qmle,
)
from .io import read_groups_csv, write_groups_csv, write_json
from .likelihood import parameter_names
from .monte_carlo import emit_table, run_mc
from .peerqml_config import TABLE_FORMATS, RunConfig
from .simulate import DESIGN_PRESETS, gen_dataset

module_logger = logging.getLogger("peerqml.cli")
module_logger.debug("loading cli")

EXIT_NOT_IDENTIFIED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_IDENTIFICATION = 4
EXIT_NONCONVERGENCE = 5

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _exit(code, message):

    click.echo(f"Error: {message}", err=True)
    raise SystemExit(code)


def _load_config(config_path):

    try:
        return RunConfig(preset=None).load_conf_file(config_path)
    except ConfigError as err:
        _exit(EXIT_USAGE, f"invalid configuration, {err}")
    except OSError as err:
        _exit(EXIT_IO, f"cannot read {config_path}: {err}")
    except ValueError as err:
        _exit(EXIT_USAGE, f"invalid configuration: {err}")


def _load_data(data_path, J=None):

    try:
        return read_groups_csv(data_path, J=J)
    except OSError as err:
        _exit(EXIT_IO, f"cannot read {data_path}: {err}")
    except ValueError as err:
        _exit(EXIT_USAGE, f"cannot build the dataset: {err}")


def _emit(text, out_path=None):

    if out_path is None:
        click.echo(text)
        return

    try:
        Path(out_path).write_text(text + "\n")
    except OSError as err:
        _exit(EXIT_IO, f"cannot write {out_path}: {err}")


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase verbosity.")
@click.version_option(package_version(), prog_name="peerqml")
def main(verbose):
    """Peer effects estimation for grouped data"""

    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)],
        format="%(name)s %(levelname)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, help="Run config.")
@click.option("--out", "out_path", required=True, help="CSV to write.")
@click.option("--seed", type=int, default=None, help="Overrides the config.")
def simulate(config_path, out_path, seed):
    """Simulate a dataset and its truth sidecar"""

    config = _load_config(config_path)
    seed = config.seed if seed is None else seed

    data = gen_dataset(config.design, seed)
    names = parameter_names(config.design.J, data.dataset.z_names)
    truth = dict(zip(names, data.truth.to_vector()))

    out_path = Path(out_path)
    try:
        write_groups_csv(data.dataset, out_path)
        write_json(
            {"seed": seed, "truth": truth, "design": config.design.to_dict()},
            out_path.with_suffix(".truth.json"),
        )
    except OSError as err:
        _exit(EXIT_IO, f"cannot write {out_path}: {err}")

    module_logger.info(f"{data.dataset.N} rows written to {out_path}")


@main.command()
@click.option("--data", "data_path", required=True, help="Input CSV.")
@click.option(
    "--estimator",
    type=click.Choice(["qmle", "cmle", "cv"]),
    default="qmle",
    show_default=True,
)
@click.option("--J", "J", type=int, default=None, help="Categories.")
@click.option(
    "--cv-spec",
    type=click.Choice(PEER_MEANS),
    default="leave_out_mean",
    show_default=True,
)
@click.option("--force", is_flag=True, help="Skip the identification check.")
@click.option("--seed", type=int, default=0, help="Seed of the restarts.")
@click.option("--workers", type=int, default=1, help="Restart threads.")
@click.option("--out", "out_path", default=None, help="JSON to write.")
def estimate(data_path, estimator, J, cv_spec, force, seed, workers, out_path):
    """Fit an estimator to a dataset"""

    d = _load_data(data_path, J)

    try:
        opts = FitOptions(seed=seed, force=force, workers=workers)
    except ConfigError as err:
        _exit(EXIT_USAGE, str(err))

    report = check_identification(d)

    try:
        if estimator == "cv":
            document = fit_graham_cv(d, spec=cv_spec).to_dict()
            document["identification"] = report.to_dict()
        else:
            fit = fit_qmle if estimator == "qmle" else fit_cmle
            document = fit(d, opts).to_dict()
    except NonConvergenceError as err:
        document = {"estimator": estimator, "converged": False}
        if err.best is not None:
            document = err.best.to_dict()
        document["error"] = str(err)
        _emit(write_json(document), out_path)
        _exit(EXIT_NONCONVERGENCE, str(err))
    except (
        IdentificationError,
        WeakIdentificationError,
        OutOfRangeError,
        CollinearityError,
    ) as err:
        _exit(EXIT_IDENTIFICATION, str(err))
    except ValueError as err:
        _exit(EXIT_USAGE, str(err))

    _emit(write_json(document), out_path)


@main.command()
@click.option("--config", "config_path", required=True, help="Run config.")
@click.option("--out", "out_path", default=None, help="Table to write.")
@click.option("--reps", type=int, default=None, help="Overrides the config.")
@click.option("--seed", type=int, default=None, help="Overrides the config.")
@click.option("--threads", type=int, default=None, help="Worker processes.")
@click.option("--dump-reps", default=None, help="CSV of every replication.")
@click.option(
    "--format", "table_format", type=click.Choice(TABLE_FORMATS), default=None
)
def mc(config_path, out_path, reps, seed, threads, dump_reps, table_format):
    """Run a Monte Carlo experiment"""

    config = _load_config(config_path)

    try:
        if reps is not None:
            config.load_reps(reps)
        if seed is not None:
            config.load_seed(seed)
        if threads is not None and threads < 1:
            raise ConfigError("threads", "must be at least 1")
    except ConfigError as err:
        _exit(EXIT_USAGE, str(err))

    summaries = run_mc(
        config.design,
        estimators=config.estimators,
        reps=config.reps,
        master_seed=config.seed,
        threads=threads,
        opts=config.fit,
        cv_spec=config.cv_spec,
    )

    text = emit_table(summaries, fmt=table_format or config.table_format)
    _emit(text, out_path)

    if out_path is not None:
        counts = {name: s.to_dict() for name, s in summaries.items()}
        try:
            write_json(
                {"config": config.to_dict(), "summaries": counts},
                Path(out_path).with_suffix(".summary.json"),
            )
        except OSError as err:
            _exit(EXIT_IO, f"cannot write the summary: {err}")

    dump_reps = dump_reps or config.dump_reps
    if dump_reps is not None:
        frame = pd.concat([s.replications for s in summaries.values()])
        try:
            frame.to_csv(dump_reps, index=False, float_format="%.17g")
        except OSError as err:
            _exit(EXIT_IO, f"cannot write {dump_reps}: {err}")


@main.command()
@click.option("--data", "data_path", required=True, help="Input CSV.")
@click.option("--J", "J", type=int, default=None, help="Categories.")
def identify(data_path, J):
    """Report the group size and category variation of a dataset"""

    d = _load_data(data_path, J)
    report = check_identification(d)

    click.echo("groups by size (rows) and category (columns)")
    click.echo(report.sizes_by_category.to_string())
    click.echo(f"scenario_a: {report.scenario_a}")
    click.echo(f"scenario_b: {report.scenario_b}")
    for note in report.notes:
        click.echo(f"note: {note}")
    click.echo(f"identified: {report.identified}")

    if not report.identified:
        raise SystemExit(EXIT_NOT_IDENTIFIED)


@main.command("init-config")
@click.option(
    "--preset",
    type=click.Choice(sorted(DESIGN_PRESETS)),
    default="baseline",
    show_default=True,
)
@click.option("--out", "out_path", required=True, help="JSON to write.")
def init_config(preset, out_path):
    """Write a default run configuration"""

    try:
        RunConfig(preset=preset).generate_conf(out_path)
    except OSError as err:
        _exit(EXIT_IO, f"cannot write {out_path}: {err}")


if __name__ == "__main__":
    main()
