"""Module for configuring simulation and Monte Carlo runs

"""

import json
import logging
from pathlib import Path

from .errors import ConfigError, ParseError
from .estimators import PEER_MEANS, FitOptions
from .monte_carlo import ESTIMATORS
from .simulate import Design

module_logger = logging.getLogger("peerqml.peerqml_config")
module_logger.debug("loading peerqml_config")

TOP_LEVEL_KEYS = ("design", "estimators", "fit", "reps", "seed", "output")
TABLE_FORMATS = ("markdown", "csv")


def _check_keys(values, known, path):

    if not isinstance(values, dict):
        raise ConfigError(path, "expecting an object")

    for key in values:
        if key not in known:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


class RunConfig:
    """Run configuration

    It holds the design of the simulation, the estimators to fit,
    the optimizer options, the number of replications, the master
    seed and the output settings. Every ``load_*`` method validates
    its section and returns the instance, so they can be chained.

    Parameters
    ----------
    preset : str, optional
        name of a design preset used as starting point

    """

    def __init__(self, preset="baseline"):

        self.logger = logging.getLogger("peerqml.peerqml_config.RunConfig")
        self.logger.info("creating an instance of RunConfig")

        self.load_design({"preset": preset} if preset else {})
        self.load_estimators()
        self.load_fit()
        self.load_reps()
        self.load_seed()
        self.load_output()

    def load_design(self, design=None):
        """
        It defines the data generating process

        Parameters
        ----------
        design : dict
            Design fields, optionally with a ``preset`` key

        """

        self.design = Design.from_dict({} if design is None else design)

        return self

    def load_estimators(self, estimators=None):
        """
        It defines the estimators fitted in each replication

        Parameters
        ----------
        estimators : dict
            ``names`` (subset of qmle, cmle, cv) and ``cv_spec``

        """

        estimators = {} if estimators is None else estimators
        _check_keys(estimators, ("names", "cv_spec"), "estimators")

        names = estimators.get("names", ["qmle", "cmle"])
        if not isinstance(names, list) or not names:
            raise ConfigError("estimators.names", "expecting a list of names")
        for name in names:
            if name not in ESTIMATORS:
                raise ConfigError(
                    "estimators.names", f"unknown estimator {name}"
                )

        cv_spec = estimators.get("cv_spec", "leave_out_mean")
        if cv_spec not in PEER_MEANS:
            raise ConfigError("estimators.cv_spec", f"must be in {PEER_MEANS}")

        self.estimators = list(names)
        self.cv_spec = cv_spec

        return self

    def load_fit(self, fit=None):
        """
        It defines the optimizer options

        Parameters
        ----------
        fit : dict
            FitOptions fields

        """

        self.fit = FitOptions.from_dict({} if fit is None else fit)

        return self

    def load_reps(self, reps=1000):
        """
        It defines the number of Monte Carlo replications

        Parameters
        ----------
        reps : int

        """

        if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
            raise ConfigError("reps", "must be a positive integer")

        self.reps = reps

        return self

    def load_seed(self, seed=0):
        """
        It defines the master seed

        Parameters
        ----------
        seed : int
            non negative integer below 2**64

        """

        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("seed", "must be an integer")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed", "must lie in [0, 2**64)")

        self.seed = seed

        return self

    def load_output(self, output=None):
        """
        It defines the output settings

        Parameters
        ----------
        output : dict
            ``format`` (markdown or csv) and ``dump_reps`` (path of
            the per replication dump or null)

        """

        output = {} if output is None else output
        _check_keys(output, ("format", "dump_reps"), "output")

        table_format = output.get("format", "markdown")
        if table_format not in TABLE_FORMATS:
            raise ConfigError("output.format", f"must be in {TABLE_FORMATS}")

        self.table_format = table_format
        self.dump_reps = output.get("dump_reps")

        return self

    def to_dict(self):

        return {
            "design": self.design.to_dict(),
            "estimators": {"names": self.estimators, "cv_spec": self.cv_spec},
            "fit": self.fit.to_dict(),
            "reps": self.reps,
            "seed": self.seed,
            "output": {
                "format": self.table_format,
                "dump_reps": self.dump_reps,
            },
        }

    def generate_conf(self, file_path="peerqml_config.json"):
        """
        It writes the current configuration as JSON

        Parameters
        ----------
        file_path : str

        """

        Path(file_path).write_text(json.dumps(self.to_dict(), indent=2))
        self.logger.info(f"configuration written to {file_path}")

        return self

    def load_conf_file(self, file_path="peerqml_config.json"):
        """
        It loads and validates a configuration file

        Parameters
        ----------
        file_path : str
            path to the JSON configuration

        """

        file_path = Path(file_path)
        if not file_path.is_file():
            self.logger.error(f"configuration file not found: {file_path}")
            raise FileNotFoundError(file_path)

        try:
            config_dic = json.loads(file_path.read_text())
        except json.JSONDecodeError as err:
            self.logger.error(f"invalid json in {file_path}")
            raise ParseError(f"{file_path}: {err}") from err

        _check_keys(config_dic, TOP_LEVEL_KEYS, "")

        self.load_design(config_dic.get("design", {}))
        self.load_estimators(config_dic.get("estimators"))
        self.load_fit(config_dic.get("fit"))
        self.load_reps(config_dic.get("reps", 1000))
        self.load_seed(config_dic.get("seed", 0))
        self.load_output(config_dic.get("output"))

        return self
