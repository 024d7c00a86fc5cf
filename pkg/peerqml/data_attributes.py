"""Module for writing the result attributes

"""

import logging
from importlib.metadata import PackageNotFoundError, version

module_logger = logging.getLogger("peerqml.data_attributes")
module_logger.debug("loading data_attributes")


def package_version():
    """Installed peerqml version, or a placeholder when running from source"""

    try:
        return version("peerqml")
    except PackageNotFoundError:
        return "unknown"


class LoadAttributes:
    """Attribute writer for estimation and Monte Carlo results

    It defines and writes the global, coordinate and variable
    attributes of a result dataset.

    Parameters
    ----------
    data : xarray.Dataset
        dataset indexed by ``parameter`` created by peerqml

    title : str
        short description stored as global attribute

    extra : dict
        further global attributes, e.g. the estimator name

    Returns
    -------
    data : xarray.Dataset
        the same dataset with its attributes written

    """

    def __init__(self, data, title="Peer effects estimates", extra=None):

        self.logger = logging.getLogger(
            "peerqml.data_attributes.LoadAttributes"
        )
        self.logger.debug("creating an instance of LoadAttributes")

        self.data = data
        self.write_global_attrs(title, extra)
        self.variables_attrs()
        self.write_coords_attrs()
        self.write_variables_attrs()

    def write_global_attrs(self, title, extra=None):
        """Global attribute writer"""

        tmp_att = {
            "title": title,
            "references": f"Generated by peerqml version: {package_version()}",
        }
        if extra is not None:
            tmp_att.update({key: str(value) for key, value in extra.items()})

        self.data.attrs = tmp_att

        return self

    def variables_attrs(self):
        """Variable attributes definitions

        All variables and coordinates attributes are defined here.

        """

        attrs_dic = {}

        attrs_dic["parameter"] = {
            "long_name": "parameter name",
            "comments": "lambda is the endogenous peer effect, "
            "sigma_alpha2 the group effect variance, "
            "sigma_eps2_j the idiosyncratic variance of category j "
            "and beta_* the coefficients of the regressors",
        }

        attrs_dic["parameter_2"] = attrs_dic["parameter"]

        attrs_dic["estimate"] = {
            "long_name": "point estimate",
            "units": "1",
            "comments": "NaN marks parameters the estimator does not cover",
        }

        attrs_dic["std_err"] = {
            "long_name": "standard error",
            "units": "1",
            "comments": "square root of the diagonal of vcov",
        }

        attrs_dic["vcov"] = {
            "long_name": "covariance matrix of the estimates",
            "units": "1",
        }

        attrs_dic["median"] = {
            "long_name": "median of the estimates across replications",
            "units": "1",
        }

        attrs_dic["rob_std_dev"] = {
            "long_name": "robust standard deviation",
            "units": "1",
            "comments": "interquartile range divided by 1.35",
        }

        attrs_dic["std_dev"] = {
            "long_name": "standard deviation across replications",
            "units": "1",
        }

        attrs_dic["est_std_dev"] = {
            "long_name": "median of the estimated standard errors",
            "units": "1",
        }

        attrs_dic["rejection_rate"] = {
            "long_name": "rejection rate of the Wald test at 5%",
            "units": "1",
            "comments": "null hypothesis is the true parameter value",
        }

        attrs_dic["true_value"] = {
            "long_name": "parameter value of the simulation design",
            "units": "1",
        }

        self.attrs_dic = attrs_dic

        return self

    def write_coords_attrs(self):
        """Coordinate attribute writer"""

        for key in self.data.coords:

            try:
                self.data[key].attrs = self.attrs_dic[key]

            except KeyError:
                self.logger.debug(f"coord without attributes: {key}")

        return self

    def write_variables_attrs(self):
        """Variable attribute writer"""

        for key in self.data.keys():

            try:
                self.data[key].attrs = self.attrs_dic[key]

            except KeyError:
                self.logger.debug(f"variable without attributes: {key}")

        return self
