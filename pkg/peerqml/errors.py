"""Exceptions raised by peerqml

All of them derive from builtin exceptions, so code that
catches ``ValueError`` or ``RuntimeError`` keeps working.

"""

import logging

module_logger = logging.getLogger("peerqml.errors")
module_logger.debug("loading errors")


class DimensionError(ValueError):
    """Sizes of blocks, vectors or matrices do not match"""


class DomainError(ValueError):
    """A parameter lies outside its admissible region"""


class SingularBlockError(ValueError):
    """A pI* + sJ* block with p or s equal to zero"""


class SingletonGroupError(ValueError):
    """A group with a single member"""


class CategoryError(ValueError):
    """A category label outside 1..J"""


class ParseError(ValueError):
    """Tabular input that cannot be turned into a Dataset"""


class CollinearityError(ValueError):
    """Regressors do not have full column rank"""


class IdentificationError(ValueError):
    """The design does not identify the variance parameters"""


class WeakIdentificationError(ValueError):
    """Variance contrasts are too small to solve for lambda"""


class OutOfRangeError(ValueError):
    """No root of a moment equation inside (-1, 1)"""


class DegenerateTestError(ValueError):
    """A Wald test with zero or undefined variance"""


class SingularInformationError(ValueError):
    """The estimated information matrix cannot be inverted"""


class NegativeVarianceError(ValueError):
    """The sandwich covariance has a negative diagonal entry"""


class NonConvergenceError(RuntimeError):
    """The optimizer did not satisfy the first order condition

    Parameters
    ----------
    message : str
        description of the failure

    best : object
        best iterate found, usually an Estimate

    """

    def __init__(self, message, best=None):

        super().__init__(message)
        self.best = best


class ConfigError(ValueError):
    """Invalid run configuration

    Parameters
    ----------
    path : str
        dotted path to the offending key, e.g. ``design.size_dist.lo``

    message : str
        what is wrong with it

    """

    def __init__(self, path, message):

        super().__init__(f"{path}: {message}")
        self.path = path
