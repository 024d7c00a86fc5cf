"""Sandwich covariance, residual moments and Wald tests

"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .errors import (
    DegenerateTestError,
    NegativeVarianceError,
    SingularInformationError,
)
from .likelihood import optimal_weight_phi

module_logger = logging.getLogger("peerqml.inference")
module_logger.debug("loading inference")

INFORMATION_CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class HigherMoments:
    """Third and fourth moments of the group and idiosyncratic errors

    Negative fourth moment estimates are kept as they are.

    """

    mu3_alpha: float
    mu4_alpha: float
    mu3_eps: np.ndarray
    mu4_eps: np.ndarray

    def __post_init__(self):

        for name in ("mu3_eps", "mu4_eps"):
            object.__setattr__(
                self,
                name,
                np.atleast_1d(np.asarray(getattr(self, name), dtype=float)),
            )

    @classmethod
    def gaussian(cls, theta):
        """Moments of normal errors with the variances of theta"""

        return cls(
            mu3_alpha=0.0,
            mu4_alpha=3 * theta.sigma_alpha2**2,
            mu3_eps=np.zeros(theta.J),
            mu4_eps=3 * theta.sigma_eps2**2,
        )

    def to_dict(self):
        return {
            "mu3_alpha": self.mu3_alpha,
            "mu4_alpha": self.mu4_alpha,
            "mu3_eps": self.mu3_eps.tolist(),
            "mu4_eps": self.mu4_eps.tolist(),
        }


@dataclass(frozen=True, eq=False)
class VcovResult:
    """Information matrices and the sandwich covariance

    Parameters
    ----------
    gamma_hat : np.ndarray
        estimated expected negative Hessian, per observation

    upsilon_hat : np.ndarray
        estimated score variance, per observation

    sandwich : np.ndarray
        Gamma^-1 Upsilon Gamma^-1 / N, NaN on the excluded coordinates

    std_err : np.ndarray

    moments : HigherMoments

    warnings : list of str

    """

    gamma_hat: np.ndarray
    upsilon_hat: np.ndarray
    sandwich: np.ndarray
    std_err: np.ndarray
    moments: HigherMoments
    warnings: list = field(default_factory=list)


@dataclass(frozen=True)
class WaldResult:

    stat: float
    pvalue: float
    reject05: bool


@dataclass(frozen=True, eq=False)
class Residuals:
    """Group means and within deviations of the structural residuals

    u_dot is stored flat, group after group, in Dataset order.

    """

    u_bar: np.ndarray
    u_dot: np.ndarray
    m: np.ndarray
    category: np.ndarray

    def by_group(self):
        return np.split(self.u_dot, np.cumsum(self.m)[:-1])


def residuals(d, delta):
    """Residuals u = y - lam * y_loo - z beta split by group

    Parameters
    ----------
    d : Dataset

    delta : Delta

    Returns
    -------
    Residuals

    """

    m = np.array([g.m for g in d.groups])
    starts = np.concatenate([[0], np.cumsum(m)[:-1]])
    y = np.concatenate([g.y for g in d.groups])
    z = np.vstack([g.z for g in d.groups])

    m_each = np.repeat(m, m)
    y_loo = (np.repeat(np.add.reduceat(y, starts), m) - y) / (m_each - 1)
    u = y - delta.theta.lam * y_loo - z @ delta.beta

    u_bar = np.add.reduceat(u, starts) / m

    return Residuals(
        u_bar=u_bar,
        u_dot=u - np.repeat(u_bar, m),
        m=m,
        category=np.array([g.category for g in d.groups]),
    )


def estimate_moments34(d, delta):
    """Third and fourth moment estimates from the residuals

    Idiosyncratic moments are averaged within each category and
    group effect moments over all groups.

    Returns
    -------
    HigherMoments

    """

    theta = delta.theta
    res = residuals(d, delta)

    m = res.m.astype(float)
    j = res.category - 1
    sigma2 = theta.sigma_eps2[j]
    sigma_alpha2 = theta.sigma_alpha2
    starts = np.concatenate([[0], np.cumsum(res.m)[:-1]])
    u_bar = res.u_bar

    def group_mean(values):
        return np.add.reduceat(values, starts) / m

    mean_u3 = group_mean(res.u_dot**3)
    mean_u2 = group_mean(res.u_dot**2)
    mean_u4 = group_mean(res.u_dot**4)

    with np.errstate(divide="ignore", invalid="ignore"):
        f_eps3 = np.where(
            res.m == 2,
            mean_u2 * u_bar / (1 / m - 1 / m**2),
            mean_u3 / (1 - 3 / m + 2 / m**2),
        )
    f_alpha3 = u_bar**3 - f_eps3 / m**2

    f_eps4 = (
        m**3
        / (m**3 - 4 * m**2 + 6 * m - 3)
        * (mean_u4 - 3 * (m - 1) * (2 * m - 3) * sigma2**2 / m**3)
    )
    f_alpha4 = (
        u_bar**4
        - f_eps4 / m**3
        - 3 * (m - 1) * sigma2**2 / m**3
        - 6 * sigma_alpha2 * sigma2 / m
    )

    count = np.bincount(j, minlength=theta.J)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu3_eps = np.bincount(j, weights=f_eps3, minlength=theta.J) / count
        mu4_eps = np.bincount(j, weights=f_eps4, minlength=theta.J) / count

    return HigherMoments(
        mu3_alpha=float(f_alpha3.mean()),
        mu4_alpha=float(f_alpha4.mean()),
        mu3_eps=mu3_eps,
        mu4_eps=mu4_eps,
    )


def moment_condition_warnings(hm, theta):
    """Check that the score variance can be positive definite

    The condition is mu4 - sigma^4 > mu3^2 / sigma^2 for the
    idiosyncratic errors of every category and for the group effect.

    """

    messages = []
    for j, (mu3, mu4, sigma2) in enumerate(
        zip(hm.mu3_eps, hm.mu4_eps, theta.sigma_eps2), start=1
    ):
        if not mu4 - sigma2**2 > mu3**2 / sigma2:
            messages.append(
                f"moment condition for a positive definite score variance "
                f"fails in category {j}: mu4 - sigma^4 <= mu3^2 / sigma^2"
            )

    sigma_alpha2 = theta.sigma_alpha2
    if sigma_alpha2 > 0 and not (
        hm.mu4_alpha - sigma_alpha2**2 > hm.mu3_alpha**2 / sigma_alpha2
    ):
        messages.append(
            "moment condition for a positive definite score variance "
            "fails for the group effect"
        )

    for message in messages:
        module_logger.warning(message)

    return messages


def _cells(d):
    """Group indices of every (size, category) cell"""

    stats = d.stats
    keys = np.column_stack([stats.m.astype(int), stats.category])
    cells, inverse = np.unique(keys, axis=0, return_inverse=True)

    return [
        (int(m), int(j), np.flatnonzero(inverse.ravel() == c))
        for c, (m, j) in enumerate(cells)
    ]


def _cell_psi(m, count, a, sigma_alpha2, z_bar_sum, zz_sum, zbar_outer, hm, j):
    """Covariance of the stacked moment blocks summed over a cell"""

    k = m - 1
    n_z = z_bar_sum.shape[0]
    v = sigma_alpha2 + a / m

    mu3 = hm.mu3_eps[j - 1]
    excess = hm.mu4_eps[j - 1] - 3 * a**2
    excess_alpha = hm.mu4_alpha - 3 * sigma_alpha2**2

    psi = np.zeros((2 + 2 * n_z, 2 + 2 * n_z))
    psi[0, 0] = count * (2 * k * a**2 + excess * k**2 / m)
    psi[0, 1] = psi[1, 0] = count * excess * k / m**2
    psi[1, 1] = count * (2 * v**2 + excess_alpha + excess / m**3)

    zw = slice(2, 2 + n_z)
    zb = slice(2 + n_z, 2 + 2 * n_z)

    psi[zb, 0] = psi[0, zb] = mu3 * k / m * z_bar_sum
    psi[zb, 1] = psi[1, zb] = (hm.mu3_alpha + mu3 / m**2) * z_bar_sum
    psi[zw, zw] = a * zz_sum
    psi[zb, zb] = v * zbar_outer

    return psi


def upsilon_hat(d, delta, hm):
    """Estimated variance of the score per observation

    Parameters
    ----------
    d : Dataset

    delta : Delta

    hm : HigherMoments

    Returns
    -------
    np.ndarray
        (2 + J + k_Z) square matrix

    """

    stats = d.stats
    theta = delta.theta
    size = 2 + theta.J + delta.beta.shape[0]
    upsilon = np.zeros((size, size))

    for m, j, index in _cells(d):
        a = theta.sigma_eps2[j - 1]
        z_bar = stats.z_bar[index]
        psi = _cell_psi(
            m,
            index.size,
            a,
            theta.sigma_alpha2,
            z_bar.sum(axis=0),
            stats.zz_within[index].sum(axis=0),
            z_bar.T @ z_bar,
            hm,
            j,
        )
        phi = optimal_weight_phi(m, j, delta)
        upsilon += phi @ psi @ phi.T

    return upsilon / d.N


def gamma_hat(d, delta):
    """Estimated information matrix per observation

    It is the score variance under normal errors, so the
    information equality holds by construction.

    """

    return upsilon_hat(d, delta, HigherMoments.gaussian(delta.theta))


def _as_index(parameters, size):

    if parameters is None:
        return np.arange(size)

    parameters = np.asarray(parameters)
    if parameters.dtype == bool:
        return np.flatnonzero(parameters)

    return parameters.astype(int)


def sandwich_vcov(d, delta, moments=None, parameters=None):
    """Sandwich covariance Gamma^-1 Upsilon Gamma^-1 / N

    Parameters
    ----------
    d : Dataset

    delta : Delta

    moments : HigherMoments, optional
        third and fourth moments, estimated from the residuals
        when not given

    parameters : array_like, optional
        boolean mask or indices of the coordinates kept in the
        inversion, e.g. to leave out sigma_alpha2 at the boundary

    Returns
    -------
    VcovResult

    """

    if moments is None:
        moments = estimate_moments34(d, delta)

    gamma = gamma_hat(d, delta)
    upsilon = upsilon_hat(d, delta, moments)
    size = gamma.shape[0]
    index = _as_index(parameters, size)

    gamma_sub = gamma[np.ix_(index, index)]
    upsilon_sub = upsilon[np.ix_(index, index)]

    condition = np.linalg.cond(gamma_sub)
    if not condition < INFORMATION_CONDITION_LIMIT:
        module_logger.error(f"information matrix with cond={condition:.3e}")
        raise SingularInformationError(
            f"information matrix is singular, condition number {condition:.3e}"
        )

    gamma_inv = np.linalg.inv(gamma_sub)
    sandwich_sub = gamma_inv @ upsilon_sub @ gamma_inv / d.N
    sandwich_sub = 0.5 * (sandwich_sub + sandwich_sub.T)

    diagonal = np.diag(sandwich_sub)
    if np.any(diagonal < 0):
        module_logger.error("sandwich covariance with negative variance")
        raise NegativeVarianceError(
            "estimated variance is negative, check the moment estimates"
        )

    sandwich = np.full((size, size), np.nan)
    sandwich[np.ix_(index, index)] = sandwich_sub

    messages = moment_condition_warnings(moments, delta.theta)
    for message in messages:
        warnings.warn(message, RuntimeWarning, stacklevel=2)

    return VcovResult(
        gamma_hat=gamma,
        upsilon_hat=upsilon,
        sandwich=sandwich,
        std_err=np.sqrt(np.diag(sandwich)),
        moments=moments,
        warnings=messages,
    )


def wald_test(e, index, null_value):
    """Single coordinate Wald test against a chi-squared(1)

    Parameters
    ----------
    e : Estimate

    index : int or str
        position in the parameter vector or parameter name

    null_value : float

    Returns
    -------
    WaldResult

    """

    if isinstance(index, str):
        if index not in e.names:
            module_logger.error(f"unknown parameter: {index}")
            raise KeyError(index)
        index = e.names.index(index)

    estimate = e.delta.to_vector()[index]
    variance = e.vcov[index, index]

    if not (np.isfinite(variance) and variance > 0):
        module_logger.error(f"wald_test() with variance {variance}")
        raise DegenerateTestError(
            f"variance of {e.names[index]} is zero or undefined"
        )

    stat = (estimate - null_value) ** 2 / variance
    pvalue = scipy.stats.chi2.sf(stat, df=1)

    return WaldResult(
        stat=float(stat), pvalue=float(pvalue), reject05=bool(pvalue < 0.05)
    )
