"""Gaussian group likelihood, its derivatives and moment functions

All evaluations run on the per group statistics of a Dataset
(Dataset.stats) and on GroupBlock algebra, so the cost is linear
in the number of groups and no N x N matrix is ever built.

Parameter vectors are ordered as

    (lambda, sigma_alpha2, sigma_eps2_1, ..., sigma_eps2_J, beta)

"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .block_algebra import (
    block_inv,
    block_logdet,
    block_mul,
    omega_block,
    structural_block,
    within_between_quadform,
)
from .data_operator import within_between
from .errors import CollinearityError, DomainError

module_logger = logging.getLogger("peerqml.likelihood")
module_logger.debug("loading likelihood")

LOG_2PI = np.log(2 * np.pi)
CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class Theta:
    """Variance side parameters

    Parameters
    ----------
    lam : float
        endogenous peer effect, in (-1, 1)

    sigma_alpha2 : float
        variance of the group effect, non negative

    sigma_eps2 : array_like
        idiosyncratic variance of each category, positive

    """

    lam: float
    sigma_alpha2: float
    sigma_eps2: np.ndarray

    def __post_init__(self):

        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "sigma_alpha2", float(self.sigma_alpha2))
        object.__setattr__(
            self,
            "sigma_eps2",
            np.atleast_1d(np.asarray(self.sigma_eps2, dtype=float)),
        )

    @property
    def J(self):
        return self.sigma_eps2.shape[0]

    def to_vector(self):
        return np.concatenate([[self.lam, self.sigma_alpha2], self.sigma_eps2])

    @classmethod
    def from_vector(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values[0], values[1], values[2:])


@dataclass(frozen=True, eq=False)
class Delta:
    """Full parameter vector (theta, beta)"""

    theta: Theta
    beta: np.ndarray

    def __post_init__(self):

        object.__setattr__(
            self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float))
        )

    def to_vector(self):
        return np.concatenate([self.theta.to_vector(), self.beta])

    @classmethod
    def from_vector(cls, values, J):
        values = np.asarray(values, dtype=float)
        return cls(Theta.from_vector(values[: 2 + J]), values[2 + J :])


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Moment blocks of one group, stacked as (w, b, zw, zb)"""

    chi_w: float
    chi_b: float
    chi_zw: np.ndarray
    chi_zb: np.ndarray

    def stack(self):
        return np.concatenate(
            [[self.chi_w, self.chi_b], self.chi_zw, self.chi_zb]
        )


def parameter_names(J, z_names):
    """Names of the entries of a Delta vector"""

    return (
        ["lambda", "sigma_alpha2"]
        + [f"sigma_eps2_{j}" for j in range(1, J + 1)]
        + [f"beta_{name}" for name in z_names]
    )


def check_admissible(theta):
    """Raise a DomainError when theta leaves the parameter space"""

    if not abs(theta.lam) < 1:
        module_logger.error(f"lambda={theta.lam} outside (-1, 1)")
        raise DomainError("lambda must lie in (-1, 1)")

    if not theta.sigma_alpha2 >= 0:
        module_logger.error(f"sigma_alpha2={theta.sigma_alpha2} negative")
        raise DomainError("sigma_alpha2 must be non negative")

    if not np.all(theta.sigma_eps2 > 0):
        module_logger.error("non positive sigma_eps2")
        raise DomainError("sigma_eps2 must be positive")


@dataclass(frozen=True, eq=False)
class _GroupTerms:

    structural: object
    omega: object
    uu: np.ndarray
    u_bar: np.ndarray
    uy: np.ndarray
    zu: np.ndarray


def _group_terms(stats, theta, beta):
    """Residual statistics u_dot'u_dot, u_bar, u_dot'y_dot and z_dot'u_dot"""

    check_admissible(theta)

    structural = structural_block(stats.m, theta.lam)
    omega = omega_block(
        stats.m, theta.sigma_eps2[stats.category - 1], theta.sigma_alpha2
    )

    phi = structural.p
    uy = phi * stats.yy_within - stats.zy_within @ beta
    zu = phi[:, None] * stats.zy_within - stats.zz_within @ beta

    return _GroupTerms(
        structural=structural,
        omega=omega,
        uu=phi * uy - zu @ beta,
        u_bar=structural.s * stats.y_bar - stats.z_bar @ beta,
        uy=uy,
        zu=zu,
    )


def log_likelihood(d, delta):
    """Gaussian log likelihood ln L_N(delta)

    Parameters
    ----------
    d : Dataset

    delta : Delta

    Returns
    -------
    float

    """

    terms = _group_terms(d.stats, delta.theta, delta.beta)
    inv_omega = block_inv(terms.omega)

    logdet = block_logdet(
        block_mul(block_mul(terms.structural, terms.structural), inv_omega)
    )
    quad = within_between_quadform(
        inv_omega, terms.uu, terms.u_bar, terms.u_bar
    )

    return -0.5 * d.N * LOG_2PI + 0.5 * np.sum(logdet) - 0.5 * np.sum(quad)


def solve_normal_equations(a, b):
    """Solve a k x k system after checking its condition number

    The condition number is taken on the matrix rescaled to unit
    diagonal, so that it does not depend on the units of the
    regressors.

    """

    diag = np.diag(a)
    if np.any(diag <= 0):
        module_logger.error("regressor without variation")
        raise CollinearityError("a regressor has no variation")

    scale = 1.0 / np.sqrt(diag)
    condition = np.linalg.cond(a * np.outer(scale, scale))
    if not condition < CONDITION_LIMIT:
        module_logger.error(f"normal equations with cond={condition:.3e}")
        raise CollinearityError(
            f"regressors are collinear, condition number {condition:.3e}"
        )

    return scipy.linalg.lu_solve(scipy.linalg.lu_factor(a), b)


def beta_gls(d, theta):
    """GLS coefficient (Z' Omega^-1 Z)^-1 Z' Omega^-1 (I - lam W) Y"""

    check_admissible(theta)
    stats = d.stats

    structural = structural_block(stats.m, theta.lam)
    inv_omega = block_inv(
        omega_block(
            stats.m, theta.sigma_eps2[stats.category - 1], theta.sigma_alpha2
        )
    )

    between = inv_omega.s * stats.m
    a = np.einsum("r,rij->ij", inv_omega.p, stats.zz_within) + np.einsum(
        "r,ri,rj->ij", between, stats.z_bar, stats.z_bar
    )
    b = np.einsum(
        "r,ri->i", inv_omega.p * structural.p, stats.zy_within
    ) + np.einsum("r,ri->i", between * structural.s * stats.y_bar, stats.z_bar)

    return solve_normal_equations(a, b)


def concentrated_loglik(d, theta):
    """Q_N(theta) = ln L_N(theta, beta_gls(theta)) / N"""

    delta = Delta(theta, beta_gls(d, theta))

    return log_likelihood(d, delta) / d.N


def profile_loglik(d, theta, with_hessian=False):
    """Concentrated objective with its derivatives

    At beta_gls(theta) the beta block of the score vanishes, so the
    gradient of Q_N is the theta block of the score divided by N,
    and its Hessian is the Schur complement of the beta block.

    Returns
    -------
    value : float
    gradient : np.ndarray
    hess : np.ndarray or None
    beta : np.ndarray

    """

    beta = beta_gls(d, theta)
    delta = Delta(theta, beta)
    n_theta = 2 + theta.J

    value = log_likelihood(d, delta) / d.N
    gradient = score(d, delta)[:n_theta] / d.N

    hess = None
    if with_hessian:
        full = hessian(d, delta)
        h_tt = full[:n_theta, :n_theta]
        h_tb = full[:n_theta, n_theta:]
        h_bb = full[n_theta:, n_theta:]
        hess = (h_tt - h_tb @ np.linalg.solve(h_bb, h_tb.T)) / d.N

    return value, gradient, hess, beta


def score(d, delta):
    """Analytic gradient of ln L_N with respect to delta"""

    stats = d.stats
    theta = delta.theta
    terms = _group_terms(stats, theta, delta.beta)

    m = stats.m
    k = m - 1
    lam = theta.lam
    a = terms.omega.p
    c = terms.omega.s
    u_bar = terms.u_bar
    j = stats.category - 1

    s_lam = np.sum(
        k / (k + lam)
        - 1 / (1 - lam)
        - terms.uy / (k * a)
        + m * u_bar * stats.y_bar / c
    )
    s_alpha = np.sum(-m / (2 * c) + m**2 * u_bar**2 / (2 * c**2))
    s_eps = np.bincount(
        j,
        weights=-k / (2 * a)
        - 1 / (2 * c)
        + terms.uu / (2 * a**2)
        + m * u_bar**2 / (2 * c**2),
        minlength=theta.J,
    )
    s_beta = np.sum(
        terms.zu / a[:, None] + (m * u_bar / c)[:, None] * stats.z_bar, axis=0
    )

    return np.concatenate([[s_lam, s_alpha], s_eps, s_beta])


def hessian(d, delta):
    """Analytic Hessian of ln L_N with respect to delta"""

    stats = d.stats
    theta = delta.theta
    terms = _group_terms(stats, theta, delta.beta)

    m = stats.m
    k = m - 1
    lam = theta.lam
    a = terms.omega.p
    c = terms.omega.s
    u_bar = terms.u_bar
    y_bar = stats.y_bar
    z_bar = stats.z_bar
    j = stats.category - 1

    n_j = theta.J
    n_z = delta.beta.shape[0]
    eps = slice(2, 2 + n_j)
    beta = slice(2 + n_j, 2 + n_j + n_z)
    h = np.zeros((2 + n_j + n_z, 2 + n_j + n_z))

    h[0, 0] = np.sum(
        -k / (k + lam) ** 2
        - 1 / (1 - lam) ** 2
        - stats.yy_within / (k**2 * a)
        - m * y_bar**2 / c
    )
    h[0, 1] = np.sum(-(m**2) * u_bar * y_bar / c**2)
    h[0, eps] = np.bincount(
        j,
        weights=terms.uy / (k * a**2) - m * u_bar * y_bar / c**2,
        minlength=n_j,
    )
    h[0, beta] = np.sum(
        stats.zy_within / (k * a)[:, None] - (m * y_bar / c)[:, None] * z_bar,
        axis=0,
    )

    h[1, 1] = np.sum(m**2 / (2 * c**2) - m**3 * u_bar**2 / c**3)
    h[1, eps] = np.bincount(
        j, weights=m / (2 * c**2) - m**2 * u_bar**2 / c**3, minlength=n_j
    )
    h[1, beta] = np.sum(-((m**2 * u_bar / c**2)[:, None]) * z_bar, axis=0)

    h[eps, eps] = np.diag(
        np.bincount(
            j,
            weights=k / (2 * a**2)
            + 1 / (2 * c**2)
            - terms.uu / a**3
            - m * u_bar**2 / c**3,
            minlength=n_j,
        )
    )
    eps_beta = np.zeros((n_j, n_z))
    np.add.at(
        eps_beta,
        j,
        -terms.zu / (a**2)[:, None] - (m * u_bar / c**2)[:, None] * z_bar,
    )
    h[eps, beta] = eps_beta

    h[beta, beta] = -np.einsum(
        "r,rij->ij", 1 / a, stats.zz_within
    ) - np.einsum("r,ri,rj->ij", m / c, z_bar, z_bar)

    upper = np.triu(h, 1)

    return np.triu(h) + upper.T


def moment_chi(g, delta):
    """Moment blocks chi_r of a single group

    Parameters
    ----------
    g : GroupData

    delta : Delta

    Returns
    -------
    MomentVector

    """

    theta = delta.theta
    wb = within_between(g)
    m = g.m
    k = m - 1
    sigma_eps2 = theta.sigma_eps2[g.category - 1]

    u_dot = (k + theta.lam) / k * wb.y_dot - wb.z_dot @ delta.beta
    u_bar = (1 - theta.lam) * wb.y_bar - wb.z_bar @ delta.beta

    return MomentVector(
        chi_w=u_dot @ u_dot - k * sigma_eps2,
        chi_b=u_bar**2 - theta.sigma_alpha2 - sigma_eps2 / m,
        chi_zw=wb.z_dot.T @ u_dot,
        chi_zb=wb.z_bar * u_bar,
    )


def moment_chi_matrix(d, delta):
    """Stacked moment blocks of all groups, one row per group"""

    stats = d.stats
    terms = _group_terms(stats, delta.theta, delta.beta)
    a = terms.omega.p
    c = terms.omega.s

    return np.column_stack(
        [
            terms.uu - (stats.m - 1) * a,
            terms.u_bar**2 - c / stats.m,
            terms.zu,
            stats.z_bar * terms.u_bar[:, None],
        ]
    )


def optimal_weight_phi(m, j, delta):
    """Weights mapping the moment blocks of a group onto the score

    The score of a group equals -phi @ chi, with chi stacked as
    (chi_w, chi_b, chi_zw, chi_zb).

    Parameters
    ----------
    m : int
        group size

    j : int
        category label in 1..J

    delta : Delta

    Returns
    -------
    np.ndarray
        (2 + J + k_Z) x (2 + 2 k_Z) matrix

    """

    theta = delta.theta
    beta = delta.beta
    n_j = theta.J
    n_z = beta.shape[0]

    k = m - 1
    lam = theta.lam
    a = theta.sigma_eps2[j - 1]
    c = a + m * theta.sigma_alpha2

    within = 1 / ((k + lam) * a)
    between = -m / ((1 - lam) * c)

    phi = np.zeros((2 + n_j + n_z, 2 + 2 * n_z))
    phi[0, 0] = within
    phi[0, 1] = between
    phi[0, 2 : 2 + n_z] = within * beta
    phi[0, 2 + n_z :] = between * beta

    phi[1, 1] = -(m**2) / (2 * c**2)

    phi[1 + j, 0] = -1 / (2 * a**2)
    phi[1 + j, 1] = -m / (2 * c**2)

    rows = slice(2 + n_j, 2 + n_j + n_z)
    phi[rows, 2 : 2 + n_z] = -np.eye(n_z) / a
    phi[rows, 2 + n_z :] = -np.eye(n_z) * m / c

    return phi


def moment_nu(g, theta):
    """Combined moment free of sigma_eps2, used by the CV estimator"""

    wb = within_between(g)
    m = g.m
    k = m - 1

    return (
        (1 - theta.lam) ** 2 * wb.y_bar**2
        - theta.sigma_alpha2
        - (k + theta.lam) ** 2 * (wb.y_dot @ wb.y_dot) / (m * k**3)
    )


@dataclass(frozen=True, eq=False)
class _WithinTerms:

    uu: np.ndarray
    uy: np.ndarray
    zu: np.ndarray
    zy: np.ndarray
    zz: np.ndarray


def _within_terms(stats, lam, beta_w, columns):

    if not abs(lam) < 1:
        module_logger.error(f"lambda={lam} outside (-1, 1)")
        raise DomainError("lambda must lie in (-1, 1)")

    columns = np.asarray(columns, dtype=int)
    k = stats.m - 1
    phi = (k + lam) / k
    zy = stats.zy_within[:, columns]
    zz = stats.zz_within[:, columns][:, :, columns]

    uy = phi * stats.yy_within - zy @ beta_w
    zu = phi[:, None] * zy - zz @ beta_w

    return _WithinTerms(uu=phi * uy - zu @ beta_w, uy=uy, zu=zu, zy=zy, zz=zz)


def within_log_likelihood(d, lam, sigma2, beta_w, columns):
    """Conditional (within group) log likelihood

    Parameters
    ----------
    d : Dataset

    lam : float

    sigma2 : float
        common idiosyncratic variance

    beta_w : np.ndarray
        coefficients of the regressors listed in columns

    columns : list of int
        regressors with within group variation

    """

    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")

    terms = _within_terms(d.stats, lam, np.asarray(beta_w, float), columns)
    k = d.stats.m - 1

    return np.sum(
        k * np.log((k + lam) / k)
        - 0.5 * k * (LOG_2PI + np.log(sigma2))
        - terms.uu / (2 * sigma2)
    )


def within_score(d, lam, sigma2, beta_w, columns):
    """Gradient of the within log likelihood in (lam, sigma2, beta_w)"""

    terms = _within_terms(d.stats, lam, np.asarray(beta_w, float), columns)
    k = d.stats.m - 1

    return np.concatenate(
        [
            [
                np.sum(k / (k + lam) - terms.uy / (k * sigma2)),
                np.sum(-k / (2 * sigma2) + terms.uu / (2 * sigma2**2)),
            ],
            terms.zu.sum(axis=0) / sigma2,
        ]
    )


def within_hessian(d, lam, sigma2, beta_w, columns):
    """Hessian of the within log likelihood in (lam, sigma2, beta_w)"""

    stats = d.stats
    terms = _within_terms(stats, lam, np.asarray(beta_w, float), columns)
    k = stats.m - 1
    n_z = terms.zy.shape[1]

    h = np.zeros((2 + n_z, 2 + n_z))
    h[0, 0] = np.sum(
        -k / (k + lam) ** 2 - stats.yy_within / (k**2 * sigma2)
    )
    h[0, 1] = np.sum(terms.uy / k) / sigma2**2
    h[0, 2:] = np.sum(terms.zy / k[:, None], axis=0) / sigma2
    h[1, 1] = np.sum(k / (2 * sigma2**2) - terms.uu / sigma2**3)
    h[1, 2:] = -terms.zu.sum(axis=0) / sigma2**2
    h[2:, 2:] = -terms.zz.sum(axis=0) / sigma2

    upper = np.triu(h, 1)

    return np.triu(h) + upper.T


def within_concentrated(d, lam, columns):
    """Within likelihood with sigma2 and beta_w concentrated out

    Returns
    -------
    value : float
    sigma2 : float
    beta_w : np.ndarray

    """

    stats = d.stats
    columns = np.asarray(columns, dtype=int)
    k = stats.m - 1
    phi = (k + lam) / k

    if columns.size:
        zz = stats.zz_within[:, columns][:, :, columns].sum(axis=0)
        zy = (phi[:, None] * stats.zy_within[:, columns]).sum(axis=0)
        beta_w = solve_normal_equations(zz, zy)
    else:
        beta_w = np.zeros(0)

    terms = _within_terms(stats, lam, beta_w, columns)
    sigma2 = terms.uu.sum() / k.sum()
    value = within_log_likelihood(d, lam, sigma2, beta_w, columns)

    return value, sigma2, beta_w
