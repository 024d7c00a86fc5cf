"""Closed form algebra for group blocks

Every matrix of the group likelihood has the form

    p * I*_m + s * J*_m,   I*_m = I_m - J*_m,   J*_m = ii'/m

with I*_m and J*_m orthogonal idempotent projections. Products,
inverses and determinants stay in this family, so a block is
fully described by (m, p, s).

The coefficients may be numpy arrays of a common shape, in which
case a single GroupBlock stands for one block per group and all
operations work elementwise.

"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, SingularBlockError

module_logger = logging.getLogger("peerqml.block_algebra")
module_logger.debug("loading block_algebra")

SINGULAR_TOL = 1e-300
DENSE_MAX_SIZE = 12


@dataclass(frozen=True, eq=False)
class GroupBlock:
    """Block matrix p * I*_m + s * J*_m

    Parameters
    ----------
    m : int or np.ndarray
        group size, at least 2

    p : float or np.ndarray
        coefficient on the within projection I*_m

    s : float or np.ndarray
        coefficient on the between projection J*_m

    Examples
    --------
    >>> a = GroupBlock(m=3, p=2.0, s=5.0)
    >>> block_mul(a, block_inv(a))
    GroupBlock(m=3, p=1.0, s=1.0)

    """

    m: object
    p: object
    s: object

    def __post_init__(self):

        if np.any(np.asarray(self.m) < 2):
            module_logger.error("group blocks require m >= 2")
            raise DomainError("group size must be at least 2")

    def __eq__(self, other):

        if not isinstance(other, GroupBlock):
            return NotImplemented

        return (
            np.array_equal(self.m, other.m)
            and np.array_equal(self.p, other.p)
            and np.array_equal(self.s, other.s)
        )

    def densify(self):
        """Dense m x m matrix of a single block

        Only meant for checking the closed forms, so it is
        limited to small groups.

        """

        if np.ndim(self.m) != 0 or np.ndim(self.p) != 0:
            raise DimensionError("only a single block can be densified")

        m = int(self.m)
        if m > DENSE_MAX_SIZE:
            module_logger.error(f"refusing to densify a block with m={m}")
            raise DimensionError(
                f"dense blocks are limited to m <= {DENSE_MAX_SIZE}"
            )

        j_star = np.full((m, m), 1.0 / m)
        i_star = np.eye(m) - j_star

        return self.p * i_star + self.s * j_star

    @classmethod
    def from_dense(cls, a):
        """Recover (m, p, s) from a dense matrix of the family"""

        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError("expecting a square matrix")

        m = a.shape[0]
        total = a.sum() / m

        return cls(m=m, p=(np.trace(a) - total) / (m - 1), s=total)


def _check_same_size(a, b):

    if not np.array_equal(a.m, b.m):
        module_logger.error("block sizes do not match")
        raise DimensionError("blocks of different sizes")


def block_mul(a, b):
    """Product of two blocks of the same size

    The product is commutative since I* and J* are orthogonal
    projections.

    """

    _check_same_size(a, b)

    return GroupBlock(m=a.m, p=a.p * b.p, s=a.s * b.s)


def block_inv(a):
    """Inverse block (1/p) I* + (1/s) J*"""

    if np.any(np.abs(a.p) < SINGULAR_TOL) or np.any(
        np.abs(a.s) < SINGULAR_TOL
    ):
        module_logger.error("block_inv() on a singular block")
        raise SingularBlockError("p or s is zero")

    return GroupBlock(m=a.m, p=1.0 / a.p, s=1.0 / a.s)


def block_logdet(a):
    """Log determinant (m - 1) ln p + ln s"""

    if np.any(np.asarray(a.p) <= 0) or np.any(np.asarray(a.s) <= 0):
        module_logger.error("block_logdet() requires p > 0 and s > 0")
        raise DomainError("log determinant of a non positive block")

    return (np.asarray(a.m) - 1) * np.log(a.p) + np.log(a.s)


def within_between_quadform(a, within_inner, v_bar, w_bar):
    """Quadratic form from group statistics

    Parameters
    ----------
    a : GroupBlock
        block, possibly vectorized over groups

    within_inner : float or np.ndarray
        inner product of the within deviations of v and w

    v_bar, w_bar : float or np.ndarray
        group means of v and w

    Returns
    -------
    float or np.ndarray
        p <v_dot, w_dot> + s m v_bar w_bar

    """

    return a.p * within_inner + a.s * a.m * v_bar * w_bar


def block_quadform(a, v, w):
    """Evaluate v' (p I* + s J*) w through the within/between split"""

    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)

    if v.shape != (a.m,) or w.shape != (a.m,):
        module_logger.error("block_quadform() length mismatch")
        raise DimensionError(
            f"expecting vectors of length {a.m}, got {v.shape} and {w.shape}"
        )

    v_bar = v.mean()
    w_bar = w.mean()

    return within_between_quadform(
        a, np.dot(v - v_bar, w - w_bar), v_bar, w_bar
    )


def structural_block(m, lam):
    """Block of I - lam W for a group with leave-out mean weights

    W = (ii' - I)/(m - 1), so I - lam W has within coefficient
    (m - 1 + lam)/(m - 1) and between coefficient 1 - lam.

    """

    if np.any(np.abs(lam) >= 1):
        module_logger.error(f"structural_block() with lambda={lam}")
        raise DomainError("lambda must lie in (-1, 1)")

    k = np.asarray(m) - 1.0

    return GroupBlock(m=m, p=(k + lam) / k, s=1.0 - lam)


def omega_block(m, sigma_eps2, sigma_alpha2):
    """Block of the error covariance sigma_eps2 I + sigma_alpha2 ii'"""

    if np.any(np.asarray(sigma_eps2) <= 0):
        module_logger.error("omega_block() requires sigma_eps2 > 0")
        raise DomainError("sigma_eps2 must be positive")

    if np.any(np.asarray(sigma_alpha2) < 0):
        module_logger.error("omega_block() requires sigma_alpha2 >= 0")
        raise DomainError("sigma_alpha2 must be non negative")

    return GroupBlock(
        m=m, p=sigma_eps2, s=sigma_eps2 + np.asarray(m) * sigma_alpha2
    )
