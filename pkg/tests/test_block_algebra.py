import numpy as np
import pytest

from peerqml.block_algebra import (
    GroupBlock,
    block_inv,
    block_logdet,
    block_mul,
    block_quadform,
    omega_block,
    structural_block,
    within_between_quadform,
)
from peerqml.errors import DimensionError, DomainError, SingularBlockError

from .data import leave_out_matrix


def random_blocks(m, n, seed=0):
    rng = np.random.default_rng(seed)
    coefficients = rng.uniform(0.1, 3.0, size=(n, 4))
    signs = rng.choice([-1.0, 1.0], size=(n, 4))

    return [
        (GroupBlock(m, *c[:2]), GroupBlock(m, *c[2:]))
        for c in coefficients * signs
    ]


@pytest.mark.parametrize("m", range(2, 9))
def test_block_mul_matches_dense(m):

    for a, b in random_blocks(m, 100, seed=m):
        np.testing.assert_allclose(
            block_mul(a, b).densify(),
            a.densify() @ b.densify(),
            rtol=1e-10,
            atol=1e-10,
        )


@pytest.mark.parametrize("m", range(2, 9))
def test_block_inv_matches_dense(m):

    for a, _ in random_blocks(m, 100, seed=10 + m):
        np.testing.assert_allclose(
            block_inv(a).densify(),
            np.linalg.inv(a.densify()),
            rtol=1e-10,
            atol=1e-10,
        )


@pytest.mark.parametrize("m", range(2, 9))
def test_block_logdet_matches_dense(m):

    for a, b in random_blocks(m, 100, seed=20 + m):
        positive = GroupBlock(m, abs(a.p), abs(b.s))
        sign, logdet = np.linalg.slogdet(positive.densify())
        assert sign == 1
        assert block_logdet(positive) == pytest.approx(logdet, abs=1e-10)


def test_block_quadform_matches_dense():

    rng = np.random.default_rng(3)
    a = GroupBlock(5, 1.3, 0.4)
    v, w = rng.standard_normal((2, 5))

    assert block_quadform(a, v, w) == pytest.approx(v @ a.densify() @ w)


def test_within_between_quadform_vectorized():

    a = GroupBlock(
        np.array([2, 3]), np.array([1.0, 2.0]), np.array([3.0, 4.0])
    )
    value = within_between_quadform(a, np.array([1.0, 1.0]), 2.0, 0.5)

    np.testing.assert_allclose(value, [1.0 + 3 * 2 * 1.0, 2.0 + 4 * 3 * 1.0])


def test_from_dense_recovers_coefficients():

    a = GroupBlock(4, 0.7, 2.5)
    b = GroupBlock.from_dense(a.densify())

    assert b.m == 4
    assert b.p == pytest.approx(0.7)
    assert b.s == pytest.approx(2.5)


def test_structural_block_is_i_minus_lambda_w():

    for m in range(2, 9):
        lam = 0.37
        np.testing.assert_allclose(
            structural_block(m, lam).densify(),
            np.eye(m) - lam * leave_out_matrix(m),
            atol=1e-12,
        )


def test_omega_block_is_random_effects_covariance():

    m = 4
    np.testing.assert_allclose(
        omega_block(m, 0.8, 0.3).densify(),
        0.8 * np.eye(m) + 0.3 * np.ones((m, m)),
        atol=1e-12,
    )


def test_block_group_size_one():

    with pytest.raises(DomainError):
        GroupBlock(1, 1.0, 1.0)


def test_block_mul_size_mismatch():

    with pytest.raises(DimensionError):
        block_mul(GroupBlock(2, 1.0, 1.0), GroupBlock(3, 1.0, 1.0))


def test_block_inv_singular():

    with pytest.raises(SingularBlockError):
        block_inv(GroupBlock(3, 0.0, 1.0))


def test_block_logdet_non_positive():

    with pytest.raises(DomainError):
        block_logdet(GroupBlock(3, -1.0, 1.0))


def test_block_quadform_length_mismatch():

    with pytest.raises(DimensionError):
        block_quadform(GroupBlock(3, 1.0, 1.0), np.ones(3), np.ones(4))


def test_densify_large_block():

    with pytest.raises(DimensionError):
        GroupBlock(13, 1.0, 1.0).densify()


def test_structural_block_lambda_outside():

    with pytest.raises(DomainError):
        structural_block(3, 1.0)


def test_omega_block_negative_group_variance():

    with pytest.raises(DomainError):
        omega_block(3, 1.0, -0.1)
