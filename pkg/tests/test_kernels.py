"""Tests for correlation functions and matrices."""
import numpy as np
import pytest

from multical.exceptions import DomainError, NumericalSingularityError
from multical.schemas.models import KernelFamily, KernelSpec
from multical.services.kernels import (
    build_correlation_matrix,
    cross_correlation,
    eval_kernel_1d,
    eval_product_kernel,
)
from multical.utils.linalg import JITTER_LADDER, jittered_cholesky


def test_kernels_equal_one_at_zero_distance():
    for family in KernelFamily:
        assert eval_kernel_1d(family, 0.0, 0.3) == pytest.approx(1.0)


def test_matern52_closed_form():
    gamma = 0.4
    r = np.sqrt(5.0)
    expected = (1.0 + r + r * r / 3.0) * np.exp(-r)
    assert eval_kernel_1d(KernelFamily.MATERN52, gamma, gamma) == pytest.approx(expected)


def test_exponential_and_power_exponential():
    assert eval_kernel_1d(KernelFamily.EXPONENTIAL, 0.2, 0.1) == pytest.approx(np.exp(-2.0))
    value = eval_kernel_1d(KernelFamily.POWER_EXPONENTIAL, 0.2, 0.1, alpha=2.0)
    assert value == pytest.approx(np.exp(-4.0))


def test_power_exponential_default_roughness():
    value = eval_kernel_1d(KernelFamily.POWER_EXPONENTIAL, 0.5, 1.0)
    assert value == pytest.approx(np.exp(-(0.5**1.9)))


def test_kernel_decreases_with_distance():
    d = np.linspace(0.0, 2.0, 50)
    for family in KernelFamily:
        values = eval_kernel_1d(family, d, 0.5)
        assert np.all(np.diff(values) <= 0)
        assert np.all(values > 0)


def test_kernel_rejects_bad_arguments():
    with pytest.raises(DomainError):
        eval_kernel_1d(KernelFamily.MATERN52, 0.1, 0.0)
    with pytest.raises(DomainError):
        eval_kernel_1d(KernelFamily.MATERN52, -0.1, 1.0)
    with pytest.raises(DomainError):
        eval_kernel_1d(KernelFamily.POWER_EXPONENTIAL, 0.1, 1.0, alpha=2.5)


def test_product_kernel_multiplies_dimensions():
    spec = KernelSpec(family=KernelFamily.EXPONENTIAL, inverse_ranges=[2.0, 5.0])
    value = eval_product_kernel(spec, np.array([0.0, 0.0]), np.array([0.5, 0.1]))
    assert value == pytest.approx(np.exp(-1.0) * np.exp(-0.5))


def test_product_kernel_checks_dimension():
    spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0, 1.0])
    with pytest.raises(DomainError):
        eval_product_kernel(spec, np.zeros(3), np.zeros(3))


def test_cross_correlation_matches_pointwise(rng):
    spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[3.0, 0.5])
    xa, xb = rng.uniform(size=(4, 2)), rng.uniform(size=(3, 2))
    K = cross_correlation(spec, xa, xb)
    assert K.shape == (4, 3)
    for i in range(4):
        for j in range(3):
            assert K[i, j] == pytest.approx(eval_product_kernel(spec, xa[i], xb[j]))


def test_correlation_matrix_is_factorized(design):
    spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[4.0])
    R = build_correlation_matrix(spec, design)
    assert R.n == design.shape[0]
    np.testing.assert_allclose(np.diag(R.entries), 1.0)
    np.testing.assert_allclose(R.entries, R.entries.T)
    np.testing.assert_allclose(
        R.factor @ R.factor.T, R.entries + R.jitter_used * np.eye(R.n), atol=1e-12
    )
    assert R.log_det == pytest.approx(np.linalg.slogdet(R.entries)[1], abs=1e-8)


def test_duplicate_inputs_need_jitter():
    spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0])
    R = build_correlation_matrix(spec, np.array([[0.3], [0.3], [0.7]]))
    assert R.jitter_used > 0


def test_jitter_ladder_exhausted():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NumericalSingularityError):
        jittered_cholesky(A)
    assert JITTER_LADDER[0] == 0.0
