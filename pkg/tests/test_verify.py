"""Tests for the dense reference identities."""
import numpy as np
import pytest

from multical.exceptions import DomainError
from multical.schemas.models import DiscrepancyMode, KernelFamily, KernelSpec
from multical.services.forward import get_forward_model
from multical.services.kernels import cross_correlation
from multical.services.predict import predict_field
from multical.services.verify import (
    ar1_inverse,
    dense_field_prediction,
    dense_gaussian_condition,
    dense_mvn_logpdf,
    limiting_mle_variance,
    random_instance,
    run_suites,
)


def test_dense_logpdf_standard_normal():
    value = dense_mvn_logpdf(np.zeros(2), np.zeros(2), np.eye(2))
    assert value == pytest.approx(-np.log(2.0 * np.pi))


def test_dense_condition_bivariate():
    cov = np.array([[1.0, 0.5], [0.5, 2.0]])
    mean, var = dense_gaussian_condition(np.zeros(2), cov, [1], np.array([1.0]))
    assert mean[0] == pytest.approx(0.25)
    assert var[0, 0] == pytest.approx(1.0 - 0.125)


def test_ar1_inverse_exact():
    n, gamma = 20, 0.1
    grid = np.arange(1, n + 1) / n
    spec = KernelSpec(family=KernelFamily.EXPONENTIAL, inverse_ranges=[1.0 / gamma])
    R = cross_correlation(spec, grid, grid)
    rho = np.exp(-1.0 / (n * gamma))
    np.testing.assert_allclose(R @ ar1_inverse(n, rho), np.eye(n), atol=1e-10)


def test_ar1_inverse_rejects_bad_arguments():
    with pytest.raises(DomainError):
        ar1_inverse(1, 0.5)
    with pytest.raises(DomainError):
        ar1_inverse(5, 1.0)


def test_limiting_variance():
    assert limiting_mle_variance(1.0, 0.1) == pytest.approx(0.2 / 1.2)
    with pytest.raises(DomainError):
        limiting_mle_variance(0.0, 0.1)


def test_random_instance_shapes(rng):
    ds, f, state, disc = random_instance(rng, 6, 3, mode=DiscrepancyMode.SGASP)
    assert ds.k == 3 and ds.n == 6
    assert f.shape == (6,)
    assert state.beta_bias.shape == (3, 1)
    assert disc.lambda_z > 0


def test_all_suites_pass():
    results = run_suites(seed=0, n_cases=10)
    assert [r.name for r in results] == [
        "block_likelihood",
        "stack_decomposition",
        "predictive",
        "sgasp_reduction",
        "sgasp_shrinkage",
        "ar1_inverse",
        "scaling_density",
    ]
    for r in results:
        assert r.passed, f"{r.name}: {r.max_error:.3e} > {r.tolerance:.0e}"


@pytest.mark.slow
def test_all_suites_pass_full_size():
    assert all(r.passed for r in run_suites(seed=1, n_cases=100))


def test_suites_need_cases():
    with pytest.raises(DomainError):
        run_suites(n_cases=0)


@pytest.mark.parametrize("mode", [DiscrepancyMode.GASP, DiscrepancyMode.SGASP])
def test_field_prediction_matches_dense_conditioning(rng, mode):
    forward = get_forward_model("toy_sine")
    ds, _, state, disc = random_instance(rng, 8, 3, mode=mode)
    delta = rng.normal(0.0, 0.5, ds.n)
    x_star = np.array([[0.05], [0.43], [0.97]])
    for l in range(ds.k):
        mean, var = predict_field(x_star, l, delta, ds, state, forward, disc)
        dense_mean, dense_var = dense_field_prediction(
            x_star, l, delta, ds, state,
            forward.evaluate(state.theta, ds.inputs), forward.evaluate(state.theta, x_star), disc,
        )
        np.testing.assert_allclose(mean, dense_mean, atol=1e-9)
        np.testing.assert_allclose(var, dense_var, atol=1e-9)
        assert np.all(var > state.noise_variance[l])
