"""Tests for the block likelihood against dense references."""
import numpy as np
import pytest

from multical.exceptions import AlignmentError, DomainError
from multical.schemas.models import MultiSourceDataset, ParameterState, SourceObservations
from multical.services.data import stack_sources
from multical.services.kernels import build_correlation_matrix
from multical.services.likelihood import (
    JointCovariance,
    aggregated_marginal_full,
    aggregated_marginal_nobias,
    build_joint_covariance,
    decomposition_check,
    joint_marginal,
    noise_covariance,
    nobias_marginal,
    posterior_discrepancy,
    source_covariance,
    source_marginal,
)
from multical.services.verify import (
    dense_joint_logpdf,
    dense_mvn_logpdf,
    dense_posterior_discrepancy,
)


def test_joint_marginal_matches_dense_gasp(aligned_dataset, model_output, state, gasp):
    engine = joint_marginal(aligned_dataset, model_output, state, gasp)
    dense = dense_joint_logpdf(aligned_dataset, model_output, state, gasp)
    assert engine == pytest.approx(dense, abs=1e-8)


def test_joint_marginal_matches_dense_sgasp(aligned_dataset, model_output, state, sgasp):
    engine = joint_marginal(aligned_dataset, model_output, state, sgasp)
    dense = dense_joint_logpdf(aligned_dataset, model_output, state, sgasp)
    assert engine == pytest.approx(dense, abs=1e-8)


def test_sgasp_with_zero_lambda_equals_gasp(aligned_dataset, model_output, state, gasp, sgasp):
    zero = sgasp.model_copy(update={"lambda_z": 0.0})
    assert joint_marginal(aligned_dataset, model_output, state, zero) == pytest.approx(
        joint_marginal(aligned_dataset, model_output, state, gasp), abs=1e-12
    )


def test_single_source_reduces_to_one_gaussian(design, model_output, gasp, rng):
    src = SourceObservations(inputs=design, outputs=model_output + rng.normal(0, 0.2, 10))
    ds = MultiSourceDataset(sources=[src])
    state = ParameterState(
        theta=[1.0], mu=[0.3], sigma2=[0.4], beta_bias=[[6.0]], eta=[0.1], tau2=0.5,
        beta_disc=[5.0],
    )
    S = source_covariance(design, 0.4, 0.1, [6.0]).cov
    spec = gasp.kernel.model_copy(update={"inverse_ranges": [5.0]})
    C = 0.5 * build_correlation_matrix(spec, design).entries
    expected = dense_mvn_logpdf(src.outputs, model_output + 0.3, S + C)
    assert joint_marginal(ds, model_output, state, gasp) == pytest.approx(expected, abs=1e-9)


def test_singular_discrepancy_covariance_is_allowed(aligned_dataset, model_output, state, gasp):
    joint = build_joint_covariance(aligned_dataset, state, gasp)
    n = aligned_dataset.n
    singular = np.ones((n, n))
    value = joint.replace_discrepancy(singular).log_density(
        aligned_dataset.outputs - model_output - state.mu[:, None]
    )
    assert np.isfinite(value)


def test_replace_source_matches_rebuild(aligned_dataset, model_output, state, gasp):
    joint = build_joint_covariance(aligned_dataset, state, gasp)
    changed = state.model_copy(update={"sigma2": np.array([0.5, 1.3, 0.8])})
    src = aligned_dataset.sources[1]
    patched = joint.replace_source(1, source_covariance(src.inputs, 1.3, 0.1, [4.0]))
    residuals = aligned_dataset.outputs - model_output - state.mu[:, None]
    assert patched.log_density(residuals) == pytest.approx(
        build_joint_covariance(aligned_dataset, changed, gasp).log_density(residuals), abs=1e-10
    )


def test_posterior_discrepancy_matches_dense(aligned_dataset, model_output, state, sgasp):
    mean, cov = posterior_discrepancy(aligned_dataset, model_output, state, sgasp)
    dmean, dcov = dense_posterior_discrepancy(aligned_dataset, model_output, state, sgasp)
    np.testing.assert_allclose(mean, dmean, atol=1e-9)
    np.testing.assert_allclose(cov, dcov, atol=1e-9)


def test_source_marginal(design, model_output, state, rng):
    delta = rng.normal(0, 0.1, 10)
    y = model_output + delta + rng.normal(0, 0.3, 10)
    S = source_covariance(design, 0.5, 0.2, [6.0]).cov
    expected = dense_mvn_logpdf(y, model_output + 0.1 + delta, S)
    assert source_marginal(y, model_output, state, 0, delta, design) == pytest.approx(expected)


def test_bias_model_needs_alignment(state, gasp):
    a = SourceObservations(inputs=[[0.1], [0.5]], outputs=[0.0, 1.0])
    b = SourceObservations(inputs=[[0.2], [0.6]], outputs=[0.0, 1.0])
    with pytest.raises(AlignmentError):
        joint_marginal(MultiSourceDataset(sources=[a, b]), np.zeros(2), state, gasp)


def test_nobias_marginal_on_misaligned_sources(gasp):
    a = SourceObservations(inputs=[[0.1], [0.5], [0.9]], outputs=[0.2, 0.4, 0.1])
    b = SourceObservations(inputs=[[0.3], [0.7]], outputs=[0.3, 0.0])
    ds = MultiSourceDataset(sources=[a, b])
    state = ParameterState(
        theta=[0.0], mu=[0.1], sigma2=[], beta_bias=[], eta=[], tau2=0.4, beta_disc=[3.0],
        eta_disc=0.25,
    )
    f_rows = [np.zeros(3), np.zeros(2)]
    x = np.array([[0.1], [0.5], [0.9], [0.3], [0.7]])
    R = build_correlation_matrix(gasp.kernel.model_copy(update={"inverse_ranges": [3.0]}), x)
    cov = 0.4 * R.entries + 0.1 * np.eye(5)
    expected = dense_mvn_logpdf(np.array([0.2, 0.4, 0.1, 0.3, 0.0]), np.full(5, 0.1), cov)
    assert nobias_marginal(ds, f_rows, state, gasp) == pytest.approx(expected, abs=1e-10)


def test_aggregated_marginal_full(aligned_dataset, model_output, state, gasp):
    stacked = stack_sources(aligned_dataset)
    cov = sum(
        source_covariance(stacked.inputs, state.sigma2[l], state.eta[l], state.beta_bias[l]).cov
        for l in range(3)
    ) / 9.0
    spec = gasp.kernel.model_copy(update={"inverse_ranges": [5.0]})
    cov = cov + 0.7 * build_correlation_matrix(spec, stacked.inputs).entries
    expected = dense_mvn_logpdf(stacked.outputs, model_output + state.mu.mean(), cov)
    assert aggregated_marginal_full(stacked, model_output, state, gasp) == pytest.approx(
        expected, abs=1e-9
    )


def test_aggregated_marginal_nobias(aligned_dataset, model_output, gasp):
    stacked = stack_sources(aligned_dataset)
    spec = gasp.kernel.model_copy(update={"inverse_ranges": [5.0]})
    R = build_correlation_matrix(spec, stacked.inputs)
    value = aggregated_marginal_nobias(stacked, model_output, 0.1, 0.3, 0.5, R, 3)
    expected = dense_mvn_logpdf(
        stacked.outputs, model_output + 0.1, 0.5 * R.entries + 0.1 * np.eye(stacked.n)
    )
    assert value == pytest.approx(expected, abs=1e-10)
    with pytest.raises(DomainError):
        aggregated_marginal_nobias(stacked, model_output, 0.1, 0.3, 0.5, R, 0)


def test_decomposition_identity(aligned_dataset, model_output, rng):
    delta = rng.normal(0, 0.2, aligned_dataset.n)
    l_full, l_stack, c = decomposition_check(aligned_dataset, model_output, delta, 0.1, 0.3)
    assert l_full == pytest.approx(c + l_stack, abs=1e-9)

    Y = aligned_dataset.outputs
    mean = model_output + 0.1 + delta
    dense_full = dense_mvn_logpdf(Y.ravel(), np.tile(mean, 3), 0.3 * np.eye(Y.size))
    assert l_full == pytest.approx(dense_full, abs=1e-9)


def test_decomposition_rejects_nonpositive_noise(aligned_dataset, model_output):
    with pytest.raises(DomainError):
        decomposition_check(aligned_dataset, model_output, np.zeros(10), 0.0, 0.0)


def test_joint_covariance_needs_sources():
    with pytest.raises(DomainError):
        JointCovariance([], np.eye(2))
    with pytest.raises(DomainError):
        JointCovariance([noise_covariance(1.0, np.ones(3))], np.eye(2))
