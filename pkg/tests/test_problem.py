"""Tests for the calibration problem: layout, transforms, priors and cached updates."""
import numpy as np
import pytest
from scipy import integrate

from multical.exceptions import AlignmentError, DomainError
from multical.schemas.models import (
    CalibrationConfig,
    DiscrepancyMode,
    ModelType,
    MultiSourceDataset,
    PriorSpec,
    SourceObservations,
)
from multical.services.forward import ToySineModel
from multical.services.likelihood import joint_marginal
from multical.services.problem import (
    CalibrationProblem,
    default_jr_scales,
    jr_prior_logdensity,
    problem_from_config,
)


@pytest.fixture
def problem(aligned_dataset, gasp):
    return CalibrationProblem(aligned_dataset, ToySineModel(), gasp)


@pytest.fixture
def misaligned():
    a = SourceObservations(inputs=[[0.1], [0.5], [0.9]], outputs=[0.2, 0.6, 0.9])
    b = SourceObservations(inputs=[[0.3], [0.7]], outputs=[0.4, 0.7])
    return MultiSourceDataset(sources=[a, b])


def test_jr_prior_normalizes():
    a, b, C = 1.0, 1.0, [0.5]

    def density(eta, beta):
        return np.exp(jr_prior_logdensity([beta], eta, a, b, C))

    total, _ = integrate.dblquad(density, 0.0, 60.0, 0.0, 60.0, epsabs=1e-8)
    assert total == pytest.approx(1.0, abs=1e-4)


def test_jr_prior_rejects_bad_constants():
    with pytest.raises(DomainError):
        jr_prior_logdensity([1.0], 0.0, -0.5, 0.0, [1.0])
    with pytest.raises(DomainError):
        jr_prior_logdensity([1.0, 2.0], 0.0, -0.5, 1.0, [1.0])


def test_default_jr_scales():
    x = np.linspace(0.0, 2.0, 16)[:, None]
    assert default_jr_scales(x) == pytest.approx([2.0 / 16])


def test_column_layout(problem):
    names = problem.column_names
    assert names[0] == "theta_1"
    for name in ("mu_1", "mu_3", "sigma2_2", "beta_bias_3_1", "eta_1", "tau2", "beta_disc_1"):
        assert name in names
    assert "eta_disc" not in names
    assert set(problem.blocks) == {
        "theta", "mu", "source_1", "source_2", "source_3", "discrepancy"
    }


def test_free_vector_round_trip(problem, state):
    x = problem.to_vector(state)
    back = problem.to_state(x, state)
    np.testing.assert_allclose(problem.natural_values(back), problem.natural_values(state))


def test_logit_stays_inside_box(problem, state):
    x = problem.to_vector(state)
    x[0] = 1e6
    assert problem.to_state(x, state).theta[0] <= problem.prior.upper[0]
    assert problem.free_bounds()[0] == (-20.0, 20.0)


def test_fixed_blocks_leave_the_layout(aligned_dataset, gasp):
    problem = CalibrationProblem(
        aligned_dataset, ToySineModel(), gasp, estimate_mean=False, fixed={"tau2": 0.5}
    )
    assert "tau2" not in problem.column_names
    assert not any(n.startswith("mu_") for n in problem.column_names)
    state = problem.initial_state()
    assert state.tau2 == 0.5
    np.testing.assert_array_equal(state.mu, np.zeros(3))


def test_likelihood_matches_joint_marginal(problem, state, aligned_dataset, gasp):
    f = ToySineModel().evaluate(state.theta, aligned_dataset.inputs)
    assert problem.log_likelihood(state) == pytest.approx(
        joint_marginal(aligned_dataset, f, state, gasp)
    )


def test_block_updates_match_full_evaluation(problem, state, rng):
    base = problem.fit(state)
    x = problem.to_vector(state)
    for name, idx in problem.blocks.items():
        proposal = x.copy()
        proposal[idx] += rng.normal(0.0, 0.1, len(idx))
        new_state = problem.to_state(proposal, state)
        cached = problem.fit(new_state, block=name, base=base)
        assert cached.log_likelihood == pytest.approx(
            problem.log_likelihood(new_state), abs=1e-9
        ), name


def test_log_prior_box(problem, state):
    assert np.isfinite(problem.log_prior(state))
    outside = state.model_copy(update={"theta": np.array([5.0])})
    assert problem.log_prior(outside) == -np.inf
    assert problem.log_posterior(outside) == -np.inf


def test_bias_model_rejects_misaligned(misaligned, gasp):
    with pytest.raises(AlignmentError):
        CalibrationProblem(misaligned, ToySineModel(), gasp)


def test_nobias_model_on_misaligned(misaligned, gasp):
    problem = CalibrationProblem(misaligned, ToySineModel(), gasp, model_type=ModelType.NOBIAS)
    assert problem.training_inputs.shape == (5, 1)
    assert "eta_disc" in problem.column_names
    assert "mu_1" in problem.column_names and "mu_2" not in problem.column_names
    assert np.isfinite(problem.log_posterior(problem.initial_state()))


def test_bounds_must_match_forward_model(aligned_dataset, gasp):
    with pytest.raises(DomainError):
        CalibrationProblem(
            aligned_dataset, ToySineModel(), gasp,
            prior=PriorSpec(theta_bounds=[(0.0, 1.0), (0.0, 1.0)]),
        )


def test_problem_from_config(aligned_dataset):
    cfg = CalibrationConfig(
        model=DiscrepancyMode.SGASP,
        forward="toy_sine",
        sgasp_c=2.0,
        fixed_tau2=0.3,
        theta_bounds=[(0.5, 2.5)],
    )
    problem = problem_from_config(cfg, aligned_dataset)
    assert problem.discrepancy.lambda_z == pytest.approx(2.0 * np.sqrt(aligned_dataset.n))
    assert problem.prior.theta_bounds == [(0.5, 2.5)]
    assert problem.initial_state().tau2 == 0.3
