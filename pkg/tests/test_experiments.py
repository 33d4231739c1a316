"""Tests for the simulation studies (heavy runs are marked slow)."""
import numpy as np
import pandas as pd
import pytest

from multical.exceptions import DomainError
from multical.schemas.models import KernelFamily, KernelSpec
from multical.services.experiments import (
    MOGI_LOOKS,
    TRUE_SINE_THETA,
    full_data_advantage,
    maximin_lhs,
    run_example1,
    run_example2,
    run_example3,
    run_example3_limiting,
    run_mogi_scenario,
    sample_limiting_stack,
    scaling_witness,
    simulate_example3,
    simulate_mogi_sources,
)
from multical.services.kernels import build_correlation_matrix


def test_limiting_stack_draws():
    spec = KernelSpec(family=KernelFamily.EXPONENTIAL, inverse_ranges=[10.0])
    a = sample_limiting_stack(15, 2.0, 0.5, 1.0, spec, seed=3)
    b = sample_limiting_stack(15, 2.0, 0.5, 1.0, spec, seed=3)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (15,)
    many = sample_limiting_stack(15, 2.0, 0.5, 1.0, spec, seed=3, size=4)
    assert many.shape == (4, 15)
    flat = sample_limiting_stack(15, 2.0, 0.5, 0.0, spec, seed=3)
    np.testing.assert_allclose(flat, 2.5)


def test_limiting_stack_rejects_short_grid():
    spec = KernelSpec(inverse_ranges=[1.0])
    with pytest.raises(DomainError):
        sample_limiting_stack(1, 0.0, 0.0, 1.0, spec, seed=0)


def test_example1_mse_matches_gls_variance():
    n, gamma = 20, 0.1
    table = run_example1([n], reps=4000, gamma=gamma, tau2=1.0, seed=11)
    assert list(table.columns) == ["n", "mse", "limit", "reps"]
    spec = KernelSpec(family=KernelFamily.EXPONENTIAL, inverse_ranges=[1.0 / gamma])
    R = build_correlation_matrix(spec, np.linspace(0.0, 1.0, n)[:, None])
    ones = np.ones(n)
    exact = 1.0 / (ones @ np.linalg.solve(R.entries, ones))
    assert table["mse"][0] == pytest.approx(exact, rel=0.15)
    assert table["limit"][0] == pytest.approx(2.0 * gamma / (2.0 * gamma + 1.0))


def test_example1_is_reproducible():
    a = run_example1([10, 20], reps=50, gamma=0.2, tau2=0.5, seed=2)
    b = run_example1([10, 20], reps=50, gamma=0.2, tau2=0.5, seed=2)
    pd.testing.assert_frame_equal(a, b)


def test_example3_limiting_table():
    table = run_example3_limiting(n_values=(10, 20), gammas=(0.1,), n_reps=5, seed=0)
    assert list(table.columns) == ["gamma", "n", "mse", "mean_model_limit", "reps"]
    assert len(table) == 2
    assert np.all(table["mse"] >= 0)


def test_maximin_lhs_is_latin():
    design = maximin_lhs(12, 2, seed=5, candidates=10)
    assert design.shape == (12, 2)
    for j in range(2):
        assert sorted(np.floor(design[:, j] * 12).astype(int)) == list(range(12))
    np.testing.assert_array_equal(design, maximin_lhs(12, 2, seed=5, candidates=10))


def test_simulate_example3_structure(rng):
    sim = simulate_example3(3, rng, n=40)
    ds = sim["dataset"]
    assert ds.k == 3 and ds.n == 40 and ds.aligned
    assert sim["biases"].shape == (3, 40)
    expected = np.sin(TRUE_SINE_THETA * ds.inputs[:, 0]) + sim["delta"]
    np.testing.assert_allclose(sim["reality"], expected)
    with pytest.raises(DomainError):
        simulate_example3(1, rng)


def test_example3_tiny_run():
    table = run_example3(2, seed=0, n_reps=1, n_samples=30, burn_in=10, thin=5, threads=1)
    assert set(table["method"]) == {"GaSP-full", "S-GaSP-full", "GaSP-stack"}
    for column in ("mse_bias", "mse_discrepancy", "mse_reality", "se_theta", "acceptance_min"):
        assert np.all(table[column] >= 0)
    assert np.all(table["acceptance_min"] <= table["acceptance_max"])
    shares = full_data_advantage(table)
    assert set(shares) == {"GaSP-full", "S-GaSP-full"}


def test_full_data_advantage():
    table = pd.DataFrame(
        {
            "replicate": [0, 0, 0, 1, 1, 1],
            "method": ["GaSP-full", "S-GaSP-full", "GaSP-stack"] * 2,
            "mse_reality": [0.1, 0.3, 0.2, 0.5, 0.1, 0.4],
        }
    )
    assert full_data_advantage(table) == {"GaSP-full": 0.5, "S-GaSP-full": 0.5}


def test_mogi_sources(rng):
    ds = simulate_mogi_sources(rng, grid=5)
    assert ds.k == len(MOGI_LOOKS) and ds.n == 25 and ds.aligned
    for src in ds.sources:
        assert np.linalg.norm(src.look_vector) == pytest.approx(1.0)


def test_scaling_witness_columns():
    table = scaling_witness(n=30, ks=(2, 4), seed=0, repeats=1)
    assert list(table["k"]) == [2, 4]
    assert np.all(table["seconds"] > 0)
    np.testing.assert_allclose(table["seconds_per_source"], table["seconds"] / table["k"])


@pytest.mark.slow
def test_example2_compares_both_models():
    table = run_example2(design_seed=1, noise_seed=2, n=20, n_test=200, n_starts=2, threads=2)
    assert list(table["method"]) == ["GaSP", "S-GaSP"]
    assert np.all(np.isfinite(table[["mse_fm", "mse_fm_delta", "log_likelihood"]].to_numpy()))
    assert np.all(table["sigma2_0"] > 0)


@pytest.mark.slow
def test_mogi_scenario_runs():
    table = run_mogi_scenario(n_reps=1, seed=0, grid=6, n_samples=40, burn_in=10, thin=5)
    assert len(table) == 1
    assert {"depth_rel_error", "dv_rel_error", "recovered"} <= set(table.columns)


@pytest.mark.slow
def test_example1_reaches_limiting_variance():
    wide = run_example1([100], reps=10_000, gamma=0.1, tau2=1.0, seed=21)
    assert wide["mse"][0] == pytest.approx(1.0 / 6.0, rel=0.05)
    narrow = run_example1([200], reps=10_000, gamma=0.02, tau2=1.0, seed=22)
    assert narrow["mse"][0] == pytest.approx(0.03846, rel=0.10)


@pytest.mark.slow
def test_example2_scaled_model_separates_calibration():
    tables = [run_example2(design_seed=s, noise_seed=s, threads=2) for s in range(5)]
    medians = pd.concat(tables).groupby("method").median(numeric_only=True)
    assert medians.loc["GaSP", "mse_fm"] >= 10.0 * medians.loc["S-GaSP", "mse_fm"]
    assert medians.loc["GaSP", "mse_fm_delta"] < 2e-2
    assert medians.loc["S-GaSP", "mse_fm_delta"] < 2e-2


@pytest.mark.slow
def test_example3_full_data_beats_stacking():
    table = run_example3(5, seed=3, n_reps=20, n_samples=5000, burn_in=1000, thin=10)
    for share in full_data_advantage(table).values():
        assert share >= 0.6
    coverage = table.groupby("method")["covers"].mean()
    assert np.all(coverage >= 0.7)
    assert table["acceptance_min"].min() >= 0.1
    assert table["acceptance_max"].max() <= 0.6


@pytest.mark.slow
def test_mogi_recovers_depth_and_volume_rate():
    table = run_mogi_scenario(n_reps=10, seed=0, grid=20)
    assert len(table) == 10
    assert table["recovered"].mean() >= 0.7
