"""Simulation studies: limiting-law MSE curves, the two-input GaSP vs S-GaSP
comparison, multi-source bias separation, a synthetic Mogi scenario and a
timing witness for the block likelihood.

Replicates draw their seeds from ``SeedSequence(seed).spawn(n)`` in replicate
order and run on a thread pool; results come back in replicate order, so a
run is reproducible from ``(seed, settings)`` alone.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from multical.config import config
from multical.exceptions import DomainError
from multical.schemas.models import (
    DiscrepancyMode,
    KernelFamily,
    KernelSpec,
    McmcSettings,
    ModelType,
    MogiParams,
    MultiSourceDataset,
    ParameterState,
    SourceObservations,
)
from multical.services.data import stack_sources
from multical.services.discrepancy import make_discrepancy
from multical.services.forward import (
    ForwardModel,
    MogiModel,
    ToyMeanModel,
    ToySineModel,
    ToyTrig2dModel,
    lim_reality,
    toy_sine,
)
from multical.services.inference import closed_form_mean_mle, mcmc_run, mle_fit
from multical.services.kernels import build_correlation_matrix
from multical.services.likelihood import joint_marginal
from multical.services.predict import Predictor, evaluate_mse
from multical.services.problem import CalibrationProblem
from multical.services.verify import limiting_mle_variance
from multical.utils.linalg import cho_solve

logger = logging.getLogger(__name__)

LHS_CANDIDATES = 200
TRUE_SINE_THETA = np.pi / 2

MOGI_TRUTH = MogiParams(x=800.0, y=1200.0, depth=2800.0, dv=0.05, nu=0.27)
MOGI_LOOKS = {
    "asc_1": (-0.62, -0.11, 0.78),
    "asc_2": (-0.55, -0.10, 0.83),
    "desc_1": (0.62, -0.11, 0.78),
    "desc_2": (0.58, -0.12, 0.81),
    "desc_3": (0.66, -0.10, 0.74),
}


def _seeds(seed: int, n: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def _map_replicates(fn: Callable, items: Sequence, threads: Optional[int]) -> List:
    threads = threads or config.THREADS
    if len(items) == 1 or threads == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def _draw_process(
    inputs: np.ndarray, spec: KernelSpec, variance: float, rng: np.random.Generator
) -> np.ndarray:
    """One zero-mean Gaussian-process path at ``inputs``."""
    R = build_correlation_matrix(spec, inputs)
    return np.sqrt(variance) * (R.factor @ rng.standard_normal(R.n))


def _unit(v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# ------------------------------------------------------------ limiting stack law


def sample_limiting_stack(
    n: int,
    theta,
    mu: float,
    tau2: float,
    kernel: KernelSpec,
    seed: int,
    forward: Optional[ForwardModel] = None,
    size: Optional[int] = None,
) -> np.ndarray:
    """Draw(s) from ``N(f(theta) + mu, tau2 R)`` on the grid ``x_i = (i-1)/(n-1)``.

    ``forward`` defaults to the constant-mean model. With ``size`` the result
    is a ``size x n`` array of independent draws.
    """
    if n < 2:
        raise DomainError("the limiting grid needs at least two points")
    if tau2 < 0:
        raise DomainError(f"tau2 must be non-negative, got {tau2}")
    forward = forward or ToyMeanModel()
    grid = np.linspace(0.0, 1.0, n)[:, None]
    mean = forward.evaluate(theta, grid) + mu
    R = build_correlation_matrix(kernel, grid)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 1 if size is None else size))
    draws = mean[:, None] + np.sqrt(tau2) * (R.factor @ z)
    return draws[:, 0] if size is None else draws.T


def run_example1(
    n_grid: Sequence[int],
    reps: int,
    gamma: float,
    tau2: float,
    seed: int,
    theta: float = 0.0,
) -> pd.DataFrame:
    """Monte Carlo MSE of the closed-form mean estimator under the limiting stack law.

    The kernel is exponential with range ``gamma``; the ``limit`` column is
    ``2 tau2 gamma / (2 gamma + 1)``.
    """
    if reps < 1:
        raise DomainError("reps must be at least 1")
    spec = KernelSpec(family=KernelFamily.EXPONENTIAL, inverse_ranges=[1.0 / gamma])
    limit = limiting_mle_variance(tau2, gamma) if tau2 > 0 else 0.0
    rows = []
    for n, child in zip(n_grid, _seeds(seed, len(n_grid))):
        draws = sample_limiting_stack(
            n, theta, 0.0, tau2, spec, int(child.generate_state(1)[0]), size=reps
        )
        R = build_correlation_matrix(spec, np.linspace(0.0, 1.0, n)[:, None])
        est = closed_form_mean_mle(draws, R)
        mse = float(np.mean((est - theta) ** 2))
        logger.info(f"📊 n={n}: MSE {mse:.5f} (limit {limit:.5f}, {reps} reps)")
        rows.append({"n": n, "mse": mse, "limit": limit, "reps": reps})
    return pd.DataFrame(rows)


def _gls_sine_estimate(ybar: np.ndarray, grid: np.ndarray, factor: np.ndarray) -> float:
    def objective(theta: float) -> float:
        r = ybar - toy_sine(theta, grid)
        return float(r @ cho_solve(factor, r))

    lo, hi = ToySineModel.bounds[0]
    res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded")
    return float(res.x)


def run_example3_limiting(
    n_values: Sequence[int] = (25, 50, 100, 200),
    gammas: Sequence[float] = (0.02, 0.005),
    n_reps: int = 500,
    seed: int = 0,
    tau2: float = 0.04,
) -> pd.DataFrame:
    """MSE of the sine-model estimator when the stacked data follow the limiting law.

    Draws ``sin(theta x) + delta`` with a Matern discrepancy of range ``gamma``
    and maximizes the Gaussian likelihood in ``theta`` with ``tau2`` and
    ``gamma`` known. ``mean_model_limit`` is the constant-mean limit for the
    same ``tau2`` and ``gamma`` and serves as a reference scale only.
    """
    if n_reps < 1:
        raise DomainError("n_reps must be at least 1")
    forward = ToySineModel()
    rows = []
    configs = [(g, n) for g in gammas for n in n_values]
    for (gamma, n), child in zip(configs, _seeds(seed, len(configs))):
        spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0 / gamma])
        grid = np.linspace(0.0, 1.0, n)
        R = build_correlation_matrix(spec, grid[:, None])
        draws = sample_limiting_stack(
            n, [TRUE_SINE_THETA], 0.0, tau2, spec, int(child.generate_state(1)[0]),
            forward=forward, size=n_reps,
        )
        est = np.array([_gls_sine_estimate(y, grid, R.factor) for y in draws])
        mse = float(np.mean((est - TRUE_SINE_THETA) ** 2))
        logger.info(f"📊 gamma={gamma}, n={n}: MSE {mse:.3e}")
        rows.append(
            {
                "gamma": gamma,
                "n": n,
                "mse": mse,
                "mean_model_limit": limiting_mle_variance(tau2, gamma),
                "reps": n_reps,
            }
        )
    return pd.DataFrame(rows)


# ------------------------------------------------------- two-input comparison


def maximin_lhs(n: int, d: int, seed: int, candidates: int = LHS_CANDIDATES) -> np.ndarray:
    """Best of ``candidates`` random Latin hypercubes by smallest pairwise distance."""
    best, best_score = None, -np.inf
    for child in _seeds(seed, candidates):
        design = qmc.LatinHypercube(d=d, seed=np.random.default_rng(child)).random(n)
        score = float(np.min(pdist(design)))
        if score > best_score:
            best, best_score = design, score
    return best


def run_example2(
    design_seed: int,
    noise_seed: int,
    n: int = 30,
    noise_sd: float = 0.05,
    n_test: int = 1000,
    n_starts: Optional[int] = None,
    threads: Optional[int] = None,
    fixed_tau2: Optional[float] = None,
) -> pd.DataFrame:
    """GaSP and S-GaSP calibration of ``theta_1 + theta_2 sin(5 x_1)`` to a known reality.

    Both fits are maximum likelihood on the single-source model with a shared
    noise variance and no mean term. ``fixed_tau2`` holds the discrepancy
    variance fixed, as in the sensitivity study over ``tau2``.
    """
    forward = ToyTrig2dModel()
    design = maximin_lhs(n, 2, design_seed)
    rng = np.random.default_rng(noise_seed)
    outputs = lim_reality(design) + rng.normal(0.0, noise_sd, n)
    ds = MultiSourceDataset(
        sources=[SourceObservations(inputs=design, outputs=outputs, label="field")], aligned=True
    )
    x_test = np.random.default_rng([design_seed, noise_seed]).uniform(0.0, 1.0, (n_test, 2))
    truth = lim_reality(x_test)
    fixed = {"tau2": fixed_tau2} if fixed_tau2 is not None else None

    rows = []
    for label, mode in (("GaSP", DiscrepancyMode.GASP), ("S-GaSP", DiscrepancyMode.SGASP)):
        problem = CalibrationProblem(
            ds,
            forward,
            make_discrepancy(mode, n, 2),
            model_type=ModelType.NOBIAS,
            estimate_mean=False,
            fixed=fixed,
        )
        fit = mle_fit(problem, n_starts=n_starts, seed=noise_seed, threads=threads)
        s = fit.state
        reality_mean, _ = Predictor(problem, [s]).predict(x_test, "reality")
        row = {
            "method": label,
            "mse_fm": evaluate_mse(forward.evaluate(s.theta, x_test), truth),
            "mse_fm_delta": evaluate_mse(reality_mean, truth),
            "theta_1": float(s.theta[0]),
            "theta_2": float(s.theta[1]),
            "tau2": float(s.tau2),
            "gamma_1": float(1.0 / s.beta_disc[0]),
            "gamma_2": float(1.0 / s.beta_disc[1]),
            "sigma2_0": float(s.eta_disc * s.tau2),
            "log_likelihood": fit.log_likelihood,
        }
        logger.info(
            f"📊 {label}: MSE_fM={row['mse_fm']:.4g}, MSE_fM+delta={row['mse_fm_delta']:.4g}, "
            f"theta=({row['theta_1']:.3f}, {row['theta_2']:.3f})"
        )
        rows.append(row)
    return pd.DataFrame(rows)


# ------------------------------------------------------ multi-source separation


def simulate_example3(k: int, rng: np.random.Generator, n: int = 100) -> Dict[str, object]:
    """Sources ``sin(pi/2 x) + delta + delta_l + noise`` on an even grid of [0, 1]."""
    if k < 2:
        raise DomainError("at least two sources are required")
    x = np.linspace(0.0, 1.0, n)[:, None]
    disc_spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0 / 0.1])
    bias_spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0 / 0.02])
    delta = _draw_process(x, disc_spec, 0.2**2, rng)
    f = toy_sine(TRUE_SINE_THETA, x[:, 0])
    biases, sources = [], []
    for l in range(k):
        sigma_l = 0.4 + 0.4 * l / (k - 1)
        bias = _draw_process(x, bias_spec, sigma_l**2, rng)
        y = f + delta + bias + rng.normal(0.0, 0.05, n)
        biases.append(bias)
        sources.append(SourceObservations(inputs=x.copy(), outputs=y, label=f"source_{l + 1}"))
    return {
        "dataset": MultiSourceDataset(sources=sources, aligned=True),
        "delta": delta,
        "biases": np.vstack(biases),
        "reality": f + delta,
    }


def _posterior_theta(samples) -> Dict[str, float]:
    theta = samples.draws[:, samples.columns.index("theta_1")]
    return {
        "theta_mean": float(np.mean(theta)),
        "theta_lower": float(np.quantile(theta, 0.025)),
        "theta_upper": float(np.quantile(theta, 0.975)),
    }


def _example3_replicate(
    k: int, seed: np.random.SeedSequence, settings: McmcSettings, replicate: int
) -> List[Dict[str, object]]:
    rng = np.random.default_rng(seed)
    sim = simulate_example3(k, rng)
    ds: MultiSourceDataset = sim["dataset"]
    x = ds.inputs
    forward = ToySineModel()
    chain_seed = int(seed.generate_state(1)[0])
    run_settings = settings.model_copy(update={"seed": chain_seed})

    rows = []
    methods = (
        ("GaSP-full", DiscrepancyMode.GASP, ds, ModelType.BIAS),
        ("S-GaSP-full", DiscrepancyMode.SGASP, ds, ModelType.BIAS),
        (
            "GaSP-stack",
            DiscrepancyMode.GASP,
            MultiSourceDataset(sources=[stack_sources(ds)], aligned=True),
            ModelType.NOBIAS,
        ),
    )
    for label, mode, data, model_type in methods:
        problem = CalibrationProblem(
            data,
            forward,
            make_discrepancy(mode, data.n, 1),
            model_type=model_type,
            estimate_mean=False,
        )
        samples = mcmc_run(problem, run_settings, threads=1)
        predictor = Predictor(problem, samples.states, list(samples.delta_draws))
        reality, _ = predictor.predict(x, "reality")
        disc, _ = predictor.predict(x, "discrepancy")
        if model_type == ModelType.BIAS:
            bias = np.vstack([predictor.predict(x, "bias", l)[0] for l in range(k)])
        else:
            bias = ds.outputs - reality[None, :]
        theta = _posterior_theta(samples)
        rows.append(
            {
                "replicate": replicate,
                "k": k,
                "method": label,
                "mse_bias": evaluate_mse(bias, sim["biases"]),
                "mse_discrepancy": evaluate_mse(disc, sim["delta"]),
                "mse_reality": evaluate_mse(reality, sim["reality"]),
                "se_theta": (theta["theta_mean"] - TRUE_SINE_THETA) ** 2,
                **theta,
                "covers": theta["theta_lower"] <= TRUE_SINE_THETA <= theta["theta_upper"],
                "acceptance_min": min(samples.acceptance.values()),
                "acceptance_max": max(samples.acceptance.values()),
            }
        )
    logger.info(f"✅ Replicate {replicate} (k={k}) done")
    return rows


def run_example3(
    k: int,
    seed: int,
    n_reps: int = 20,
    n_samples: int = 5000,
    burn_in: int = 1000,
    thin: int = 10,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """Bias, discrepancy and reality MSEs plus the squared error of theta, per method and replicate."""
    if n_reps < 1:
        raise DomainError("n_reps must be at least 1")
    settings = McmcSettings(n_samples=n_samples, burn_in=burn_in, thin=thin, seed=seed)
    seeds = _seeds(seed, n_reps)
    logger.info(f"🎲 Multi-source study: k={k}, {n_reps} replicates, {n_samples} iterations")
    results = _map_replicates(
        lambda i: _example3_replicate(k, seeds[i], settings, i), list(range(n_reps)), threads
    )
    return pd.DataFrame([row for rows in results for row in rows])


def full_data_advantage(table: pd.DataFrame, metric: str = "mse_reality") -> Dict[str, float]:
    """Share of replicates in which each full-data method beats the stacked one on ``metric``."""
    wide = table.pivot(index="replicate", columns="method", values=metric)
    return {
        m: float(np.mean(wide[m] < wide["GaSP-stack"])) for m in ("GaSP-full", "S-GaSP-full")
    }


# ------------------------------------------------------------ Mogi scenario


def simulate_mogi_sources(
    rng: np.random.Generator,
    grid: int = 20,
    truth: MogiParams = MOGI_TRUTH,
    bias_sd: float = 0.004,
    bias_range: float = 2500.0,
    noise_sd: float = 0.001,
) -> MultiSourceDataset:
    """Five line-of-sight images of one Mogi source with per-source bias and noise (m/yr)."""
    axis = np.linspace(-4000.0, 6000.0, grid)
    gx, gy = np.meshgrid(axis, axis)
    inputs = np.column_stack([gx.ravel(), gy.ravel()])
    spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0 / bias_range] * 2)
    forward = MogiModel()
    sources = []
    for label, look in MOGI_LOOKS.items():
        look = _unit(look)
        signal = forward.evaluate(truth.as_array(), inputs, look)
        bias = _draw_process(inputs, spec, bias_sd**2, rng)
        y = signal + bias + rng.normal(0.0, noise_sd, inputs.shape[0])
        sources.append(
            SourceObservations(inputs=inputs.copy(), outputs=y, look_vector=look, label=label)
        )
    return MultiSourceDataset(sources=sources, aligned=True)


def _mogi_replicate(
    seed: np.random.SeedSequence, settings: McmcSettings, grid: int, replicate: int
) -> Dict[str, object]:
    ds = simulate_mogi_sources(np.random.default_rng(seed), grid)
    problem = CalibrationProblem(
        ds, MogiModel(), make_discrepancy(DiscrepancyMode.SGASP, ds.n, 2)
    )
    samples = mcmc_run(
        problem, settings.model_copy(update={"seed": int(seed.generate_state(1)[0])}), threads=1
    )
    depth = float(np.median(samples.draws[:, samples.columns.index("theta_3")]))
    dv = float(np.median(samples.draws[:, samples.columns.index("theta_4")]))
    depth_err = abs(depth - MOGI_TRUTH.depth) / MOGI_TRUTH.depth
    dv_err = abs(dv - MOGI_TRUTH.dv) / MOGI_TRUTH.dv
    logger.info(f"📊 Mogi replicate {replicate}: depth error {depth_err:.1%}, dv error {dv_err:.1%}")
    return {
        "replicate": replicate,
        "depth_median": depth,
        "depth_rel_error": depth_err,
        "dv_median": dv,
        "dv_rel_error": dv_err,
        "recovered": bool(depth_err <= 0.15 and dv_err <= 0.20),
    }


def run_mogi_scenario(
    n_reps: int = 10,
    seed: int = 0,
    grid: int = 20,
    n_samples: int = 2000,
    burn_in: int = 500,
    thin: int = 5,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """S-GaSP calibration of five synthetic interferograms; recovery of depth and volume rate."""
    if n_reps < 1:
        raise DomainError("n_reps must be at least 1")
    settings = McmcSettings(n_samples=n_samples, burn_in=burn_in, thin=thin, seed=seed)
    seeds = _seeds(seed, n_reps)
    results = _map_replicates(
        lambda i: _mogi_replicate(seeds[i], settings, grid, i), list(range(n_reps)), threads
    )
    return pd.DataFrame(results)


# ------------------------------------------------------------------- timing


def scaling_witness(
    n: int = 200, ks: Sequence[int] = (2, 4, 8), seed: int = 0, repeats: int = 3
) -> pd.DataFrame:
    """Best-of-``repeats`` wall time of ``joint_marginal`` for each number of sources."""
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n)[:, None]
    disc = make_discrepancy(DiscrepancyMode.SGASP, n, 1)
    f = toy_sine(TRUE_SINE_THETA, x[:, 0])
    rows = []
    for k in ks:
        ds = MultiSourceDataset(
            sources=[
                SourceObservations(inputs=x.copy(), outputs=f + rng.normal(0.0, 0.1, n))
                for _ in range(k)
            ],
            aligned=True,
        )
        state = ParameterState(
            theta=[TRUE_SINE_THETA],
            mu=np.zeros(k),
            sigma2=np.full(k, 0.2),
            beta_bias=np.full((k, 1), 50.0),
            eta=np.full(k, 0.05),
            tau2=0.04,
            beta_disc=[10.0],
        )
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            joint_marginal(ds, f, state, disc)
            times.append(time.perf_counter() - t0)
        rows.append({"k": k, "n": n, "seconds": min(times)})
        logger.info(f"⏱️ k={k}: {min(times):.4f}s")
    table = pd.DataFrame(rows)
    table["seconds_per_source"] = table["seconds"] / table["k"]
    return table
