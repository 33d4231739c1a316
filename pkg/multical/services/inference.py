"""Maximum likelihood and posterior sampling for calibration problems."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.special import logit

from multical.config import config
from multical.exceptions import (
    CalibrationError,
    DomainError,
    EmptyResultError,
    InitializationError,
    OptimizationError,
)
from multical.schemas.models import (
    CorrelationMatrix,
    DiscrepancyModel,
    KernelFamily,
    McmcSettings,
    MleResult,
    MultiSourceDataset,
    ParameterState,
    PosteriorSamples,
    PriorSpec,
    StartRecord,
)
from multical.services.forward import ForwardModel
from multical.services.problem import CalibrationProblem, jr_prior_logdensity  # noqa: F401
from multical.utils.linalg import cho_solve

logger = logging.getLogger(__name__)

PENALTY = 1e25
FD_STEP = 1e-5
FTOL = 1e-8
MAX_ITER = 1000
DEFAULT_SCALE = 0.1


def log_posterior(
    state: ParameterState,
    ds: MultiSourceDataset,
    discrepancy: DiscrepancyModel,
    prior: PriorSpec,
    forward: ForwardModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> float:
    """Joint marginal likelihood plus box, JR and location-scale log-priors."""
    problem = CalibrationProblem(ds, forward, discrepancy, prior, bias_family=bias_family)
    return problem.log_posterior(state)


def closed_form_mean_mle(ybar: np.ndarray, R: CorrelationMatrix) -> Union[float, np.ndarray]:
    """Generalized least-squares mean ``(1' R^-1 1)^-1 1' R^-1 ybar``.

    ``ybar`` may be one n-vector or an m x n array of replicates.
    """
    ybar = np.asarray(ybar, dtype=float)
    if ybar.shape[-1] != R.n:
        raise DomainError(f"stacked data must have {R.n} entries per row, got {ybar.shape[-1]}")
    ones = np.ones(R.n)
    Rinv_ones = cho_solve(R.factor, ones)
    est = ybar @ Rinv_ones / (ones @ Rinv_ones)
    return float(est) if ybar.ndim == 1 else est


# --------------------------------------------------------------------------- MLE


def _objective(problem: CalibrationProblem, base: ParameterState):
    def f(x: np.ndarray) -> float:
        try:
            value = -problem.log_likelihood(problem.to_state(x, base))
        except (CalibrationError, np.linalg.LinAlgError, FloatingPointError) as e:
            logger.debug(f"Objective failed: {e}")
            return PENALTY
        return value if np.isfinite(value) else PENALTY

    def grad(x: np.ndarray) -> np.ndarray:
        g = np.empty_like(x)
        for i in range(x.size):
            step = np.zeros_like(x)
            step[i] = FD_STEP
            g[i] = (f(x + step) - f(x - step)) / (2.0 * FD_STEP)
        return g

    return f, grad


def _start_points(problem: CalibrationProblem, x0: np.ndarray, n_starts: int, seed: int):
    children = np.random.SeedSequence(seed).spawn(n_starts)
    starts = [x0.copy()]
    spread = max(float(np.std(np.concatenate([s.outputs for s in problem.ds.sources]))), 1e-3)
    for child in children[1:]:
        rng = np.random.default_rng(child)
        x = x0.copy()
        for i, c in enumerate(problem.coordinates):
            if c.transform == "logit":
                x[i] = float(logit(rng.uniform(0.02, 0.98)))
            elif c.transform == "log":
                x[i] = x0[i] + rng.normal(0.0, 1.0)
            else:
                x[i] = x0[i] + rng.normal(0.0, 0.1 * spread)
        starts.append(x)
    return starts


def _run_start(problem, base, index, x_init) -> Tuple[StartRecord, Optional[np.ndarray]]:
    f, grad = _objective(problem, base)
    bounds = problem.free_bounds()
    x_init = np.array(
        [np.clip(v, lo if lo is not None else -np.inf, hi if hi is not None else np.inf)
         for v, (lo, hi) in zip(x_init, bounds)]
    )
    try:
        res = optimize.minimize(
            f,
            x_init,
            jac=grad,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": MAX_ITER, "ftol": FTOL},
        )
    except (CalibrationError, ValueError, np.linalg.LinAlgError) as e:
        logger.warning(f"⚠️ Start {index} failed: {e}")
        return (
            StartRecord(
                start=index,
                initial=x_init.tolist(),
                final=x_init.tolist(),
                log_likelihood=-np.inf,
                converged=False,
                n_iterations=0,
                message=str(e),
            ),
            None,
        )

    ll = -float(res.fun) if res.fun < PENALTY else -np.inf
    logger.debug(f"Start {index}: log-likelihood {ll:.6f} after {res.nit} iterations")
    record = StartRecord(
        start=index,
        initial=x_init.tolist(),
        final=np.asarray(res.x).tolist(),
        log_likelihood=ll,
        converged=bool(res.success),
        n_iterations=int(res.nit),
        message=str(res.message),
    )
    return record, np.asarray(res.x)


def mle_fit(
    problem: CalibrationProblem,
    n_starts: Optional[int] = None,
    seed: int = 0,
    threads: Optional[int] = None,
) -> MleResult:
    """Multi-start L-BFGS-B on the free vector maximizing the marginal likelihood."""
    n_starts = n_starts or config.MLE_STARTS
    threads = threads or config.THREADS
    base = problem.initial_state()
    x0 = problem.to_vector(base)

    if x0.size == 0:
        ll = problem.log_likelihood(base)
        record = StartRecord(
            start=0, initial=[], final=[], log_likelihood=ll, converged=True, n_iterations=0
        )
        return MleResult(state=base, log_likelihood=ll, starts=[record], seed=seed)

    starts = _start_points(problem, x0, n_starts, seed)
    logger.info(f"🔍 MLE with {n_starts} starts over {x0.size} free parameters")
    t0 = time.perf_counter()

    with ThreadPoolExecutor(max_workers=min(threads, n_starts)) as pool:
        outcomes = list(pool.map(lambda a: _run_start(problem, base, *a), enumerate(starts)))

    records = [r for r, _ in outcomes]
    finite = [(r, x) for r, x in outcomes if x is not None and np.isfinite(r.log_likelihood)]
    if not finite:
        raise OptimizationError(
            f"all {n_starts} optimizer starts failed",
            diagnostics=[r.model_dump() for r in records],
        )

    best_record, best_x = max(finite, key=lambda rx: (rx[0].log_likelihood, -rx[0].start))
    state = problem.to_state(best_x, base)
    logger.info(
        f"✅ MLE finished in {time.perf_counter() - t0:.1f}s: "
        f"log-likelihood {best_record.log_likelihood:.4f} (start {best_record.start})"
    )
    return MleResult(
        state=state, log_likelihood=best_record.log_likelihood, starts=records, seed=seed
    )


# -------------------------------------------------------------------------- MCMC


def draw_gaussian(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(mean, cov); tiny negative eigenvalues are clipped."""
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    w = np.clip(w, 0.0, None)
    return mean + V @ (np.sqrt(w) * rng.standard_normal(mean.size))


def _coordinate_scales(problem: CalibrationProblem, settings: McmcSettings) -> np.ndarray:
    given = settings.proposal_scales or {}
    spread = max(float(np.std(np.concatenate([s.outputs for s in problem.ds.sources]))), 1e-3)
    scales = np.empty(len(problem.coordinates))
    for i, c in enumerate(problem.coordinates):
        if c.name in given:
            scales[i] = given[c.name]
        elif c.transform == "identity":
            scales[i] = DEFAULT_SCALE * spread
        else:
            scales[i] = DEFAULT_SCALE
    return scales


class _Chain:
    """One blocked random-walk Metropolis chain on the free vector."""

    def __init__(self, problem: CalibrationProblem, settings: McmcSettings, seed, chain_id: int):
        self.problem = problem
        self.settings = settings
        self.chain_id = chain_id
        self.rng = np.random.default_rng(seed)
        self.scales = _coordinate_scales(problem, settings)
        self.log_scale = {name: 0.0 for name in problem.blocks}
        self.accepted = {name: 0 for name in problem.blocks}
        self.attempted = {name: 0 for name in problem.blocks}

    def _start(self):
        state0 = self.problem.initial_state()
        x = self.problem.to_vector(state0)
        state = self.problem.to_state(x, state0)
        try:
            fit = self.problem.fit(state)
            lp = self.problem.log_prior(state)
        except CalibrationError as e:
            raise InitializationError(f"log-posterior failed at the initial state: {e}") from e
        target = fit.log_likelihood + lp + self.problem.log_jacobian(x)
        if not np.isfinite(target):
            raise InitializationError("non-finite log-posterior at the initial state")
        return x, fit, lp, target

    def run(self):
        problem, settings = self.problem, self.settings
        x, fit, lp, target = self._start()

        kept_values: List[np.ndarray] = []
        kept_logpost: List[float] = []
        kept_delta: List[np.ndarray] = []
        kept_states: List[ParameterState] = []

        for it in range(settings.n_samples):
            burning = it < settings.burn_in
            for name, idx in problem.blocks.items():
                proposal = x.copy()
                step = np.exp(self.log_scale[name]) * self.scales[idx]
                proposal[idx] += step * self.rng.standard_normal(len(idx))
                new_state = problem.to_state(proposal, fit.state)

                accept = False
                new_lp = problem.log_prior(new_state)
                if np.isfinite(new_lp):
                    try:
                        new_fit = problem.fit(new_state, block=name, base=fit)
                        new_target = new_fit.log_likelihood + new_lp + problem.log_jacobian(proposal)
                        accept = bool(
                            np.isfinite(new_target)
                            and np.log(self.rng.uniform()) < new_target - target
                        )
                    except CalibrationError as e:
                        logger.debug(f"Rejected {name} proposal: {e}")

                if accept:
                    x, fit, lp, target = proposal, new_fit, new_lp, new_target

                if burning:
                    if settings.adapt:
                        gain = (it + 1) ** -0.6
                        self.log_scale[name] += gain * (float(accept) - settings.adapt_target)
                else:
                    self.attempted[name] += 1
                    self.accepted[name] += int(accept)

            if not burning and (it - settings.burn_in) % settings.thin == 0:
                mean, cov = problem.discrepancy_posterior(fit)
                kept_delta.append(draw_gaussian(mean, cov, self.rng))
                kept_values.append(problem.natural_values(fit.state))
                kept_logpost.append(fit.log_likelihood + lp)
                kept_states.append(fit.state)

        acceptance = {
            name: self.accepted[name] / self.attempted[name] if self.attempted[name] else 0.0
            for name in problem.blocks
        }
        logger.info(
            f"📊 Chain {self.chain_id} done: {len(kept_values)} draws, acceptance "
            + ", ".join(f"{k}={v:.2f}" for k, v in acceptance.items())
        )
        return kept_values, kept_logpost, kept_delta, kept_states, acceptance


def mcmc_run(
    problem: CalibrationProblem,
    settings: McmcSettings,
    threads: Optional[int] = None,
) -> PosteriorSamples:
    """Metropolis-within-Gibbs over theta, means, per-source bias and discrepancy blocks.

    Chains use seeds spawned from ``settings.seed`` and run concurrently. The
    discrepancy at the training inputs is drawn from its conditional law at
    every retained sweep.
    """
    threads = threads or config.THREADS
    seeds = np.random.SeedSequence(settings.seed).spawn(settings.n_chains)
    chains = [_Chain(problem, settings, s, i) for i, s in enumerate(seeds)]
    logger.info(
        f"🎲 MCMC: {settings.n_chains} chain(s) x {settings.n_samples} iterations, "
        f"burn-in {settings.burn_in}, thin {settings.thin}, blocks {list(problem.blocks)}"
    )

    if settings.n_chains == 1:
        results = [chains[0].run()]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, settings.n_chains)) as pool:
            results = list(pool.map(lambda c: c.run(), chains))

    values, logpost, deltas, states, chain_ids = [], [], [], [], []
    acceptance = {}
    for i, (v, lp, d, s, acc) in enumerate(results):
        values.extend(v)
        logpost.extend(lp)
        deltas.extend(d)
        states.extend(s)
        chain_ids.extend([i] * len(v))
        for name, rate in acc.items():
            acceptance[name if settings.n_chains == 1 else f"{name}_chain{i + 1}"] = rate
    if settings.n_chains > 1:
        for name in problem.blocks:
            acceptance[name] = float(
                np.mean([acc[name] for *_, acc in results])
            )

    return PosteriorSamples(
        columns=problem.column_names,
        draws=np.asarray(values, dtype=float).reshape(len(values), len(problem.column_names)),
        log_posterior=np.asarray(logpost, dtype=float),
        delta_draws=np.asarray(deltas, dtype=float),
        chain=np.asarray(chain_ids, dtype=int),
        acceptance=acceptance,
        seed=settings.seed,
        settings=settings,
        states=states,
    )


def posterior_summaries(samples: PosteriorSamples) -> pd.DataFrame:
    """Mean, sd and central 95% interval of every retained coordinate."""
    if samples.n_draws == 0:
        raise EmptyResultError("no retained draws to summarize")
    frame = pd.DataFrame(samples.draws, columns=samples.columns)
    ddof = 1 if samples.n_draws > 1 else 0
    return pd.DataFrame(
        {
            "mean": frame.mean(),
            "sd": frame.std(ddof=ddof),
            "lower_95": frame.quantile(0.025),
            "upper_95": frame.quantile(0.975),
        }
    )
