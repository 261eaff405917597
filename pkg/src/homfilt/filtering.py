"""Weighted-particle filters for the full and reduced models, plus a Kalman reference.

Both filters are bootstrap filters: particles move through the prior dynamics
and are reweighted by the one-step discrete Girsanov factor
exp(h * dY - 0.5 |h|^2 dt), with systematic resampling when the effective
sample size drops below a threshold fraction.  The reduced filter runs on the
slow coordinates only but consumes the same observation increments as the full
filter -- that pairing is the whole point of the construction.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .averaging import HomogenizedModel
from .errors import GridMismatchError, UsageError, WeightCollapseError
from .models import MultiscaleModel, ObservationPath, multiscale_step


@dataclass(frozen=True)
class ParticleEnsemble:
    """Weighted particle cloud at a fixed time."""

    states: np.ndarray   # (N, dim)
    weights: np.ndarray  # (N,), nonnegative, summing to 1
    time: float = 0.0

    def __post_init__(self):
        if len(self.states) != len(self.weights) or len(self.states) < 1:
            raise ValueError("states and weights must have equal length >= 1")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")

    @property
    def n_particles(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.states


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int
    dt: float
    resample_threshold: float = 0.5
    substeps_fast: Optional[int] = None  # full filter only; default ceil(1/eps)

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if not (0.0 < self.resample_threshold <= 1.0):
            raise ValueError("resample_threshold must lie in (0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray        # (m,)
    covariance: np.ndarray  # (m, m), symmetric PSD
    time: float = 0.0


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w_i^2) of normalized weights."""
    w = np.asarray(weights)
    return 1.0 / float(w @ w)


def weight_update(ensemble: ParticleEnsemble, obs_increment: np.ndarray,
                  obs_values: np.ndarray, dt: float) -> ParticleEnsemble:
    """Multiply weights by the discrete Girsanov factor and renormalize.

    obs_values[i] is the (averaged) read-out evaluated at particle i; the
    factor is exp(obs_values[i] . dY - 0.5 |obs_values[i]|^2 dt).  Weights are
    accumulated in log space with max-subtraction to avoid underflow.
    """
    dy = np.atleast_1d(np.asarray(obs_increment, dtype=float))
    hv = np.asarray(obs_values, dtype=float)
    if hv.ndim == 1:
        hv = hv[:, None]
    with np.errstate(divide="ignore"):
        logw = np.log(ensemble.weights)
    logw = logw + hv @ dy - 0.5 * np.einsum("nd,nd->n", hv, hv) * dt
    mx = logw.max()
    if not np.isfinite(mx):
        raise WeightCollapseError(float(mx))
    w = np.exp(logw - mx)
    w /= w.sum()
    return ParticleEnsemble(states=ensemble.states, weights=w, time=ensemble.time)


def systematic_resample(ensemble: ParticleEnsemble, rng: np.random.Generator,
                        n_out: Optional[int] = None) -> ParticleEnsemble:
    """Systematic (single-uniform stratified) resampling to uniform weights.

    Offspring counts are determined by one uniform draw; the expected count of
    particle i is exactly n_out * w_i (n_out defaults to the ensemble size).
    """
    n = n_out or ensemble.n_particles
    positions = (rng.uniform() + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(ensemble.weights), positions, side="right")
    idx = np.minimum(idx, ensemble.n_particles - 1)  # cumsum rounding at 1.0
    return ParticleEnsemble(states=ensemble.states[idx],
                            weights=np.full(n, 1.0 / n),
                            time=ensemble.time)


def _check_obs_grid(obs: ObservationPath, dt: float):
    steps = obs.dt
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise GridMismatchError(
            f"observation step {steps[0]:g} does not match filter dt {dt:g}")


def _run_filter(propagate: Callable, read_out: Callable, obs: ObservationPath,
                init_states: np.ndarray, cfg: FilterConfig,
                rng: np.random.Generator, keep_history: bool,
                summary_sink: Optional[Callable]) -> List[ParticleEnsemble]:
    n = cfg.n_particles
    ens = ParticleEnsemble(states=np.asarray(init_states, dtype=float),
                           weights=np.full(n, 1.0 / n), time=0.0)
    history = [ens]
    for i, dy in enumerate(obs.increments):
        t = float(obs.times[i + 1])
        states = propagate(ens.states, rng, i)
        ens = ParticleEnsemble(states=states, weights=ens.weights, time=t)
        ens = weight_update(ens, dy, read_out(states), cfg.dt)
        e = ess(ens.weights)
        resampled = e < cfg.resample_threshold * n
        if resampled:
            ens = systematic_resample(ens, rng)
        if summary_sink is not None:
            summary_sink(t, ens.mean(), e, resampled)
        if keep_history:
            history.append(ens)
    if not keep_history:
        history = [history[0], ens]
    return history


def run_full_filter(model: MultiscaleModel, obs: ObservationPath,
                    init_sampler: Callable, cfg: FilterConfig,
                    rng: np.random.Generator, keep_history: bool = True,
                    summary_sink: Optional[Callable] = None) -> List[ParticleEnsemble]:
    """Bootstrap filter over the joint (slow, fast) state.

    init_sampler(rng, n) must return arrays x (n, m) and z (n, n_fast).
    Returns the initial ensemble followed by the ensemble after every
    observation step (just initial and final when keep_history is False).
    """
    _check_obs_grid(obs, cfg.dt)
    substeps = cfg.substeps_fast or model.default_substeps()
    m = model.dim_slow
    x0, z0 = init_sampler(rng, cfg.n_particles)

    def propagate(states, stream, step):
        x, z = states[:, :m], states[:, m:]
        x, z = multiscale_step(model, x, z, cfg.dt, substeps, stream, step_index=step)
        return np.concatenate([x, z], axis=1)

    def read_out(states):
        return model.obs_fn(states[:, :m], states[:, m:])

    init = np.concatenate([np.asarray(x0, dtype=float),
                           np.asarray(z0, dtype=float)], axis=1)
    return _run_filter(propagate, read_out, obs, init, cfg, rng,
                       keep_history, summary_sink)


def run_homogenized_filter(hmodel: HomogenizedModel, obs: ObservationPath,
                           init_sampler: Callable, cfg: FilterConfig,
                           rng: np.random.Generator, keep_history: bool = True,
                           summary_sink: Optional[Callable] = None
                           ) -> List[ParticleEnsemble]:
    """Bootstrap filter over the slow state only, driven by the full observations.

    init_sampler(rng, n) must return an array x (n, m).
    """
    _check_obs_grid(obs, cfg.dt)
    sq = np.sqrt(cfg.dt)

    def propagate(x, stream, step):
        xi = stream.standard_normal(x.shape)
        return (x + hmodel.drift_avg(x) * cfg.dt
                + np.einsum("...mk,...k->...m", hmodel.diff_avg(x), xi) * sq)

    init = np.asarray(init_sampler(rng, cfg.n_particles), dtype=float)
    return _run_filter(propagate, hmodel.obs_avg, obs, init, cfg, rng,
                       keep_history, summary_sink)


def kalman_reference(a_lin: float, q: float, h_lin: float, r: float,
                     obs: ObservationPath, prior: KalmanState) -> List[KalmanState]:
    """Discrete Kalman recursion for the Euler-discretized scalar linear model.

    Model: dX = a_lin X dt + sqrt(q) dV, with each observation increment
    treated as a reading of h_lin * X * dt corrupted by noise of variance
    r * dt.  Returns the prior followed by the state after each increment.
    """
    if q <= 0 or r <= 0:
        raise UsageError("q and r must be positive")
    mean = float(np.asarray(prior.mean).reshape(()))
    var = float(np.asarray(prior.covariance).reshape(()))
    out = [prior]
    for i, dy in enumerate(np.asarray(obs.increments).reshape(-1)):
        dt = float(obs.times[i + 1] - obs.times[i])
        mean = (1.0 + a_lin * dt) * mean
        var = (1.0 + a_lin * dt) ** 2 * var + q * dt
        hh = h_lin * dt
        s = hh * hh * var + r * dt
        gain = var * hh / s
        mean = mean + gain * (dy - hh * mean)
        var = (1.0 - gain * hh) * var
        out.append(KalmanState(mean=np.array([mean]),
                               covariance=np.array([[var]]),
                               time=float(obs.times[i + 1])))
    return out
