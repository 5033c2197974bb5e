"""Simultaneous descent-ascent on generated samples and feature measure.

One iteration is: restart some particles from the data, move every particle
by an Euler-Maruyama step of the Langevin dynamics of the current energy,
move the features along +sign * grad F and rescale their weights by
exp(step * sign * F), then cap the mean weight at one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FeatureMap
from .model import FeatureEnsemble, grad_energy_x


class TrainingError(RuntimeError):
    pass


@dataclass
class DualConfig:
    """Run parameters.

    ``step_convention`` chooses how ``s`` and ``alpha`` become step sizes:
    ``"alg1"`` moves particles by ``s`` and features by ``alpha * s``;
    ``"fast"`` gives the faster of the two processes the step ``s`` and the
    slower one ``s * min(alpha, 1/alpha)``.
    """

    alpha: float = 1.0
    s: float = 0.02
    T: int = 1000
    beta: float = 20.0
    m: int = 64
    N: int = 1000
    p_R: float | None = None
    alpha_prime: float = 0.0
    weight_init: object = "uniform"
    theta_init: str = "uniform"
    signs: str = "random"
    step_convention: str = "alg1"
    tangent_drift: bool = False
    feature_transport: bool = True
    tv_cap: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.s > 0:
            raise ValueError("step size s must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.T < 0 or self.m < 1 or self.N < 1:
            raise ValueError("T >= 0, m >= 1 and N >= 1 are required")
        if self.alpha_prime < 0:
            raise ValueError("alpha_prime must be nonnegative")
        if not 0.0 <= self.restart_probability <= 1.0:
            raise ValueError("p_R must lie in [0, 1]")
        if self.step_convention not in ("alg1", "fast"):
            raise ValueError(f"unknown step_convention {self.step_convention!r}")

    @property
    def restart_probability(self) -> float:
        if self.p_R is not None:
            return float(self.p_R)
        return min(1.0, self.alpha_prime * self.s)

    @property
    def particle_step(self) -> float:
        if self.step_convention == "alg1":
            return self.s
        return self.s * min(1.0, 1.0 / self.alpha)

    @property
    def feature_step(self) -> float:
        return self.alpha * self.particle_step

    @property
    def inv_beta(self) -> float:
        return 0.0 if math.isinf(self.beta) else 1.0 / self.beta

    def time(self, iteration: int) -> float:
        """Time of the continuous dynamics reached after ``iteration`` steps."""
        return iteration * self.particle_step

    def rescaled_time(self, iteration: int) -> float:
        return self.time(iteration) * max(self.alpha, 1.0)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainerState:
    ensemble: FeatureEnsemble
    particles: np.ndarray
    iteration: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)


class DataTerm:
    """Data averages of phi and grad_theta phi at the current features.

    The default uses the empirical data set; a population integral can be
    supplied as ``fn(theta) -> (values, grads)``.
    """

    def __init__(self, data, features: FeatureMap, fn=None):
        self.data = np.asarray(data, dtype=float)
        self.features = features
        self.fn = fn

    def __call__(self, theta):
        if self.fn is not None:
            return self.fn(theta)
        return self.features.mean_and_grad(self.data, theta)


def init_state(data, features: FeatureMap, cfg: DualConfig) -> TrainerState:
    """Features uniform over their space, particles drawn uniformly from the data."""
    rng = np.random.default_rng(cfg.seed)
    winit = cfg.weight_init
    if isinstance(winit, (int, float)):
        ens = FeatureEnsemble.random(features, cfg.m, rng, "ones")
        ens.w[:] = float(winit)
    else:
        ens = FeatureEnsemble.random(features, cfg.m, rng, winit)
    if cfg.theta_init == "grid":
        if features.P != 1:
            raise ValueError("grid feature initialisation is only available on the torus")
        ens.theta = (np.arange(cfg.m) / cfg.m).reshape(-1, 1)
    if cfg.signs == "negative":
        ens.sign[:] = -1.0
    elif cfg.signs == "positive":
        ens.sign[:] = 1.0
    data = np.asarray(data, dtype=float)
    particles = data[rng.integers(len(data), size=cfg.N)].copy()
    return TrainerState(ens, particles, 0, rng)


def restart_particles(particles, data, p_R, rng):
    """Replace each particle, independently with probability ``p_R``, by a uniform data draw.

    Returns the new particle array and the boolean mask of replaced rows.
    """
    if not 0.0 <= p_R <= 1.0:
        raise ValueError("p_R must lie in [0, 1]")
    particles = np.asarray(particles, dtype=float)
    N = len(particles)
    if p_R == 0.0:
        return particles, np.zeros(N, dtype=bool)
    mask = rng.random(N) < p_R
    idx = rng.integers(len(data), size=N)
    out = particles.copy()
    out[mask] = np.asarray(data)[idx[mask]]
    return out, mask


def particle_update(state: TrainerState, cfg: DualConfig, rng=None, noise=None):
    """Euler-Maruyama step of the particles in the current energy; returns new particles."""
    rng = state.rng if rng is None else rng
    ens = state.ensemble
    manifold = ens.features.manifold
    X = state.particles
    h = cfg.particle_step
    drift = -grad_energy_x(ens, X)
    if cfg.inv_beta > 0:
        drift = drift + cfg.inv_beta * manifold.log_base_grad(X)
    if cfg.tangent_drift:
        drift = manifold.tangent(X, drift)
    if noise is None:
        noise = rng.standard_normal(X.shape) if cfg.inv_beta > 0 else 0.0
    Y = X + h * drift + math.sqrt(2.0 * cfg.inv_beta * h) * noise
    if not np.all(np.isfinite(Y)):
        raise TrainingError(f"non-finite particle update at iteration {state.iteration}")
    return manifold.project(Y)


def feature_update(state: TrainerState, cfg: DualConfig, data_term: DataTerm) -> FeatureEnsemble:
    """Ascent step on the features using F computed from ``state.particles``.

    Weights are multiplied by ``exp(step * sign * F)`` (not yet normalised).
    """
    ens = state.ensemble
    feats = ens.features
    T = ens.theta
    pv, pg = feats.mean_and_grad(state.particles, T)
    dv, dg = data_term(T)
    F = pv - dv
    h = cfg.feature_step
    with np.errstate(over="ignore"):
        w = ens.w * np.exp(h * ens.sign * F)
    if not np.all(np.isfinite(w)):
        raise TrainingError(f"weight overflow at iteration {state.iteration}")
    theta = T
    if cfg.feature_transport:
        theta = feats.project_theta(T + h * ens.sign[:, None] * (pg - dg))
        if not np.all(np.isfinite(theta)):
            raise TrainingError(f"non-finite feature update at iteration {state.iteration}")
    return FeatureEnsemble(theta, w, ens.sign, feats)


def normalize_weights(ens: FeatureEnsemble) -> FeatureEnsemble:
    """Divide the weights by max(mean weight, 1)."""
    scale = max(float(np.mean(ens.w)), 1.0)
    if scale == 1.0:
        return ens
    return FeatureEnsemble(ens.theta, ens.w / scale, ens.sign, ens.features)


def step(state: TrainerState, data, cfg: DualConfig, data_term: DataTerm) -> TrainerState:
    """One full iteration; returns a new state sharing the RNG."""
    particles, _ = restart_particles(state.particles, data, cfg.restart_probability, state.rng)
    state = TrainerState(state.ensemble, particles, state.iteration, state.rng)
    particles = particle_update(state, cfg)
    state = TrainerState(state.ensemble, particles, state.iteration, state.rng)
    ens = feature_update(state, cfg, data_term)
    if cfg.tv_cap:
        ens = normalize_weights(ens)
    return TrainerState(ens, particles, state.iteration + 1, state.rng)


def train(data, cfg: DualConfig, features: FeatureMap = None, state: TrainerState = None,
          callback=None, log_every: int = 0, data_term=None, until: int = None) -> TrainerState:
    """Run until ``cfg.T`` iterations (or ``until``, if smaller) have been performed.

    ``callback(state)`` is called at iteration 0 (unless resuming past it),
    at every multiple of ``log_every`` and at iteration ``cfg.T``.
    """
    data = np.asarray(data, dtype=float)
    if state is None:
        if features is None:
            raise ValueError("features are required to initialise a run")
        state = init_state(data, features, cfg)
    dt = data_term if isinstance(data_term, DataTerm) else DataTerm(data, state.ensemble.features, data_term)
    stop = cfg.T if until is None else min(until, cfg.T)

    def due(it):
        return it == cfg.T or (log_every > 0 and it % log_every == 0)

    if callback is not None and state.iteration == 0:
        callback(state)
    while state.iteration < stop:
        state = step(state, data, cfg, dt)
        if callback is not None and due(state.iteration):
            callback(state)
    return state
