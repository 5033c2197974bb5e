"""Direct score-matching training of shallow energies by particle WFR steps.

The loss of the signed feature measure ``gamma`` is

    L(gamma) = mean_i [ 1/2 |grad f(x_i)|^2 - beta^-1 (lap f(x_i) + grad log base . grad f(x_i)) ]

with ``f = int phi d gamma``. Its first variation ``V(theta)`` drives the
features: positions descend ``sign_j * grad V`` and log-weights descend
``sign_j * V - K``, followed by the same mean-weight cap as the dual trainer.
The factor ``2 beta^2`` separating ``V`` from the population-scale
derivative is absorbed into the step size.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dual_trainer import TrainingError, normalize_weights
from .features import FeatureMap
from .model import FeatureEnsemble


@dataclass
class SmConfig:
    s: float = 1e-3
    T: int = 1000
    beta: float = 20.0
    m: int = 64
    weight_init: object = "uniform"
    signs: str = "random"
    tv_cap: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("step size s must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.T < 0 or self.m < 1:
            raise ValueError("T >= 0 and m >= 1 are required")

    @property
    def inv_beta(self) -> float:
        return 0.0 if math.isinf(self.beta) else 1.0 / self.beta

    def time(self, iteration: int) -> float:
        return iteration * self.s

    def rescaled_time(self, iteration: int) -> float:
        return self.time(iteration)

    def to_dict(self):
        return asdict(self)


def _check_smooth(features: FeatureMap):
    act = getattr(features, "act", None)
    if act is not None and not act.smooth:
        raise ValueError("score matching needs a twice differentiable activation")


def _energy_grad(ens: FeatureEnsemble, X, inv_beta):
    """Tangent gradient of f at the data and the shifted field ``grad f - beta^-1 grad log base``."""
    manifold = ens.features.manifold
    G = manifold.tangent(X, ens.features.grad_x(X, ens.theta, ens.coef))
    return G, G - inv_beta * manifold.log_base_grad(X)


def sm_loss(ens: FeatureEnsemble, data, beta) -> float:
    """Empirical score-matching loss of the student energy on ``data``."""
    _check_smooth(ens.features)
    X = np.asarray(data, dtype=float)
    ib = 0.0 if math.isinf(beta) else 1.0 / beta
    G, _ = _energy_grad(ens, X, ib)
    lap = ens.features.laplacian_x(X, ens.theta) @ ens.coef
    base = np.sum(ens.features.manifold.log_base_grad(X) * G, axis=1)
    return float(np.mean(0.5 * np.sum(G * G, axis=1) - ib * (lap + base)))


def sm_first_variation(ens: FeatureEnsemble, data, beta, theta, with_grad=False):
    """``V(theta) = mean_i [grad phi(x_i, theta) . grad f(x_i) - beta^-1 L phi(x_i, theta)]``.

    ``L`` is the generator part ``lap + grad log base . grad``. ``V`` is the
    exact Gateaux derivative of :func:`sm_loss` along ``delta_theta``. With
    ``with_grad`` the ambient theta-gradient is returned too.
    """
    _check_smooth(ens.features)
    feats = ens.features
    X = np.asarray(data, dtype=float)
    T = np.array(theta, dtype=float, ndmin=2)
    ib = 0.0 if math.isinf(beta) else 1.0 / beta
    _, W = _energy_grad(ens, X, ib)
    b = np.full(len(X), 1.0 / len(X))
    V = b @ (feats.dir_deriv(X, T, W) - ib * feats.laplacian_x(X, T))
    single = np.ndim(theta) == 1
    if not with_grad:
        return float(V[0]) if single else V
    gV = feats.dir_grad_theta(X, T, W, b) - ib * feats.lap_grad_theta(X, T, b)
    if single:
        return float(V[0]), gV[0]
    return V, gV


def sm_K(ens: FeatureEnsemble, V) -> float:
    """Mass-preserving multiplier, active once the mean weight reaches 1."""
    if np.sum(ens.w) < ens.m:
        return 0.0
    return float(np.sum(ens.coef * V) / ens.tv_norm)


def sm_step(ens: FeatureEnsemble, data, cfg: SmConfig) -> FeatureEnsemble:
    """One explicit WFR step on the score-matching loss."""
    feats = ens.features
    V, gV = sm_first_variation(ens, data, cfg.beta, ens.theta, with_grad=True)
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(gV))):
        raise TrainingError("non-finite score-matching field")
    K = sm_K(ens, V)
    theta = feats.project_theta(ens.theta - cfg.s * ens.sign[:, None] * gV)
    with np.errstate(over="ignore"):
        w = ens.w * np.exp(-cfg.s * (ens.sign * V - K))
    if not np.all(np.isfinite(w)):
        raise TrainingError("weight overflow in score-matching step")
    out = FeatureEnsemble(theta, w, ens.sign, feats)
    return normalize_weights(out) if cfg.tv_cap else out


def init_ensemble(features: FeatureMap, cfg: SmConfig) -> tuple[FeatureEnsemble, np.random.Generator]:
    rng = np.random.default_rng(cfg.seed)
    winit = cfg.weight_init
    if isinstance(winit, (int, float)):
        ens = FeatureEnsemble.random(features, cfg.m, rng, "ones")
        ens.w[:] = float(winit)
    else:
        ens = FeatureEnsemble.random(features, cfg.m, rng, winit)
    if cfg.signs == "negative":
        ens.sign[:] = -1.0
    elif cfg.signs == "positive":
        ens.sign[:] = 1.0
    return ens, rng


def train_sm(data, cfg: SmConfig, features: FeatureMap = None, ens: FeatureEnsemble = None,
             start: int = 0, callback=None, log_every: int = 0, until: int = None) -> FeatureEnsemble:
    """Run score-matching steps from iteration ``start`` up to ``cfg.T`` (or ``until``).

    ``callback(iteration, ens)`` fires at ``start == 0``, every ``log_every``
    iterations and at the end.
    """
    _check_smooth(features if ens is None else ens.features)
    if ens is None:
        if features is None:
            raise ValueError("features are required to initialise a run")
        ens, _ = init_ensemble(features, cfg)
    it = start
    stop = cfg.T if until is None else min(until, cfg.T)
    if callback is not None and it == 0:
        callback(it, ens)
    while it < stop:
        ens = sm_step(ens, data, cfg)
        it += 1
        if callback is not None and (it == cfg.T or (log_every > 0 and it % log_every == 0)):
            callback(it, ens)
    return ens
