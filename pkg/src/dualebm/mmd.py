"""Noisy MMD particle flows, the implicit kernel-regime EBM trainer.

Particles follow ``dX = -c grad W(X) dt + sqrt(2/beta) dB`` where ``W`` is the
witness function ``int k(x, .) d(nu_N - nu_n)``. The ``sqrt`` variant uses
``c = 1 / MMD`` and the ``squared`` variant ``c = 2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .features import FeatureMap, RidgeFeatures
from .geometry import SPHERE, Manifold

log = logging.getLogger(__name__)

MMD_FLOOR = 1e-9


class Kernel:
    def gram(self, X, Y):
        raise NotImplementedError

    def grad_x(self, X, Y, c):
        """``out[i] = sum_j c[j] grad_x k(X[i], Y[j])`` (ambient)."""
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        return float(self.gram(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


class ArcCosine1(Kernel):
    """Closed-form ReLU random-feature kernel with features uniform on the sphere.

    ``k(x, y) = |x| |y| (sin t + (pi - t) cos t) / (2 pi D)`` where ``t`` is the
    angle between ``x`` and ``y`` and ``D`` the ambient dimension. The ``1/D``
    comes from replacing Gaussian features by their normalised directions.
    """

    def __init__(self, ambient_dim: int):
        self.D = int(ambient_dim)
        self.c = 1.0 / (2.0 * np.pi * self.D)

    def _angles(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        nx = np.linalg.norm(X, axis=1)
        ny = np.linalg.norm(Y, axis=1)
        cos = np.clip((X @ Y.T) / np.outer(nx, ny), -1.0, 1.0)
        return nx, ny, cos, np.arccos(cos)

    def gram(self, X, Y):
        nx, ny, cos, t = self._angles(X, Y)
        return self.c * np.outer(nx, ny) * (np.sqrt(1.0 - cos * cos) + (np.pi - t) * cos)

    def grad_x(self, X, Y, c):
        # grad_x k = |y| (sin t xhat + (pi - t) yhat) / (2 pi D)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        nx, ny, cos, t = self._angles(X, Y)
        c = np.asarray(c, dtype=float)
        sin = np.sqrt(1.0 - cos * cos)
        xhat = X / nx[:, None]
        a = (sin * (ny * c)) @ np.ones(len(Y))
        B = ((np.pi - t) * c) @ Y
        return self.c * (a[:, None] * xhat + B)

    def to_dict(self):
        return {"kind": "arccos1", "ambient_dim": self.D}


class MonteCarloKernel(Kernel):
    """``k(x, y) = (1/M) sum_j phi(x, theta_j) phi(y, theta_j)`` for fixed features."""

    def __init__(self, features: FeatureMap, theta):
        self.features = features
        self.theta = np.array(theta, dtype=float, ndmin=2)
        self.M = len(self.theta)

    @classmethod
    def sample(cls, manifold: Manifold, M: int, rng, activation="relu"):
        feats = RidgeFeatures(manifold, activation, bias=manifold.kind != SPHERE)
        theta = feats.project_theta(rng.standard_normal((M, feats.P)))
        return cls(feats, theta)

    def embed(self, X):
        return self.features.phi(np.asarray(X, dtype=float), self.theta)

    def gram(self, X, Y):
        return self.embed(X) @ self.embed(Y).T / self.M

    def grad_x(self, X, Y, c):
        coef = (np.asarray(c, dtype=float) @ self.embed(Y)) / self.M
        return self.features.grad_x(np.asarray(X, dtype=float), self.theta, coef)

    def to_dict(self):
        return {"kind": "montecarlo", "M": self.M, "features": self.features.to_dict()}


def make_kernel(spec, manifold: Manifold, rng=None) -> Kernel:
    spec = dict(spec or {})
    kind = spec.get("kind", "arccos1")
    if kind == "arccos1":
        if manifold.kind != SPHERE:
            raise ValueError("the closed-form arc-cosine kernel is defined on spheres")
        return ArcCosine1(manifold.ambient_dim)
    if kind == "montecarlo":
        rng = np.random.default_rng(spec.get("seed", 0)) if rng is None else rng
        return MonteCarloKernel.sample(manifold, int(spec.get("M", 1000)), rng,
                                       spec.get("activation", "relu"))
    raise ValueError(f"unknown kernel kind {kind!r}")


def _signed_points(particles, data):
    P = np.asarray(particles, dtype=float)
    D = np.asarray(data, dtype=float)
    if len(P) == 0 or len(D) == 0:
        raise ValueError("need at least one particle and one data point")
    Y = np.vstack([P, D])
    c = np.concatenate([np.full(len(P), 1.0 / len(P)), np.full(len(D), -1.0 / len(D))])
    return Y, c


def mmd2(particles, data, kernel: Kernel) -> float:
    """Biased (V-statistic) squared MMD between the two empirical measures."""
    P = np.asarray(particles, dtype=float)
    D = np.asarray(data, dtype=float)
    return float(kernel.gram(P, P).mean() + kernel.gram(D, D).mean() - 2.0 * kernel.gram(P, D).mean())


def witness(x, particles, data, kernel: Kernel):
    """``int k(x, .) d(nu_N - nu_n)`` at the rows of ``x``."""
    Y, c = _signed_points(particles, data)
    return kernel.gram(np.atleast_2d(x), Y) @ c


def mmd_drift(x, particles, data, kernel: Kernel):
    """Ambient gradient of :func:`witness` at the rows of ``x``."""
    Y, c = _signed_points(particles, data)
    return kernel.grad_x(np.atleast_2d(x), Y, c)


@dataclass
class MmdConfig:
    """``beta`` is the inverse temperature of the chosen variant (beta-tilde for ``squared``)."""

    variant: str = "sqrt"
    beta: float = 20.0
    s: float = 1e-2
    T: int = 1000
    N: int = 1000
    init: str = "base"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("sqrt", "squared"):
            raise ValueError(f"unknown MMD variant {self.variant!r}")
        if not self.s > 0:
            raise ValueError("step size s must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.init not in ("base", "data"):
            raise ValueError("init must be 'base' or 'data'")

    @property
    def inv_beta(self) -> float:
        return 0.0 if math.isinf(self.beta) else 1.0 / self.beta

    def time(self, iteration: int) -> float:
        return iteration * self.s

    def rescaled_time(self, iteration: int) -> float:
        return self.time(iteration)

    def to_dict(self):
        return asdict(self)


def mmd_step(particles, data, kernel: Kernel, cfg: MmdConfig, rng, manifold: Manifold, noise=None):
    """One Euler-Maruyama step of the chosen flow.

    Returns ``(new_particles, mmd)``. In the ``sqrt`` variant an MMD at or
    below ``1e-9`` switches the interaction drift off for the step.
    """
    X = np.asarray(particles, dtype=float)
    grad = mmd_drift(X, X, data, kernel)
    mmd = math.sqrt(max(mmd2(X, data, kernel), 0.0))
    if cfg.variant == "sqrt":
        if mmd <= MMD_FLOOR:
            log.info("MMD %.3g below floor, interaction drift switched off", mmd)
            drift = np.zeros_like(X)
        else:
            drift = -grad / mmd
    else:
        drift = -2.0 * grad
    if cfg.inv_beta > 0:
        drift = drift + cfg.inv_beta * manifold.log_base_grad(X)
    if noise is None:
        noise = rng.standard_normal(X.shape) if cfg.inv_beta > 0 else 0.0
    Y = X + cfg.s * drift + math.sqrt(2.0 * cfg.inv_beta * cfg.s) * noise
    if not np.all(np.isfinite(Y)):
        raise FloatingPointError("non-finite MMD particle update")
    return manifold.project(Y), mmd


def energy_estimate(x, particles, data, kernel: Kernel, cfg: MmdConfig):
    """Energy read off the particles: ``beta W / MMD`` (sqrt) or ``2 beta W`` (squared)."""
    W = witness(x, particles, data, kernel)
    if cfg.variant == "squared":
        return 2.0 * cfg.beta * W
    mmd = math.sqrt(max(mmd2(particles, data, kernel), 0.0))
    if mmd <= MMD_FLOOR:
        return np.zeros_like(W)
    return cfg.beta * W / mmd


def init_particles(data, cfg: MmdConfig, manifold: Manifold, rng):
    data = np.asarray(data, dtype=float)
    if cfg.init == "data":
        return data[rng.integers(len(data), size=cfg.N)].copy()
    return manifold.uniform(rng, cfg.N)


def train_mmd(data, cfg: MmdConfig, kernel: Kernel, manifold: Manifold, particles=None,
              rng=None, start: int = 0, callback=None, log_every: int = 0, until: int = None):
    """Run the flow to ``cfg.T`` (or ``until``); ``callback(iteration, particles)`` as in the other trainers."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    X = init_particles(data, cfg, manifold, rng) if particles is None else np.asarray(particles, dtype=float)
    it = start
    stop = cfg.T if until is None else min(until, cfg.T)
    if callback is not None and it == 0:
        callback(it, X)
    while it < stop:
        X, _ = mmd_step(X, data, kernel, cfg, rng, manifold)
        it += 1
        if callback is not None and (it == cfg.T or (log_every > 0 and it % log_every == 0)):
            callback(it, X)
    return X, rng
