"""Projected unadjusted Langevin sampling of Gibbs measures exp(-beta f)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Manifold
from .model import TeacherModel, teacher_energy


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class LangevinConfig:
    h: float = 0.005
    burn_in: int = 50_000
    thin: int = 50
    chains: int = 100
    block: int = 1000

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("Langevin step size must be positive")
        if self.burn_in < 0 or self.thin < 1 or self.chains < 1 or self.block < 1:
            raise ValueError("burn_in >= 0, thin >= 1, chains >= 1 and block >= 1 are required")


def langevin_step(x, grad_f, beta, h, rng, manifold: Manifold, noise=None):
    """One Euler-Maruyama step of dX = (-grad f + beta^-1 grad log base) dt + sqrt(2/beta) dW.

    ``grad_f`` maps a ``(N, D)`` array to the ambient gradient of ``f``.
    ``beta = inf`` switches the noise off. The result is projected back onto
    the manifold. ``noise`` overrides the Gaussian draw (used to share noise
    between integrators).
    """
    x = np.asarray(x, dtype=float)
    inv_beta = 0.0 if math.isinf(beta) else 1.0 / beta
    drift = -grad_f(x)
    if inv_beta > 0:
        drift = drift + inv_beta * manifold.log_base_grad(x)
    if noise is None:
        noise = rng.standard_normal(x.shape) if inv_beta > 0 else 0.0
    y = x + h * drift + math.sqrt(2.0 * inv_beta * h) * noise
    if not np.all(np.isfinite(y)):
        raise SamplerError("non-finite Langevin update")
    return manifold.project(y)


def run_chains(grad_f, manifold: Manifold, beta, n, cfg: LangevinConfig, seed, x0=None):
    """Independent chains, each driven by its own ``(seed, chain)`` stream.

    Returns ``n`` thinned samples taken after burn-in, chain-interleaved.
    """
    if n < 1:
        raise ValueError("at least one sample must be requested")
    C = cfg.chains
    per_chain = -(-n // C)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(C)]
    init_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(C + 1)[C])
    x = manifold.uniform(init_rng, C) if x0 is None else np.array(x0, dtype=float)
    D = x.shape[1]
    total = cfg.burn_in + cfg.thin * per_chain
    out = np.empty((per_chain, C, D))
    kept = 0
    step = 0
    inv_beta = 0.0 if math.isinf(beta) else 1.0 / beta
    while step < total:
        B = min(cfg.block, total - step)
        # (B, C, D) noise, chain c drawn from its own stream
        noise = np.stack([r.standard_normal((B, D)) for r in streams], axis=1)
        for b in range(B):
            x = langevin_step(x, grad_f, beta, cfg.h, None, manifold,
                              noise=noise[b] if inv_beta > 0 else 0.0)
            step += 1
            if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
                out[kept] = x
                kept += 1
    return out.reshape(per_chain * C, D)[:n]


def generate_dataset(teacher: TeacherModel, beta, n, cfg: LangevinConfig = LangevinConfig(), seed=0):
    """Approximate samples from the Gibbs measure of ``beta * f*`` on the sphere."""
    if n < 1:
        raise ValueError("n must be at least 1")
    d = teacher.theta.shape[1] - 1
    manifold = Manifold.sphere(d)

    def grad(x):
        val, g = teacher_energy(teacher, x)
        if not (np.all(np.isfinite(val)) and np.all(np.isfinite(g))):
            bad = np.flatnonzero(~np.isfinite(val))
            raise SamplerError(f"non-finite teacher energy at rows {bad[:5].tolist()}")
        return g

    return run_chains(grad, manifold, beta, n, cfg, seed)


def save_dataset(path, X):
    """One sample per line, coordinates in fixed column order, 17 significant digits."""
    X = np.asarray(X, dtype=float)
    header = ",".join(f"x{k}" for k in range(X.shape[1]))
    np.savetxt(path, X, fmt="%.17g", delimiter=",", header=header, comments="")


def load_dataset(path):
    X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if X.size == 0:
        raise ValueError(f"empty dataset file {path}")
    return X
