"""Shallow energies and the interaction fields that drive training.

Particle and data sets are plain ``(count, D)`` arrays whose rows satisfy the
manifold constraint; the trained measure over features is a
:class:`FeatureEnsemble`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FeatureMap, RidgeFeatures, TorusFeatures
from .geometry import Manifold


def _rows(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def phi(x, theta, features: FeatureMap) -> float:
    """Single feature evaluated at a single point."""
    return float(features.phi(_rows(x), _rows(theta))[0, 0])


@dataclass
class FeatureEnsemble:
    """``m`` features with nonnegative weights and fixed signs.

    Represents the signed measure ``(1/m) sum_j sign_j w_j delta_{theta_j}``.
    """

    theta: np.ndarray
    w: np.ndarray
    sign: np.ndarray
    features: FeatureMap = field(repr=False)

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float, ndmin=2)
        self.w = np.array(self.w, dtype=float).reshape(-1)
        self.sign = np.array(self.sign, dtype=float).reshape(-1)
        if not (len(self.theta) == len(self.w) == len(self.sign)):
            raise ValueError("theta, w and sign must have the same length")
        if np.any(self.w < 0):
            raise ValueError("weights must be nonnegative")
        if not np.all(np.isin(self.sign, (-1.0, 1.0))):
            raise ValueError("signs must be +1 or -1")

    @property
    def m(self) -> int:
        return len(self.w)

    @property
    def coef(self) -> np.ndarray:
        """Per-feature coefficient ``sign_j w_j / m`` of the signed measure."""
        return self.sign * self.w / self.m

    @property
    def tv_norm(self) -> float:
        return float(np.mean(self.w))

    def copy(self) -> "FeatureEnsemble":
        return FeatureEnsemble(self.theta.copy(), self.w.copy(), self.sign.copy(), self.features)

    @classmethod
    def random(cls, features: FeatureMap, m: int, rng, weight_init="uniform"):
        """Features uniform over their space, random signs, weights in [0, 1) or all ones."""
        if isinstance(features, TorusFeatures):
            theta = rng.random((m, 1))
        else:
            theta = features.project_theta(rng.standard_normal((m, features.P)))
        sign = rng.choice([-1.0, 1.0], size=m)
        if weight_init == "uniform":
            w = rng.random(m)
        elif weight_init == "ones":
            w = np.ones(m)
        else:
            raise ValueError(f"unknown weight_init {weight_init!r}")
        return cls(theta, w, sign, features)


def energy(ens: FeatureEnsemble, x):
    """``(1/m) sum_j sign_j w_j phi(x, theta_j)`` at one point or a batch of rows."""
    X = _rows(x)
    if isinstance(ens.features, TorusFeatures):
        out = ens.features.weighted(X, ens.theta, ens.coef)
    else:
        out = ens.features.phi(X, ens.theta) @ ens.coef
    return float(out[0]) if np.ndim(x) == 1 else out


def grad_energy_x(ens: FeatureEnsemble, x, tangent: bool = False):
    """Ambient x-gradient of :func:`energy`; tangent-projected on spheres if asked."""
    X = _rows(x)
    g = ens.features.grad_x(X, ens.theta, ens.coef)
    if tangent:
        g = ens.features.manifold.tangent(X, g)
    return g[0] if np.ndim(x) == 1 else g


@dataclass
class TeacherModel:
    """Planted energy ``f*(x) = (1/J) sum_j w*_j act(<theta*_j, x>)`` on a sphere."""

    theta: np.ndarray
    w: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float, ndmin=2)
        self.w = np.array(self.w, dtype=float).reshape(-1)
        norms = np.linalg.norm(self.theta, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise ValueError("teacher neurons must be unit vectors")
        d = self.theta.shape[1] - 1
        self.features = RidgeFeatures(Manifold.sphere(d), self.activation, bias=False)

    @property
    def J(self) -> int:
        return len(self.w)

    @classmethod
    def two_neuron(cls, d: int, angle: float, weight: float = -10.0, activation="relu"):
        """Two neurons in the (e1, e2) plane separated by ``angle`` radians."""
        t1 = np.zeros(d + 1)
        t1[0] = 1.0
        t2 = np.zeros(d + 1)
        t2[0], t2[1] = np.cos(angle), np.sin(angle)
        return cls(np.stack([t1, t2]), [weight, weight], activation)

    def as_ensemble(self) -> FeatureEnsemble:
        """The same energy written as a feature ensemble (weights |w*|, signs of w*)."""
        sign = np.where(self.w < 0, -1.0, 1.0)
        return FeatureEnsemble(self.theta, np.abs(self.w), sign, self.features)

    def to_dict(self):
        return {"theta": self.theta.tolist(), "w": self.w.tolist(), "activation": self.activation}


def teacher_energy(t: TeacherModel, x, tangent: bool = False):
    """Return ``(f*(x), grad f*(x))``; the gradient is tangent-projected if asked."""
    ens = t.as_ensemble()
    return energy(ens, x), grad_energy_x(ens, x, tangent=tangent)


def _field_values(features, X, T):
    X = _rows(X)
    b = np.full(len(X), 1.0 / len(X))
    if isinstance(features, TorusFeatures):
        return features.weighted(_rows(T), X, b)
    return b @ features.phi(X, T)


def field_F(particles, data, theta, features: FeatureMap, data_term=None):
    """``F(theta) = mean_i phi(X_i, theta) - mean_i phi(x_i, theta)``.

    ``data_term`` may carry precomputed data averages (one per row of
    ``theta``), used when the data term is a population integral.
    """
    T = _rows(theta)
    if len(particles) == 0 or (data_term is None and len(data) == 0):
        raise ValueError("field_F needs at least one particle and one data point")
    dterm = _field_values(features, data, T) if data_term is None else np.asarray(data_term)
    out = _field_values(features, particles, T) - dterm
    return float(out[0]) if np.ndim(theta) == 1 else out


def field_gradF(particles, data, theta, features: FeatureMap, data_term=None):
    """theta-gradient of :func:`field_F` (ambient, before any projection)."""
    T = _rows(theta)
    P = _rows(particles)
    out = features.grad_theta(P, T, np.full(len(P), 1.0 / len(P)))
    if data_term is None:
        D = _rows(data)
        out = out - features.grad_theta(D, T, np.full(len(D), 1.0 / len(D)))
    else:
        out = out - np.asarray(data_term)
    return out[0] if np.ndim(theta) == 1 else out


def field_K(ens: FeatureEnsemble, F_values) -> float:
    """Mass-cap multiplier: active only once the mean weight reaches 1."""
    if np.sum(ens.w) < ens.m:
        return 0.0
    return float(np.sum(ens.coef * np.asarray(F_values)))
