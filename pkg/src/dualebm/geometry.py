"""Sample-space and parameter-space manifolds.

Points are stored as 2-D float arrays of shape ``(count, ambient_dim)``. The
torus is stored with ``ambient_dim == 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPHERE = "sphere"
TORUS = "torus"
EUCLIDEAN = "euclidean"


class DegenerateInputError(ValueError):
    """Raised when a projection is asked to normalise a zero vector."""


def sphere_project(v):
    """Radially project ``v`` (one vector or a stack of row vectors) onto the unit sphere."""
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError("cannot project a zero or non-finite vector onto the sphere")
    return v / norms


def tangent_project(base, g):
    """Remove the component of ``g`` along the unit vector(s) ``base``."""
    base = np.asarray(base, dtype=float)
    g = np.asarray(g, dtype=float)
    return g - np.sum(g * base, axis=-1, keepdims=True) * base


def torus_wrap(x):
    """Map reals onto ``[0, 1)``."""
    y = np.mod(x, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def uniform_sphere(rng, size=None, ambient_dim=3):
    """Draw from the rotation-invariant law on the sphere in R^ambient_dim.

    With ``size=None`` a single vector is returned, otherwise an array of
    shape ``(size, ambient_dim)``.
    """
    shape = (ambient_dim,) if size is None else (size, ambient_dim)
    while True:
        z = rng.standard_normal(shape)
        norms = np.linalg.norm(z, axis=-1, keepdims=True)
        if np.all(norms > 0):
            return z / norms


@dataclass(frozen=True)
class Manifold:
    """One of the three spaces the dynamics run on.

    ``dim`` is the intrinsic dimension ``d``: the sphere ``S^d`` lives in
    ``R^(d+1)``, the torus has ``d == 1``, Euclidean space is ``R^d``.
    ``base`` selects the base measure of Euclidean space: ``"gaussian"``
    (standard normal, log-density gradient ``-x``) or ``"lebesgue"``.
    """

    kind: str
    dim: int
    base: str = "gaussian"

    def __post_init__(self):
        if self.kind not in (SPHERE, TORUS, EUCLIDEAN):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.kind == TORUS and self.dim != 1:
            raise ValueError("only the one-dimensional torus is supported")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.base not in ("gaussian", "lebesgue"):
            raise ValueError(f"unknown base measure {self.base!r}")

    @classmethod
    def sphere(cls, d: int) -> "Manifold":
        return cls(SPHERE, d)

    @classmethod
    def torus(cls) -> "Manifold":
        return cls(TORUS, 1)

    @classmethod
    def euclidean(cls, d: int, base: str = "gaussian") -> "Manifold":
        return cls(EUCLIDEAN, d, base)

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1 if self.kind == SPHERE else self.dim

    def project(self, x):
        if self.kind == SPHERE:
            return sphere_project(x)
        if self.kind == TORUS:
            return torus_wrap(x)
        return np.asarray(x, dtype=float)

    def tangent(self, x, g):
        """Riemannian part of an ambient vector field ``g`` at ``x``."""
        if self.kind == SPHERE:
            return tangent_project(x, g)
        return np.asarray(g, dtype=float)

    def log_base_grad(self, x):
        """Gradient of the log-density of the base measure w.r.t. Lebesgue/Hausdorff."""
        x = np.asarray(x, dtype=float)
        if self.kind == EUCLIDEAN and self.base == "gaussian":
            return -x
        return np.zeros_like(x)

    def uniform(self, rng, size):
        """Draw ``size`` points from the base measure."""
        if self.kind == SPHERE:
            return uniform_sphere(rng, size, self.ambient_dim)
        if self.kind == TORUS:
            return rng.random((size, 1))
        if self.base == "gaussian":
            return rng.standard_normal((size, self.dim))
        raise ValueError("the Lebesgue base measure on R^d cannot be sampled")

    def check(self, x, tol: float = 1e-10) -> bool:
        """True when every row of ``x`` satisfies the manifold constraint."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            return False
        if self.kind == SPHERE:
            return bool(np.all(np.abs(np.linalg.norm(x, axis=-1) - 1.0) <= tol))
        if self.kind == TORUS:
            return bool(np.all((x >= 0.0) & (x < 1.0)))
        return True
