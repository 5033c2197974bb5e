"""Activations and feature maps phi(x, theta).

Every feature map works on batches: ``X`` has shape ``(N, D)`` (sample
points), ``T`` has shape ``(m, P)`` (feature parameters). Sums over one of the
two index sets are exposed directly so callers never materialise
``(N, m, D)`` tensors for the ridge and torus families.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from . import _kernels
from .geometry import SPHERE, TORUS, Manifold


class Activation:
    """Scalar nonlinearity with its first three derivatives."""

    name = "activation"
    smooth = True

    def __call__(self, u):
        raise NotImplementedError

    def d1(self, u):
        raise NotImplementedError

    def d2(self, u):
        raise NotImplementedError

    def d3(self, u):
        raise NotImplementedError

    def to_dict(self):
        return {"name": self.name}


class ReLU(Activation):
    # subgradient 0 at the kink
    name = "relu"
    smooth = False

    def __call__(self, u):
        return np.maximum(u, 0.0)

    def d1(self, u):
        return (np.asarray(u) > 0.0).astype(float)

    def d2(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def d3(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))


class Softplus(Activation):
    """Smooth ramp ``log(1 + exp(k u)) / k``; tends to ReLU as ``k`` grows."""

    name = "softplus"

    def __init__(self, sharpness: float = 20.0):
        if sharpness <= 0:
            raise ValueError("softplus sharpness must be positive")
        self.k = float(sharpness)

    def __call__(self, u):
        return np.logaddexp(0.0, self.k * np.asarray(u)) / self.k

    def d1(self, u):
        return expit(self.k * np.asarray(u))

    def d2(self, u):
        s = expit(self.k * np.asarray(u))
        return self.k * s * (1.0 - s)

    def d3(self, u):
        s = expit(self.k * np.asarray(u))
        return self.k**2 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def to_dict(self):
        return {"name": self.name, "sharpness": self.k}


def make_activation(spec) -> Activation:
    if isinstance(spec, Activation):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name", "relu")
    if name == "relu":
        return ReLU()
    if name == "softplus":
        return Softplus(spec.get("sharpness", 20.0))
    raise ValueError(f"unknown activation {name!r}")


class FeatureMap:
    """Interface shared by all feature families.

    ``grad_x`` returns the ambient gradient of the natural extension of
    ``phi`` off the manifold; callers tangent-project when they need the
    Riemannian gradient. ``laplacian_x`` is the Laplace-Beltrami operator on
    spheres and the flat Laplacian otherwise.
    """

    manifold: Manifold

    def phi(self, X, T):
        raise NotImplementedError

    def grad_x(self, X, T, c):
        """Sum over features: ``out[i] = sum_j c[j] grad_x phi(X[i], T[j])``."""
        raise NotImplementedError

    def grad_theta(self, X, T, b):
        """Sum over samples: ``out[j] = sum_i b[i] grad_theta phi(X[i], T[j])``."""
        raise NotImplementedError

    def laplacian_x(self, X, T):
        raise NotImplementedError

    def dir_deriv(self, X, T, V):
        """``out[i, j] = grad_x phi(X[i], T[j]) . V[i]`` for tangent ``V``."""
        raise NotImplementedError

    def dir_grad_theta(self, X, T, V, b):
        """``out[j] = sum_i b[i] grad_theta (grad_x phi(X[i], theta) . V[i])`` at ``T[j]``."""
        raise NotImplementedError

    def lap_grad_theta(self, X, T, b):
        """``out[j] = sum_i b[i] grad_theta laplacian_x phi(X[i], theta)`` at ``T[j]``."""
        raise NotImplementedError

    def project_theta(self, T):
        return T

    def mean_and_grad(self, X, T):
        """Sample averages of ``phi(X_i, T_j)`` and of its theta-gradient."""
        b = np.full(len(X), 1.0 / len(X))
        return b @ self.phi(X, T), self.grad_theta(X, T, b)

    def to_dict(self):
        raise NotImplementedError


class RidgeFeatures(FeatureMap):
    """``phi(x, theta) = act(<a(x), theta>) * s(theta)``.

    ``a(x) = x`` on spheres and ``(x, 1)`` in Euclidean space when ``bias`` is
    set. ``s(theta) = 1/|theta|`` for the normalized form, else 1. Parameters
    live on the unit sphere of their ambient space when ``theta_on_sphere``.
    """

    def __init__(self, manifold: Manifold, activation="relu", bias=None,
                 normalized=False, theta_on_sphere=True):
        if manifold.kind == TORUS:
            raise ValueError("use TorusFeatures on the torus")
        self.manifold = manifold
        self.act = make_activation(activation)
        self.bias = (manifold.kind != SPHERE) if bias is None else bool(bias)
        self.normalized = bool(normalized)
        self.theta_on_sphere = bool(theta_on_sphere)
        self.D = manifold.ambient_dim
        self.P = self.D + (1 if self.bias else 0)

    def to_dict(self):
        return {"family": "ridge", "activation": self.act.to_dict(), "bias": self.bias,
                "normalized": self.normalized, "theta_on_sphere": self.theta_on_sphere}

    def _a(self, X):
        X = np.asarray(X, dtype=float)
        if self.bias:
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def _scale(self, T):
        if not self.normalized:
            return np.ones(T.shape[0]), np.zeros_like(T)
        nrm = np.linalg.norm(T, axis=1)
        return 1.0 / nrm, -T / nrm[:, None] ** 3

    def _pad(self, V):
        if self.bias:
            return np.hstack([V, np.zeros((V.shape[0], 1))])
        return V

    def project_theta(self, T):
        if self.theta_on_sphere:
            return T / np.linalg.norm(T, axis=1, keepdims=True)
        return T

    def pre(self, X, T):
        return self._a(X) @ np.asarray(T, dtype=float).T

    def phi(self, X, T):
        T = np.asarray(T, dtype=float)
        s, _ = self._scale(T)
        return self.act(self.pre(X, T)) * s

    @property
    def _fused(self):
        return isinstance(self.act, ReLU) and not self.normalized

    def grad_x(self, X, T, c):
        T = np.asarray(T, dtype=float)
        if self._fused:
            A = np.ascontiguousarray(self._a(X))
            return _kernels.relu_grad_x(A, np.ascontiguousarray(T), np.asarray(c, dtype=float), self.D)
        s, _ = self._scale(T)
        U = self.pre(X, T)
        return (self.act.d1(U) * (np.asarray(c) * s)) @ T[:, : self.D]

    def grad_theta(self, X, T, b):
        T = np.asarray(T, dtype=float)
        b = np.asarray(b, dtype=float)
        A = self._a(X)
        U = A @ T.T
        s, ds = self._scale(T)
        out = s[:, None] * ((self.act.d1(U) * b[:, None]).T @ A)
        if self.normalized:
            out += (b @ self.act(U))[:, None] * ds
        return out

    def mean_and_grad(self, X, T):
        T = np.asarray(T, dtype=float)
        A = self._a(X)
        if self._fused:
            return _kernels.relu_mean_and_grad(np.ascontiguousarray(A), np.ascontiguousarray(T))
        U = A @ T.T
        b = np.full(len(A), 1.0 / len(A))
        s, ds = self._scale(T)
        vals = b @ self.act(U)
        grads = s[:, None] * ((self.act.d1(U) * b[:, None]).T @ A)
        if self.normalized:
            grads += vals[:, None] * ds
        return vals * s, grads

    def _lap_parts(self, X, T):
        """Return (unscaled laplacian, U, A) for the ridge map."""
        T = np.asarray(T, dtype=float)
        A = self._a(X)
        U = A @ T.T
        Tx = T[:, : self.D]
        if self.manifold.kind == SPHERE:
            d = self.manifold.dim
            sq = np.sum(Tx * Tx, axis=1)[None, :]
            L = self.act.d2(U) * (sq - U * U) - d * U * self.act.d1(U)
        else:
            L = self.act.d2(U) * np.sum(Tx * Tx, axis=1)[None, :]
        return L, U, A

    def laplacian_x(self, X, T):
        s, _ = self._scale(np.asarray(T, dtype=float))
        L, _, _ = self._lap_parts(X, T)
        return L * s

    def dir_deriv(self, X, T, V):
        T = np.asarray(T, dtype=float)
        s, _ = self._scale(T)
        U = self.pre(X, T)
        return self.act.d1(U) * (np.asarray(V) @ T[:, : self.D].T) * s

    def dir_grad_theta(self, X, T, V, b):
        T = np.asarray(T, dtype=float)
        V = np.asarray(V, dtype=float)
        b = np.asarray(b, dtype=float)
        A = self._a(X)
        U = A @ T.T
        W = V @ T[:, : self.D].T
        s, ds = self._scale(T)
        d1 = self.act.d1(U)
        out = (self.act.d2(U) * W * b[:, None]).T @ A
        out += (d1 * b[:, None]).T @ self._pad(V)
        out *= s[:, None]
        if self.normalized:
            out += (b @ (d1 * W))[:, None] * ds
        return out

    def lap_grad_theta(self, X, T, b):
        T = np.asarray(T, dtype=float)
        b = np.asarray(b, dtype=float)
        A = self._a(X)
        U = A @ T.T
        Tx = T[:, : self.D]
        sq = np.sum(Tx * Tx, axis=1)[None, :]
        d1, d2, d3 = self.act.d1(U), self.act.d2(U), self.act.d3(U)
        s, ds = self._scale(T)
        if self.manifold.kind == SPHERE:
            d = self.manifold.dim
            coef_x = d3 * (sq - U * U) - 2.0 * U * d2 - d * d1 - d * U * d2
            out = (coef_x * b[:, None]).T @ A + 2.0 * (d2.T @ b)[:, None] * T
            L = d2 * (sq - U * U) - d * U * d1
        else:
            out = (d3 * sq * b[:, None]).T @ A
            out += 2.0 * (d2.T @ b)[:, None] * self._pad(Tx)
            L = d2 * sq
        out *= s[:, None]
        if self.normalized:
            out += (b @ L)[:, None] * ds
        return out


class GaussianFeatures(FeatureMap):
    """Radial bumps ``exp(-|x - theta|^2 / (2 width^2))`` on Euclidean space."""

    def __init__(self, manifold: Manifold, width: float = 1.0):
        if manifold.kind == SPHERE or manifold.kind == TORUS:
            raise ValueError("Gaussian features are defined on Euclidean space only")
        self.manifold = manifold
        self.width = float(width)
        self.D = self.P = manifold.ambient_dim

    def to_dict(self):
        return {"family": "gaussian", "width": self.width}

    def _r(self, X, T):
        return np.asarray(X, dtype=float)[:, None, :] - np.asarray(T, dtype=float)[None, :, :]

    def phi(self, X, T):
        r = self._r(X, T)
        return np.exp(-np.sum(r * r, axis=2) / (2 * self.width**2))

    def grad_x(self, X, T, c):
        r = self._r(X, T)
        ph = np.exp(-np.sum(r * r, axis=2) / (2 * self.width**2))
        return -np.einsum("ijk,ij,j->ik", r, ph, np.asarray(c, dtype=float)) / self.width**2

    def grad_theta(self, X, T, b):
        r = self._r(X, T)
        ph = np.exp(-np.sum(r * r, axis=2) / (2 * self.width**2))
        return np.einsum("ijk,ij,i->jk", r, ph, np.asarray(b, dtype=float)) / self.width**2

    def laplacian_x(self, X, T):
        r = self._r(X, T)
        r2 = np.sum(r * r, axis=2)
        l2 = self.width**2
        return (r2 / l2**2 - self.D / l2) * np.exp(-r2 / (2 * l2))

    def dir_deriv(self, X, T, V):
        r = self._r(X, T)
        ph = np.exp(-np.sum(r * r, axis=2) / (2 * self.width**2))
        return -np.einsum("ijk,ik->ij", r, np.asarray(V, dtype=float)) * ph / self.width**2

    def dir_grad_theta(self, X, T, V, b):
        V = np.asarray(V, dtype=float)
        r = self._r(X, T)
        l2 = self.width**2
        ph = np.exp(-np.sum(r * r, axis=2) / (2 * l2))
        rv = np.einsum("ijk,ik->ij", r, V)
        wb = ph * np.asarray(b, dtype=float)[:, None] / l2
        return wb.T @ V - np.einsum("ij,ijk->jk", wb * rv / l2, r)

    def lap_grad_theta(self, X, T, b):
        r = self._r(X, T)
        l2 = self.width**2
        r2 = np.sum(r * r, axis=2)
        ph = np.exp(-r2 / (2 * l2))
        coef = (-2.0 / l2**2 + (r2 / l2**2 - self.D / l2) / l2) * ph
        return np.einsum("ij,ijk,i->jk", coef, r, np.asarray(b, dtype=float))


class TorusFeatures(FeatureMap):
    """Periodised Gaussian ``1 + 2 sum_k exp(-delta^2 k^2 / 2) cos(2 pi k (x - theta))``.

    Everything is evaluated through the factorisation
    ``cos(a - b) = cos a cos b + sin a sin b`` so the cost is ``O((N + m) K)``.
    """

    def __init__(self, delta: float = 0.2, K=None):
        self.manifold = Manifold.torus()
        self.delta = float(delta)
        if K is None:
            K = torus_cutoff(self.delta)
        self.K = int(K)
        self.k = np.arange(1, self.K + 1)
        self.coef = np.exp(-0.5 * self.delta**2 * self.k**2)
        self.D = self.P = 1

    def to_dict(self):
        return {"family": "torus", "delta": self.delta, "K": self.K}

    def _cs(self, x):
        # powers of exp(2 pi i x) by repeated multiplication; error grows like k * eps
        z = np.exp(2j * np.pi * np.asarray(x, dtype=float).reshape(-1, 1))
        e = np.cumprod(np.broadcast_to(z, (z.shape[0], self.K)), axis=1)
        return e.real, e.imag

    def phi(self, X, T):
        cx, sx = self._cs(X)
        ct, st = self._cs(T)
        return 1.0 + 2.0 * ((cx * self.coef) @ ct.T + (sx * self.coef) @ st.T)

    def weighted(self, X, T, c):
        """``out[i] = sum_j c[j] phi(X[i], T[j])`` without forming the matrix."""
        c = np.asarray(c, dtype=float)
        cx, sx = self._cs(X)
        ct, st = self._cs(T)
        C = self.coef * (c @ ct)
        S = self.coef * (c @ st)
        return c.sum() + 2.0 * (cx @ C + sx @ S)

    def grad_x(self, X, T, c):
        c = np.asarray(c, dtype=float)
        cx, sx = self._cs(X)
        ct, st = self._cs(T)
        w = 2 * np.pi * self.k * self.coef
        C = w * (c @ ct)
        S = w * (c @ st)
        # d/dx cos(a - b) = -sin(a) cos(b) + cos(a) sin(b)
        return (2.0 * (-sx @ C + cx @ S)).reshape(-1, 1)

    def grad_theta(self, X, T, b):
        # phi(x, theta) = psi(x - theta) with psi even, so the theta-gradient
        # at (x, theta) equals the first-argument gradient at (theta, x)
        return self.grad_x(T, X, b)

    def laplacian_x(self, X, T):
        cx, sx = self._cs(X)
        ct, st = self._cs(T)
        w = -((2 * np.pi * self.k) ** 2) * self.coef
        return 2.0 * ((cx * w) @ ct.T + (sx * w) @ st.T)

    def mean_and_grad(self, X, T):
        cx, sx = self._cs(X)
        ct, st = self._cs(T)
        C = cx.mean(axis=0) * self.coef
        S = sx.mean(axis=0) * self.coef
        vals = 1.0 + 2.0 * (ct @ C + st @ S)
        w = 2 * np.pi * self.k
        # d/dtheta cos(a - b) at b: sin(a) cos(b) - cos(a) sin(b)
        grads = 2.0 * (ct @ (w * S) - st @ (w * C))
        return vals, grads.reshape(-1, 1)

    def project_theta(self, T):
        return np.mod(T, 1.0)


def torus_cutoff(delta: float, tol: float = 1e-14) -> int:
    """Smallest K with exp(-delta^2 K^2 / 2) < tol."""
    return int(np.floor(np.sqrt(-2.0 * np.log(tol)) / delta)) + 1


def make_features(manifold: Manifold, spec=None) -> FeatureMap:
    spec = dict(spec or {})
    family = spec.pop("family", "torus" if manifold.kind == TORUS else "ridge")
    if family == "torus":
        return TorusFeatures(spec.get("delta", 0.2), spec.get("K"))
    if family == "gaussian":
        return GaussianFeatures(manifold, spec.get("width", 1.0))
    if family == "ridge":
        return RidgeFeatures(manifold, spec.get("activation", "relu"), spec.get("bias"),
                             spec.get("normalized", False), spec.get("theta_on_sphere", True))
    raise ValueError(f"unknown feature family {family!r}")
