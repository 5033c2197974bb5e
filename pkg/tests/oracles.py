"""Slow, independent reference implementations used only by the tests.

Everything here works one scalar at a time with plain Python loops and
``math``; nothing calls into the vectorised code under test except for
reading configuration (activation name, weights, feature positions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class OracleReport:
    quantity: str
    value: float
    oracle: float
    abs_err: float
    rel_err: float
    tol: float
    passed: bool

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"ORACLE {flag} {self.quantity}: value={self.value:.12g} oracle={self.oracle:.12g} "
                f"abs={self.abs_err:.3g} rel={self.rel_err:.3g} tol={self.tol:.3g}")


def compare(quantity, value, oracle, tol, relative=False) -> OracleReport:
    """Report on ``|value - oracle|`` (or the relative error) against ``tol``."""
    value = float(value)
    oracle = float(oracle)
    abs_err = abs(value - oracle)
    rel_err = abs_err / max(abs(oracle), 1e-300)
    err = rel_err if relative else abs_err
    rep = OracleReport(quantity, value, oracle, abs_err, rel_err, tol, bool(err <= tol))
    print(rep.line())
    return rep


def compare_arrays(quantity, value, oracle, tol, relative=False) -> OracleReport:
    """Worst-entry comparison of two arrays."""
    value = np.asarray(value, dtype=float).ravel()
    oracle = np.asarray(oracle, dtype=float).ravel()
    if value.shape != oracle.shape:
        raise ValueError(f"{quantity}: shape {value.shape} vs oracle {oracle.shape}")
    diff = np.abs(value - oracle)
    if relative:
        err = diff / np.maximum(np.abs(oracle), 1e-300)
    else:
        err = diff
    k = int(np.argmax(err)) if len(err) else 0
    return compare(quantity, value[k] if len(value) else 0.0, oracle[k] if len(oracle) else 0.0,
                   tol, relative)


# ---------------------------------------------------------------- scalar features


def act(name, u, k=20.0):
    if name == "relu":
        return u if u > 0.0 else 0.0
    if name == "softplus":
        z = k * u
        # log(1 + e^z) / k, stable for either sign
        return (max(z, 0.0) + math.log1p(math.exp(-abs(z)))) / k
    raise ValueError(name)


def act_d1(name, u, k=20.0):
    if name == "relu":
        return 1.0 if u > 0.0 else 0.0
    z = k * u
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def act_d2(name, u, k=20.0):
    if name == "relu":
        return 0.0
    s = act_d1(name, u, k)
    return k * s * (1.0 - s)


def ridge_phi(x, theta, name="relu", bias=False, k=20.0):
    """``act(<x, theta>)`` with an optional trailing bias coordinate."""
    u = 0.0
    for a, t in zip(x, theta):
        u += a * t
    if bias:
        u += theta[len(x)]
    return act(name, u, k)


def torus_phi(x, theta, delta=0.2, images=8):
    """Periodised Gaussian by summing translated copies (Poisson summation of the Fourier form)."""
    sigma = delta / (2.0 * math.pi)
    r = (x - theta) % 1.0
    total = 0.0
    for n in range(-images, images + 1):
        total += math.exp(-((r + n) ** 2) / (2.0 * sigma * sigma))
    return total / (sigma * math.sqrt(2.0 * math.pi))


def arccos1_kernel(x, y):
    """Arc-cosine kernel of order one, scaled for unit-norm random directions in R^D."""
    D = len(x)
    nx = math.sqrt(sum(a * a for a in x))
    ny = math.sqrt(sum(b * b for b in y))
    c = sum(a * b for a, b in zip(x, y)) / (nx * ny)
    c = min(1.0, max(-1.0, c))
    t = math.acos(c)
    return nx * ny * (math.sin(t) + (math.pi - t) * c) / (2.0 * math.pi * D)


# ---------------------------------------------------------------- brute-force sums


def brute_force_F(particles, data, theta, phi_fn):
    """``mean_i phi(X_i, theta) - mean_i phi(x_i, theta)`` by explicit loops."""
    if len(particles) == 0 and len(data) == 0:
        return 0.0
    a = 0.0
    for x in particles:
        a += phi_fn(x, theta)
    b = 0.0
    for x in data:
        b += phi_fn(x, theta)
    return a / len(particles) - b / len(data)


def brute_force_mmd2(P, Q, kernel):
    """Biased squared MMD from three double loops."""
    def mean_k(A, B):
        s = 0.0
        for a in A:
            for b in B:
                s += kernel(a, b)
        return s / (len(A) * len(B))

    return mean_k(P, P) + mean_k(Q, Q) - 2.0 * mean_k(P, Q)


def brute_force_sm_loss(theta, coef, data, beta, kind, name="softplus", k=20.0, base="gaussian"):
    """Score-matching loss of ``f = sum_j coef_j act(<a(x), theta_j>)``.

    On the sphere ``S^d`` (no bias) the Riemannian gradient of a ridge
    function is ``act'(u) (theta - u x)`` and its Laplace-Beltrami operator is
    ``act''(u) (|theta|^2 - u^2) - d u act'(u)``. In Euclidean space (bias
    as the last coordinate) they are ``act'(u) w`` and ``act''(u) |w|^2``.
    """
    total = 0.0
    for x in data:
        D = len(x)
        G = [0.0] * D
        lap = 0.0
        for th, c in zip(theta, coef):
            u = sum(x[p] * th[p] for p in range(D))
            if kind == "euclidean":
                u += th[D]
            d1 = act_d1(name, u, k)
            d2 = act_d2(name, u, k)
            if kind == "sphere":
                tn = sum(th[p] ** 2 for p in range(D))
                for p in range(D):
                    G[p] += c * d1 * (th[p] - u * x[p])
                lap += c * (d2 * (tn - u * u) - (D - 1) * u * d1)
            else:
                wn = sum(th[p] ** 2 for p in range(D))
                for p in range(D):
                    G[p] += c * d1 * th[p]
                lap += c * d2 * wn
        gb = 0.0
        if kind == "euclidean" and base == "gaussian":
            gb = sum(-x[p] * G[p] for p in range(D))
        total += 0.5 * sum(g * g for g in G) - (lap + gb) / beta
    return total / len(data)


# ---------------------------------------------------------------- derivatives


def fd_gradient(f, x, h=1e-5):
    """Central differences of a scalar function, one coordinate at a time."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return g


# ---------------------------------------------------------------- sphere quadrature


class QuadratureError(RuntimeError):
    pass


def _s2_grid(n):
    """Equal-area midpoint grid on S^2: uniform in height z and azimuth."""
    z = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    ph = (np.arange(2 * n) + 0.5) * (np.pi / n)
    Z, P = np.meshgrid(z, ph, indexing="ij")
    R = np.sqrt(1.0 - Z * Z)
    return np.stack([R * np.cos(P), R * np.sin(P), Z], axis=-1).reshape(-1, 3)


def _s1_grid(n):
    t = (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    return np.stack([np.cos(t), np.sin(t)], axis=1)


def _grid(d, n):
    if d == 1:
        return _s1_grid(8 * n)
    if d == 2:
        return _s2_grid(n)
    raise QuadratureError("dense sphere quadrature is limited to d <= 2")


def _integrals(energies, beta, d, n, chunk=1 << 20):
    """``(log Z_k, E_0-weighted means)`` for several energies on one grid.

    Returns ``log Z`` for each energy and the matrix
    ``M[a, b] = int E_b exp(-beta E_a) dtau / Z_a``.
    """
    pts = _grid(d, n)
    K = len(energies)
    vals = [np.empty(len(pts)) for _ in range(K)]
    for s in range(0, len(pts), chunk):
        for k, f in enumerate(energies):
            vals[k][s: s + chunk] = f(pts[s: s + chunk])
    logZ = np.empty(K)
    M = np.empty((K, K))
    for a in range(K):
        z = -beta * vals[a]
        c = z.max()
        w = np.exp(z - c)
        logZ[a] = c + math.log(w.mean())
        w /= w.sum()
        for b in range(K):
            M[a, b] = float(w @ vals[b])
    return logZ, M


def sphere_quadrature_partition(f, beta, resolution=256, d=2, rtol=1e-6, max_resolution=4096):
    """``Z = int exp(-beta f) dtau`` with ``tau`` the uniform probability on ``S^d``.

    The grid is refined by doubling until successive values agree to ``rtol``.
    """
    n = resolution
    prev = None
    while n <= max_resolution:
        logZ, _ = _integrals([f], beta, d, n)
        if prev is not None and abs(math.expm1(logZ[0] - prev)) < rtol:
            return math.exp(logZ[0])
        prev = logZ[0]
        n *= 2
    raise QuadratureError(f"partition function did not converge to {rtol} by resolution {max_resolution}")


def sphere_quadrature_kl(f1, f2, beta, resolution=256, d=2, rtol=1e-6, max_resolution=4096):
    """``KL(nu_1 || nu_2)`` for the Gibbs laws ``exp(-beta f_k) dtau / Z_k``."""
    n = resolution
    prev = None
    while n <= max_resolution:
        logZ, M = _integrals([f1, f2], beta, d, n)
        kl = beta * (M[0, 1] - M[0, 0]) + logZ[1] - logZ[0]
        if prev is not None and abs(kl - prev) <= rtol * max(abs(kl), 1e-3):
            return kl
        prev = kl
        n *= 2
    raise QuadratureError(f"KL did not converge to {rtol} by resolution {max_resolution}")


def rejection_sample_sphere(f, beta, n, rng, d=2, f_min=None, batch=100_000):
    """Exact draws from ``exp(-beta f) dtau / Z`` by uniform proposals."""
    if f_min is None:
        f_min = float(f(_grid(d, 512)).min()) - 1e-3
    out = []
    have = 0
    while have < n:
        z = rng.standard_normal((batch, d + 1))
        x = z / np.linalg.norm(z, axis=1, keepdims=True)
        acc = rng.random(batch) < np.exp(-beta * (f(x) - f_min))
        out.append(x[acc])
        have += int(acc.sum())
    return np.vstack(out)[:n]


def direct_circular_convolution(u, delta, quad=4096):
    """``(phi * u)(x_g) = int_0^1 phi(x_g - y) u(y) dy`` with ``u`` the trigonometric interpolant.

    ``u`` is sampled on ``G`` equispaced nodes; the integral is taken on a
    ``quad``-point rectangle rule (exact for band-limited integrands).
    """
    u = np.asarray(u, dtype=float)
    G = len(u)
    # trigonometric interpolant of u on the fine grid, built term by term
    k = np.fft.fftfreq(G, 1.0 / G)
    c = np.fft.fft(u) / G
    if G % 2 == 0:
        c[G // 2] = 0.0  # drop the unmatched Nyquist term
    y = np.arange(quad) / quad
    uy = np.zeros(quad)
    for kk, ck in zip(k, c):
        uy += (ck * np.exp(2j * np.pi * kk * y)).real
    x = np.arange(G) / G
    out = np.empty(G)
    for g in range(G):
        kern = np.array([torus_phi(x[g], yy, delta) for yy in y])
        out[g] = float(np.mean(kern * uy))
    return out


# ---------------------------------------------------------------- one-neuron recurrences


def dual_scalar_recurrence(theta, w, sign, X, x, h, steps, cap=True):
    """One ReLU neuron on the circle, one frozen particle ``X`` and one datum ``x``.

    Each step: ``F = relu(<X, t>) - relu(<x, t>)``, ``t <- normalise(t + h sign grad F)``,
    ``w <- w exp(h sign F)``, then ``w <- w / max(w, 1)``.
    """
    t0, t1 = float(theta[0]), float(theta[1])
    out = []
    for _ in range(steps):
        up = X[0] * t0 + X[1] * t1
        ud = x[0] * t0 + x[1] * t1
        F = max(up, 0.0) - max(ud, 0.0)
        g0 = (X[0] if up > 0 else 0.0) - (x[0] if ud > 0 else 0.0)
        g1 = (X[1] if up > 0 else 0.0) - (x[1] if ud > 0 else 0.0)
        w = w * math.exp(h * sign * F)
        t0, t1 = t0 + h * sign * g0, t1 + h * sign * g1
        nrm = math.hypot(t0, t1)
        t0, t1 = t0 / nrm, t1 / nrm
        if cap:
            w = w / max(w, 1.0)
        out.append((t0, t1, w))
    return out


def sm_scalar_recurrence(theta, w, sign, x, beta, s, steps, width=1.0, gaussian_base=True):
    """One Gaussian bump ``exp(-(x - t)^2 / (2 l^2))`` on the line fitted to a single datum ``x``.

    With ``r = x - t`` and ``p = phi``: ``p_x = -r p / l^2``,
    ``p_xx = (r^2 / l^4 - 1 / l^2) p`` and ``dp/dt = r p / l^2``. The first
    variation is ``V = p_x W - p_xx / beta`` with ``W = c p_x - b / beta``,
    ``b = -x`` for the Gaussian base and ``c = sign w``.
    """
    l2 = width * width
    b = -x if gaussian_base else 0.0
    t = float(theta)
    out = []
    for _ in range(steps):
        r = x - t
        p = math.exp(-r * r / (2 * l2))
        px = -r * p / l2
        pxx = (r * r / l2**2 - 1.0 / l2) * p
        dpx = p / l2 - r * r * p / l2**2
        dpxx = -2.0 * r * p / l2**2 + (r * r / l2**2 - 1.0 / l2) * r * p / l2
        c = sign * w
        W = c * px - b / beta
        V = px * W - pxx / beta
        gV = dpx * W - dpxx / beta
        K = sign * V if w >= 1.0 else 0.0
        t = t - s * sign * gV
        w = w * math.exp(-s * (sign * V - K))
        w = w / max(w, 1.0)
        out.append((t, w))
    return out


# ---------------------------------------------------------------- hand formulas


def mc_kernel(x, y, thetas):
    """``(1/M) sum_j relu(<t_j, x>) relu(<t_j, y>)`` and its Monte-Carlo standard error."""
    vals = []
    for t in thetas:
        a = max(0.0, sum(p * q for p, q in zip(t, x)))
        b = max(0.0, sum(p * q for p, q in zip(t, y)))
        vals.append(a * b)
    M = len(vals)
    mean = sum(vals) / M
    var = sum((v - mean) ** 2 for v in vals) / (M - 1)
    return mean, math.sqrt(var / M)


def ridge_tangent_grad(x, theta, w, name="relu", k=20.0):
    """Riemannian gradient ``w act'(u) (theta - u x)`` of one ridge unit on the unit sphere."""
    u = sum(p * q for p, q in zip(x, theta))
    d1 = act_d1(name, u, k)
    return [w * d1 * (t - u * xi) for t, xi in zip(theta, x)]
