"""Gridded mean-field dynamics on the one-dimensional torus.

The negative feature density ``gamma`` (energy ``f = -phi * gamma``) grows
or decays pointwise at rate ``-alpha F`` with ``F = phi * (nu - nu_p)``, and
the sample density ``nu`` follows the Fokker-Planck equation of ``f`` with
optional reinjection towards ``nu_p`` at rate ``alpha'``. Because
``phi(x, theta)`` only depends on ``x - theta`` every integral against it
is a circular convolution evaluated with the FFT.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import torus_cutoff
from .metrics import quadrature_kl


class PdeError(RuntimeError):
    pass


def phi_torus(x, theta, delta: float = 0.2, K=None):
    """``1 + 2 sum_{k<=K} exp(-delta^2 k^2 / 2) cos(2 pi k (x - theta))`` (broadcasting)."""
    if K is None:
        K = torus_cutoff(delta)
    k = np.arange(1, int(K) + 1)
    r = np.asarray(x, dtype=float) - np.asarray(theta, dtype=float)
    c = np.exp(-0.5 * delta**2 * k**2)
    return 1.0 + 2.0 * np.sum(c * np.cos(2 * np.pi * np.multiply.outer(r, k)), axis=-1)


@dataclass
class PdeConfig:
    """``dt`` is the base step; the step actually used is ``dt / max(alpha, 1)``."""

    G: int = 256
    delta: float = 0.2
    K: int | None = None
    dt: float = 2e-3
    alpha: float = 1.0
    alpha_prime: float = 0.0
    beta: float = 1.0
    p: float = 0.6
    a1: float = 8.0
    a2: float = 8.0
    theta1: float = 0.25
    theta2: float = 0.75
    T: float = 200.0
    gamma_init: float = 1e-3
    integrator: str = "etdrk2"

    def __post_init__(self):
        if self.K is None:
            self.K = torus_cutoff(self.delta)
        if self.G < 2 or self.G & (self.G - 1):
            raise ValueError("grid size G must be a power of two")
        if self.G < 2 * self.K + 2:
            raise ValueError(f"grid size {self.G} aliases the {self.K}-mode feature series")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.alpha > 0 or self.alpha_prime < 0:
            raise ValueError("alpha > 0 and alpha' >= 0 are required")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("mixture weight p must lie in [0, 1]")
        if self.integrator not in ("etd1", "etdrk2"):
            raise ValueError(f"unknown integrator {self.integrator!r}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def inv_beta(self) -> float:
        return 0.0 if math.isinf(self.beta) else 1.0 / self.beta

    @property
    def step(self) -> float:
        return self.dt / max(self.alpha, 1.0)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.step))

    def to_dict(self):
        return asdict(self)


@dataclass
class TorusFields:
    gamma_minus: np.ndarray
    nu: np.ndarray
    nu_p: np.ndarray
    E_p: np.ndarray
    t: float = 0.0

    @property
    def G(self) -> int:
        return len(self.nu)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.G) / self.G

    def copy(self):
        return TorusFields(self.gamma_minus.copy(), self.nu.copy(), self.nu_p, self.E_p, self.t)


class Spectral:
    """FFT helpers on a ``G``-point grid of the unit torus."""

    def __init__(self, G: int, delta: float, K: int):
        self.G = G
        self.k = np.fft.fftfreq(G, 1.0 / G)
        ak = np.abs(self.k)
        self.phi_hat = np.where(ak <= K, np.exp(-0.5 * delta**2 * self.k**2), 0.0)
        self.ik = 2j * np.pi * self.k
        self.ik[G // 2] = 0.0  # drop the unpaired Nyquist mode in odd derivatives
        self.dealias = ak <= G // 3

    def conv(self, u):
        """``int phi(x - theta) u(theta) dtheta`` by the rectangle rule, evaluated exactly."""
        return np.fft.ifft(self.phi_hat * np.fft.fft(u)).real

    def deriv(self, u):
        return np.fft.ifft(self.ik * np.fft.fft(u)).real


def target_g(theta, cfg: PdeConfig):
    """Negative log of a two-component von Mises mixture (unnormalised)."""
    th = np.asarray(theta, dtype=float)
    l1 = cfg.a1 * np.cos(2 * np.pi * (th - cfg.theta1)) - cfg.a1
    l2 = cfg.a2 * np.cos(2 * np.pi * (th - cfg.theta2)) - cfg.a2
    with np.errstate(divide="ignore"):
        terms = np.stack([np.log(cfg.p) + l1, np.log(cfg.q) + l2])
    return -np.logaddexp.reduce(terms, axis=0)


def gibbs(E, beta):
    """Normalised grid density proportional to ``exp(-beta E)``."""
    z = -beta * np.asarray(E, dtype=float)
    z -= z.max()
    p = np.exp(z)
    return p / p.mean()


def build_target(cfg: PdeConfig) -> TorusFields:
    """Target energy ``E_p = phi * g``, its Gibbs density, and the initial fields."""
    sp = Spectral(cfg.G, cfg.delta, cfg.K)
    x = np.arange(cfg.G) / cfg.G
    E_p = sp.conv(target_g(x, cfg))
    nu_p = gibbs(E_p, cfg.beta)
    gamma = np.full(cfg.G, float(cfg.gamma_init))
    return TorusFields(gamma, nu_p.copy(), nu_p, E_p, 0.0)


def pde_field_F(fields: TorusFields, sp: Spectral):
    return sp.conv(fields.nu - fields.nu_p)


def pde_energy(fields: TorusFields, sp: Spectral):
    return -sp.conv(fields.gamma_minus)


def gamma_step(gamma, F, alpha, dt):
    """Exact update of ``d gamma / dt = -alpha gamma F`` with ``F`` frozen."""
    with np.errstate(over="ignore"):
        out = gamma * np.exp(-alpha * F * dt)
    if not np.all(np.isfinite(out)):
        raise PdeError("feature density overflowed")
    return out


def _phi12(z):
    """``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2`` for ``z <= 0``."""
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    p1 = np.where(small, 1.0 + z / 2.0 + z * z / 6.0, em1 / zs)
    p2 = np.where(small, 0.5 + z / 6.0 + z * z / 24.0, (em1 - zs) / (zs * zs))
    return p1, p2


class NuStepper:
    """Exponential integrator for ``d nu/dt = d/dx(nu d f/dx) + beta^-1 d2 nu/dx2``.

    Diffusion is integrated exactly in Fourier space, the transport term
    pseudo-spectrally with the 2/3 de-aliasing rule.
    """

    def __init__(self, sp: Spectral, cfg: PdeConfig, dt: float):
        self.sp = sp
        self.cfg = cfg
        self.dt = dt
        L = -cfg.inv_beta * (2 * np.pi * sp.k) ** 2
        z = L * dt
        self.E = np.exp(z)
        p1, p2 = _phi12(z)
        self.P1 = p1 * dt
        self.P2 = p2 * dt
        self.blend = math.exp(-cfg.alpha_prime * dt)

    def transport_hat(self, nu_hat, fx_hat):
        mask = self.sp.dealias
        nu = np.fft.ifft(np.where(mask, nu_hat, 0.0)).real
        fx = np.fft.ifft(np.where(mask, fx_hat, 0.0)).real
        return np.where(mask, self.sp.ik * np.fft.fft(nu * fx), 0.0)

    def __call__(self, nu, f, nu_p):
        fx_hat = self.sp.ik * np.fft.fft(f)
        u = np.fft.fft(nu)
        Nu = self.transport_hat(u, fx_hat)
        a = self.E * u + self.P1 * Nu
        if self.cfg.integrator == "etdrk2":
            a = a + self.P2 * (self.transport_hat(a, fx_hat) - Nu)
        out = np.fft.ifft(a).real
        if self.cfg.alpha_prime > 0:
            out = self.blend * out + (1.0 - self.blend) * nu_p
        if out.min() < -1e-8:
            raise PdeError(f"negative density {out.min():.3g}; reduce dt")
        return out / out.mean()


def nu_step(fields: TorusFields, cfg: PdeConfig, f, dt=None):
    """One sample-density step in the frozen energy ``f``."""
    dt = cfg.step if dt is None else dt
    sp = Spectral(cfg.G, cfg.delta, cfg.K)
    return NuStepper(sp, cfg, dt)(fields.nu, f, fields.nu_p)


def sample_grid_density(density, n, rng):
    """Draw ``n`` points whose law is the grid density, piecewise constant around each node."""
    density = np.asarray(density, dtype=float)
    G = len(density)
    idx = rng.choice(G, size=n, p=density / density.sum())
    x = (idx + rng.random(n) - 0.5) / G
    return np.mod(x, 1.0).reshape(-1, 1)


def interpolate_conv(u, cfg: PdeConfig):
    """``theta -> (phi * u)(theta)`` and its derivative at arbitrary points, by exact trigonometric interpolation."""
    sp = Spectral(cfg.G, cfg.delta, cfg.K)
    coef = sp.phi_hat * np.fft.fft(u) / cfg.G
    keep = np.abs(sp.k) <= cfg.K
    k = sp.k[keep]
    c = coef[keep]

    def fn(theta):
        th = np.asarray(theta, dtype=float).reshape(-1)
        e = np.exp(2j * np.pi * np.outer(th, k))
        return (e @ c).real, ((e * (2j * np.pi * k)) @ c).real.reshape(-1, 1)

    return fn


def histogram_l1(samples, density, bins: int = 64) -> float:
    """L1 distance between a particle histogram and a grid density aggregated to the same bins."""
    density = np.asarray(density, dtype=float)
    G = len(density)
    if G % bins:
        raise ValueError("grid size must be a multiple of the bin count")
    h, _ = np.histogram(np.asarray(samples).reshape(-1), bins=bins, range=(0.0, 1.0))
    p_hist = h / h.sum()
    # node j carries the cell [(j - 1/2)/G, (j + 1/2)/G); split it into half cells
    half = 0.5 * density / density.sum()
    fine = np.zeros(2 * G)
    fine[0::2] = half
    fine[np.arange(-1, 2 * G - 1, 2)] += half
    p_grid = fine.reshape(bins, -1).sum(axis=1)
    return float(np.abs(p_hist - p_grid).sum())


def _density(u):
    u = np.maximum(u, 0.0)
    return u / u.mean()


def pde_metrics(fields: TorusFields, cfg: PdeConfig, sp: Spectral):
    """KL(nu_p || nu_EBM), KL(nu_p || nu_t), score mismatch under nu_p, mean of gamma."""
    f = pde_energy(fields, sp)
    cell = 1.0 / fields.G
    kl_ebm = quadrature_kl(fields.nu_p, gibbs(f, cfg.beta), cell)
    kl_nu = quadrature_kl(fields.nu_p, _density(fields.nu), cell)
    diff = cfg.beta * (sp.deriv(fields.E_p) - sp.deriv(f))
    sm = float(np.mean(fields.nu_p * diff * diff))
    return {"kl_ebm": kl_ebm, "kl_nu": kl_nu, "sm": sm, "tv_norm": float(fields.gamma_minus.mean())}


@dataclass
class PdeResult:
    fields: TorusFields
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)


def pde_run(cfg: PdeConfig, log_every: int = 0, callback=None, snapshot_times=(), fields=None,
            start: int = 0, until: int = None) -> PdeResult:
    """Integrate to ``cfg.T`` by Lie splitting (features first, then samples).

    Records (dicts with iter, time, rescaled_time and the metrics) are kept at
    step 0, every ``log_every`` steps and at the end; ``callback(record)`` sees
    each. ``snapshot_times`` stores copies of the fields at the first step
    reaching each time. ``fields`` and ``start`` resume an earlier run, which
    then stops at step ``until`` if given.
    """
    sp = Spectral(cfg.G, cfg.delta, cfg.K)
    fields = build_target(cfg) if fields is None else fields.copy()
    dt = cfg.step
    stepper = NuStepper(sp, cfg, dt)
    res = PdeResult(fields)
    pending = sorted(float(t) for t in snapshot_times)
    n = cfg.n_steps
    stop = n if until is None else min(until, n)

    def record(it):
        rec = {"iter": it, "time": fields.t, "rescaled_time": fields.t * max(cfg.alpha, 1.0)}
        rec.update(pde_metrics(fields, cfg, sp))
        res.records.append(rec)
        if callback is not None:
            callback(rec)

    def snap():
        while pending and fields.t >= pending[0] - 0.5 * dt:
            res.snapshots[pending.pop(0)] = fields.copy()

    if start == 0:
        record(0)
    snap()
    for it in range(start + 1, stop + 1):
        f = pde_energy(fields, sp)
        F = pde_field_F(fields, sp)
        fields.gamma_minus = gamma_step(fields.gamma_minus, F, cfg.alpha, dt)
        fields.nu = stepper(fields.nu, f, fields.nu_p)
        fields.t = it * dt
        snap()
        if it == n or (log_every > 0 and it % log_every == 0):
            record(it)
    res.fields = fields
    return res
