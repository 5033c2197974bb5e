"""Convergence monitors and the delimited metrics format."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy.special import logsumexp

METRICS_HEADER = ("iter", "time", "rescaled_time", "kl", "sm", "tv_norm")


class MetricsOverflow(FloatingPointError):
    pass


def _values(f, X):
    return np.asarray(f(X) if callable(f) else f, dtype=float).reshape(-1)


def kl_estimate(test, f_t, f_star, beta, return_se=False):
    """Monte-Carlo estimate of KL(nu_{beta f*} || nu_{beta f_t}) from samples of the first.

    Uses ``KL = E[beta (f_t - f*)] + log E[exp(-beta (f_t - f*))]`` with the
    expectations taken over ``test``. ``f_t`` and ``f_star`` are callables on
    the test array or precomputed values. With ``return_se`` the delta-method
    standard error is returned as well.
    """
    a = _values(f_t, test)
    b = _values(f_star, test)
    if a.size == 0:
        raise ValueError("kl_estimate needs at least one test point")
    D = beta * (a - b)
    n = D.size
    lme = logsumexp(-D) - math.log(n)
    kl = float(lme + D.mean())
    if not math.isfinite(kl):
        raise MetricsOverflow("KL estimate overflowed after log-sum-exp stabilisation")
    if not return_se:
        return kl
    # e / mean(e), computed in log space
    r = np.exp(-D - lme)
    infl = (r - 1.0) + (D - D.mean())
    se = float(np.sqrt(np.sum(infl**2) / (n * max(n - 1, 1))))
    return kl, se


def sm_estimate(test, grad_t, grad_star, manifold=None):
    """Mean squared distance between two gradient fields over the test points.

    Inputs are callables returning ``(n, D)`` arrays or the arrays
    themselves; with a ``manifold`` they are tangent-projected first.
    """
    X = np.asarray(test, dtype=float)
    g1 = np.asarray(grad_t(X) if callable(grad_t) else grad_t, dtype=float)
    g2 = np.asarray(grad_star(X) if callable(grad_star) else grad_star, dtype=float)
    diff = g1 - g2
    if manifold is not None:
        diff = manifold.tangent(X, diff)
    return float(np.mean(np.sum(diff * diff, axis=-1)))


def f1_norm(ens, beta) -> float:
    """Norm bound ``beta * mean(w)`` of the output energy ``beta * f``."""
    return float(beta * np.mean(ens.w))


def quadrature_kl(p, q, cell=1.0, tol=1e-8):
    """Grid KL divergence ``sum p log(p / q) * cell``.

    ``cell`` is a scalar cell volume or an array of quadrature weights.
    Returns ``inf`` when ``q`` vanishes where ``p`` has mass.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    cell = np.broadcast_to(np.asarray(cell, dtype=float), p.shape)
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("densities must be nonnegative")
    for name, g in (("p", p), ("q", q)):
        mass = float(np.sum(g * cell))
        if abs(mass - 1.0) > tol:
            raise ValueError(f"{name} integrates to {mass!r}, not 1")
    if np.any((q == 0) & (p > 1e-12)):
        return math.inf
    live = p >= 1e-15
    return float(np.sum(p[live] * np.log(p[live] / q[live]) * cell[live]))


@dataclass
class MetricsRecord:
    iteration: int
    time: float
    rescaled_time: float
    kl: float
    sm: float
    tv_norm: float

    def row(self) -> str:
        vals = astuple(self)
        return ",".join([str(int(vals[0]))] + [format(float(v), ".17g") for v in vals[1:]])


class MetricsWriter:
    """Appends records to a comma-delimited file with a fixed header.

    ``extra`` names additional columns appended after the standard ones.
    """

    def __init__(self, path, extra=(), append=False):
        self.path = path
        self.extra = tuple(extra)
        mode = "a" if append else "w"
        self._fh = open(path, mode, encoding="utf-8", newline="\n")
        if not append:
            self._fh.write(",".join(METRICS_HEADER + self.extra) + "\n")

    def write(self, rec: MetricsRecord, **extra):
        line = rec.row()
        if self.extra:
            line += "," + ",".join(format(float(extra[k]), ".17g") for k in self.extra)
        self.write_line(line)
        return line

    def write_line(self, line: str):
        """Append an already formatted row (used when replaying rows after a resume)."""
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path):
    """Load a metrics file into a dict of column arrays."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line for line in fh if line.strip()]
    if rows:
        data = np.loadtxt(rows, delimiter=",", ndmin=2)
    else:
        data = np.empty((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}


RECORD_FIELDS = tuple(f.name for f in fields(MetricsRecord))
