"""Canonical equilibrium over 2x2 Hamiltonians on the isospectral sphere.

The density with respect to ``dV = sin(theta) dtheta dphi / 4`` is::

    rho(theta) = lam mu / (2 pi sinh(lam mu / 2)) * exp(-lam mu cos(theta) / 2)

``CanonicalParams.exponent`` selects how ``lam`` enters: ``"section6"`` uses
the exponent above verbatim, ``"trace"`` uses ``exp(-lam tr(HG))`` whose
cosine coefficient is ``lam nu mu / 2``; the two differ by ``lam -> lam nu``.
"""

from __future__ import annotations

import csv
from fractions import Fraction
from math import factorial
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXPONENTS = ("section6", "trace")
SMALL_A = 1e-300
SERIES_X = 3.0
N_SERIES = 26


def _bernoulli(m: int) -> list:
    """Exact ``B_0 .. B_m`` (Akiyama-Tanigawa)."""
    A, B = [], []
    for k in range(m + 1):
        A.append(Fraction(1, k + 1))
        for j in range(k, 0, -1):
            A[j - 1] = j * (A[j - 1] - A[j])
        B.append(A[0])
    return B


_B = _bernoulli(2 * N_SERIES)
_SERIES = [float(-2 * _B[2 * n] / factorial(2 * n)) for n in range(1, N_SERIES + 1)]


@dataclass(frozen=True)
class CanonicalParams:
    lam: float
    mu: float
    nu: float = 1.0
    u0: float = 0.0
    v: float = 0.0
    exponent: str = "section6"

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise ValueError("lam and mu must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.exponent not in EXPONENTS:
            raise ValueError(f"unknown exponent convention {self.exponent!r}")

    @property
    def tau(self) -> float:
        return 1.0 / self.lam

    @property
    def coupling(self) -> float:
        """Effective product ``lam mu`` (times ``nu`` under the trace convention)."""
        x = self.lam * self.mu
        return x * self.nu if self.exponent == "trace" else x

    @property
    def a(self) -> float:
        """Coefficient of ``cos(theta)`` in the exponent."""
        return 0.5 * self.coupling


def density(theta, p: CanonicalParams):
    """Equilibrium density with respect to ``dV = sin(theta) dtheta dphi / 4``."""
    a = p.a
    theta = np.asarray(theta, dtype=float)
    if a < SMALL_A:
        return np.full_like(theta, 1.0 / np.pi) * np.exp(-a * np.cos(theta))
    # a / (pi sinh a) e^{-a cos} rewritten as 2a e^{-a (1 + cos)} / (pi (1 - e^{-2a}))
    return 2.0 * a * np.exp(-a * (1.0 + np.cos(theta))) / (-np.pi * np.expm1(-2.0 * a))


def cos_theta_pdf(c, p: CanonicalParams):
    """Marginal density of ``c = cos(theta)`` on ``[-1, 1]``."""
    a = p.a
    c = np.asarray(c, dtype=float)
    if a < SMALL_A:
        return np.full_like(c, 0.5)
    # a e^{-a c} / (2 sinh a) = a e^{-a (c + 1)} / (1 - e^{-2a})
    return a * np.exp(-a * (c + 1.0)) / (-np.expm1(-2.0 * a))


def cos_theta_cdf(c, p: CanonicalParams):
    a = p.a
    c = np.clip(np.asarray(c, dtype=float), -1.0, 1.0)
    if a < SMALL_A:
        return 0.5 * (c + 1.0)
    return np.expm1(-a * (c + 1.0)) / np.expm1(-2.0 * a)


def sample_cos_theta(p: CanonicalParams, rng: np.random.Generator, size=None):
    """Exact inverse-CDF samples of ``cos(theta)`` from the equilibrium law.

    ``c = -1 - log1p(-U (1 - e^{-2a})) / a`` is the inverse CDF rewritten
    around the south pole, so it neither overflows when ``a`` is large nor
    cancels when ``a`` is small.
    """
    a = p.a
    U = rng.random(size)
    if a < SMALL_A:
        return 2.0 * U - 1.0
    c = -1.0 - np.log1p(U * np.expm1(-2.0 * a)) / a
    return np.clip(c, -1.0, 1.0)


def sample_sphere(p: CanonicalParams, rng: np.random.Generator, size=None):
    """``(theta, phi)`` samples with uniform independent azimuth."""
    c = sample_cos_theta(p, rng, size)
    phi = 2 * np.pi * rng.random(size)
    return np.arccos(c), phi


def mean_cos_of(x):
    """``2/x - coth(x/2)`` for ``x = lam mu``, vectorised."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < SERIES_X
    # the direct form cancels for small x; use -sum 2 B_2n x^(2n-1) / (2n)!
    xs = x[small]
    acc = np.zeros_like(xs)
    for c in _SERIES[::-1]:
        acc = acc * xs * xs + c
    out[small] = xs * acc
    xl = x[~small]
    out[~small] = 2.0 / xl - 1.0 / np.tanh(0.5 * xl)
    return float(out) if out.ndim == 0 else out


def mean_cos(p: CanonicalParams) -> float:
    """Equilibrium ``<cos(theta)>``, in ``(-1, 0)``."""
    return float(mean_cos_of(p.coupling))


def mean_hamiltonian(p: CanonicalParams) -> np.ndarray:
    """Ensemble-averaged 2x2 Hamiltonian; diagonal in the reference basis."""
    m = mean_cos(p)
    return 0.5 * np.diag([p.u0 + p.nu * m, p.u0 - p.nu * m]).astype(complex)


def mean_cos_curve(mu: float = 2.0, n_points: int = 200, tau_min: float = 1e-2, tau_max: float = 1e2,
                   exponent: str = "section6", nu: float = 1.0):
    """``(tau, <cos theta>)`` on a log-spaced grid of ``tau = 1/lam``."""
    tau = np.logspace(np.log10(tau_min), np.log10(tau_max), n_points)
    x = mu / tau
    if exponent == "trace":
        x = x * nu
    return tau, mean_cos_of(x)


def write_mean_cos_csv(path, **kwargs) -> Path:
    path = Path(path)
    tau, m = mean_cos_curve(**kwargs)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "mean_cos"])
        for t, v in zip(tau, m):
            w.writerow([repr(float(t)), repr(float(v))])
    return path
