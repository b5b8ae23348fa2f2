"""Quenched and annealed thermal averages over the Hamiltonian ensemble.

* annealed: Gibbs state of the ensemble-mean Hamiltonian ``<H>``;
* quenched: Gibbs expectation for each sampled ``H``, then averaged.

Closed forms exist for the observable ``G = (mu/2) sigma_z``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .equilibrium_ensemble import CanonicalParams, mean_cos, mean_hamiltonian, sample_sphere
from .hermitian_core import SIGMA_Z, _check_pair, as_matrix, eigensystem


@dataclass(frozen=True)
class ThermalParams:
    beta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")

    @property
    def T(self) -> float:
        return np.inf if self.beta == 0 else 1.0 / self.beta


def _gibbs_weights(w, beta):
    if beta == 0:
        return np.full_like(w, 1.0 / w.shape[-1])
    if np.isinf(beta):
        ground = np.isclose(w, w[..., :1], rtol=0.0, atol=1e-12)
        return ground / ground.sum(axis=-1, keepdims=True)
    x = np.exp(-beta * (w - w[..., :1]))  # shift by the ground energy
    return x / x.sum(axis=-1, keepdims=True)


def gibbs_expectation(O, H, beta: float) -> float:
    """``tr(O exp(-beta H)) / tr(exp(-beta H))``; ``beta = inf`` gives the ground state."""
    O, H = _check_pair(O, H)
    if beta == 0:
        return float(np.trace(O).real / O.shape[0])
    w, V = eigensystem(H)
    p = _gibbs_weights(w, beta)
    diag = np.einsum("ji,jk,ki->i", np.conj(V), O, V).real
    return float(np.dot(p, diag))


def gibbs_expectation_batch(O, H, beta: float) -> np.ndarray:
    """Vectorised :func:`gibbs_expectation` over a stack ``H[..., N, N]``."""
    O = as_matrix(O)
    if beta == 0:
        return np.full(H.shape[:-2], np.trace(O).real / O.shape[0])
    w, V = np.linalg.eigh(H)
    p = _gibbs_weights(w, beta)
    diag = np.einsum("...ji,jk,...ki->...i", np.conj(V), O, V).real
    return np.sum(p * diag, axis=-1)


def annealed_average(O, p: CanonicalParams, t: ThermalParams) -> float:
    return gibbs_expectation(O, mean_hamiltonian(p), t.beta)


def _bloch_stack(p: CanonicalParams, theta, phi):
    st = np.sin(theta)
    H = np.empty(theta.shape + (2, 2), dtype=complex)
    H[..., 0, 0] = 0.5 * (p.u0 + p.nu * np.cos(theta))
    H[..., 1, 1] = 0.5 * (p.u0 - p.nu * np.cos(theta))
    H[..., 0, 1] = 0.5 * p.nu * st * np.exp(-1j * phi)
    H[..., 1, 0] = np.conj(H[..., 0, 1])
    return H


def quenched_samples(O, p: CanonicalParams, t: ThermalParams, n_samples: int,
                     rng: np.random.Generator) -> np.ndarray:
    theta, phi = sample_sphere(p, rng, n_samples)
    return gibbs_expectation_batch(O, _bloch_stack(p, theta, phi), t.beta)


def quenched_average_mc(O, p: CanonicalParams, t: ThermalParams, n_samples: int,
                        rng: np.random.Generator):
    """Monte Carlo quenched average; returns ``(estimate, standard_error)``."""
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    x = quenched_samples(O, p, t, n_samples, rng)
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(n_samples))


def quenched_average_from_states(O, H_samples, beta: float):
    """Quenched average over externally generated Hamiltonians (e.g. SDE output)."""
    x = gibbs_expectation_batch(O, np.asarray(H_samples, dtype=complex), beta)
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(len(x)))


def _check_closed(p: CanonicalParams):
    if p.v != 0:
        raise ValueError("closed forms require a traceless reference Hamiltonian (v = 0)")


def _polarisation(p: CanonicalParams) -> float:
    # coth(lam mu / 2) - 2 / (lam mu) = -<cos theta>
    return -mean_cos(p)


def quenched_closed_G(p: CanonicalParams, t: ThermalParams) -> float:
    _check_closed(p)
    return 0.5 * p.mu * np.tanh(0.5 * t.beta * p.nu) * _polarisation(p)


def annealed_closed_G(p: CanonicalParams, t: ThermalParams) -> float:
    _check_closed(p)
    return 0.5 * p.mu * np.tanh(0.5 * t.beta * p.nu * _polarisation(p))


def reference_observable(p: CanonicalParams) -> np.ndarray:
    """``G = (v/2) 1 + (mu/2) sigma_z`` as an observable."""
    return 0.5 * p.v * np.eye(2, dtype=complex) + 0.5 * p.mu * SIGMA_Z


def thermal_average_table(lam: float = 10.0, mu: float = 2.0, nu: float = 1.0, v: float = 0.0,
                          T_min: float = 0.02, T_max: float = 5.0, n_points: int = 200,
                          n_samples: int = 20_000, seed: int = 0, exponent: str = "section6"):
    """Rows ``(T, G_quenched_closed, G_quenched_mc, G_quenched_se, G_annealed)``.

    The same equilibrium samples are reused at every temperature.
    """
    p = CanonicalParams(lam=lam, mu=mu, nu=nu, v=v, exponent=exponent)
    O = reference_observable(p)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    theta, phi = sample_sphere(p, rng, n_samples)
    H = _bloch_stack(p, theta, phi)
    w, V = np.linalg.eigh(H)
    diag = np.einsum("...ji,jk,...ki->...i", np.conj(V), O, V).real
    rows = []
    for T in np.linspace(T_min, T_max, n_points):
        t = ThermalParams(1.0 / T)
        x = np.sum(_gibbs_weights(w, t.beta) * diag, axis=-1)
        rows.append((T, quenched_closed_G(p, t), float(np.mean(x)),
                     float(np.std(x, ddof=1) / np.sqrt(n_samples)), annealed_average(O, p, t)))
    return rows


def write_thermal_average_csv(path, **kwargs) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "G_quenched_closed", "G_quenched_mc", "G_quenched_se", "G_annealed"])
        for row in thermal_average_table(**kwargs):
            w.writerow([repr(float(x)) for x in row])
    return path
