"""3x3 Hermitian matrices in the reference eigenbasis and their partition function.

A point of the isospectral orbit is given by three eigenvalues and six angles
``(vartheta, varphi, alpha)`` in ``[0, pi]`` and ``(xi, eta, beta3)`` in
``[0, 2 pi)``. The first eigenvector is::

    |E1> = sin(vt/2) cos(vp/2) |g1> + sin(vt/2) sin(vp/2) e^{i xi} |g2> + cos(vt/2) e^{i eta} |g3>

and ``|E2>, |E3>`` are ``cos(a/2) A + sin(a/2) e^{i beta3} B`` and
``sin(a/2) A - cos(a/2) e^{i beta3} B`` for the orthonormal basis::

    A = (cos(vt/2) cos(vp/2), cos(vt/2) sin(vp/2) e^{i xi}, -sin(vt/2) e^{i eta})
    B = (-sin(vp/2), cos(vp/2) e^{i xi}, 0)

of the complement of ``|E1>``. The invariant volume element on the orbit is::

    dV = sin(a) sin(vt) (1 - cos(vt)) sin(vp) / 128  da dbeta3 dvt dvp dxi deta

with total volume ``pi^3 / 2``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOTAL_VOLUME = np.pi**3 / 2
DEFAULT_NODES = 48
QUAD_FAIL = 0.01


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Su3Frame:
    vartheta: float
    varphi: float
    alpha: float
    xi: float = 0.0
    eta: float = 0.0
    beta3: float = 0.0
    E: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("vartheta", "varphi", "alpha"):
            if not 0.0 <= getattr(self, name) <= np.pi:
                raise ValueError(f"{name} must lie in [0, pi]")

    @classmethod
    def random(cls, rng: np.random.Generator, E=(0.0, 0.0, 0.0)):
        a = rng.uniform(0, np.pi, 3)
        b = rng.uniform(0, 2 * np.pi, 3)
        return cls(*a, *b, E=tuple(E))

    def hamiltonian(self) -> np.ndarray:
        U = build_frame(self)
        return (U * np.asarray(self.E, dtype=float)) @ U.conj().T


def frame_matrix(vt, vp, al, xi=0.0, eta=0.0, b3=0.0) -> np.ndarray:
    """Vectorised frame; returns ``(..., 3, 3)`` with columns ``|E1>, |E2>, |E3>``."""
    vt, vp, al, xi, eta, b3 = np.broadcast_arrays(*(np.asarray(x, dtype=float)
                                                     for x in (vt, vp, al, xi, eta, b3)))
    s, c = np.sin(vt / 2), np.cos(vt / 2)
    sp, cp = np.sin(vp / 2), np.cos(vp / 2)
    sa, ca = np.sin(al / 2), np.cos(al / 2)
    exi, eeta, eb = np.exp(1j * xi), np.exp(1j * eta), np.exp(1j * b3)
    U = np.empty(vt.shape + (3, 3), dtype=complex)
    U[..., 0, 0] = s * cp
    U[..., 1, 0] = s * sp * exi
    U[..., 2, 0] = c * eeta
    U[..., 0, 1] = ca * c * cp - sa * sp * eb
    U[..., 1, 1] = ca * c * sp * exi + sa * cp * eb * exi
    U[..., 2, 1] = -ca * s * eeta
    U[..., 0, 2] = sa * c * cp + ca * sp * eb
    U[..., 1, 2] = sa * c * sp * exi - ca * cp * eb * exi
    U[..., 2, 2] = -sa * s * eeta
    return U


def build_frame(f: Su3Frame) -> np.ndarray:
    return frame_matrix(f.vartheta, f.varphi, f.alpha, f.xi, f.eta, f.beta3)


def overlap_moduli(vt, vp, al, b3) -> np.ndarray:
    """``|<g_j|E_i>|^2`` as a ``(..., 3, 3)`` array indexed ``[j, i]``."""
    return np.abs(frame_matrix(vt, vp, al, 0.0, 0.0, b3)) ** 2


def trace_HG(f: Su3Frame, g_eigs) -> float:
    """``tr(HG)`` for ``G = diag(g_eigs)`` in its own eigenbasis."""
    P = np.abs(build_frame(f)) ** 2
    return float(np.asarray(g_eigs, dtype=float) @ P @ np.asarray(f.E, dtype=float))


def volume_weight(f: Su3Frame) -> float:
    return float(_weight(f.vartheta, f.varphi, f.alpha))


def _weight(vt, vp, al):
    return np.sin(al) * np.sin(vt) * (1.0 - np.cos(vt)) * np.sin(vp) / 128.0


def _trace_from_moduli(P, E, g):
    return np.einsum("j,...ji,i->...", np.asarray(g, float), P, np.asarray(E, float))


def _quadrature(E, g, lam, n):
    x, w = np.polynomial.legendre.leggauss(n)
    ang = 0.5 * np.pi * (x + 1.0)  # [0, pi]
    wa = 0.5 * np.pi * w
    b3 = np.pi * (x + 1.0)  # [0, 2 pi]
    wb = np.pi * w
    total = 0.0
    # loop over vartheta to bound memory at n^3 points
    VP, AL, B3 = np.meshgrid(ang, ang, b3, indexing="ij")
    WW = wa[:, None, None] * wa[None, :, None] * wb[None, None, :]
    for vt, wvt in zip(ang, wa):
        P = overlap_moduli(vt, VP, AL, B3)
        t = _trace_from_moduli(P, E, g)
        f = np.exp(-lam * t) * _weight(vt, VP, AL)
        total += wvt * np.sum(WW * f)
    return total * (2 * np.pi) ** 2


def sample_dv_angles(rng: np.random.Generator, n: int):
    """Angles drawn from the normalised ``dV`` density (``xi``, ``eta`` omitted)."""
    U = rng.random((4, n))
    vt = np.arccos(1.0 - 2.0 * np.sqrt(1.0 - U[0]))  # cos(vt) has density (1 - c)/2
    vp = np.arccos(1.0 - 2.0 * U[1])
    al = np.arccos(1.0 - 2.0 * U[2])
    b3 = 2 * np.pi * U[3]
    return vt, vp, al, b3


def haar_unitary(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Haar-distributed ``U(n)`` matrices from QR of complex Ginibre matrices."""
    Z = (rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[:, None, :]


def _mc_stats(vals, n):
    m = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(n))
    return m, se


def partition_function(E, g_eigs, lam: float, method: str = "quadrature", *,
                       n_nodes: int = DEFAULT_NODES, n_samples: int = 1_000_000, seed: int = 0,
                       sampling: str = "dv", block: int = 250_000):
    """``Z(lam) = int exp(-lam tr(HG)) dV`` and an error estimate.

    ``quadrature`` uses Gauss-Legendre on four angles with the two phase
    integrals done analytically; the error estimate is the change when the
    node count is halved. ``monte_carlo`` samples angles from the ``dV``
    density (``sampling="dv"``) or uniformly with ``dV`` as weight
    (``sampling="uniform"``). ``haar`` averages over Haar unitaries and is
    scaled by the total volume. Monte Carlo errors are standard errors.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    E = np.asarray(E, dtype=float)
    g = np.asarray(g_eigs, dtype=float)
    if method == "quadrature":
        Z = _quadrature(E, g, lam, n_nodes)
        Zc = _quadrature(E, g, lam, max(4, n_nodes // 2))
        err = abs(Z - Zc)
        if err > QUAD_FAIL * abs(Z):
            raise QuadratureError(
                f"quadrature not converged (relative change {err / abs(Z):.2e}); increase n_nodes"
            )
        return float(Z), float(err)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    vals = []
    left = n_samples
    while left > 0:
        m = min(block, left)
        left -= m
        if method == "monte_carlo":
            if sampling == "dv":
                vt, vp, al, b3 = sample_dv_angles(rng, m)
                t = _trace_from_moduli(overlap_moduli(vt, vp, al, b3), E, g)
                vals.append(TOTAL_VOLUME * np.exp(-lam * t))
            elif sampling == "uniform":
                u = rng.random((4, m))
                vt, vp, al = np.pi * u[0], np.pi * u[1], np.pi * u[2]
                b3 = 2 * np.pi * u[3]
                t = _trace_from_moduli(overlap_moduli(vt, vp, al, b3), E, g)
                box = np.pi**3 * (2 * np.pi) ** 3
                vals.append(box * _weight(vt, vp, al) * np.exp(-lam * t))
            else:
                raise ValueError(f"unknown sampling {sampling!r}")
        elif method == "haar":
            U = haar_unitary(rng, 3, m)
            t = _trace_from_moduli(np.abs(U) ** 2, E, g)
            vals.append(TOTAL_VOLUME * np.exp(-lam * t))
        else:
            raise ValueError(f"unknown method {method!r}")
    return _mc_stats(np.concatenate(vals), n_samples)


def haar_trace_samples(E, g_eigs, rng, n):
    """``tr(U E U^dagger G)`` for Haar ``U``."""
    U = haar_unitary(rng, 3, n)
    return _trace_from_moduli(np.abs(U) ** 2, E, g_eigs)


def canonical_trace_histogram(E, g_eigs, lam: float, edges, n: int = 2_000_000, seed: int = 1):
    """Bin probabilities of ``tr(HG)`` under the density ``~ exp(-lam tr(HG)) dV``.

    Computed by reweighting Haar samples.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    t = haar_trace_samples(E, g_eigs, rng, n)
    w = np.exp(-lam * (t - t.min()))
    h, _ = np.histogram(t, bins=edges, weights=w)
    return h / h.sum()


def partition_function_2x2(lam: float, mu: float, nu: float = 1.0, n_nodes: int = 64) -> float:
    """Gauss-Legendre ``int exp(-lam tr(HG)) sin(theta)/4 dtheta dphi`` for traceless H, G."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    th = 0.5 * np.pi * (x + 1)
    wt = 0.5 * np.pi * w
    f = np.exp(-0.5 * lam * nu * mu * np.cos(th)) * 0.25 * np.sin(th)
    return float(2 * np.pi * np.sum(wt * f))


def z_table(E, g_eigs, lams, n_samples: int = 200_000, seed: int = 0, n_nodes: int = DEFAULT_NODES):
    rows = []
    for k, lam in enumerate(lams):
        zq, _ = partition_function(E, g_eigs, lam, "quadrature", n_nodes=n_nodes)
        zm, sm = partition_function(E, g_eigs, lam, "monte_carlo", n_samples=n_samples, seed=seed + 2 * k)
        zh, sh = partition_function(E, g_eigs, lam, "haar", n_samples=n_samples, seed=seed + 2 * k + 1)
        rows.append((lam, zq, zm, sm, zh, sh))
    return rows


def write_z_table_csv(path, E, g_eigs, lams, **kwargs) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "Z_quadrature", "Z_mc", "Z_mc_se", "Z_haar", "Z_haar_se"])
        for row in z_table(E, g_eigs, lams, **kwargs):
            w.writerow([repr(float(x)) for x in row])
    return path
