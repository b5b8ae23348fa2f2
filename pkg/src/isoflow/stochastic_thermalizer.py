"""Stochastic isospectral flow: gradient drift plus uniform Brownian noise.

Three integrators are provided for the 2x2 case, all targeting the density
``exp(-(omega/D) cos(theta))`` with respect to the round measure on the sphere:

``angle_em``
    Euler-Maruyama in ``(theta, phi)``. The coordinate drift carries the
    connection term ``D cot(theta)`` that a covariant Ito differential hides.
``z_em``
    Euler-Maruyama in ``z = cos(theta)``, which has no coordinate singularity.
``matrix_conjugation``
    ``H -> exp(-Xi) H exp(Xi)`` with anti-Hermitian ``Xi``; the spectrum is
    preserved to rounding error. Also works for 3x3 matrices.

Every path draws from its own generator seeded by ``(master_seed, path_index)``
so results do not depend on how paths are batched.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hermitian_core import (
    PAULI,
    as_matrix,
    eigvalsh_batch,
    from_bloch,
    gell_mann,
    hermitize,
    to_bloch,
    BlochDecomposition,
)

SCHEMES = ("angle_em", "z_em", "matrix_conjugation")
CONVENTIONS = ("section6", "canonical")
DT_GUARD = 0.01
TIME_CHUNK = 256
N_HIST_BINS = 50
# sin(theta) below which angle_em steps the embedded unit vector instead
POLE_CAP = 0.25


class EnsembleGuardError(ValueError):
    pass


@dataclass(frozen=True)
class SphereState:
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")


@dataclass(frozen=True)
class NoiseConfig:
    """Noise strength and seeding.

    ``section6`` sets the theta-theta diffusion coefficient to ``D = 2 nu``;
    ``canonical`` sets ``D = 2`` so that the stationary law is
    ``exp(-lam tr(HG))``.
    """

    convention: str = "section6"
    nu: float = 1.0
    master_seed: int = 0
    diffusion_D: float | None = None

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        forced = 2.0 * self.nu if self.convention == "section6" else 2.0
        if self.diffusion_D is not None and not np.isclose(self.diffusion_D, forced):
            raise ValueError(
                f"convention {self.convention} forces diffusion_D={forced}, got {self.diffusion_D}"
            )
        if forced <= 0:
            raise ValueError("diffusion_D must be positive")
        object.__setattr__(self, "diffusion_D", forced)

    @property
    def noise_scale(self) -> float:
        """Per-generator standard deviation (per unit sqrt-time) for the matrix scheme."""
        return float(np.sqrt(self.diffusion_D / 2.0))


@dataclass(frozen=True)
class EnsembleSpec:
    n_paths: int
    dt: float
    t_final: float
    scheme: str = "angle_em"
    record_stride: int | None = None
    pole_cap: float = POLE_CAP

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.record_stride is not None and self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))


# -- single-step kernels --------------------------------------------------------


def drift_theta(theta, omega, D):
    """Coordinate drift of theta: ``omega sin(theta) + D cot(theta)``."""
    theta = np.asarray(theta, dtype=float)
    s = np.sin(theta)
    if np.any((theta <= 0.0) | (theta >= np.pi) | (s == 0.0)):
        raise ValueError("drift_theta is singular at the poles; use step_z or reflection")
    out = omega * s + D * np.cos(theta) / s
    return float(out) if out.ndim == 0 else out


def _reflect(theta, phi):
    theta = np.mod(theta, 2 * np.pi)
    over = theta > np.pi
    theta = np.where(over, 2 * np.pi - theta, theta)
    # passing through a pole flips the azimuth
    phi = np.where(over, phi + np.pi, phi)
    return theta, np.mod(phi, 2 * np.pi)


def _angle_update(theta, phi, omega, D, dt, dW1, dW2, pole_cap=0.0):
    s = np.maximum(np.sin(theta), 1e-300)
    sq = np.sqrt(D)
    theta_new = theta + (omega * s + D * np.cos(theta) / s) * dt + sq * (dW1 + dW2)
    phi_new = phi - (sq / s) * (dW1 - dW2)
    # theta < 0 maps to -theta with phi + pi as well
    neg = theta_new < 0
    theta_new = np.where(neg, -theta_new, theta_new)
    phi_new = np.where(neg, phi_new + np.pi, phi_new)
    if pole_cap > 0.0:
        cap = s < pole_cap
        if np.any(cap):
            th_c, ph_c = _embedded_update(theta[cap], phi[cap], omega, D, dt, dW1[cap], dW2[cap])
            theta_new = np.asarray(theta_new).copy()
            phi_new = np.asarray(phi_new).copy()
            theta_new[cap] = th_c
            phi_new[cap] = ph_c
    return _reflect(theta_new, phi_new)


def _embedded_update(theta, phi, omega, D, dt, dW1, dW2):
    """Projection step of the unit Bloch vector; regular at the poles.

    The tangent noise uses the same increments rotated into the orthonormal
    frame ``(e_theta, e_phi)``, so the law matches the angle step.
    """
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    n = np.stack([st * cp, st * sp, ct])
    e_th = np.stack([ct * cp, ct * sp, -st])
    e_ph = np.stack([-sp, cp, np.zeros_like(sp)])
    sq = np.sqrt(D)
    # gradient drift omega*(n cos(theta) - z_hat) = omega sin(theta) e_theta
    step = (omega * st * dt + sq * (dW1 + dW2)) * e_th - sq * (dW1 - dW2) * e_ph
    m = n + step
    m /= np.linalg.norm(m, axis=0)
    return np.arccos(np.clip(m[2], -1.0, 1.0)), np.mod(np.arctan2(m[1], m[0]), 2 * np.pi)


def step_angle(s: SphereState, omega: float, D: float, dt: float, dW1: float, dW2: float,
               pole_cap: float = 0.0) -> SphereState:
    """Euler-Maruyama step in ``(theta, phi)``, reflected at the poles.

    The theta noise is ``sqrt(D) (dW1 + dW2)`` (variance ``2 D dt``) and the
    phi noise ``-sqrt(D)/sin(theta) (dW1 - dW2)``; under ``D = 2 nu`` these
    are the ``sqrt(2 nu)`` amplitudes of the 2x2 model. With ``pole_cap > 0``
    points with ``sin(theta) < pole_cap`` take a projection step of the unit
    Bloch vector instead, which avoids the overshoot of the ``cot`` drift.
    """
    th, ph = _angle_update(np.array([s.theta]), np.array([s.phi]), omega, D, dt,
                           np.array([dW1], dtype=float), np.array([dW2], dtype=float), pole_cap)
    return SphereState(float(th[0]), float(ph[0]))


def step_z(z, omega, D, dt, dW):
    """Euler-Maruyama step for ``z = cos(theta)``, clamped to ``[-1, 1]``."""
    z = np.asarray(z, dtype=float)
    one_m = np.maximum(1.0 - z * z, 0.0)
    znew = z + (-omega * one_m - 2.0 * D * z) * dt + np.sqrt(2.0 * D * one_m) * dW
    out = np.clip(znew, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _su2_exp(Xi):
    # Xi = i a.sigma (traceless anti-Hermitian) -> cos|a| + i sin|a| (a/|a|).sigma
    a = np.einsum("...ij,kji->...k", Xi, PAULI).imag / 2.0
    norm = np.linalg.norm(a, axis=-1)
    c = np.cos(norm)
    sinc = np.where(norm > 0, np.sin(norm) / np.where(norm > 0, norm, 1.0), 1.0)
    U = c[..., None, None] * np.eye(2) + 1j * np.einsum("...k,kij->...ij", sinc[..., None] * a, PAULI)
    return U


def _anti_hermitian_exp(Xi):
    if Xi.shape[-1] == 2:
        return _su2_exp(Xi)
    # i Xi is Hermitian; eigh reads only its lower triangle
    w, V = np.linalg.eigh(1j * Xi)
    return (V * np.exp(-1j * w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _pauli_coords(H):
    # H = h0 1 + h . sigma; returns h0 (...,) and h (3, ...)
    h0 = 0.5 * (H[..., 0, 0].real + H[..., 1, 1].real)
    h = np.stack([H[..., 0, 1].real, -H[..., 0, 1].imag, 0.5 * (H[..., 0, 0].real - H[..., 1, 1].real)])
    return h0, h


def _from_pauli_coords(h0, h):
    H = np.empty(np.shape(h0) + (2, 2), dtype=complex)
    H[..., 0, 0] = h0 + h[2]
    H[..., 1, 1] = h0 - h[2]
    H[..., 0, 1] = h[0] - 1j * h[1]
    H[..., 1, 0] = h[0] + 1j * h[1]
    return H


def _step_bloch(h, g, lam, noise_scale, dt, dW):
    """2x2 conjugation step acting on the Bloch vector ``h`` of shape ``(3, P)``.

    With ``H = h0 + h.sigma`` and ``G = g0 + g.sigma`` the generator is
    ``Xi = i a.sigma`` with ``a = -2 lam dt (h x g) + noise_scale dW`` and
    ``exp(-Xi) H exp(Xi)`` rotates ``h`` by ``2|a|`` about ``a``.
    """
    hx, hy, hz = h
    gx, gy, gz = g
    f = -2.0 * lam * dt
    ax = f * (hy * gz - hz * gy) + noise_scale * dW[0]
    ay = f * (hz * gx - hx * gz) + noise_scale * dW[1]
    az = f * (hx * gy - hy * gx) + noise_scale * dW[2]
    na = np.sqrt(ax * ax + ay * ay + az * az)
    safe = np.where(na > 0, na, 1.0)
    kx, ky, kz = ax / safe, ay / safe, az / safe
    c, sn = np.cos(2 * na), np.sin(2 * na)
    kh = (kx * hx + ky * hy + kz * hz) * (1.0 - c)
    return np.stack([
        hx * c + (ky * hz - kz * hy) * sn + kx * kh,
        hy * c + (kz * hx - kx * hz) * sn + ky * kh,
        hz * c + (kx * hy - ky * hx) * sn + kz * kh,
    ])


def _step_matrix_2x2(H, G, lam, noise_scale, dt, dW):
    """Same update as :func:`step_matrix` for a ``(P, 2, 2)`` stack and ``dW`` of shape ``(P, 3)``."""
    h0, h = _pauli_coords(H)
    _, g = _pauli_coords(G)
    return _from_pauli_coords(h0, _step_bloch(h, g, lam, noise_scale, dt, np.asarray(dW).T))


def step_matrix(H, G, lam, noise_scale, dt, dW, generators=None):
    """Exactly isospectral step ``H' = exp(-Xi) H exp(Xi)``.

    ``Xi = -lam [H, G] dt + noise_scale * sum_k dW_k (i l_k)`` where ``l_k`` is
    the traceless Hermitian basis normalised to ``tr(l_a l_b) = 2 delta_ab`` and
    ``dW_k`` are increments of variance ``dt``. Accepts stacks of matrices.
    """
    H = np.asarray(H, dtype=complex)
    n = H.shape[-1]
    L = gell_mann(n) if generators is None else generators
    C = H @ G - G @ H
    dW = np.asarray(dW, dtype=float)
    noise = (dW @ L.reshape(len(L), n * n)).reshape(dW.shape[:-1] + (n, n))
    Xi = -lam * dt * C + 1j * noise_scale * noise
    U = _anti_hermitian_exp(Xi)
    Ud = np.conj(np.swapaxes(U, -1, -2))
    return hermitize(Ud @ H @ U)


def brownian_increments(rng: np.random.Generator, size, dt: float) -> np.ndarray:
    """Gaussian increments with mean zero and variance ``dt``."""
    return np.sqrt(dt) * rng.standard_normal(size)


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """Independent generator for one path, fixed by ``(master_seed, path_index)``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.PCG64(ss))


# -- ensembles ------------------------------------------------------------------


@dataclass
class EnsembleResult:
    scheme: str
    times: np.ndarray
    cos_theta: np.ndarray | None  # (n_records, n_paths), 2x2 only
    theta: np.ndarray | None
    phi: np.ndarray | None
    trace_hg: np.ndarray | None
    terminal_states: np.ndarray | None = None
    eig_drift: np.ndarray | None = None
    path_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    params: dict = field(default_factory=dict)

    @property
    def terminal_cos(self) -> np.ndarray:
        return self.cos_theta[-1]

    def summary(self, bins: int = N_HIST_BINS) -> dict:
        out = {"scheme": self.scheme, "n_paths": int(len(self.path_ids)), "params": self.params}
        if self.cos_theta is not None:
            c = self.terminal_cos
            counts, edges = np.histogram(c, bins=bins, range=(-1.0, 1.0))
            out.update(
                mean_cos_theta=float(np.mean(c)),
                var_cos_theta=float(np.var(c, ddof=1)) if c.size > 1 else 0.0,
                se_cos_theta=float(np.std(c, ddof=1) / np.sqrt(c.size)) if c.size > 1 else 0.0,
                histogram={"edges": edges.tolist(), "counts": counts.tolist()},
            )
        if self.trace_hg is not None:
            out["mean_trace_hg"] = float(np.mean(self.trace_hg[-1]))
        if self.eig_drift is not None:
            out["max_eig_drift"] = float(np.max(self.eig_drift))
        return out

    def write_paths_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path_id", "t", "theta", "phi", "cos_theta"])
            nan = float("nan")
            for j, pid in enumerate(self.path_ids):
                for r, t in enumerate(self.times):
                    th = self.theta[r, j] if self.theta is not None else nan
                    ph = self.phi[r, j] if self.phi is not None else nan
                    c = self.cos_theta[r, j] if self.cos_theta is not None else nan
                    w.writerow([int(pid), repr(float(t)), repr(float(th)), repr(float(ph)), repr(float(c))])
        return path

    def write_summary_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path


def _mu_of(G: np.ndarray) -> float:
    if G.shape != (2, 2) or abs(G[0, 1]) > 1e-14:
        raise ValueError("angle and z schemes need a diagonal 2x2 reference Hamiltonian")
    return float((G[0, 0] - G[1, 1]).real)


def effective_omega(lam: float, H0: np.ndarray, G: np.ndarray) -> float:
    """``lam * spread(H) * spread(G)``; equals ``lam nu mu`` for 2x2."""
    e = eigvalsh_batch(H0)
    g = eigvalsh_batch(G)
    return float(lam * (e[-1] - e[0]) * (g[-1] - g[0]))


def _draw_block(rngs, n, k):
    return np.stack([r.standard_normal((n, k)) for r in rngs], axis=1)


def run_ensemble(initial, spec: EnsembleSpec, noise: NoiseConfig, lam: float, G,
                 nu: float | None = None, path_offset: int = 0) -> EnsembleResult:
    """Integrate ``spec.n_paths`` independent paths from a common initial state.

    ``initial`` is a :class:`SphereState` (with gap ``nu``, default
    ``noise.nu``) or a Hermitian matrix. Path ``i`` uses the generator
    ``path_rng(noise.master_seed, path_offset + i)``, so a run split into
    several calls with matching offsets reproduces a single call bitwise.
    """
    G = as_matrix(G)
    D = noise.diffusion_D
    if isinstance(initial, SphereState):
        nu = noise.nu if nu is None else nu
        if G.shape != (2, 2):
            raise ValueError("SphereState initial condition requires a 2x2 G")
        H0 = from_bloch(BlochDecomposition(0.0, nu, initial.theta, initial.phi))
        theta0, phi0 = initial.theta, initial.phi
    else:
        H0 = hermitize(as_matrix(initial))
        if H0.shape != G.shape:
            raise ValueError(f"dimension mismatch: {H0.shape} vs {G.shape}")
        if H0.shape == (2, 2):
            b = to_bloch(H0)
            nu, theta0, phi0 = b.nu, b.theta, b.phi
        else:
            theta0 = phi0 = None
    n = H0.shape[0]
    if spec.scheme != "matrix_conjugation" and n != 2:
        raise ValueError(f"scheme {spec.scheme} only supports 2x2 Hamiltonians")

    omega = effective_omega(lam, H0, G)
    limit = DT_GUARD / max(omega, D)
    if spec.dt > limit:
        raise EnsembleGuardError(
            f"dt={spec.dt} exceeds guard 0.01/max(omega, D) = {limit:.6g} (omega={omega:.6g}, D={D:.6g})"
        )
    if n == 2 and spec.scheme != "matrix_conjugation":
        _mu_of(G)

    n_steps = spec.n_steps
    stride = spec.record_stride or n_steps
    rec_steps = sorted(set(range(0, n_steps + 1, stride)) | {n_steps})
    rec_index = {s: i for i, s in enumerate(rec_steps)}
    P = spec.n_paths
    ids = np.arange(path_offset, path_offset + P)
    rngs = [path_rng(noise.master_seed, int(i)) for i in ids]
    dt = spec.dt
    sqdt = np.sqrt(dt)
    R = len(rec_steps)

    params = dict(lam=lam, omega=omega, D=D, dt=dt, t_final=n_steps * dt,
                  convention=noise.convention, master_seed=noise.master_seed, scheme=spec.scheme)

    if spec.scheme in ("angle_em", "z_em"):
        k = 2 if spec.scheme == "angle_em" else 1
        theta = np.full(P, float(theta0))
        phi = np.full(P, float(phi0))
        z = np.cos(theta)
        th_rec = np.empty((R, P))
        ph_rec = np.empty((R, P)) if k == 2 else None
        z_rec = np.empty((R, P))

        def record(i):
            if k == 2:
                th_rec[i], ph_rec[i], z_rec[i] = theta, phi, np.cos(theta)
            else:
                z_rec[i] = z
                th_rec[i] = np.arccos(z)

        record(0)
        step = 0
        while step < n_steps:
            m = min(TIME_CHUNK, n_steps - step)
            dW = sqdt * _draw_block(rngs, m, k)
            for j in range(m):
                if k == 2:
                    theta, phi = _angle_update(theta, phi, omega, D, dt, dW[j, :, 0], dW[j, :, 1],
                                               spec.pole_cap)
                else:
                    z = step_z(z, omega, D, dt, dW[j, :, 0])
                step += 1
                if step in rec_index:
                    record(rec_index[step])
        mu = _mu_of(G)
        tr_rec = 0.5 * float(np.trace(G).real) * float(np.trace(H0).real) + 0.5 * nu * mu * z_rec
        return EnsembleResult(spec.scheme, np.array(rec_steps) * dt, z_rec, th_rec, ph_rec,
                              tr_rec, path_ids=ids, params=params)

    # matrix conjugation
    L = gell_mann(n)
    K = len(L)
    s = noise.noise_scale
    eig0 = eigvalsh_batch(H0)
    tr_rec = np.empty((R, P))
    cos_rec = np.empty((R, P)) if n == 2 else None
    th_rec = np.empty((R, P)) if n == 2 else None
    ph_rec = np.empty((R, P)) if n == 2 else None
    gap = nu if n == 2 else None
    if n == 2:
        # 2x2 paths are carried as Bloch vectors; the trace part never changes
        h0, hv = _pauli_coords(H0)
        g0, g = _pauli_coords(G)
        h = np.repeat(hv[:, None], P, axis=1)
    else:
        H = np.broadcast_to(H0, (P, n, n)).copy()

    def record(i):
        if n == 2:
            x, y, zc = h
            tr_rec[i] = 2.0 * (h0 * g0 + x * g[0] + y * g[1] + zc * g[2])
            r = np.sqrt(x * x + y * y + zc * zc)
            c = np.clip(zc / np.where(r > 0, r, 1.0), -1.0, 1.0)
            cos_rec[i] = c
            th_rec[i] = np.arccos(c)
            ph_rec[i] = np.mod(np.arctan2(y, x), 2 * np.pi)
        else:
            tr_rec[i] = np.einsum("pij,ji->p", H, G).real

    record(0)
    step = 0
    while step < n_steps:
        m = min(TIME_CHUNK, n_steps - step)
        dW = sqdt * _draw_block(rngs, m, K)
        for j in range(m):
            if n == 2:
                h = _step_bloch(h, g, lam, s, dt, dW[j].T)
            else:
                H = step_matrix(H, G, lam, s, dt, dW[j], generators=L)
            step += 1
            if step in rec_index:
                record(rec_index[step])
    if n == 2:
        H = _from_pauli_coords(np.full(P, h0), h)
    drift = np.max(np.abs(eigvalsh_batch(H) - eig0), axis=-1)
    params["nu"] = gap
    return EnsembleResult(spec.scheme, np.array(rec_steps) * dt, cos_rec, th_rec, ph_rec, tr_rec,
                          terminal_states=H, eig_drift=drift, path_ids=ids, params=params)


def stationary_coupling(lam: float, noise: NoiseConfig) -> float:
    """Coefficient ``lam'`` of the stationary law ``~ exp(-lam' tr(HG))`` on the orbit.

    The drift ``-lam [H, [H, G]]`` is the gradient of ``lam tr(HG)`` and the
    noise has diffusion ``D / 2`` per generator, so the stationary density is
    ``exp(-2 lam tr(HG) / D)`` against the unitary-invariant measure.
    """
    return 2.0 * lam / noise.diffusion_D
