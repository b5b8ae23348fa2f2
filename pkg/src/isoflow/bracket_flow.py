"""Deterministic double-bracket gradient flow ``dH/dt = -lam [H, [H, G]]``.

The optional unitary term turns the flow into a damped precession about the
reference axis. Its sign is fixed so that for 2x2 matrices the azimuth advances
as ``phi_t = phi_0 + mu t``; ``unitary_sign=-1`` gives the opposite sense.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hermitian_core import (
    BlochDecomposition,
    _check_pair,
    as_matrix,
    commutator,
    double_bracket,
    eigensystem,
    eigvalsh_batch,
    from_bloch,
    hermitize,
    is_nondegenerate,
    to_bloch,
)

STABILITY_LIMIT = 0.1
MONOTONE_TOL = 1e-12
FIXED_POINT_TOL = 1e-14

VARIANTS = ("pure_gradient", "with_unitary")


class FlowGuardError(ValueError):
    """A numerical guard of the flow integrator was violated."""


@dataclass(frozen=True)
class FlowParams:
    lam: float
    dt: float
    t_final: float
    variant: str = "pure_gradient"
    unitary_sign: float = 1.0
    stride: int = 1

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")
        if self.dt > self.t_final:
            raise ValueError(f"dt={self.dt} exceeds t_final={self.t_final}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class Analytic2x2Solution:
    """Closed-form 2x2 trajectory; ``omega = lam * nu * mu``."""

    u0: float
    nu: float
    c0: float
    phi0: float
    omega: float

    @classmethod
    def from_initial(cls, u0, nu, theta0, phi0, lam, mu):
        if not 0.0 < theta0 < np.pi:
            raise ValueError("theta0 must lie strictly inside (0, pi)")
        return cls(u0=u0, nu=nu, c0=float(np.arctanh(np.cos(theta0))), phi0=phi0,
                   omega=lam * nu * mu)


@dataclass
class FlowTrajectory:
    times: np.ndarray
    states: np.ndarray
    alignment: np.ndarray
    energy: np.ndarray
    unstable_fixed_point: bool = False
    notes: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _rhs(H, G, p: FlowParams):
    C = H @ G - G @ H
    out = -p.lam * (H @ C - C @ H)
    if p.variant == "with_unitary":
        out = out + 1j * p.unitary_sign * C
    return out


def flow_step(H, G, p: FlowParams, check: bool = True) -> np.ndarray:
    """One classical RK4 step of the flow, followed by re-Hermitisation."""
    H, G = _check_pair(H, G)
    if check and not is_nondegenerate(H):
        raise FlowGuardError("degenerate H: gradient-flow fixed points are ambiguous")
    h = p.dt
    k1 = _rhs(H, G, p)
    k2 = _rhs(H + 0.5 * h * k1, G, p)
    k3 = _rhs(H + 0.5 * h * k2, G, p)
    k4 = _rhs(H + h * k3, G, p)
    return hermitize(H + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))


def alignment_norm(H, G) -> float:
    """Frobenius norm of ``[H, G]``."""
    return float(np.linalg.norm(commutator(H, G)))


def energy(H, G) -> float:
    return float(np.trace(as_matrix(H) @ as_matrix(G)).real)


def minimal_energy(H, G) -> float:
    """Smallest ``tr(HG)`` over the isospectral orbit of H (anti-sorted pairing)."""
    e = eigensystem(H)[0]
    g = eigensystem(G)[0]
    return float(np.dot(e, g[::-1]))


def stability_product(H0, G, p: FlowParams) -> float:
    return p.dt * p.lam * np.linalg.norm(G, 2) * np.linalg.norm(H0, 2)


def integrate(H0, G, p: FlowParams) -> FlowTrajectory:
    """Integrate the flow from ``H0`` and sample every ``p.stride`` steps.

    Raises :class:`FlowGuardError` if the stability product exceeds 0.1 or if
    ``tr(HG)`` increases by more than 1e-12 in a step of the pure gradient flow.
    """
    H0, G = _check_pair(H0, G)
    prod = stability_product(H0, G, p)
    if prod > STABILITY_LIMIT:
        raise FlowGuardError(
            f"stability guard violated: dt*lam*||G||*||H0|| = {prod:.6g} > {STABILITY_LIMIT}"
        )
    if not is_nondegenerate(H0):
        raise FlowGuardError("degenerate H0: gradient-flow fixed points are ambiguous")

    H = hermitize(H0)
    times, states, align, en = [0.0], [H], [alignment_norm(H, G)], [energy(H, G)]
    out = FlowTrajectory(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    grad = np.linalg.norm(double_bracket(H, G))
    if align[0] < FIXED_POINT_TOL and grad < FIXED_POINT_TOL:
        if en[0] - minimal_energy(H, G) > 1e-9 * max(1.0, abs(en[0])):
            out.unstable_fixed_point = True
            msg = "H0 commutes with G but tr(HG) is not minimal: unstable fixed point"
            out.notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)

    prev_e = en[0]
    for k in range(1, p.n_steps + 1):
        H = flow_step(H, G, p, check=False)
        e = energy(H, G)
        if p.variant == "pure_gradient" and e > prev_e + MONOTONE_TOL:
            raise FlowGuardError(
                f"tr(HG) increased by {e - prev_e:.3e} at step {k} (t={k * p.dt:.6g}); "
                "reduce dt"
            )
        prev_e = e
        if k % p.stride == 0 or k == p.n_steps:
            times.append(k * p.dt)
            states.append(H)
            align.append(alignment_norm(H, G))
            en.append(e)

    out.times = np.array(times)
    out.states = np.array(states)
    out.alignment = np.array(align)
    out.energy = np.array(en)
    return out


def analytic_2x2(s: Analytic2x2Solution, t) -> np.ndarray:
    """Closed-form solution of the pure gradient flow for G along +z."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    x = s.omega * t - s.c0
    th, sh = np.tanh(x), 1.0 / np.cosh(x)
    off = s.nu * sh * np.exp(-1j * s.phi0)
    H = 0.5 * np.array([[s.u0 - s.nu * th, off], [np.conj(off), s.u0 + s.nu * th]])
    return H


def analytic_theta(s: Analytic2x2Solution, t):
    """Polar angle of the closed-form trajectory, ``cos(theta) = -tanh(omega t - c0)``."""
    return np.arccos(-np.tanh(s.omega * np.asarray(t) - s.c0))


def trajectory_rows(traj: FlowTrajectory):
    """Header and rows for CSV export."""
    n = traj.states.shape[-1]
    header = ["t"]
    for i in range(n):
        for j in range(n):
            header += [f"h{i}{j}_re", f"h{i}{j}_im"]
    if n == 2:
        header += ["theta", "phi"]
    header += [f"eig{k + 1}" for k in range(n)]
    eigs = eigvalsh_batch(traj.states)
    rows = []
    for t, H, w in zip(traj.times, traj.states, eigs):
        row = [t]
        for z in H.ravel():
            row += [z.real, z.imag]
        if n == 2:
            b = to_bloch(H)
            row += [b.theta, b.phi]
        row += list(w)
        rows.append(row)
    return header, rows


def write_trajectory_csv(traj: FlowTrajectory, path) -> Path:
    path = Path(path)
    header, rows = trajectory_rows(traj)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
    return path


def initial_2x2(u0: float, nu: float, theta0: float, phi0: float) -> np.ndarray:
    return from_bloch(BlochDecomposition(u0, nu, theta0, phi0))
