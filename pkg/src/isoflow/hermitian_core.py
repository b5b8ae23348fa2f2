"""Small dense Hermitian linear algebra.

Matrices are plain complex ``numpy`` arrays of shape ``(N, N)``. Functions that
return a Hermitian matrix re-symmetrise the result so that ``H == H^dagger``
holds to machine precision.

The 2x2 Bloch convention used throughout the package is::

    H = u/2 * 1 + nu/2 * (sigma . n),   n = (sin t cos p, sin t sin p, cos t)

so ``H[0, 0] = (u + nu cos t)/2`` and ``H[0, 1] = nu/2 * sin t * exp(-i p)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
JACOBI_TOL = 1e-14
MAX_DIM = 8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])


class DimensionError(ValueError):
    """Raised when matrix shapes are incompatible."""


@dataclass(frozen=True)
class BlochDecomposition:
    """Parameters ``(u, nu, theta, phi)`` of a 2x2 Hermitian matrix.

    ``u`` is the trace, ``nu`` the eigenvalue gap ``E2 - E1 >= 0``.
    """

    u: float
    nu: float
    theta: float
    phi: float

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def hermitize(A: np.ndarray) -> np.ndarray:
    """Return ``(A + A^dagger)/2``; works on stacks of matrices."""
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def hermiticity_error(A: np.ndarray) -> float:
    A = np.asarray(A)
    return float(np.max(np.abs(A - np.conj(np.swapaxes(A, -1, -2))), initial=0.0))


def is_hermitian(A, tol: float = HERMITIAN_TOL) -> bool:
    return hermiticity_error(np.asarray(A)) <= tol


def _check_pair(A, B):
    A, B = as_matrix(A), as_matrix(B)
    if A.shape != B.shape:
        raise DimensionError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return A, B


def commutator(A, B) -> np.ndarray:
    """Lie bracket ``AB - BA``; anti-Hermitian when A and B are Hermitian."""
    A, B = _check_pair(A, B)
    return A @ B - B @ A


def double_bracket(H, G) -> np.ndarray:
    """``[H, [H, G]]``, the Hermitian generator of the gradient flow."""
    H, G = _check_pair(H, G)
    return hermitize(commutator(H, commutator(H, G)))


def _eig2(H: np.ndarray):
    a, d = H[0, 0].real, H[1, 1].real
    b = H[0, 1]
    m = 0.5 * (a + d)
    hz = 0.5 * (a - d)
    r = float(np.hypot(hz, abs(b)))
    if r == 0.0:
        return np.array([m, m]), np.eye(2, dtype=complex)
    theta = np.arctan2(abs(b), hz)
    # H[0,1] = r sin(theta) exp(-i phi)
    phase = np.conj(b) / abs(b) if abs(b) > 0 else 1.0
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    v_low = np.array([s, -phase * c], dtype=complex)
    v_high = np.array([c, phase * s], dtype=complex)
    return np.array([m - r, m + r]), np.column_stack([v_low, v_high])


def _jacobi(H: np.ndarray, tol: float, max_sweeps: int = 100):
    """Cyclic complex Jacobi rotations until off-diagonal mass <= tol * ||H||_F."""
    A = H.copy()
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                tau = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                t = 1.0 / (tau + np.copysign(np.hypot(1.0, tau), tau)) if tau != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # phase removal on column q, then a real rotation in (p, q)
                J = np.eye(n, dtype=complex)
                J[p, p] = c
                J[p, q] = s
                J[q, p] = -s * np.conj(phase)
                J[q, q] = c * np.conj(phase)
                A = J.conj().T @ A @ J
                A[p, q] = A[q, p] = 0.0
                V = V @ J
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.diag(A).real.copy(), V


def eigensystem(H, tol: float = JACOBI_TOL):
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns).

    Uses the closed form for N = 2 and cyclic Jacobi rotations for N >= 3.
    Ties keep their original diagonal order.
    """
    H = as_matrix(H)
    n = H.shape[0]
    if n > MAX_DIM:
        raise DimensionError(f"eigensystem supports N <= {MAX_DIM}, got {n}")
    if n == 1:
        return H.diagonal().real.copy(), np.eye(1, dtype=complex)
    if n == 2:
        return _eig2(H)
    w, V = _jacobi(hermitize(H), tol)
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def eigvalsh_batch(H: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a stack of Hermitian matrices (LAPACK)."""
    return np.linalg.eigvalsh(H)


def is_nondegenerate(H, gap_tol: float = 1e-9) -> bool:
    w, _ = eigensystem(H)
    return bool(np.all(np.diff(w) > gap_tol))


def spectral_gaps(H) -> np.ndarray:
    return np.diff(eigensystem(H)[0])


def from_bloch(b: BlochDecomposition) -> np.ndarray:
    n = bloch_vector(b.theta, b.phi)
    H = 0.5 * b.u * np.eye(2) + 0.5 * b.nu * np.einsum("k,kij->ij", n, PAULI)
    return hermitize(H)


def bloch_vector(theta, phi) -> np.ndarray:
    st = np.sin(theta)
    return np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def to_bloch(H) -> BlochDecomposition:
    """Inverse of :func:`from_bloch`; ``phi`` is returned in ``[0, 2 pi)``."""
    H = as_matrix(H)
    if H.shape != (2, 2):
        raise DimensionError(f"to_bloch needs a 2x2 matrix, got {H.shape}")
    u = float(np.trace(H).real)
    x = H[0, 1].real
    y = -H[0, 1].imag
    z = 0.5 * (H[0, 0].real - H[1, 1].real)
    r = float(np.sqrt(x * x + y * y + z * z))
    if r == 0.0:
        return BlochDecomposition(u, 0.0, 0.0, 0.0)
    theta = float(np.arctan2(np.hypot(x, y), z))
    phi = float(np.mod(np.arctan2(y, x), 2 * np.pi)) if np.hypot(x, y) > 0 else 0.0
    return BlochDecomposition(u, 2.0 * r, theta, phi)


def reference_hamiltonian(mu: float, v: float = 0.0) -> np.ndarray:
    """``G = v/2 * 1 + mu/2 * sigma_z`` (reference axis along z)."""
    return 0.5 * v * np.eye(2, dtype=complex) + 0.5 * mu * SIGMA_Z


def gell_mann(n: int) -> np.ndarray:
    """Traceless Hermitian basis of size ``n^2 - 1`` with ``tr(l_a l_b) = 2 delta_ab``."""
    mats = []
    for j in range(n):
        for k in range(j + 1, n):
            S = np.zeros((n, n), dtype=complex)
            S[j, k] = S[k, j] = 1.0
            mats.append(S)
            A = np.zeros((n, n), dtype=complex)
            A[j, k] = -1j
            A[k, j] = 1j
            mats.append(A)
    for m in range(1, n):
        D = np.zeros((n, n), dtype=complex)
        D[:m, :m] = np.eye(m)
        D[m, m] = -m
        mats.append(np.sqrt(2.0 / (m * (m + 1))) * D)
    return np.array(mats)


def to_json(H) -> str:
    """Row-major JSON array of ``[re, im]`` pairs."""
    H = as_matrix(H)
    return json.dumps([[[float(z.real), float(z.imag)] for z in row] for row in H])


def from_json(text: str) -> np.ndarray:
    rows = json.loads(text)
    H = np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
    return as_matrix(H)
