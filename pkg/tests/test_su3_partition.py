import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from isoflow import su3_partition as su3

angles = st.floats(0.0, np.pi)
phases = st.floats(0.0, 2 * np.pi)


@given(vt=angles, vp=angles, al=angles, xi=phases, eta=phases, b3=phases)
def test_frame_is_unitary(vt, vp, al, xi, eta, b3):
    U = su3.frame_matrix(vt, vp, al, xi, eta, b3)
    assert np.allclose(U.conj().T @ U, np.eye(3), atol=1e-12)


def test_first_column():
    vt, vp, xi, eta = 1.1, 0.7, 0.3, 2.0
    U = su3.frame_matrix(vt, vp, 0.4, xi, eta, 1.0)
    e1 = [np.sin(vt / 2) * np.cos(vp / 2), np.sin(vt / 2) * np.sin(vp / 2) * np.exp(1j * xi),
          np.cos(vt / 2) * np.exp(1j * eta)]
    assert np.allclose(U[:, 0], e1)


def test_trace_independent_of_outer_phases():
    E, g = (-1.0, 0.3, 0.7), (-0.5, 0.1, 0.4)
    a = su3.trace_HG(su3.Su3Frame(1.0, 2.0, 0.5, 0.0, 0.0, 1.2, E=E), g)
    b = su3.trace_HG(su3.Su3Frame(1.0, 2.0, 0.5, 2.5, 4.0, 1.2, E=E), g)
    assert np.isclose(a, b)


def test_hamiltonian_spectrum():
    f = su3.Su3Frame.random(np.random.default_rng(0), E=(-1.0, 0.2, 0.8))
    H = f.hamiltonian()
    assert np.allclose(H, H.conj().T)
    assert np.allclose(np.linalg.eigvalsh(H), [-1.0, 0.2, 0.8])
    assert np.isclose(np.trace(H @ np.diag([1.0, 2.0, 3.0])).real, su3.trace_HG(f, (1.0, 2.0, 3.0)))


def test_frame_validation():
    with pytest.raises(ValueError):
        su3.Su3Frame(4.0, 0.1, 0.1)


def _haar_jacobian(x, h=1e-6):
    # volume of the flag manifold from the off-diagonal part of U^dagger dU
    U = su3.frame_matrix(*x)
    cols = []
    for k in range(6):
        dx = np.zeros(6)
        dx[k] = h
        dU = (su3.frame_matrix(*(x + dx)) - su3.frame_matrix(*(x - dx))) / (2 * h)
        A = U.conj().T @ dU
        off = np.array([A[0, 1], A[0, 2], A[1, 2]])
        cols.append(np.concatenate([off.real, off.imag]))
    return abs(np.linalg.det(np.array(cols).T))


def test_volume_element_is_haar_induced():
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(20):
        x = np.concatenate([rng.uniform(0.2, np.pi - 0.2, 3), rng.uniform(0, 2 * np.pi, 3)])
        f = su3.Su3Frame(x[0], x[1], x[2], x[3], x[4], x[5])
        ratios.append(su3.volume_weight(f) / _haar_jacobian(x))
    # with this normalisation of U^dagger dU the two volume forms coincide
    assert np.allclose(ratios, 1.0, rtol=1e-6)


def test_zero_coupling_gives_total_volume():
    E, g = (-1.0, 0.3, 0.7), (-0.5, 0.1, 0.4)
    Z, err = su3.partition_function(E, g, 0.0, n_nodes=16)
    assert np.isclose(Z, su3.TOTAL_VOLUME, rtol=1e-12)
    Zm, _ = su3.partition_function(E, g, 0.0, "monte_carlo", n_samples=1000)
    assert np.isclose(Zm, su3.TOTAL_VOLUME, rtol=1e-12)


@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_two_level_partition_function(lam):
    a = 0.5 * lam * 1.5 * 2.0
    assert np.isclose(su3.partition_function_2x2(lam, 2.0, 1.5), np.pi * np.sinh(a) / a, rtol=1e-12)


def test_haar_unitaries():
    U = su3.haar_unitary(np.random.default_rng(6), 3, 20_000)
    assert np.allclose(np.einsum("nji,njk->nik", U.conj(), U), np.eye(3), atol=1e-12)
    m = np.mean(np.abs(U) ** 2, axis=0)
    assert np.allclose(m, 1.0 / 3.0, atol=0.01)
    # Haar phases are uniform: E[U_00] vanishes
    assert abs(np.mean(U[:, 0, 0])) < 0.02


def test_dv_sampler_marginals():
    vt, vp, al, b3 = su3.sample_dv_angles(np.random.default_rng(7), 50_000)
    c = np.cos(vt)
    assert stats.kstest(c, lambda y: (y + 1) - (y + 1) ** 2 / 4).pvalue > 1e-3
    assert stats.kstest(np.cos(vp), "uniform", args=(-1, 2)).pvalue > 1e-3
    assert stats.kstest(b3, "uniform", args=(0, 2 * np.pi)).pvalue > 1e-3


def test_sampling_modes_agree():
    E, g = (-1.0, 0.3, 0.7), (-0.5, 0.1, 0.4)
    zd, sd = su3.partition_function(E, g, 1.0, "monte_carlo", n_samples=400_000, seed=1)
    zu, su = su3.partition_function(E, g, 1.0, "monte_carlo", n_samples=400_000, seed=2, sampling="uniform")
    zq, _ = su3.partition_function(E, g, 1.0, n_nodes=24)
    assert abs(zd - zq) < 4 * sd
    assert abs(zu - zq) < 4 * su


def test_unknown_method_and_sampling():
    with pytest.raises(ValueError):
        su3.partition_function((0, 1, 2), (0, 1, 2), 1.0, "bogus")
    with pytest.raises(ValueError):
        su3.partition_function((0, 1, 2), (0, 1, 2), 1.0, "monte_carlo", n_samples=10, sampling="bogus")
    with pytest.raises(ValueError):
        su3.partition_function((0, 1, 2), (0, 1, 2), -1.0)


def test_quadrature_error_raised_when_unresolved():
    with pytest.raises(su3.QuadratureError):
        su3.partition_function((-1.0, 0.0, 1.0), (-1.0, 0.0, 1.0), 40.0, n_nodes=8)


def test_trace_histogram_normalised():
    edges = np.linspace(-2, 2, 21)
    p = su3.canonical_trace_histogram((-1.0, 0.0, 1.0), (-1.0, 0.0, 1.0), 1.0, edges, n=100_000)
    assert np.isclose(p.sum(), 1.0)
    assert np.all(p >= 0)
    # the weight favours low tr(HG)
    assert p[:10].sum() > p[10:].sum()


def test_z_table_csv(tmp_path):
    path = su3.write_z_table_csv(tmp_path / "z.csv", (-1.0, 0.0, 1.0), (-1.0, 0.0, 1.0), [0.0, 0.5],
                                 n_samples=2000, n_nodes=12)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lambda", "Z_quadrature", "Z_mc", "Z_mc_se", "Z_haar", "Z_haar_se"]
    assert len(rows) == 3
    assert np.isclose(float(rows[1][1]), su3.TOTAL_VOLUME)
