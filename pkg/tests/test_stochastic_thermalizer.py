import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from isoflow import stochastic_thermalizer as st
from isoflow.equilibrium_ensemble import CanonicalParams, mean_cos
from isoflow.hermitian_core import gell_mann, reference_hamiltonian


def _random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (A + A.conj().T) / 2


def test_noise_conventions():
    assert st.NoiseConfig(convention="section6", nu=1.5).diffusion_D == 3.0
    assert st.NoiseConfig(convention="canonical", nu=1.5).diffusion_D == 2.0
    assert np.isclose(st.NoiseConfig(nu=2.0).noise_scale, np.sqrt(2.0))
    with pytest.raises(ValueError):
        st.NoiseConfig(convention="canonical", diffusion_D=3.0)
    with pytest.raises(ValueError):
        st.NoiseConfig(convention="other")


def test_stationary_coupling():
    assert st.stationary_coupling(1.5, st.NoiseConfig(convention="canonical")) == 1.5
    assert st.stationary_coupling(1.5, st.NoiseConfig(nu=3.0)) == 0.5


def test_brownian_increment_moments():
    rng = st.path_rng(5, 0)
    dt = 1e-3
    x = st.brownian_increments(rng, 1_000_000, dt)
    se_mean = np.sqrt(dt / x.size)
    assert abs(x.mean()) < 5 * se_mean
    # Var of the sample variance is 2 dt^2 / n
    assert abs(x.var() - dt) < 5 * dt * np.sqrt(2.0 / x.size)


def test_path_rng_streams_distinct():
    a = st.path_rng(1, 0).standard_normal(4)
    b = st.path_rng(1, 1).standard_normal(4)
    c = st.path_rng(1, 0).standard_normal(4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, c)


def test_drift_singular_at_poles():
    with pytest.raises(ValueError):
        st.drift_theta(0.0, 1.0, 2.0)
    assert np.isclose(st.drift_theta(np.pi / 2, 1.0, 2.0), 1.0)


def test_step_angle_stays_on_sphere():
    rng = np.random.default_rng(0)
    s = st.SphereState(0.05, 1.0)
    for _ in range(2000):
        dW = rng.standard_normal(2) * np.sqrt(1e-2)
        s = st.step_angle(s, 1.0, 2.0, 1e-2, dW[0], dW[1], pole_cap=st.POLE_CAP)
        assert 0.0 <= s.theta <= np.pi
        assert 0.0 <= s.phi < 2 * np.pi


def test_step_z_clamped():
    z = np.linspace(-1, 1, 101)
    out = st.step_z(z, 5.0, 2.0, 1e-2, np.full_like(z, 0.5))
    assert np.all(np.abs(out) <= 1.0)


@settings(max_examples=30, deadline=None)
@given(n=hst.integers(2, 4), seed=hst.integers(0, 2**32 - 1))
def test_step_matrix_isospectral(n, seed):
    rng = np.random.default_rng(seed)
    H = _random_hermitian(rng, n)
    G = _random_hermitian(rng, n)
    dW = rng.standard_normal(n * n - 1) * 0.1
    H1 = st.step_matrix(H, G, 0.7, 1.3, 1e-2, dW)
    assert np.allclose(H1, H1.conj().T)
    assert np.allclose(np.linalg.eigvalsh(H1), np.linalg.eigvalsh(H), atol=1e-12)


def test_fast_2x2_step_matches_general_step():
    rng = np.random.default_rng(2)
    H = np.array([_random_hermitian(rng, 2) for _ in range(6)])
    G = _random_hermitian(rng, 2)
    dW = rng.standard_normal((6, 3)) * 0.2
    assert np.allclose(st._step_matrix_2x2(H, G, 0.5, 1.1, 1e-2, dW),
                       st.step_matrix(H, G, 0.5, 1.1, 1e-2, dW, generators=gell_mann(2)), atol=1e-14)


def test_zero_noise_step_follows_gradient():
    rng = np.random.default_rng(3)
    H, G = _random_hermitian(rng, 3), _random_hermitian(rng, 3)
    dt = 1e-5
    H1 = st.step_matrix(H, G, 1.0, 0.0, dt, np.zeros(8))
    C = H @ G - G @ H
    assert np.allclose((H1 - H) / dt, -(H @ C - C @ H), atol=1e-3)


def test_dt_guard():
    spec = st.EnsembleSpec(n_paths=4, dt=0.05, t_final=1.0)
    with pytest.raises(st.EnsembleGuardError, match="guard"):
        st.run_ensemble(st.SphereState(1.0), spec, st.NoiseConfig(), 1.0, reference_hamiltonian(2.0))


def test_scheme_dimension_check():
    spec = st.EnsembleSpec(n_paths=4, dt=1e-3, t_final=0.01, scheme="z_em")
    with pytest.raises(ValueError):
        st.run_ensemble(np.diag([0.0, 1.0, 2.0]), spec, st.NoiseConfig(), 1.0, np.diag([1.0, 0.0, -1.0]))


@pytest.mark.parametrize("scheme", st.SCHEMES)
def test_batching_does_not_change_paths(scheme):
    G = reference_hamiltonian(2.0)
    noise = st.NoiseConfig(master_seed=99)
    whole = st.run_ensemble(st.SphereState(1.0), st.EnsembleSpec(12, 1e-3, 0.3, scheme), noise, 1.0, G)
    first = st.run_ensemble(st.SphereState(1.0), st.EnsembleSpec(5, 1e-3, 0.3, scheme), noise, 1.0, G)
    rest = st.run_ensemble(st.SphereState(1.0), st.EnsembleSpec(7, 1e-3, 0.3, scheme), noise, 1.0, G,
                           path_offset=5)
    assert np.array_equal(whole.terminal_cos, np.concatenate([first.terminal_cos, rest.terminal_cos]))
    assert np.array_equal(whole.path_ids, np.arange(12))


def test_seed_changes_paths():
    G = reference_hamiltonian(2.0)
    spec = st.EnsembleSpec(8, 1e-3, 0.2)
    a = st.run_ensemble(st.SphereState(1.0), spec, st.NoiseConfig(master_seed=1), 1.0, G)
    b = st.run_ensemble(st.SphereState(1.0), spec, st.NoiseConfig(master_seed=2), 1.0, G)
    assert not np.array_equal(a.terminal_cos, b.terminal_cos)


def test_z_scheme_reaches_equilibrium_mean():
    lam, mu = 1.0, 2.0
    spec = st.EnsembleSpec(n_paths=4000, dt=1e-3, t_final=5.0, scheme="z_em")
    res = st.run_ensemble(st.SphereState(0.3), spec, st.NoiseConfig(master_seed=8), lam, reference_hamiltonian(mu))
    c = res.terminal_cos
    target = mean_cos(CanonicalParams(lam=lam, mu=mu))
    assert abs(c.mean() - target) < 4 * c.std(ddof=1) / np.sqrt(c.size)


def test_canonical_convention_uses_trace_exponent():
    lam, mu, nu = 1.0, 2.0, 0.5
    spec = st.EnsembleSpec(n_paths=4000, dt=1e-3, t_final=5.0, scheme="z_em")
    noise = st.NoiseConfig(convention="canonical", nu=nu, master_seed=9)
    res = st.run_ensemble(st.SphereState(1.0), spec, noise, lam, reference_hamiltonian(mu), nu=nu)
    c = res.terminal_cos
    target = mean_cos(CanonicalParams(lam=lam, mu=mu, nu=nu, exponent="trace"))
    assert abs(c.mean() - target) < 4 * c.std(ddof=1) / np.sqrt(c.size)


def test_matrix_scheme_records_sphere_coordinates():
    spec = st.EnsembleSpec(n_paths=3, dt=1e-3, t_final=0.1, scheme="matrix_conjugation", record_stride=50)
    res = st.run_ensemble(st.SphereState(1.0, 0.5), spec, st.NoiseConfig(), 1.0, reference_hamiltonian(2.0))
    assert np.allclose(res.times, [0.0, 0.05, 0.1])
    assert np.allclose(res.cos_theta[0], np.cos(1.0))
    assert np.allclose(res.phi[0], 0.5)
    # tr(HG) = (nu mu / 2) cos(theta) for traceless H and G
    assert np.allclose(res.trace_hg, res.cos_theta)
    assert res.eig_drift.max() < 1e-12


def test_outputs(tmp_path):
    spec = st.EnsembleSpec(n_paths=5, dt=1e-3, t_final=0.01)
    res = st.run_ensemble(st.SphereState(1.0), spec, st.NoiseConfig(), 1.0, reference_hamiltonian(2.0))
    with open(res.write_paths_csv(tmp_path / "p.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path_id", "t", "theta", "phi", "cos_theta"]
    assert len(rows) == 1 + 5 * 2
    summary = json.loads(res.write_summary_json(tmp_path / "s.json").read_text())
    assert sum(summary["histogram"]["counts"]) == 5
    assert len(summary["histogram"]["edges"]) == st.N_HIST_BINS + 1
