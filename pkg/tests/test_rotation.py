from __future__ import annotations

import math

import numpy as np
import pytest

from mloop import rotation as rot
from mloop.loops import make_circle_loop, make_fourier_loop, make_square_loop, tensor_area


def test_u_closed_vs_oracle_factor_two():
    assert abs(rot.u_oracle(0, 2) - 2.0) < 1e-14
    assert abs(rot.u_closed(0, 2) - 1.0) < 1e-14
    for N in (3, 8, 17):
        for n in range(N):
            assert abs(rot.u_oracle(n, N) - 2 * rot.u_closed(n, N)) < 1e-12


def test_u_large_N_limit():
    for n in range(4):
        errs = [abs(rot.u_closed(n, N) * (2 * n + 1) * math.pi / 4 - 1) for N in (100, 1000, 10_000)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-6


def test_u_antisymmetry():
    N = 13
    n = np.arange(N)
    assert np.allclose(rot.u_closed(n, N), -rot.u_closed(N - 1 - n, N), atol=1e-14)
    with pytest.raises(ValueError):
        rot.u_closed(N, N)


def test_covariance_identity_calibration():
    phi = rot.phi_from_xy(0.1)
    assert abs(rot.calibrate_scale(64) - rot.CALIBRATED_SCALE) < 1e-12
    assert rot.covariance_identity_check(phi, 64, rot.CALIBRATED_SCALE) <= 1e-10
    # the literal prefactor misses the identity by O(1)
    assert rot.covariance_identity_check(phi, 64, rot.LITERAL_SCALE) > 0.1
    for N in (5, 16, 33):
        assert rot.covariance_identity_check(phi, N, rot.CALIBRATED_SCALE) <= 1e-10


def test_sign_kernel_zero_on_diagonal():
    K = rot._sign_kernel(10)
    assert K[9] == 0.0


def test_phi_validation():
    with pytest.raises(ValueError):
        rot.check_phi(np.eye(3))
    with pytest.raises(ValueError):
        rot.check_phi(np.zeros((2, 2)))


def test_zero_phi_gives_zero_loop():
    assert np.all(rot.sample_rotation_momentum(np.zeros((3, 3)), 8, 0) == 0)
    C = make_circle_loop(1.0, 16)
    assert rot.exact_psi_rotation(C, np.zeros((3, 3))) == 1
    assert rot.mc_psi_rotation(C, np.zeros((3, 3)), n_samples=10).mean == 1


def test_antiperiodicity():
    N = 12
    k = np.arange(2 * N)
    E = np.exp(1j * np.outer(k, rot.omegas(N)))
    assert np.allclose(E[N:], -E[:N], atol=1e-13)


def test_empirical_covariance_matches_identity():
    N, phi = 8, rot.phi_from_xy(0.1)
    e = rot.empirical_covariance(phi, N, 100_000, seed=1, workers=1)
    k = np.arange(N)
    target = 1j * np.sign(k[:, None] - k[None, :])[:, :, None, None] * phi
    assert np.all(np.abs(e.mean.real - target.real) <= 4 * e.stderr_re + 1e-15)
    assert np.all(np.abs(e.mean.imag - target.imag) <= 4 * e.stderr_im + 1e-15)


def test_exact_circle_value():
    C = make_circle_loop(1.0, 256)
    phi = rot.phi_from_xy(0.1)
    S = tensor_area(C)
    # the inscribed polygon has area (N/2) sin(2π/N)
    area = 128 * math.sin(2 * math.pi / 256)
    assert abs(S[0, 1] + area) < 1e-12 or abs(S[0, 1] - area) < 1e-12
    assert abs(rot.exact_psi_rotation(C, phi) - np.exp(-1j * 0.1 * (S[0, 1] - S[1, 0]))) < 1e-15


@pytest.mark.parametrize(
    "loop",
    [make_circle_loop(1.0, 64), make_square_loop(1.0, 64), make_fourier_loop(3, 64)],
    ids=["circle", "square", "fourier"],
)
def test_mc_matches_exact(loop):
    phi = rot.phi_from_xy(0.1) + np.array([[0, 0, 0.05], [0, 0, -0.02], [-0.05, 0.02, 0]])
    est = rot.mc_psi_rotation(loop, phi, n_samples=100_000, seed=2, workers=1)
    exact = rot.exact_psi_rotation(loop, phi)
    assert abs(est.mean.real - exact.real) <= 3 * est.stderr_re
    assert abs(est.mean.imag - exact.imag) <= 3 * est.stderr_im


def test_mc_rejects_mismatched_N():
    with pytest.raises(ValueError):
        rot.mc_psi_rotation(make_circle_loop(1.0, 16), rot.phi_from_xy(0.1), N=32)
    with pytest.raises(ValueError):
        rot.mc_psi_rotation(make_circle_loop(1.0, 16), rot.phi_from_xy(0.1), n_samples=0)


def test_mc_deterministic_across_workers():
    C, phi = make_circle_loop(1.0, 32), rot.phi_from_xy(0.2)
    a = rot.mc_psi_rotation(C, phi, n_samples=10_000, seed=5, workers=1)
    b = rot.mc_psi_rotation(C, phi, n_samples=10_000, seed=5, workers=2)
    assert a.mean == b.mean


def test_dpsi_dt_is_finite_diagnostic():
    # the trace-vanishing argument is a continuum statement; the polygonal value is reported, not asserted
    est = rot.mc_dpsi_dt(make_circle_loop(1.0, 32), rot.phi_from_xy(0.1), n_samples=4096, seed=1, workers=1)
    assert np.isfinite(est.mean) and est.stderr > 0
