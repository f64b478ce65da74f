"""Loop functional of a flow in uniform rotation, via a polygonal Fourier construction.

With ω_n = π(2n+1)/N the momentum loop

    P_k = Σ_n ξ_n e^{ikω_n} + ξ̄_n e^{-ikω_n},   n = 0..N-1,

is antiperiodic (P_{k+N} = -P_k). Choosing Gaussian modes with
⟨ξ_n ξ̄_nᵀ⟩ = κ_n φ, κ_n = s·U(n), U(n) = 2/(N tan(ω_n/2)) gives
⟨P_k P_lᵀ⟩ = iφ sign(k-l) once the scale s is calibrated, and then
⟨exp(i Σ ΔC_k·P_k)⟩ = exp(-i φ_{αβ} Σ_{αβ}) exactly for the discrete loop.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import rng
from .estimate import Estimate
from .loops import SpatialLoop, tensor_area
from .mle import mle_rhs
from .parallel import Moments, map_moments

LITERAL_SCALE = 1.0
CALIBRATION_N = 64
_CHUNK = 4096


def omegas(N: int) -> np.ndarray:
    return np.pi * (2 * np.arange(N) + 1) / N


def u_closed(n, N: int):
    """U(n) = 2/(N tan(ω_n/2))."""
    n = np.asarray(n)
    if np.any(n < 0) or np.any(n >= N):
        raise ValueError("need 0 <= n < N")
    w = np.pi * (2 * n + 1) / N
    return 2.0 / (N * np.tan(w / 2))


def u_oracle(n: int, N: int) -> float:
    """Literal (2/N) Σ_{k=-N}^{N} sign(k) sin(kω_n)."""
    if not 0 <= n < N:
        raise ValueError("need 0 <= n < N")
    w = math.pi * (2 * n + 1) / N
    return 2.0 / N * math.fsum(math.copysign(1, k) * math.sin(k * w) for k in range(-N, N + 1) if k)


def check_phi(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (3, 3):
        raise ValueError("phi must be 3x3")
    if np.any(phi + phi.T != 0):
        raise ValueError("phi must be exactly antisymmetric")
    return phi


def phi_from_xy(value: float) -> np.ndarray:
    """φ with φ_xy = -φ_yx = value."""
    phi = np.zeros((3, 3))
    phi[0, 1], phi[1, 0] = value, -value
    return phi


def _sign_kernel(N: int) -> np.ndarray:
    """S_j = Σ_n U(n) 2 sin(jω_n) for j = -(N-1)..N-1, unscaled."""
    j = np.arange(-(N - 1), N)
    return 2 * np.sin(np.outer(j, omegas(N))) @ u_closed(np.arange(N), N)


def covariance_identity_check(phi, N: int, scale: float) -> float:
    """max_{k,l} |Σ_n s U(n) 2i sin((k-l)ω_n) φ - iφ sign(k-l)|."""
    phi = check_phi(phi)
    if not scale > 0:
        raise ValueError("scale must be positive")
    j = np.arange(-(N - 1), N)
    err = np.abs(scale * _sign_kernel(N) - np.sign(j))
    return float(err.max() * np.abs(phi).max())


def calibrate_scale(N: int = CALIBRATION_N) -> float:
    """Least-squares s making Σ_n s U(n) 2 sin(jω_n) = sign(j) for |j| < N."""
    K = _sign_kernel(N)
    j = np.arange(-(N - 1), N)
    return float(K @ np.sign(j) / (K @ K))


CALIBRATED_SCALE = 0.25  # pinned by the identity Σ_n cot(ω_n/2) sin(jω_n) = N sign(j)


def mode_coefficients(N: int, scale: float = CALIBRATED_SCALE) -> np.ndarray:
    return scale * u_closed(np.arange(N), N)


def _modes(g: np.random.Generator, phi: np.ndarray, kappa: np.ndarray, batch: int):
    """Draw (ξ, ξ̄) with shape (batch, N, 3).

    Per mode: ξ = λ(z + iw)/√2 with z, w standard normal 3-vectors and
    λ² = |κ|‖φ‖, so ⟨ξξᵀ⟩ = 0 and ⟨ξ ξ*ᵀ⟩ = λ² I. Then ξ̄ = -sign(κ)(φ/‖φ‖) ξ*
    has ⟨ξ ξ̄ᵀ⟩ = κφ and ⟨ξ̄ ξ̄ᵀ⟩ = 0.
    """
    N = kappa.size
    norm = np.linalg.norm(phi)
    lam = np.sqrt(np.abs(kappa) * norm)[None, :, None]
    z = g.standard_normal((batch, N, 3))
    w = g.standard_normal((batch, N, 3))
    xi = lam * (z + 1j * w) / math.sqrt(2)
    xib = -np.sign(kappa)[None, :, None] * np.einsum("ab,snb->sna", phi / norm, xi.conj())
    return xi, xib


def _assemble(xi, xib, N: int) -> np.ndarray:
    k = np.arange(N)
    E = np.exp(1j * np.outer(k, omegas(N)))
    return np.einsum("kn,sna->ska", E, xi) + np.einsum("kn,sna->ska", E.conj(), xib)


def sample_rotation_momentum(phi, N: int, seed: int, index: int = 0, scale: float = CALIBRATED_SCALE) -> np.ndarray:
    """One (N, 3) complex momentum loop; the zero loop when φ = 0."""
    phi = check_phi(phi)
    if not np.any(phi):
        return np.zeros((N, 3), dtype=complex)
    g = rng.generator(seed, rng.ROTATION_MOMENTUM, index)
    xi, xib = _modes(g, phi, mode_coefficients(N, scale), 1)
    return _assemble(xi, xib, N)[0]


def exact_psi_rotation(C: SpatialLoop, phi) -> complex:
    phi = check_phi(phi)
    return complex(np.exp(-1j * np.sum(phi * tensor_area(C))))


def _psi_chunk(start, stop, phi, dC, scale, seed):
    N = dC.shape[0]
    g = rng.generator(seed, rng.ROTATION_MOMENTUM, start)
    xi, xib = _modes(g, phi, mode_coefficients(N, scale), stop - start)
    # Σ_k ΔC_k·P_k collapses to per-mode projections of ΔC
    E = np.exp(1j * np.outer(np.arange(N), omegas(N)))
    a = E.T @ dC
    b = E.conj().T @ dC
    X = np.einsum("sna,na->s", xi, a) + np.einsum("sna,na->s", xib, b)
    return Moments.from_values(np.exp(1j * X))


def mc_psi_rotation(
    C: SpatialLoop, phi, N: int | None = None, n_samples: int = 100_000, seed: int = 0,
    workers: int | None = None, scale: float = CALIBRATED_SCALE,
) -> Estimate:
    """MC average of exp(i Σ ΔC_k·P_k) over sampled rotation momenta.

    C must already have N vertices (resample it first otherwise).
    """
    phi = check_phi(phi)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    N = C.N if N is None else N
    if C.N != N:
        raise ValueError(f"loop has {C.N} vertices, expected {N}")
    t = time.perf_counter()
    if not np.any(phi):
        m = Moments(n_samples, np.array(1 + 0j), np.array(0.0), np.array(0.0))
    else:
        m = map_moments(_psi_chunk, n_samples, (phi, C.edges(), scale, seed), workers, _CHUNK)
    return Estimate.from_moments(m, seed, time.perf_counter() - t)


def _cov_chunk(start, stop, phi, N, scale, seed):
    g = rng.generator(seed, rng.ROTATION_MOMENTUM, start)
    xi, xib = _modes(g, phi, mode_coefficients(N, scale), stop - start)
    P = _assemble(xi, xib, N)
    return Moments.from_values(np.einsum("ska,slb->sklab", P, P))


def empirical_covariance(phi, N: int, n_samples: int, seed: int = 0, workers=None) -> Estimate:
    """⟨P_k^α P_l^β⟩ as an (N, N, 3, 3) estimate."""
    phi = check_phi(phi)
    m = map_moments(_cov_chunk, n_samples, (phi, N, CALIBRATED_SCALE, seed), workers, 1024)
    return Estimate.from_moments(m, seed)


def _dpsi_chunk(start, stop, phi, dC, scale, seed, gamma, nu):
    N = dC.shape[0]
    g = rng.generator(seed, rng.ROTATION_MOMENTUM, start)
    xi, xib = _modes(g, phi, mode_coefficients(N, scale), stop - start)
    P = _assemble(xi, xib, N)
    X = np.einsum("ska,ka->s", P, dC)
    Pdot = mle_rhs(P, gamma, nu)
    return Moments.from_values(1j * np.exp(1j * X) * np.einsum("ska,ka->s", Pdot, dC))


def mc_dpsi_dt(C: SpatialLoop, phi, n_samples: int = 20_000, seed: int = 0, gamma=1.0, nu=1.0, workers=None):
    """⟨i exp(iΣΔC·P) Σ ΔC·Ṗ⟩ with Ṗ from the loop equation (diagnostic)."""
    phi = check_phi(phi)
    m = map_moments(_dpsi_chunk, n_samples, (phi, C.edges(), CALIBRATED_SCALE, seed, gamma, nu), workers, 1024)
    return Estimate.from_moments(m, seed)
