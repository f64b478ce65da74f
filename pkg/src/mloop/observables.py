"""Monte Carlo estimators over the Euler ensemble.

All estimators draw sample i of the ensemble stream for seed s, so any index
range can be evaluated in any worker and the merged result is independent of
the worker count. Proportionality constants the theory leaves open are fixed
to 1 and exposed as module-level scalars.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import rng
from .estimate import Estimate
from .euler_ensemble import sample_ensemble
from .loops import MomentumLoop, SpatialLoop, SpokesLoop, resample
from .mle import SimParams, dot, pair_geometry
from .parallel import Moments, map_moments

__all__ = [
    "Estimate",
    "CorrelatorRequest",
    "vorticity_hat",
    "vorticity_all",
    "loop_functional_mc",
    "spokes_circulation",
    "vorticity_npoint",
    "parity_check",
    "dissipation_estimate",
]

VORTICITY_CONSTANT = 1.0
DISSIPATION_CONSTANT = 1.0
CHUNK = 1024


def _v(P) -> np.ndarray:
    return P.vertices if isinstance(P, MomentumLoop) else np.asarray(P, dtype=complex)


def vorticity_all(P, gamma: float, nu: float) -> np.ndarray:
    """(iγ/ν) M_k × Δ_k for every backward pair."""
    D, M = pair_geometry(_v(P))
    return VORTICITY_CONSTANT * (1j * gamma / nu) * np.cross(M, D)


def vorticity_hat(P, k: int, gamma: float, nu: float) -> np.ndarray:
    """Vorticity operator at vertex k (pair k-1, k)."""
    v = _v(P)
    k = k % v.shape[0]
    prev = v[k - 1]
    M, D = 0.5 * (v[k] + prev), v[k] - prev
    return VORTICITY_CONSTANT * (1j * gamma / nu) * np.cross(M, D)


def _check_time(t: float, params: SimParams) -> float:
    s = t + params.t0
    if not s > 0:
        raise ValueError("t + t0 must be positive")
    return s


# loop functional ---------------------------------------------------------------------


def _psi_chunk(start, stop, N, q_max, seed, measure, dC, inv_scale):
    vals = np.empty(stop - start, dtype=complex)
    for j, i in enumerate(range(start, stop)):
        F = sample_ensemble(N, q_max, seed, i, measure).F.vertices
        vals[j] = np.exp(1j * inv_scale * np.sum(dC * F))
    return Moments.from_values(vals)


def loop_functional_mc(
    C: SpatialLoop,
    t: float,
    params: SimParams,
    n_samples: int,
    q_max: int | None = None,
    workers: int | None = None,
    measure: str = "pairs",
) -> Estimate:
    """⟨exp(i Σ_k ΔC_k·F_k / √(2ν(t+t₀)))⟩ over Euler samples of size params.N.

    C is arc-length resampled to params.N vertices first.
    """
    if n_samples < 1:
        raise ValueError("sample budget must be positive")
    s = _check_time(t, params)
    N = params.N
    q_max = q_max if q_max is not None else min(N - 1, 32)
    dC = resample(C, N).edges()
    t_start = time.perf_counter()
    if not np.any(dC):
        m = Moments(n_samples, np.array(1 + 0j), np.array(0.0), np.array(0.0))
    else:
        inv = 1.0 / math.sqrt(2 * params.nu * s)
        m = map_moments(_psi_chunk, n_samples, (N, q_max, params.seed, measure, dC, inv), workers, CHUNK)
    return Estimate.from_moments(m, params.seed, time.perf_counter() - t_start)


# spokes --------------------------------------------------------------------------------


def _cumulative(P: np.ndarray) -> np.ndarray:
    """I_j = ∫₀^{2πj/N} P dθ for piecewise-constant P, j = 0..N; batched over leading axes."""
    N = P.shape[-2]
    z = np.zeros(P.shape[:-2] + (1, 3), dtype=P.dtype)
    return np.concatenate([z, np.cumsum(P, axis=-2)], axis=-2) * (2 * np.pi / N)


def _integral_to(I: np.ndarray, P: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """∫₀^θ P for θ ≥ 0, extended periodically; theta has shape (..., n)."""
    N = P.shape[-2]
    x = theta * N / (2 * np.pi)
    turns = np.floor(x / N)
    x = x - turns * N
    j = np.minimum(np.floor(x).astype(np.int64), N - 1)
    frac = (x - j)[..., None]
    Ij = np.take_along_axis(I, j[..., None], axis=-2)
    Pj = np.take_along_axis(P, j[..., None], axis=-2)
    return turns[..., None] * I[..., -1:, :] + Ij + frac * Pj * (2 * np.pi / N)


def _arc_mean(I, P, a, b):
    """Mean of P over the arc from a forward to b (b <= a wraps once)."""
    b = np.where(b > a, b, b + 2 * np.pi)
    return (_integral_to(I, P, b) - _integral_to(I, P, a)) / (b - a)[..., None]


def _mid_angles(th: np.ndarray) -> np.ndarray:
    prev = np.concatenate([th[..., -1:] - 2 * np.pi, th[..., :-1]], axis=-1)
    return np.mod(0.5 * (prev + th), 2 * np.pi)


def _spoke_differences(P: np.ndarray, th: np.ndarray) -> np.ndarray:
    """Q_k averaged over η: ⟨P⟩(θ̃_k, θ_k) - ⟨P⟩(θ_k, θ̃_{k+1}), batched."""
    I = _cumulative(P)
    mid = _mid_angles(th)
    nxt = np.roll(mid, -1, axis=-1)
    return _arc_mean(I, P, mid, th) - _arc_mean(I, P, th, nxt)


def spokes_circulation(P, spokes: SpokesLoop) -> complex:
    """Γ_C̃[P] = Σ_k (r_k - r_C)·(⟨P⟩ over (θ̃_k, θ_k) - ⟨P⟩ over (θ_k, θ̃_{k+1})).

    P is piecewise constant, P(θ) = P_j on [2πj/N, 2π(j+1)/N), so each arc
    average is an exact weighted sum over the vertices it covers.
    """
    P = _v(P)
    N = P.shape[0]
    if 2 * spokes.n > N:
        raise ValueError(f"{spokes.n} spokes on an {N}-gon leave empty arcs (need n <= N/2)")
    Q = _spoke_differences(P, np.asarray(spokes.angles))
    return complex(np.sum((spokes.points - spokes.center) * Q))


# n-point correlators ---------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelatorRequest:
    points: np.ndarray
    t: float
    params: SimParams
    n_samples: int
    q_max: int | None = None
    measure: str = "pairs"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("points must be a non-empty (n, 3) array")
        if self.t < 0:
            raise ValueError("t must be >= 0")
        if self.n_samples < 1:
            raise ValueError("sample budget must be positive")
        if 2 * pts.shape[0] > self.params.N:
            raise ValueError("resolution too low: need n <= N/2")
        object.__setattr__(self, "points", pts)


def _draw_angles(seed: int, i: int, n: int) -> np.ndarray:
    th = np.sort(rng.generator(seed, rng.ANGLES, i).uniform(0.0, 2 * np.pi, n))
    if np.any(np.diff(th) <= 0) or th[0] <= 0:
        th = (np.arange(n) + 0.5) * 2 * np.pi / n  # measure-zero tie; deterministic fallback
    return th


def _npoint_chunk(start, stop, pts_list, N, q_max, seed, measure, gamma, nu, scale, inv_phase, paired):
    n = pts_list[0].shape[0]
    F = np.stack([sample_ensemble(N, q_max, seed, i, measure).F.vertices for i in range(start, stop)])
    th = np.stack([_draw_angles(seed, i, n) for i in range(start, stop)])
    w = vorticity_all(F / scale, gamma, nu)  # (B, N, 3)
    idx = np.minimum((th * N / (2 * np.pi)).astype(np.int64), N - 1)
    wk = np.take_along_axis(w, idx[..., None], axis=1)  # (B, n, 3)
    tensor = wk[:, 0]
    for k in range(1, n):
        tensor = np.einsum("b...,bj->b...j", tensor, wk[:, k])
    Q = _spoke_differences(F, th)
    vals = []
    for pts in pts_list:
        lever = pts - pts.mean(axis=0)
        gam = np.einsum("ka,bka->b", lever, Q)
        phase = np.exp(1j * inv_phase * gam).reshape((-1,) + (1,) * n)
        vals.append(phase * tensor)
    if paired:
        vals.append(vals[1] - (-1) ** n * vals[0])
    return Moments.from_values(np.stack(vals, axis=1))


def _run_npoint(req: CorrelatorRequest, pts_list, paired, workers):
    p = req.params
    s = _check_time(req.t, p)
    scale = p.gamma * math.sqrt(2 * s / p.nu)
    # the phase uses (γ/ν)Γ[P] = Γ[F]/√(2ν(t+t₀)); spokes_circulation is linear in P
    inv_phase = 1.0 / math.sqrt(2 * p.nu * s)
    q_max = req.q_max if req.q_max is not None else min(p.N - 1, 32)
    args = (pts_list, p.N, q_max, p.seed, req.measure, p.gamma, p.nu, scale, inv_phase, paired)
    return map_moments(_npoint_chunk, req.n_samples, args, workers, CHUNK)


def _slice(m: Moments, i: int) -> Moments:
    return Moments(m.n, m.mean[i], m.m2_re[i], m.m2_im[i])


def vorticity_npoint(req: CorrelatorRequest, workers: int | None = None) -> Estimate:
    """⟨exp(iΓ_C̃) ⊗_k ω̂(θ_k)⟩ with θ uniform on the ordered simplex.

    Sorting n uniforms samples the simplex with density n!/(2π)ⁿ, which is
    exactly the prefactor of the correlator, so the plain sample mean is the
    estimate. The physical correlator is the real part of ``mean``.
    """
    t0 = time.perf_counter()
    m = _run_npoint(req, [req.points], False, workers)
    return Estimate.from_moments(_slice(m, 0), req.params.seed, time.perf_counter() - t0)


@dataclass
class ParityReport:
    plus: Estimate
    minus: Estimate
    difference: Estimate
    max_z: float


def parity_check(req: CorrelatorRequest, workers: int | None = None) -> ParityReport:
    """Estimate the correlator at r and -r on the same samples.

    ``difference`` is the paired estimate of g(-r) - (-1)ⁿ g(r); ``max_z`` is
    the largest |Re difference| in units of its standard error.
    """
    t0 = time.perf_counter()
    m = _run_npoint(req, [req.points, -req.points], True, workers)
    wall = time.perf_counter() - t0
    e = [Estimate.from_moments(_slice(m, i), req.params.seed, wall) for i in range(3)]
    d = e[2]
    se = np.asarray(d.stderr_re)
    re = np.abs(np.asarray(d.mean).real)
    z = np.where(se > 0, re / np.where(se > 0, se, 1), np.where(re > 1e-14, np.inf, 0.0))
    return ParityReport(e[0], e[1], d, float(np.max(z)))


# dissipation ----------------------------------------------------------------------------


def _diss_chunk(start, stop, N, q_max, seed, measure, dC, inv_phase, frozen):
    vals = np.empty(stop - start, dtype=complex)
    for j, i in enumerate(range(start, stop)):
        F = sample_ensemble(N, q_max, seed, i, measure).F.vertices
        D, M = pair_geometry(F)
        w = np.cross(M, D).sum(axis=0)
        phase = 1.0 if frozen else np.exp(1j * inv_phase * np.sum(dC * F))
        vals[j] = dot(w, w) * phase
    return Moments.from_values(vals)


def dissipation_estimate(
    t: float,
    params: SimParams,
    C: SpatialLoop,
    n_samples: int,
    q_max: int | None = None,
    frozen_phase: bool = False,
    workers: int | None = None,
    measure: str = "pairs",
) -> Estimate:
    """(1/(ν(t+t₀)²)) ⟨Σ_{k,n} (F_k×ΔF_k)·(F_n×ΔF_n) exp(iΓ_F/√(2ν(t+t₀)))⟩.

    ``frozen_phase`` drops the phase factor, isolating the time prefactor.
    """
    if n_samples < 1:
        raise ValueError("sample budget must be positive")
    s = _check_time(t, params)
    N = params.N
    q_max = q_max if q_max is not None else min(N - 1, 32)
    dC = resample(C, N).edges()
    inv = 1.0 / math.sqrt(2 * params.nu * s)
    t0 = time.perf_counter()
    m = map_moments(_diss_chunk, n_samples, (N, q_max, params.seed, measure, dC, inv, frozen_phase), workers, CHUNK)
    pref = DISSIPATION_CONSTANT / (params.nu * s**2)
    m = Moments(m.n, m.mean * pref, m.m2_re * pref**2, m.m2_im * pref**2)
    return Estimate.from_moments(m, params.seed, time.perf_counter() - t0)
