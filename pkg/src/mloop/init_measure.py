"""Noisy initial data and the polygonal W-measure.

Gaussian velocity noise of amplitude σ and correlation length r₀ turns the
initial loop functional into exp(-½(γ/ν)² K[C]) with K a double contour
integral of the noise kernel; for r₀ small against the loop K → (σ²/r₀²)|C|, so
the modulus is exp(-m₀|C|), m₀ = γ²σ²/(2ν²r₀²).

Fourier transforming that exponential edge by edge produces the single-link
factor m₀/(m₀² + |v|²)² and, after integrating the shared centre q, the
positive measure W(P) = ∫d³q Π_k m₀/(m₀² + |P_k - q|²)².
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import rng
from .loops import SpatialLoop, resample


@dataclass(frozen=True)
class NoiseParams:
    sigma: float
    r0: float
    gamma: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not self.nu > 0:
            raise ValueError("nu must be positive")

    @property
    def m0(self) -> float:
        return self.gamma**2 * self.sigma**2 / (2 * self.nu**2 * self.r0**2)


Profile = Callable[[np.ndarray], np.ndarray]


def gaussian_profile(mass: float, r0: float) -> Profile:
    """g(ρ²) = mass/(√π r₀) exp(-ρ²/r₀²), so ∫ g(x²) dx = mass."""
    c = mass / (math.sqrt(math.pi) * r0)
    return lambda rho2: c * np.exp(-np.asarray(rho2) / r0**2)


def _curvature_radius(C: SpatialLoop) -> float:
    d = C.edges()
    L = np.linalg.norm(d, axis=1)
    t = d / np.where(L > 0, L, 1)[:, None]
    cosang = np.clip(np.sum(t * np.roll(t, 1, axis=0), axis=1), -1, 1)
    ang = np.arccos(cosang)
    local = 0.5 * (L + np.roll(L, 1))
    with np.errstate(divide="ignore"):
        radius = np.where(ang > 0, local / ang, np.inf)
    return float(radius.min())


def contour_noise_contraction(
    C: SpatialLoop, g: Profile, r0: float, ds_factor: float = 0.1, chunk: int = 2048
) -> float:
    """∮ds∮ds' C'(s)·C'(s') g(|C(s) - C(s')|²) on an arc-length grid of step ≈ ds_factor·r₀.

    Edge vectors carry the tangent times ds; positions are edge midpoints.
    Warns when r₀ is not small against the smallest curvature radius.
    """
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    rc = _curvature_radius(C)
    if r0 > 0.1 * rc:
        warnings.warn(f"r0 = {r0:.3g} is not small against the curvature radius {rc:.3g}", stacklevel=2)
    M = max(C.N, int(math.ceil(C.perimeter() / (ds_factor * r0))))
    L = resample(C, M)
    d = L.edges()
    mid = L.vertices + 0.5 * d
    total = 0.0
    for a in range(0, M, chunk):
        diff = mid[a : a + chunk, None, :] - mid[None, :, :]
        w = g(np.einsum("ijk,ijk->ij", diff, diff))
        total += float(np.einsum("ia,ij,ja->", d[a : a + chunk], w, d))
    return total


def noisy_psi0(C: SpatialLoop, v0, noise: NoiseParams, gamma: float | None = None, nu: float | None = None, ds_factor=0.1) -> complex:
    """exp(i(γ/ν)∮dC·v₀ - ½(γ/ν)² K[C]) for a uniform velocity v₀.

    The kernel is normalized so that ∫g(x²)dx = σ²/r₀², which makes the
    modulus approach exp(-m₀|C|) as r₀ → 0.
    """
    gamma = noise.gamma if gamma is None else gamma
    nu = noise.nu if nu is None else nu
    k = gamma / nu
    phase = k * float(np.sum(C.edges() @ np.asarray(v0, dtype=float)))
    if noise.sigma == 0:
        return complex(np.exp(1j * phase))
    g = gaussian_profile(noise.sigma**2 / noise.r0**2, noise.r0)
    K = contour_noise_contraction(C, g, noise.r0, ds_factor)
    return complex(np.exp(1j * phase - 0.5 * k**2 * K))


# single link ----------------------------------------------------------------------


def single_link_integral(v, m0: float) -> float:
    """∫d³η exp(-m₀|η| + iη·v) = 8π m₀/(m₀² + |v|²)²."""
    if not m0 > 0:
        raise ValueError("m0 must be positive")
    v2 = float(np.sum(np.asarray(v, dtype=float) ** 2))
    return 8 * math.pi * m0 / (m0**2 + v2) ** 2


def _panels(a: float, b: float, n_panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    h = np.diff(edges)[:, None]
    nodes = edges[:-1, None] + 0.5 * h * (x + 1)
    return nodes.ravel(), (0.5 * h * w).ravel()


def single_link_quadrature(v, m0: float, order: int = 16, r_cut: float = 60.0) -> float:
    """Composite Gauss-Legendre in (r, cos θ) with v along the polar axis.

    The azimuth integrates to 2π exactly; the remaining 2-D integrand is
    r² e^{-m₀ r} cos(r|v|u). Panel widths resolve both the decay and the
    oscillation.
    """
    if not m0 > 0:
        raise ValueError("m0 must be positive")
    k = float(np.linalg.norm(np.asarray(v, dtype=float)))
    r_max = r_cut / m0
    width = 0.5 * min(1.0 / m0, math.pi / k if k > 0 else math.inf)
    r, wr = _panels(0.0, r_max, int(math.ceil(r_max / width)), order)
    nu_panels = int(math.ceil(r_max * k / math.pi)) + 1
    u, wu = _panels(-1.0, 1.0, nu_panels, order)
    radial = wr * r**2 * np.exp(-m0 * r)
    total = 0.0
    for a in range(0, r.size, 512):
        osc = np.cos(np.outer(r[a : a + 512] * k, u))
        total += float(radial[a : a + 512] @ osc @ wu)
    return 2 * math.pi * total


# W-measure --------------------------------------------------------------------------


@dataclass
class WMeasureResult:
    value: float
    log_value: float
    nodes: int
    rel_change: float
    converged: bool


def _log_w_grid(P: np.ndarray, m0: float, n: int, center: np.ndarray, width: float) -> float:
    """log W on a spherical product grid around ``center``.

    Radius ρ = width·tan(π(x+1)/4) with Gauss-Legendre x, Gauss-Legendre in
    cos θ and the trapezoid rule in the periodic azimuth.
    """
    x, wx = leggauss(n)
    arg = 0.25 * np.pi * (x + 1)
    rho = width * np.tan(arg)
    log_jr = np.log(width * 0.25 * np.pi * wx / np.cos(arg) ** 2 * rho**2)
    u, wu = leggauss(n)
    phi = 2 * np.pi * np.arange(n) / n
    s_u = np.sqrt(1 - u**2)
    dirs = np.stack(
        [np.outer(s_u, np.cos(phi)), np.outer(s_u, np.sin(phi)), np.repeat(u[:, None], n, axis=1)], axis=-1
    ).reshape(-1, 3)
    log_ja = np.repeat(np.log(wu * 2 * np.pi / n), n)
    Q = (rho[:, None, None] * dirs[None]).reshape(-1, 3) + center
    LJ = (log_jr[:, None] + log_ja[None, :]).reshape(-1)
    logs = np.empty(Q.shape[0])
    step = max(1, 2**20 // P.shape[0])
    for a in range(0, Q.shape[0], step):
        d = Q[a : a + step, None, :] - P[None, :, :]
        logs[a : a + step] = P.shape[0] * math.log(m0) - 2 * np.sum(np.log(m0**2 + np.einsum("ijk,ijk->ij", d, d)), axis=1)
    s = logs + LJ
    top = s.max()
    return float(top + math.log(math.fsum(np.exp(s - top))))


def w_measure(P, m0: float, rtol: float = 1e-8, n_start: int = 24, n_max: int = 96) -> WMeasureResult:
    """∫d³q Π_k m₀/(m₀² + |P_k - q|²)² by product quadrature in spherical coordinates.

    The grid is centred on the mean of the P_k with radial scale m₀/√N plus
    their rms spread. Node counts double until the relative change
    drops below ``rtol``; otherwise a warning carries the achieved change.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.ndim != 2 or P.shape[1] != 3 or P.shape[0] < 1:
        raise ValueError("P must be an (N, 3) real array")
    if not m0 > 0:
        raise ValueError("m0 must be positive")
    N = P.shape[0]
    center = P.mean(axis=0)
    spread = float(np.sqrt(np.mean(np.sum((P - center) ** 2, axis=1))))
    width = m0 / math.sqrt(N) + spread
    n = n_start
    prev = _log_w_grid(P, m0, n, center, width)
    change = math.inf
    while n < n_max:
        n *= 2
        cur = _log_w_grid(P, m0, n, center, width)
        change = abs(math.expm1(cur - prev))
        prev = cur
        if change < rtol:
            break
    converged = change < rtol
    if not converged:
        warnings.warn(f"W-measure quadrature reached {n}^3 nodes with relative change {change:.2e}", stacklevel=2)
    return WMeasureResult(math.exp(prev), prev, n, change, converged)


def log_w_measure(P, m0: float, **kw) -> float:
    return w_measure(P, m0, **kw).log_value


@dataclass
class GaussianFit:
    correlation: float
    slope: float
    n_configs: int


def gaussian_limit_check(
    N: int, m0: float, seed: int, spread: float = 0.1, n_configs: int = 24, rtol: float = 1e-6
) -> GaussianFit:
    """Correlate log W with -2Σ|P_k - P_s|²/m₀² over random configurations.

    Displacements are uniform in a ball of radius spread·m₀ times a
    per-configuration amplitude in (0, 1], so the quadratic form varies across
    configurations. The fitted slope approaches 1 in the Gaussian regime.
    """
    if N < 1:
        raise ValueError("N must be positive")
    xs, ys = [], []
    for i in range(n_configs):
        g = rng.generator(seed, rng.CONFIGS, i)
        amp = g.uniform(0.05, 1.0)
        d = g.standard_normal((N, 3))
        d *= (g.uniform(size=(N, 1)) ** (1 / 3)) / np.linalg.norm(d, axis=1, keepdims=True)
        delta = amp * spread * m0 * d
        delta -= delta.mean(axis=0)
        base = g.standard_normal(3)
        xs.append(-2 * np.sum(delta**2) / m0**2)
        ys.append(w_measure(base + delta, m0, rtol=rtol).log_value)
    xs, ys = np.array(xs), np.array(ys)
    corr = float(np.corrcoef(xs, ys)[0, 1])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return GaussianFit(corr, slope, n_configs)
