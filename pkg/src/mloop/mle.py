"""The discrete momentum loop equation.

For each pair of neighbouring vertices (P_{k-1}, P_k) let Δ = P_k - P_{k-1} and
M = (P_k + P_{k-1})/2. The pair derivative is

    G_k = (1/ν)[ -γ² Δ² M + Δ (γ² M·Δ + iγ ((M·Δ)²/Δ² - M²)) ]

with unconjugated complex dot products throughout. ``G_k`` is the time
derivative of the midpoint M; how it is distributed back onto vertices is an
assignment choice (see :func:`assign`).

The dimensionless loop is F = γ √(2(t+t₀)/ν) P evolving in τ = log((t+t₀)/t₀).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import ode, rng
from .loops import MomentumLoop

EPS_DELTA2 = 1e-30
ASSIGNMENTS = ("backward", "symmetric", "midpoint")


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unconjugated bilinear dot product over the last axis."""
    return np.einsum("...i,...i->...", a, b)


def _vertices(P) -> np.ndarray:
    return P.vertices if isinstance(P, MomentumLoop) else np.asarray(P, dtype=complex)


def pair_geometry(P) -> tuple[np.ndarray, np.ndarray]:
    """(Δ, M) for the backward pairs (k-1, k), cyclic."""
    v = _vertices(P)
    prev = np.roll(v, 1, axis=-2)
    return v - prev, 0.5 * (v + prev)


def _ratio(MD: np.ndarray, D2: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    ok = np.abs(D2) > eps
    safe = np.where(ok, D2, 1.0)
    return np.where(ok, MD**2 / safe, 0.0), ok


def rhs_terms(P, gamma: float, nu: float, eps: float = EPS_DELTA2):
    """The three summands of the pair derivative, each cubic in P."""
    D, M = pair_geometry(P)
    D2, MD, M2 = dot(D, D), dot(M, D), dot(M, M)
    ratio, ok = _ratio(MD, D2, eps)
    ok = ok[..., None]
    t1 = np.where(ok, -(gamma**2) * D2[..., None] * M, 0) / nu
    t2 = np.where(ok, gamma**2 * MD[..., None] * D, 0) / nu
    t3 = np.where(ok, 1j * gamma * (ratio - M2)[..., None] * D, 0) / nu
    return t1, t2, t3


def pair_rhs(P, gamma: float, nu: float, eps: float = EPS_DELTA2) -> np.ndarray:
    """G_k for every backward pair, as an (N, 3) complex array."""
    t1, t2, t3 = rhs_terms(P, gamma, nu, eps)
    return t1 + t2 + t3


def assign(G: np.ndarray, mode: str = "backward") -> np.ndarray:
    """Map pair derivatives to vertex derivatives.

    ``backward``  Ṗ_k = G_k
    ``symmetric`` Ṗ_k = (G_k + G_{k+1})/2
    ``midpoint``  solve (Ṗ_k + Ṗ_{k-1})/2 = G_k, so each pair midpoint moves
                  exactly by G_k. The system is singular for the alternating
                  mode when N is even; that mode is set to zero.
    """
    if mode == "backward":
        return G
    if mode == "symmetric":
        return 0.5 * (G + np.roll(G, -1, axis=-2))
    if mode == "midpoint":
        N = G.shape[-2]
        m = np.arange(N)
        fac = 0.5 * (1 + np.exp(-2j * np.pi * m / N))
        Gh = np.fft.fft(G, axis=-2)
        singular = np.abs(fac) < 1e-12
        Xh = np.where(singular[:, None], 0, Gh / np.where(singular, 1, fac)[:, None])
        return np.fft.ifft(Xh, axis=-2)
    raise ValueError(f"unknown assignment {mode!r}; choose from {ASSIGNMENTS}")


def mle_rhs(P, gamma: float, nu: float, mode: str = "backward", eps: float = EPS_DELTA2):
    """Vertex time derivative of a momentum loop."""
    return assign(pair_rhs(P, gamma, nu, eps), mode)


def f_rhs(F, gamma: float, eps: float = EPS_DELTA2) -> np.ndarray:
    """∂τ of the pair midpoints of the dimensionless loop.

    2∂τF = (1 - Δ²)M + Δ(M·Δ) + (i/γ)Δ((M·Δ)²/Δ² - M²)
    """
    D, M = pair_geometry(F)
    D2, MD, M2 = dot(D, D), dot(M, D), dot(M, M)
    ratio, ok = _ratio(MD, D2, eps)
    out = (1 - D2)[..., None] * M + MD[..., None] * D
    out = out + np.where(ok[..., None], (1j / gamma) * (ratio - M2)[..., None] * D, 0)
    return 0.5 * out


def f_vertex_rhs(F, gamma: float, mode: str = "backward", eps: float = EPS_DELTA2):
    """Vertex ∂τF consistent with :func:`mle_rhs` under the same assignment.

    ∂τF_k = F_k/2 + assign(f_rhs(F) - M(F)/2)_k. The Euler polygon is stationary
    only under the ``midpoint`` assignment (odd N), because f_rhs is the
    derivative of pair midpoints.
    """
    v = _vertices(F)
    _, M = pair_geometry(v)
    return 0.5 * v + assign(f_rhs(v, gamma, eps) - 0.5 * M, mode)


# parameters and rescaling ---------------------------------------------------


@dataclass(frozen=True)
class SimParams:
    nu: float = 1.0
    gamma: float = 1.0
    t0: float = 1.0
    N: int = 16
    h0: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    seed: int = 0
    assignment: str = "backward"
    max_steps: int = 100_000

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.gamma == 0:
            raise ValueError("gamma must be nonzero")
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.N < 3:
            raise ValueError("N must be >= 3")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.h0 is not None and not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if self.assignment not in ASSIGNMENTS:
            raise ValueError(f"assignment must be one of {ASSIGNMENTS}")

    def tau(self, t):
        return np.log((np.asarray(t) + self.t0) / self.t0)


def scale_factor(t, params: SimParams):
    """γ √(2(t+t₀)/ν), the factor taking P to F."""
    s = np.asarray(t, dtype=float) + params.t0
    if np.any(s <= 0):
        raise ValueError("t + t0 must be positive")
    return params.gamma * np.sqrt(2 * s / params.nu)


def to_dimensionless(P, t, params: SimParams) -> MomentumLoop:
    return MomentumLoop(scale_factor(t, params) * _vertices(P), dimensionless=True)


def from_dimensionless(F, t, params: SimParams) -> MomentumLoop:
    return MomentumLoop(_vertices(F) / scale_factor(t, params), dimensionless=False)


# integration ------------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, N, 3) complex
    params: SimParams
    accepted: int = 0
    rejected: int = 0
    status: str = "ok"
    message: str = ""

    def snapshot(self, i: int) -> MomentumLoop:
        return MomentumLoop(self.states[i])

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def integrate_mle(P0, params: SimParams, t_end: float, t_eval=None) -> Trajectory:
    """Adaptive Dormand-Prince integration of the loop equation from t = 0.

    Step-size underflow does not raise: the returned trajectory carries status
    ``"stiffness/blow-up suspected"`` and ends with the last valid snapshot.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    y0 = _vertices(P0)
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 11)
    g, nu, mode = params.gamma, params.nu, params.assignment
    f = lambda t, y: mle_rhs(y, g, nu, mode)
    try:
        sol = ode.solve(f, (0.0, t_end), y0, t_eval, params.rtol, params.atol, params.h0, max_steps=params.max_steps)
    except ode.StepUnderflow as exc:
        return Trajectory(
            np.array([exc.t]), exc.y[None], params, status="stiffness/blow-up suspected",
            message=str(exc),
        )
    return Trajectory(sol.t, sol.y, params, sol.accepted, sol.rejected)


def integrate_f(F0, params: SimParams, tau_end: float, tau_eval=None) -> Trajectory:
    """Integrate the dimensionless vertex dynamics in τ (times are τ values)."""
    if tau_eval is None:
        tau_eval = np.linspace(0.0, tau_end, 11)
    g, mode = params.gamma, params.assignment
    sol = ode.solve(
        lambda s, y: f_vertex_rhs(y, g, mode), (0.0, tau_end), _vertices(F0), tau_eval,
        params.rtol, params.atol, params.h0, max_steps=params.max_steps,
    )
    return Trajectory(sol.t, sol.y, params, sol.accepted, sol.rejected)


def rescaling_residual(P0, params: SimParams, t_end: float, lam: float = 2.0, n_out: int = 11) -> float:
    """Max relative gap between Q(t) = √λ P(λt) and a direct solve from √λ P₀.

    Scale symmetry says both are the same solution, so the gap measures only
    integrator error.
    """
    P0 = _vertices(P0)
    t_eval = np.linspace(0.0, t_end, n_out)
    ref = integrate_mle(P0, params, lam * t_end, lam * t_eval)
    direct = integrate_mle(np.sqrt(lam) * P0, params, t_end, t_eval)
    if not (ref.ok and direct.ok):
        raise RuntimeError("integration failed: " + (ref.message or direct.message))
    q = np.sqrt(lam) * ref.states
    scale = np.max(np.abs(q))
    return float(np.max(np.abs(q - direct.states)) / scale)


@dataclass
class LaminarReport:
    nonlinearity: float
    max_deviation: float
    times: np.ndarray
    deviations: np.ndarray


def laminar_check(P0, params: SimParams, t_end: float, t_start: float | None = None) -> LaminarReport:
    """Compare F(t) with the linear law γ P₀ √(2(t₀+t)/ν) over [t_start, t_end].

    ``nonlinearity`` is γ² max|P₀|² · 2(t_end+t₀)/ν; a warning is issued when it
    is not small, but the comparison is still made.
    """
    P0 = _vertices(P0)
    eps = params.gamma**2 * float(np.max(np.abs(P0)) ** 2) * 2 * (t_end + params.t0) / params.nu
    if eps > 1e-2:
        warnings.warn(f"nonlinearity parameter {eps:.3g} is not small", stacklevel=2)
    if t_start is None:
        t_start = t_end / 10
    times = np.geomspace(t_start, t_end, 11)
    if not np.any(P0):
        return LaminarReport(eps, 0.0, times, np.zeros_like(times))
    traj = integrate_mle(P0, params, t_end, np.concatenate([[0.0], times]))
    if not traj.ok:
        raise RuntimeError(traj.message)
    s = scale_factor(times, params)[:, None, None]
    F = s * traj.states[1:]
    lin = s * P0[None]
    dev = np.max(np.linalg.norm(F - lin, axis=-1), axis=-1) / np.max(np.linalg.norm(lin, axis=-1), axis=-1)
    return LaminarReport(eps, float(dev.max()), times, dev)


# residuals --------------------------------------------------------------------


@dataclass
class ResidualReport:
    """Per-vertex normalized residuals; all entries are non-negative."""

    vector: np.ndarray
    unit_step: np.ndarray
    scalar: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def max(self) -> float:
        return float(max(self.vector.max(), self.unit_step.max(), self.scalar.max()))

    @property
    def mean(self) -> float:
        return float(np.mean([self.vector.mean(), self.unit_step.mean(), self.scalar.mean()]))

    def summary(self) -> dict:
        out = {
            "max_vector": float(self.vector.max()),
            "max_unit_step": float(self.unit_step.max()),
            "max_scalar": float(self.scalar.max()),
            "mean_vector": float(self.vector.mean()),
            "max": self.max,
        }
        out.update({f"min_{k}": float(np.min(v)) for k, v in self.extra.items()})
        return out


def _norm(x):
    return np.linalg.norm(x, axis=-1)


def fixed_point_residual(F, gamma: float, eps: float = EPS_DELTA2) -> ResidualReport:
    """Residuals of the fixed-point equation and of its two scalar reductions.

    vector:    |(Δ² - 1)M - Δ(γ² M·Δ + iγ((M·Δ)²/Δ² - M²))| normalized by the
               same expression built from vertex-scale magnitudes
    unit_step: |Δ² - 1|
    scalar:    |M² - γ²/4 - (M·Δ - iγ/2)²| normalized likewise
    """
    D, M = pair_geometry(F)
    D2, MD, M2 = dot(D, D), dot(M, D), dot(M, M)
    ratio, _ = _ratio(MD, D2, eps)
    g2 = gamma**2
    res = (D2 - 1)[..., None] * M - D * (g2 * MD + 1j * gamma * (ratio - M2))[..., None]
    # vertex-scale magnitude keeps the normalization alive when M vanishes (q = 2)
    nD = _norm(D)
    nM = _norm(M) + 0.5 * nD
    big_ratio = np.where(np.abs(D2) > eps, (nM * nD) ** 2 / np.maximum(np.abs(D2), eps), 0)
    scale = nM * (nD**2 + 1) + nD * (g2 * nM * nD + abs(gamma) * (big_ratio + nM**2))
    vec = _norm(res) / np.maximum(scale, 1e-300)
    s_res = np.abs(M2 - g2 / 4 - (MD - 0.5j * gamma) ** 2)
    s_scale = nM**2 + g2 / 4 + (nM * nD + abs(gamma) / 2) ** 2
    return ResidualReport(vec, np.abs(D2 - 1), s_res / s_scale)


def explosion_residual(f, gamma: float, eps: float = EPS_DELTA2) -> ResidualReport:
    """Residual of ((Δf)² + 1) f = Δf (γ² f·Δf + iγ((f·Δf)²/Δf² - f²)) per pair.

    f must be real up to a constant imaginary vector; ``extra['a']`` holds
    a = (Δf_R)² + 1 per pair. The ``unit_step`` and ``scalar`` slots are zero.
    """
    v = _vertices(f)
    imag = v.imag
    if np.max(np.abs(imag - imag[0])) > 1e-12 * max(1.0, np.max(np.abs(v))):
        raise ValueError("imaginary part of f must be the same at every vertex")
    D, M = pair_geometry(v)
    D2, MD, M2 = dot(D, D), dot(M, D), dot(M, M)
    ratio, _ = _ratio(MD, D2, eps)
    g2 = gamma**2
    res = (D2 + 1)[..., None] * M - D * (g2 * MD + 1j * gamma * (ratio - M2))[..., None]
    # vertex-scale magnitude keeps the normalization alive when M vanishes (q = 2)
    nD = _norm(D)
    nM = _norm(M) + 0.5 * nD
    big_ratio = np.where(np.abs(D2) > eps, (nM * nD) ** 2 / np.maximum(np.abs(D2), eps), 0)
    scale = nM * (nD**2 + 1) + nD * (g2 * nM * nD + abs(gamma) * (big_ratio + nM**2))
    a = np.sum(D.real**2, axis=-1) + 1.0
    zero = np.zeros(v.shape[0])
    return ResidualReport(_norm(res) / np.maximum(scale, 1e-300), zero, zero, {"a": a})


@dataclass
class ScanReport:
    trials: int
    N: int
    gamma: float
    min_a: float
    min_residual: float
    argmin_trial: int


def no_explosion_scan(
    trials: int = 100_000, N: int = 8, gamma: float = 1.0, seed: int = 0, batch: int = 4096
) -> ScanReport:
    """Random real configurations plus a random constant imaginary shift.

    For each trial the max over pairs of the normalized explosion residual is
    taken (a solution must satisfy every pair); the report gives the minimum of
    that over all trials, and the minimum of a = (Δf)² + 1.
    """
    if trials < 1 or N < 3:
        raise ValueError("need trials >= 1 and N >= 3")
    best, arg, min_a = np.inf, -1, np.inf
    g2 = gamma**2
    for start in range(0, trials, batch):
        stop = min(start + batch, trials)
        g = rng.generator(seed, rng.SCAN, start)
        fr = g.standard_normal((stop - start, N, 3))
        c = g.standard_normal((stop - start, 1, 3))
        v = fr + 1j * c
        D, M = pair_geometry(v)
        D2, MD, M2 = dot(D, D), dot(M, D), dot(M, M)
        ratio, _ = _ratio(MD, D2, EPS_DELTA2)
        res = (D2 + 1)[..., None] * M - D * (g2 * MD + 1j * gamma * (ratio - M2))[..., None]
        nD, nM = _norm(D), _norm(M)
        big = (nM * nD) ** 2 / np.maximum(np.abs(D2), EPS_DELTA2)
        scale = nM * (nD**2 + 1) + nD * (g2 * nM * nD + abs(gamma) * (big + nM**2))
        per_trial = np.max(_norm(res) / scale, axis=-1)
        i = int(np.argmin(per_trial))
        if per_trial[i] < best:
            best, arg = float(per_trial[i]), start + i
        min_a = min(min_a, float(np.min(np.sum(D.real**2, axis=-1) + 1.0)))
    return ScanReport(trials, N, gamma, min_a, best, arg)


def with_assignment(params: SimParams, mode: str) -> SimParams:
    return replace(params, assignment=mode)
