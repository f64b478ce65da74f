"""Star-polygon random walks solving the discrete loop equation.

A sample is a coprime pair (p, q), a closed ±1 walk σ with Σσ = qr, and a
rotation Ω. With β = 2πp/q and α_k = β Σ_{1≤l≤k} σ_l (α₀ = 0),

    F_k = Ω · (R cos α_k, R sin α_k, iA),   R = 1/(2 sin(β/2)),  A = cos(β/2) R.

Consecutive vertices are unit distance apart and all share the imaginary part
iAΩe_z, which makes both scalar fixed-point relations hold for every γ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from . import rng
from .loops import MomentumLoop
from .number_theory import coprime_pair_arrays, totient_sieve

MEASURES = ("pairs", "tuples")


@dataclass(frozen=True)
class StarPolygon:
    p: int
    q: int

    @property
    def beta(self) -> float:
        return 2 * math.pi * self.p / self.q

    @property
    def R(self) -> float:
        return radius_and_A(self.p, self.q)[0]

    @property
    def A(self) -> float:
        return radius_and_A(self.p, self.q)[1]


@dataclass(frozen=True)
class EulerSample:
    p: int
    q: int
    r: int
    sigma: np.ndarray
    omega: np.ndarray
    F: MomentumLoop
    redraws: int = field(default=0, compare=False)

    @property
    def N(self) -> int:
        return int(self.sigma.size)

    @property
    def beta(self) -> float:
        return 2 * math.pi * self.p / self.q

    @property
    def alpha(self) -> np.ndarray:
        return _angles(self.p, self.q, self.sigma)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "r": self.r,
            "sigma": [int(s) for s in self.sigma],
            "omega": [[float(x) for x in row] for row in self.omega],
            "F": [[[float(z.real), float(z.imag)] for z in row] for row in self.F.vertices],
        }


def _check_pair(p: int, q: int) -> None:
    if not (1 <= p < q):
        raise ValueError(f"need 1 <= p < q, got p={p}, q={q}")
    if math.gcd(p, q) != 1:
        raise ValueError(f"p={p} and q={q} are not coprime")


def radius_and_A(p: int, q: int) -> tuple[float, float]:
    """R = 1/(2 sin(β/2)), A = 1/(2 tan(β/2)) for β = 2πp/q."""
    _check_pair(p, q)
    h = math.pi * p / q
    if 2 * p == q:
        return 0.5, 0.0
    return 1 / (2 * math.sin(h)), math.cos(h) / (2 * math.sin(h))


def feasible_r(N: int, q: int) -> list[int]:
    """All r with |qr| ≤ N and qr ≡ N (mod 2)."""
    if N < 1 or q < 1:
        raise ValueError("N and q must be positive")
    top = N // q
    return [r for r in range(-top, top + 1) if (q * r - N) % 2 == 0]


def _angles(p: int, q: int, sigma: np.ndarray) -> np.ndarray:
    # exact integer phase p·S_k mod q keeps the angles free of accumulated drift
    S = np.concatenate([[0], np.cumsum(sigma[1:], dtype=np.int64)])
    return 2 * np.pi * ((p * S) % q) / q


def _sigma_from(g: np.random.Generator, N: int, q: int, r: int) -> np.ndarray:
    n_plus = (N + q * r) // 2
    sigma = -np.ones(N, dtype=np.int8)
    sigma[g.permutation(N)[:n_plus]] = 1
    return sigma


def _check_r(N: int, q: int, r: int) -> None:
    if abs(q * r) > N or (q * r - N) % 2:
        raise ValueError(f"r={r} infeasible for N={N}, q={q}: need |qr| <= N and qr = N mod 2")


def sample_sigma(N: int, q: int, r: int, seed: int, index: int = 0) -> np.ndarray:
    """Uniform ±1 string of length N with sum qr."""
    _check_r(N, q, r)
    return _sigma_from(rng.generator(seed, rng.ENSEMBLE, index), N, q, r)


def _rotation_from(g: np.random.Generator) -> np.ndarray:
    w, x, y, z = g.standard_normal(4)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def sample_rotation(seed: int, index: int = 0) -> np.ndarray:
    """Haar-random rotation from a normalized Gaussian quaternion."""
    return _rotation_from(rng.generator(seed, rng.ENSEMBLE, index))


def build_sample(p: int, q: int, r: int, sigma, omega, redraws: int = 0) -> EulerSample:
    """Validate the inputs and build the F-polygon."""
    _check_pair(p, q)
    sigma = np.asarray(sigma)
    if sigma.ndim != 1 or sigma.size < 1:
        raise ValueError("sigma must be a non-empty 1-D sequence")
    if not np.all(np.abs(sigma) == 1):
        raise ValueError("sigma entries must be +1 or -1")
    sigma = sigma.astype(np.int8)
    N = sigma.size
    _check_r(N, q, r)
    if int(sigma.sum(dtype=np.int64)) != q * r:
        raise ValueError(f"sigma sums to {int(sigma.sum())}, constraint requires qr = {q * r}")
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (3, 3):
        raise ValueError("omega must be 3x3")
    if np.max(np.abs(omega.T @ omega - np.eye(3))) > 1e-12 or abs(np.linalg.det(omega) - 1) > 1e-12:
        raise ValueError("omega must be special orthogonal")
    R, A = radius_and_A(p, q)
    a = _angles(p, q, sigma)
    local = np.stack([R * np.cos(a), R * np.sin(a), np.full(N, 1j * A)], axis=1)
    F = MomentumLoop(local @ omega.T, dimensionless=True)
    sigma.setflags(write=False)
    omega = omega.copy()
    omega.setflags(write=False)
    return EulerSample(int(p), int(q), int(r), sigma, omega, F, redraws)


def sample_from_dict(d: dict) -> EulerSample:
    """Rebuild a sample from its JSON form; F is recomputed and cross-checked."""
    for key in ("p", "q", "r", "sigma", "omega"):
        if key not in d:
            raise ValueError(f"sample file: missing field {key!r}")
    s = build_sample(int(d["p"]), int(d["q"]), int(d["r"]), d["sigma"], d["omega"])
    if "F" in d:
        F = np.asarray(d["F"], dtype=float)
        if F.shape != (s.N, 3, 2):
            raise ValueError("sample file: field 'F' has the wrong shape")
        if np.max(np.abs(F[..., 0] + 1j * F[..., 1] - s.F.vertices)) > 1e-9:
            raise ValueError("sample file: field 'F' disagrees with (p, q, sigma, omega)")
    return s


# ensemble sampling ------------------------------------------------------------------


@lru_cache(maxsize=32)
def _pairs(q_max: int):
    return coprime_pair_arrays(q_max)


def _log_binom(N: int, k: np.ndarray) -> np.ndarray:
    return gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1)


@lru_cache(maxsize=64)
def _q_weights(N: int, q_max: int) -> np.ndarray:
    """Log of φ(q)·Σ_r C(N, (N+qr)/2) for q = 2..q_max (-inf where infeasible)."""
    phi = totient_sieve(q_max).phi
    out = np.full(q_max + 1, -np.inf)
    for q in range(2, q_max + 1):
        rs = np.array(feasible_r(N, q))
        if rs.size:
            lw = _log_binom(N, (N + q * rs) // 2)
            out[q] = math.log(phi[q]) + np.logaddexp.reduce(lw)
    return out


@lru_cache(maxsize=4096)
def _r_table(N: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Feasible r values and their cumulative binomial weights."""
    rs = np.array(feasible_r(N, q), dtype=np.int64)
    if rs.size == 0:
        return rs, np.zeros(0)
    lw = _log_binom(N, (N + q * rs) // 2)
    w = np.exp(lw - lw.max())
    return rs, np.cumsum(w) / w.sum()


def _draw_r(g: np.random.Generator, N: int, q: int) -> int | None:
    rs, cdf = _r_table(N, q)
    if rs.size == 0:
        return None
    return int(rs[min(int(np.searchsorted(cdf, g.random(), side="right")), rs.size - 1)])


def sample_ensemble(
    N: int, q_max: int, seed: int, index: int = 0, measure: str = "pairs", max_redraws: int = 10_000
) -> EulerSample:
    """Sample ``index`` of the deterministic stream keyed by ``seed``.

    ``measure='pairs'`` draws (p, q) uniformly over coprime pairs with
    q ≤ q_max, then r with weight C(N, (N+qr)/2), redrawing the pair when no r
    is feasible. ``measure='tuples'`` is uniform over all valid (p, q, r, σ).
    """
    if not (2 <= q_max < N):
        raise ValueError("need 2 <= q_max < N")
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    g = rng.generator(seed, rng.ENSEMBLE, index)
    ps, qs = _pairs(q_max)
    redraws = 0
    if measure == "pairs":
        while True:
            i = int(g.integers(ps.size))
            p, q = int(ps[i]), int(qs[i])
            r = _draw_r(g, N, q)
            if r is not None:
                break
            redraws += 1
            if redraws > max_redraws:
                raise RuntimeError(f"no feasible walk found for N={N}, q_max={q_max}")
    else:
        lw = _q_weights(N, q_max)
        if not np.any(np.isfinite(lw)):
            raise RuntimeError(f"no feasible walk for N={N}, q_max={q_max}")
        w = np.exp(lw - lw[np.isfinite(lw)].max())
        q = int(g.choice(w.size, p=w / w.sum()))
        cand = ps[qs == q]
        p = int(cand[g.integers(cand.size)])
        r = _draw_r(g, N, q)
    sigma = _sigma_from(g, N, q, r)
    omega = _rotation_from(g)
    return build_sample(p, q, r, sigma, omega, redraws)


def sample_batch(N: int, q_max: int, seed: int, start: int, stop: int, measure: str = "pairs") -> list[EulerSample]:
    return [sample_ensemble(N, q_max, seed, i, measure) for i in range(start, stop)]


def mirror(sample: EulerSample) -> EulerSample:
    """The conjugate sample: σ → -σ and Ω → Ω·diag(1, -1, -1) give F → F̄."""
    omega = sample.omega @ np.diag([1.0, -1.0, -1.0])
    return build_sample(sample.p, sample.q, -sample.r, -sample.sigma.astype(np.int8), omega)
