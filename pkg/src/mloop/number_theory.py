"""Totients, coprime pairs and the cot² distribution law.

The law concerns X(p, q) = cot²(πp/q)/N² over coprime pairs. It has an atom
of weight w₀ = 1 - π²/(675 ζ(5)) at X = 0 and, for X > 0, the density

    f_X(X) = (π³/3) X^{3/2} Φ(⌊1/(π√X)⌋),

where Φ is the totient summatory function. The density jumps at every
X = 1/(πm)².
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy import integrate

Q_MAX_CAP = 10**8
ZETA4 = math.pi**4 / 90


@dataclass(frozen=True)
class TotientTable:
    """φ(n) and Φ(n) = Σ_{m≤n} φ(m) for 0 ≤ n ≤ q_max (φ(0) = Φ(0) = 0)."""

    q_max: int
    phi: np.ndarray
    Phi: np.ndarray


def totient_sieve(q_max: int) -> TotientTable:
    """Exact totients by an Eratosthenes-style sieve over primes, vectorized."""
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    if q_max > Q_MAX_CAP:
        raise ValueError(f"q_max capped at {Q_MAX_CAP} to keep Φ well inside int64")
    phi = np.arange(q_max + 1, dtype=np.int64)
    for p in range(2, q_max + 1):
        if phi[p] == p:  # untouched so far, hence prime
            phi[p::p] -= phi[p::p] // p
    Phi = np.cumsum(phi)
    phi.setflags(write=False)
    Phi.setflags(write=False)
    return TotientTable(q_max, phi, Phi)


@lru_cache(maxsize=8)
def _table(q_max: int) -> TotientTable:
    return totient_sieve(q_max)


def totient_bruteforce(n: int) -> int:
    """gcd-count oracle."""
    return sum(1 for k in range(1, n + 1) if math.gcd(k, n) == 1)


def coprime_pair_arrays(q_max: int) -> tuple[np.ndarray, np.ndarray]:
    """All 1 ≤ p < q ≤ q_max with gcd(p, q) = 1, ordered by q then p."""
    if q_max < 2:
        raise ValueError("q_max must be >= 2")
    ps, qs = [], []
    for q in range(2, q_max + 1):
        p = np.arange(1, q, dtype=np.int64)
        p = p[np.gcd(p, q) == 1]
        ps.append(p)
        qs.append(np.full(p.size, q, dtype=np.int64))
    return np.concatenate(ps), np.concatenate(qs)


def coprime_pairs(q_max: int) -> Iterator[tuple[int, int]]:
    """Iterate over coprime pairs (p, q), 1 ≤ p < q ≤ q_max."""
    if q_max < 2:
        raise ValueError("q_max must be >= 2")
    for q in range(2, q_max + 1):
        for p in range(1, q):
            if math.gcd(p, q) == 1:
                yield p, q


# ζ(5) and the law ---------------------------------------------------------------


def zeta5(terms: int = 200) -> float:
    """ζ(5) by direct summation plus an Euler-Maclaurin tail.

    With M terms the first omitted correction is about M⁻¹⁰/2, far below
    double precision for the default M.
    """
    M = int(terms)
    if M < 10:
        raise ValueError("use at least 10 terms")
    head = math.fsum(1.0 / n**5 for n in range(1, M))
    tail = [M**-4 / 4, M**-5 / 2, 5 / (12 * M**6), -7 / (24 * M**8)]
    return math.fsum([head, *tail])


def cot_dist_atom() -> float:
    """Weight of the atom at X = 0."""
    return 1.0 - math.pi**2 / (675.0 * zeta5())


def continuous_mass() -> float:
    return math.pi**2 / (675.0 * zeta5())


_TABLE_LIMIT = 10**6


@lru_cache(maxsize=1)
def _phi_float() -> np.ndarray:
    return _table(_TABLE_LIMIT).Phi.astype(float)


def _Phi(m: np.ndarray) -> np.ndarray:
    """Φ(m) from the sieve, with the 3m²/π² asymptote beyond the table."""
    m = np.asarray(m, dtype=np.int64)
    tab = _phi_float()
    inside = m <= tab.size - 1
    out = np.where(inside, tab[np.clip(m, 0, tab.size - 1)], 3.0 * m.astype(float) ** 2 / math.pi**2)
    return out


def _floor_index(X: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        m = np.floor(1.0 / (math.pi * np.sqrt(X)))
    return np.where(np.isfinite(m), np.minimum(m, 2**62), 2**62).astype(np.int64)


def cot_dist_pdf(X):
    """Density of the continuous part; zero for X ≥ 1/π² and at X = 0."""
    X = np.asarray(X, dtype=float)
    if np.any(X < 0):
        raise ValueError("X must be non-negative")
    pos = X > 0
    Xs = np.where(pos, X, 1.0)
    val = (math.pi**3 / 3) * Xs**1.5 * _Phi(_floor_index(Xs))
    out = np.where(pos, val, 0.0)
    return out if out.ndim else float(out)


def _tail_beyond(m: np.ndarray) -> np.ndarray:
    # Σ_{n>m} φ(n)/n⁵ ≈ ∫ (6n/π²) n⁻⁵ dn
    return 2.0 / (math.pi**2 * np.maximum(m, 1).astype(float) ** 3)


@lru_cache(maxsize=1)
def _moment_suffix() -> np.ndarray:
    """S[m] = Σ_{n>m} φ(n)/n⁵, summed from the top so small tails keep full precision."""
    t = _table(_TABLE_LIMIT)
    m = np.arange(t.phi.size, dtype=float)
    w = np.zeros_like(m)
    w[1:] = t.phi[1:] / m[1:] ** 5
    top = float(_tail_beyond(np.array([m.size - 1]))[0])
    # S[m] excludes term m itself
    return np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]]) + top


def cot_dist_cdf(X, continuous_only: bool = False):
    """CDF of the law. ``continuous_only`` gives the CDF conditional on X > 0.

    Uses ∫₀^X f = (2π³/15)[X^{5/2} Φ(m_X) + π⁻⁵ Σ_{m>m_X} φ(m)/m⁵] with
    m_X = ⌊1/(π√X)⌋. At X ≥ 1/π² the sum is Σ_m φ(m)/m⁵ = ζ(4)/ζ(5).
    """
    X = np.asarray(X, dtype=float)
    suffix = _moment_suffix()
    pos = X > 0
    Xs = np.where(pos, X, 1.0)
    m = _floor_index(Xs)
    inside = m < suffix.size
    tail = np.where(inside, suffix[np.clip(m, 0, suffix.size - 1)], _tail_beyond(m))
    tail = np.where(m == 0, ZETA4 / zeta5(), tail)
    c = (2 * math.pi**3 / 15) * (Xs**2.5 * _Phi(m) + tail / math.pi**5)
    c = np.where(pos, c, 0.0)
    if continuous_only:
        out = c / continuous_mass()
    else:
        out = cot_dist_atom() + c
    return out if out.ndim else float(out)


def cot_dist_normalization(tail_mass: float = 1e-9) -> tuple[float, int]:
    """w₀ + ∫ f_X by quadrature split at every jump 1/(πm)².

    Intervals are added until the analytic mass left below the last split
    point drops under ``tail_mass``. Returns (total, number of intervals).
    """
    parts = [cot_dist_atom()]
    m = 1
    while True:
        lo, hi = 1.0 / (math.pi * (m + 1)) ** 2, 1.0 / (math.pi * m) ** 2
        mid = 0.5 * (lo + hi)
        val, _ = integrate.quad(lambda x: float(cot_dist_pdf(x)), lo, hi, points=[mid], epsabs=0, epsrel=1e-12)
        parts.append(val)
        left = cot_dist_cdf(lo) - cot_dist_atom()  # analytic mass of (0, lo]
        if left < tail_mass:
            parts.append(left)
            break
        m += 1
    return math.fsum(parts), m


# empirical distribution ---------------------------------------------------------


@dataclass
class EmpiricalCotDist:
    """X(p, q) over coprime pairs with q < N, sorted, with per-pair weights.

    ``weighting='uniform'`` counts each pair once. ``weighting='nx2'`` gives
    pair weight N·X²/n_pairs and puts the remaining mass on the atom.
    """

    N: int
    X: np.ndarray
    weights: np.ndarray
    atom: float
    edges: np.ndarray
    hist: np.ndarray
    weighting: str

    @property
    def n_pairs(self) -> int:
        return int(self.X.size)

    def cdf(self, x) -> np.ndarray:
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        i = np.searchsorted(self.X, np.asarray(x, dtype=float), side="right")
        return self.atom + cw[i]


def x_values(N: int) -> np.ndarray:
    p, q = coprime_pair_arrays(N - 1)
    return (1.0 / np.tan(np.pi * p / q)) ** 2 / N**2


def empirical_cot_dist(N: int, bins: int = 50, weighting: str = "uniform") -> EmpiricalCotDist:
    """Exact enumeration of X over all coprime pairs with q < N."""
    if N < 3:
        raise ValueError("N must be >= 3")
    X = np.sort(x_values(N))
    # cot(π/2) is zero only up to rounding; snap the q = 2 value to the atom
    X[X < 1e-28] = 0.0
    n = X.size
    if weighting == "uniform":
        w = np.full(n, 1.0 / n)
        atom = 0.0
    elif weighting == "nx2":
        w = N * X**2 / n
        atom = 1.0 - float(w.sum())
    else:
        raise ValueError("weighting must be 'uniform' or 'nx2'")
    edges = np.linspace(0.0, 1.0 / math.pi**2, bins + 1)
    hist, _ = np.histogram(X, bins=edges, weights=w)
    return EmpiricalCotDist(N, X, w, atom, edges, hist, weighting)


def ks_distance(emp: EmpiricalCotDist, continuous_only: bool = True) -> float:
    """Kolmogorov-Smirnov distance to the law.

    With ``continuous_only`` both sides are conditioned on X > 0.
    """
    pos = emp.X > 0
    x, w = emp.X[pos], emp.weights[pos]
    if continuous_only:
        w = w / w.sum()
        base = 0.0
        law = cot_dist_cdf(x, continuous_only=True)
    else:
        base = emp.atom + emp.weights[~pos].sum()
        law = cot_dist_cdf(x)
    upper = base + np.cumsum(w)
    lower = upper - w
    return float(max(np.max(np.abs(upper - law)), np.max(np.abs(lower - law))))


def band_masses(emp: EmpiricalCotDist, m_max: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Empirical and law mass of X in (1/(π(m+1))², 1/(πm)²) for m = 1..m_max."""
    m = np.arange(1, m_max + 1)
    lo, hi = 1 / (np.pi * (m + 1)) ** 2, 1 / (np.pi * m) ** 2
    e = emp.cdf(hi) - emp.cdf(lo)
    law = cot_dist_cdf(hi) - cot_dist_cdf(lo)
    return e, law
