"""Spatial and momentum polygons, circulation sums, tensor areas and spokes loops."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng

LOOP_FORMAT = "mloop-loop/1"


class LoopFormatError(ValueError):
    """Malformed loop input; the message names the offending field."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpatialLoop:
    """Closed polygon of N real 3-vectors; vertex N is vertex 0."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (N, 3), got {v.shape}")
        if v.shape[0] < 3:
            raise ValueError("a loop needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        object.__setattr__(self, "vertices", _frozen(v))

    @property
    def N(self) -> int:
        return self.vertices.shape[0]

    def edges(self) -> np.ndarray:
        """ΔC_k = C_{k+1} - C_k, cyclic; sums to zero exactly in exact arithmetic."""
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    def perimeter(self) -> float:
        return float(np.linalg.norm(self.edges(), axis=1).sum())

    def translated(self, shift) -> "SpatialLoop":
        return SpatialLoop(self.vertices + np.asarray(shift, dtype=float))

    def reversed(self) -> "SpatialLoop":
        return SpatialLoop(self.vertices[::-1])


@dataclass(frozen=True)
class MomentumLoop:
    """Polygon of N complex 3-vectors.

    ``dimensionless`` distinguishes the scaled loop F from the physical P.
    """

    vertices: np.ndarray
    dimensionless: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (N, 3), got {v.shape}")
        if v.shape[0] < 1:
            raise ValueError("empty momentum loop")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        object.__setattr__(self, "vertices", _frozen(v))

    @property
    def N(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class SpokesLoop:
    """Zero-area contour from the centroid out to each point and back.

    ``angles`` are the parameter values at which the loop touches the points;
    ``mid_angles[k]`` is where it passes through the centre before spoke k.
    """

    points: np.ndarray
    center: np.ndarray
    angles: np.ndarray
    mid_angles: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]


# constructors ---------------------------------------------------------------


def make_circle_loop(radius: float, N: int, orientation=None) -> SpatialLoop:
    """Regular N-gon inscribed in a circle in the xy-plane, optionally rotated."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    if N < 3:
        raise ValueError("N must be >= 3")
    th = 2 * np.pi * np.arange(N) / N
    v = radius * np.stack([np.cos(th), np.sin(th), np.zeros(N)], axis=1)
    if orientation is not None:
        v = v @ np.asarray(orientation, dtype=float).T
    return SpatialLoop(v)


def make_polygon_loop(corners, N: int) -> SpatialLoop:
    """Closed polygon through ``corners`` resampled to N points by arc length."""
    return resample(SpatialLoop(np.asarray(corners, dtype=float)), N)


def make_square_loop(circumradius: float, N: int) -> SpatialLoop:
    """Axis-diagonal square in the xy-plane with the given circumradius."""
    c = make_circle_loop(circumradius, 4).vertices
    return make_polygon_loop(c, N)


def make_fourier_loop(
    seed: int,
    N: int,
    mode_count: int = 4,
    spectral_decay: float = 2.0,
    amplitude: float = 1.0,
) -> SpatialLoop:
    """Smooth random loop C(θ) = Σ_m (a_m cos mθ + b_m sin mθ)/m^decay.

    The coefficient vectors are Gaussian; the mode-1 term is kept at full
    weight so the loop is never degenerate for a nonzero amplitude.
    """
    if mode_count < 1:
        raise ValueError("mode_count must be >= 1")
    if not spectral_decay > 1:
        raise ValueError("spectral_decay must exceed 1")
    if N < 3:
        raise ValueError("N must be >= 3")
    if amplitude == 0:
        raise ValueError("zero amplitude gives a degenerate point loop")
    g = rng.generator(seed, rng.LOOP_SHAPE)
    a = g.standard_normal((mode_count, 3))
    b = g.standard_normal((mode_count, 3))
    m = np.arange(1, mode_count + 1)
    th = 2 * np.pi * np.arange(N) / N
    w = amplitude / m**spectral_decay
    cos = np.cos(np.outer(th, m)) * w
    sin = np.sin(np.outer(th, m)) * w
    v = cos @ a + sin @ b
    loop = SpatialLoop(v)
    if loop.perimeter() <= 1e-12 * abs(amplitude):
        raise ValueError("degenerate loop")
    return loop


def resample(C: SpatialLoop, N: int) -> SpatialLoop:
    """Arc-length resampling to N vertices, starting at vertex 0."""
    if N < 3:
        raise ValueError("N must be >= 3")
    if N == C.N:
        return C
    seg = np.linalg.norm(C.edges(), axis=1)
    total = seg.sum()
    if total == 0:
        return SpatialLoop(np.repeat(C.vertices[:1], N, axis=0))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    closed = np.vstack([C.vertices, C.vertices[:1]])
    target = total * np.arange(N) / N
    v = np.stack([np.interp(target, s, closed[:, a]) for a in range(3)], axis=1)
    return SpatialLoop(v)


# sums -------------------------------------------------------------------------


def _check_pair(C: SpatialLoop, F) -> np.ndarray:
    f = F.vertices if isinstance(F, MomentumLoop) else np.asarray(F)
    if f.shape[0] != C.N:
        raise ValueError(f"length mismatch: loop has {C.N} vertices, momentum {f.shape[0]}")
    return f


def circulation_sum(C: SpatialLoop, F, convention: str = "vertex") -> complex:
    """Σ_k ΔC_k·F_k (``vertex``) or Σ_k ΔC_k·(F_k + F_{k-1})/2 (``midpoint``)."""
    f = _check_pair(C, F)
    if convention == "midpoint":
        f = 0.5 * (f + np.roll(f, 1, axis=0))
    elif convention != "vertex":
        raise ValueError(f"unknown convention {convention!r}")
    return complex(np.sum(C.edges() * f))


def circulation_scale(C: SpatialLoop, F) -> float:
    """Σ_k |ΔC_k||F_k|, the natural magnitude of the circulation sum."""
    f = _check_pair(C, F)
    return float(np.sum(np.linalg.norm(C.edges(), axis=1) * np.linalg.norm(f, axis=1)))


def tensor_area(C: SpatialLoop) -> np.ndarray:
    """Σ_k ΔC_{k,α} C̄_{k,β} with edge midpoints C̄; antisymmetric.

    The symmetric part telescopes to zero, so the raw sum is antisymmetric up
    to rounding; the returned matrix is its exact antisymmetric part.
    """
    d = C.edges()
    mid = C.vertices + 0.5 * d
    s = d.T @ mid
    return 0.5 * (s - s.T)


# spokes -----------------------------------------------------------------------


def make_spokes_loop(points, angles=None) -> SpokesLoop:
    """Spokes loop through ``points`` at parameter ``angles`` in (0, 2π).

    Without explicit angles the points sit at 2π(k + 1/2)/n.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError("points must be a non-empty (n, 3) array")
    n = pts.shape[0]
    if angles is None:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
    else:
        th = np.asarray(angles, dtype=float).reshape(-1)
        if th.shape[0] != n:
            raise ValueError("one angle per point required")
        if np.any(th <= 0) or np.any(th >= 2 * np.pi):
            raise ValueError("angles must lie in (0, 2π)")
        if np.any(np.diff(th) <= 0):
            raise ValueError("angles must be strictly increasing (duplicates rejected)")
    prev = np.concatenate([[th[-1] - 2 * np.pi], th[:-1]])
    mid = np.mod(0.5 * (prev + th), 2 * np.pi)
    return SpokesLoop(_frozen(pts), _frozen(pts.mean(axis=0)), _frozen(th), _frozen(mid))


def spokes_polygon(spokes: SpokesLoop, N: int) -> SpatialLoop:
    """Discretise the spokes loop on the N-vertex parameter grid θ_j = 2πj/N.

    Spoke angles snap to the nearest grid index; between the centre knot at
    θ̃_k and the tip knot at θ_k the contour is linear in the index, so
    Σ_j ΔC̃_j·P_j is the exact Lebesgue sum of the defining arc integrals for
    piecewise-constant P.
    """
    n = spokes.n
    if 2 * n > N:
        raise ValueError(f"{n} spokes on an {N}-gon leave empty arcs (need n <= N/2)")
    snap = lambda a: np.rint(np.asarray(a) * N / (2 * np.pi)).astype(np.int64) % N
    jt, jm = snap(spokes.angles), snap(spokes.mid_angles)
    start = jm[0]
    knots = np.empty(2 * n + 1, dtype=np.int64)
    knots[0:-1:2] = (jm - start) % N
    knots[1::2] = (jt - start) % N
    knots[-1] = N
    if np.any(np.diff(knots) <= 0):
        raise ValueError("spoke angles collide on this grid (empty arc)")
    vals = np.empty((2 * n + 1, 3))
    vals[0:-1:2] = spokes.center
    vals[1::2] = spokes.points
    vals[-1] = spokes.center
    j = np.arange(N)
    v = np.stack([np.interp(j, knots, vals[:, a]) for a in range(3)], axis=1)
    return SpatialLoop(np.roll(v, start, axis=0))


# serialization ------------------------------------------------------------------


def loop_to_dict(loop) -> dict:
    if isinstance(loop, MomentumLoop):
        v = [[[float(z.real), float(z.imag)] for z in row] for row in loop.vertices]
        return {"format": LOOP_FORMAT, "N": loop.N, "vertices": v, "complex": True}
    return {
        "format": LOOP_FORMAT,
        "N": loop.N,
        "vertices": [[float(x) for x in row] for row in loop.vertices],
        "complex": False,
    }


def loop_from_dict(d) -> SpatialLoop | MomentumLoop:
    if not isinstance(d, dict):
        raise LoopFormatError("loop file: top level must be a JSON object")
    if d.get("format") != LOOP_FORMAT:
        raise LoopFormatError(f"loop file: field 'format' must be {LOOP_FORMAT!r}")
    N = d.get("N")
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        raise LoopFormatError("loop file: field 'N' must be a positive integer")
    cplx = d.get("complex")
    if not isinstance(cplx, bool):
        raise LoopFormatError("loop file: field 'complex' must be a boolean")
    try:
        v = np.asarray(d["vertices"], dtype=float)
    except (KeyError, TypeError, ValueError):
        raise LoopFormatError("loop file: field 'vertices' missing or not numeric") from None
    want = (N, 3, 2) if cplx else (N, 3)
    if v.shape != want:
        raise LoopFormatError(f"loop file: field 'vertices' has shape {v.shape}, expected {want}")
    try:
        if cplx:
            return MomentumLoop(v[..., 0] + 1j * v[..., 1])
        return SpatialLoop(v)
    except ValueError as exc:
        raise LoopFormatError(f"loop file: field 'vertices': {exc}") from None


def save_loop(loop, path) -> None:
    Path(path).write_text(json.dumps(loop_to_dict(loop), indent=1) + "\n")


def load_loop(path):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LoopFormatError(f"loop file: invalid JSON ({exc.msg})") from None
    return loop_from_dict(d)
