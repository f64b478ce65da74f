"""Dormand-Prince 5(4) with PI step control for complex state arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_BHAT = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _BHAT

_SAFETY = 0.9
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class StepUnderflow(RuntimeError):
    """Step size fell below the floor; stiffness or blow-up suspected."""

    def __init__(self, t: float, y: np.ndarray, h: float, reason: str | None = None):
        reason = reason or f"step {h:.3e} underflowed"
        super().__init__(f"stiffness/blow-up suspected: {reason} at t = {t:.6g}")
        self.t = t
        self.y = y
        self.h = h


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    accepted: int
    rejected: int


def _error_norm(err, y0, y1, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol) -> float:
    # standard two-evaluation heuristic (Hairer, Norsett & Wanner)
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    d2 = np.sqrt(np.mean(np.abs((f(t0 + h0, y1) - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def solve(
    f: Callable[[float, np.ndarray], np.ndarray],
    t_span: tuple[float, float],
    y0: np.ndarray,
    t_eval=None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    h0: float | None = None,
    h_min: float = 1e-14,
    max_steps: int = 200_000,
) -> Solution:
    """Integrate y' = f(t, y) over ``t_span``, landing exactly on ``t_eval``.

    Raises :class:`StepUnderflow` carrying the last accepted state when the
    controller drives the step below ``h_min`` times the interval length.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    y = np.array(y0, dtype=complex)
    shape = y.shape
    y = y.reshape(-1)
    fun = lambda t, z: np.asarray(f(t, z.reshape(shape)), dtype=complex).reshape(-1)
    outs = np.array([t1] if t_eval is None else sorted(set(map(float, t_eval))))
    if outs[0] < t0 or outs[-1] > t1:
        raise ValueError("t_eval outside t_span")

    ts, ys = [], []
    t = t0
    if outs[0] == t0:
        ts.append(t0)
        ys.append(y.copy())
    k_first = fun(t, y)
    h = h0 if h0 is not None else _initial_step(fun, t, y, k_first, rtol, atol)
    floor = h_min * max(1.0, abs(t1 - t0))
    err_prev = 1.0
    accepted = rejected = 0
    idx = int(np.searchsorted(outs, t0, side="right"))
    k = np.empty((7, y.size), dtype=complex)

    while idx < outs.size:
        target = outs[idx]
        if accepted + rejected >= max_steps:
            raise StepUnderflow(t, y.reshape(shape), h, f"step budget of {max_steps} exhausted")
        h_free = h
        h = min(h, target - t)
        if h < floor and target - t > floor:
            raise StepUnderflow(t, y.reshape(shape), h)
        k[0] = k_first
        for s in range(1, 7):
            k[s] = fun(t + _C[s] * h, y + h * (np.asarray(_A[s]) @ k[:s]))
        y_new = y + h * (_B @ k)
        err = _error_norm(h * (_E @ k), y, y_new, rtol, atol)
        if err <= 1.0:
            t_new = t + h
            landed = t_new >= target - 1e-15 * max(1.0, abs(target))
            if landed:
                t_new = target
            err = max(err, 1e-10)
            factor = _SAFETY * err ** (-_ALPHA) * err_prev**_BETA
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = err
            t, y = t_new, y_new
            k_first = k[6].copy()  # first-same-as-last
            accepted += 1
            if landed:
                ts.append(t)
                ys.append(y.copy())
                idx += 1
            h = h * factor
            if landed and factor >= 1 and h_free > h / factor:
                # the step was clipped to hit an output time; resume from the free step
                h = max(h, h_free)
        else:
            rejected += 1
            h = h * max(_MIN_FACTOR, _SAFETY * err ** (-1 / 5))

    return Solution(np.array(ts), np.array(ys).reshape((len(ts),) + shape), accepted, rejected)
