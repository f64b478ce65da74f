from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mloop import loops
from mloop.euler_ensemble import sample_ensemble
from mloop.loops import (
    LoopFormatError,
    MomentumLoop,
    SpatialLoop,
    circulation_scale,
    circulation_sum,
    make_circle_loop,
    make_fourier_loop,
    make_spokes_loop,
    spokes_polygon,
    tensor_area,
)


def test_circle_square_vertices():
    c = make_circle_loop(1.0, 4)
    assert np.allclose(c.vertices, [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], atol=1e-15)


def test_circle_triangle_side():
    c = make_circle_loop(1.0, 3)
    assert np.allclose(np.linalg.norm(c.edges(), axis=1), np.sqrt(3), atol=1e-14)


def test_circle_perimeter_fine():
    # an inscribed N-gon has perimeter 2RN sin(π/N), short of 2πR by about π³R/(3N²)
    N, R = 4096, 2.0
    p = make_circle_loop(R, N).perimeter()
    assert abs(p - 2 * R * N * np.sin(np.pi / N)) < 1e-11
    gap = 4 * np.pi - p
    assert 0 < gap <= np.pi**3 * R / (3 * N**2) * 1.001


@pytest.mark.parametrize("args", [(0.0, 8), (-1.0, 8), (1.0, 2)])
def test_circle_validation(args):
    with pytest.raises(ValueError):
        make_circle_loop(*args)


def test_closure_exact():
    for C in [make_circle_loop(1.3, 17), make_fourier_loop(1, 50), loops.make_square_loop(1, 40)]:
        assert np.max(np.abs(C.edges().sum(axis=0))) < 1e-13


def test_fourier_deterministic():
    a, b = make_fourier_loop(7, 64), make_fourier_loop(7, 64)
    assert a.vertices.tobytes() == b.vertices.tobytes()


def test_fourier_zero_amplitude_rejected():
    with pytest.raises(ValueError):
        make_fourier_loop(7, 64, amplitude=0.0)


def test_fourier_validation():
    with pytest.raises(ValueError):
        make_fourier_loop(7, 64, spectral_decay=1.0)
    with pytest.raises(ValueError):
        make_fourier_loop(7, 64, mode_count=0)


def test_fourier_smoothness_improves_with_refinement():
    def roughness(N):
        d = make_fourier_loop(3, N, 4, 2.0).edges()
        return np.max(np.linalg.norm(np.roll(d, -1, 0) - d, axis=1)) / np.max(np.linalg.norm(d, axis=1))

    assert roughness(128) < roughness(64)


def test_loops_are_immutable():
    c = make_circle_loop(1, 5)
    with pytest.raises(ValueError):
        c.vertices[0, 0] = 3.0


def test_circulation_of_constant_is_zero(rng):
    C = make_fourier_loop(2, 40)
    F = np.tile(rng.standard_normal(3) + 1j * rng.standard_normal(3), (40, 1))
    assert abs(circulation_sum(C, F)) < 1e-13


def test_circulation_length_mismatch():
    with pytest.raises(ValueError):
        circulation_sum(make_circle_loop(1, 5), np.zeros((6, 3)))


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_circulation_shift_invariant_and_bilinear(seed):
    g = np.random.default_rng(seed)
    C = make_fourier_loop(seed, 24)
    F = g.standard_normal((24, 3)) + 1j * g.standard_normal((24, 3))
    G = g.standard_normal((24, 3))
    a = g.standard_normal(3) + 1j * g.standard_normal(3)
    base = circulation_sum(C, F)
    assert abs(circulation_sum(C, F + a) - base) < 1e-11 * (1 + abs(base)) * 24
    assert abs(circulation_sum(C, 2 * F + 3 * G) - (2 * base + 3 * circulation_sum(C, G))) < 1e-10


def test_euler_circulation_is_real():
    for i in range(20):
        s = sample_ensemble(40, 12, 9, i)
        C = make_fourier_loop(i, 40)
        gam = circulation_sum(C, s.F)
        assert abs(gam.imag) <= 1e-12 * circulation_scale(C, s.F)


def _smooth_F(theta):
    return np.stack([np.cos(2 * theta) + 1j * np.sin(theta), np.sin(3 * theta), 1j * np.cos(theta)], axis=-1)


def _continuum_circulation():
    # ∮ C'(θ)·F(θ) dθ on the unit circle, C' = (-sin θ, cos θ, 0)
    def part(f):
        return integrate.quad(f, 0, 2 * np.pi, limit=200, epsabs=1e-13)[0]

    re = part(lambda t: float(np.real(-np.sin(t) * _smooth_F(t)[0] + np.cos(t) * _smooth_F(t)[1])))
    im = part(lambda t: float(np.imag(-np.sin(t) * _smooth_F(t)[0] + np.cos(t) * _smooth_F(t)[1])))
    return re + 1j * im


def test_circulation_matches_richardson_quadrature():
    exact = _continuum_circulation()

    def discrete(N):
        th = 2 * np.pi * np.arange(N) / N
        return circulation_sum(make_circle_loop(1.0, N), _smooth_F(th))

    s1, s2 = discrete(256), discrete(512)
    # the vertex sum is second order on uniform grids, so extrapolate with weights (4, -1)/3
    rich = (4 * s2 - s1) / 3
    assert abs(s2 - exact) < abs(s1 - exact)
    assert abs(rich - exact) < 1e-3 * abs(s2 - exact)
    assert abs(rich - exact) < 1e-8


def test_midpoint_convention_agrees_on_smooth_data():
    th = 2 * np.pi * np.arange(512) / 512
    C = make_circle_loop(1.0, 512)
    a = circulation_sum(C, _smooth_F(th))
    b = circulation_sum(C, _smooth_F(th), convention="midpoint")
    assert abs(a - b) < 10 * 2 * np.pi / 512
    with pytest.raises(ValueError):
        circulation_sum(C, _smooth_F(th), convention="bogus")


def test_tensor_area_circle():
    S = tensor_area(make_circle_loop(1.0, 4096))
    assert abs(S[0, 1] + np.pi) < 1e-5 and abs(S[1, 0] - np.pi) < 1e-5
    assert np.allclose(S, -S.T, atol=0)


def test_tensor_area_square():
    S = tensor_area(make_circle_loop(1.0, 4))
    assert abs(abs(S[0, 1]) - 2.0) < 1e-14


def test_tensor_area_symmetries():
    C = make_fourier_loop(11, 33)
    S = tensor_area(C)
    assert np.allclose(tensor_area(SpatialLoop(-C.vertices)), S, atol=1e-13)
    assert np.allclose(tensor_area(SpatialLoop(np.roll(C.vertices, 5, 0))), S, atol=1e-13)
    assert np.allclose(tensor_area(C.reversed()), -S, atol=1e-13)
    raw = C.edges().T @ (C.vertices + 0.5 * C.edges())
    assert np.max(np.abs(raw + raw.T)) < 1e-12


def test_resample_preserves_closed_shape():
    C = make_circle_loop(1.0, 1000)
    R = loops.resample(C, 500)
    assert R.N == 500
    assert abs(R.perimeter() - C.perimeter()) < 1e-4


def test_spokes_center_and_angles():
    s = make_spokes_loop([[1, 0, 0], [-1, 0, 0]])
    assert np.allclose(s.center, 0)
    assert np.all(np.diff(s.angles) > 0)
    assert np.allclose(s.mid_angles, [0, np.pi])


def test_spokes_duplicate_angles_rejected():
    with pytest.raises(ValueError):
        make_spokes_loop([[1, 0, 0], [0, 1, 0]], [1.0, 1.0])
    with pytest.raises(ValueError):
        make_spokes_loop([[1, 0, 0]], [0.0])


def test_spokes_polygon_has_zero_area():
    pts = np.array([[0.3, 1.2, -0.4], [2.0, -0.5, 0.1], [-1.1, 0.4, 0.9]])
    s = make_spokes_loop(pts, [0.5, 2.5, 4.5])
    C = spokes_polygon(s, 64)
    assert np.max(np.abs(tensor_area(C))) < 1e-13
    # velocity circulation of any linear field v = A r vanishes on a zero-area loop
    A = np.random.default_rng(0).standard_normal((3, 3))
    mid = C.vertices + 0.5 * C.edges()
    assert abs(np.sum(C.edges() * (mid @ A.T))) < 1e-12


def test_spokes_single_zero_lever_arm(rng):
    s = make_spokes_loop([[0.2, 0.3, 0.4]])
    C = spokes_polygon(s, 16)
    P = rng.standard_normal((16, 3)) + 1j * rng.standard_normal((16, 3))
    assert circulation_sum(C, P) == 0


def test_spokes_too_many_rejected():
    s = make_spokes_loop(np.eye(3))
    with pytest.raises(ValueError):
        spokes_polygon(s, 4)


def test_loop_json_round_trip(tmp_path):
    C = make_fourier_loop(1, 12)
    loops.save_loop(C, tmp_path / "c.json")
    assert np.array_equal(loops.load_loop(tmp_path / "c.json").vertices, C.vertices)
    P = MomentumLoop(np.arange(9).reshape(3, 3) * (1 + 2j))
    loops.save_loop(P, tmp_path / "p.json")
    assert np.array_equal(loops.load_loop(tmp_path / "p.json").vertices, P.vertices)


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"format": "x", "N": 3, "vertices": [], "complex": False}, "format"),
        ({"format": "mloop-loop/1", "N": "3", "vertices": [], "complex": False}, "N"),
        ({"format": "mloop-loop/1", "N": 3, "vertices": [[0, 0, 0]], "complex": False}, "vertices"),
        ({"format": "mloop-loop/1", "N": 3, "vertices": [[0, 0, 0]] * 3, "complex": 1}, "complex"),
    ],
)
def test_loop_json_errors_name_field(doc, field, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(LoopFormatError, match=field):
        loops.load_loop(p)
