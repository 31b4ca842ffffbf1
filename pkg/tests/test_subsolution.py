"""Bessel implementation, profile matching, and the critical cell size."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from quenchlab import (
    IgnitionReaction,
    build_chord_modification,
    bessel_j0,
    bessel_j1,
    BesselTable,
    critical_radius,
    build_subsolution,
    critical_cell_size,
    verify_subsolution,
    CellularFlow,
    StripDomain,
)
from quenchlab.subsolution import XI1, J1_AT_XI1
from quenchlab.errors import ValidationError


def _oracle_j0(x, terms=60):
    # plain power series sum_k (-1)^k (x/2)^(2k) / (k!)^2, adequate to x ~ 16
    z = -0.25 * x * x
    acc = 0.0
    for k in range(terms, -1, -1):
        acc = acc * z + 1.0 / math.factorial(k) ** 2
    return acc


def _oracle_j1(x, terms=60):
    z = -0.25 * x * x
    acc = 0.0
    for k in range(terms, -1, -1):
        acc = acc * z + 1.0 / (math.factorial(k) * math.factorial(k + 1))
    return 0.5 * x * acc


def test_bessel_against_series_oracle():
    xs = np.linspace(0.0, 15.0, 601)
    j0 = bessel_j0(xs)
    j1 = bessel_j1(xs)
    for x, a, b in zip(xs, j0, j1):
        # beyond x ~ 12 the float64 series oracle itself cancels down to ~3e-11
        tol = 2e-11 if x <= 12.0 else 1e-9
        assert a == pytest.approx(_oracle_j0(x), abs=tol)
        assert b == pytest.approx(_oracle_j1(x), abs=tol)
    assert bessel_j0(0.0) == 1.0
    assert bessel_j1(0.0) == 0.0
    # scalar in, scalar out
    assert np.ndim(bessel_j0(1.0)) == 0


def test_bessel_derivative_identity():
    # J0' = -J1 via central differences across both evaluation branches; eps
    # large enough that the ~1e-13 evaluation noise is not amplified above tol
    xs = np.linspace(0.5, 30.0, 200)
    eps = 3e-5
    d = (bessel_j0(xs + eps) - bessel_j0(xs - eps)) / (2 * eps)
    npt.assert_allclose(d, -bessel_j1(xs), rtol=0, atol=5e-8)


def test_first_zero_constants():
    # frozen from the series-oracle bisection
    assert XI1 == pytest.approx(2.404825557695858, abs=1e-12)
    assert J1_AT_XI1 == pytest.approx(0.5191474972894484, abs=1e-12)
    assert abs(_oracle_j0(XI1)) < 1e-12
    table = BesselTable()
    assert table.xi1 == XI1 and table.j1_at_xi1 == J1_AT_XI1
    assert table.j0(XI1) == pytest.approx(0.0, abs=1e-12)


def test_critical_radius_formula():
    th1, th2 = 0.3, 0.6
    alpha = 0.8296296296296295
    B = (th2 - th1) * XI1 * J1_AT_XI1
    assert B == pytest.approx(0.37453775090865205, rel=1e-15)
    r2 = critical_radius(th1, th2, alpha)
    assert r2 == pytest.approx(XI1 / math.sqrt(alpha) * math.exp(th1 / B), rel=1e-15)
    # shorter log tail (smaller theta1) shrinks R2 at fixed alpha
    assert critical_radius(0.26, th2, alpha) < r2


MANUAL_LMIN = 8.318036755155653    # chord (0.3, 0.6), default f, M=1
AUTO_LMIN = 7.283828385893889      # auto-selected chord, default f, M=1


def test_critical_cell_size_frozen(default_reaction):
    chord = build_chord_modification(default_reaction, 0.3, 0.6)
    assert critical_cell_size(chord, 1.0) == pytest.approx(MANUAL_LMIN, rel=1e-14)
    # l_min scales as M^(-1/2)
    assert critical_cell_size(chord, 4.0) == pytest.approx(MANUAL_LMIN / 2, rel=1e-14)
    with pytest.raises(ValidationError):
        critical_cell_size(chord, 0.0)
    from quenchlab import auto_select_chord
    auto = build_chord_modification(default_reaction, *auto_select_chord(default_reaction))
    assert critical_cell_size(auto, 1.0) == pytest.approx(AUTO_LMIN, rel=1e-14)
    assert critical_cell_size(auto, 1.0) < critical_cell_size(chord, 1.0)


def test_profile_shape_and_matching(default_reaction):
    chord = build_chord_modification(default_reaction, 0.3, 0.6)
    sub = build_subsolution(chord, l=2 * MANUAL_LMIN, M=1.0)
    assert sub.phi_of_R(0.0) == pytest.approx(0.6, rel=1e-14)
    assert sub.phi_of_R(sub.R1) == pytest.approx(0.3, abs=1e-10)
    assert sub.phi_of_R(sub.R2) == pytest.approx(0.0, abs=1e-14)
    # derivative continuity at the matching radius
    assert sub.dphi_dR(sub.R1 * (1 - 1e-12)) == pytest.approx(-sub.B / sub.R1, rel=1e-9)
    # strictly decreasing out to R2
    R = np.linspace(0, sub.R2, 2000)
    phi = sub.phi_of_R(R)
    assert np.all(np.diff(phi) < 0)
    # boundary value negative iff l > l_min
    assert sub.applicable and sub.boundary_value < 0
    sub_small = build_subsolution(chord, l=0.99 * MANUAL_LMIN, M=1.0)
    assert not sub_small.applicable and sub_small.boundary_value > 0
    edge = build_subsolution(chord, l=MANUAL_LMIN * (1 + 1e-9), M=1.0)
    assert edge.applicable


def test_profile_stream_composition(default_reaction):
    chord = build_chord_modification(default_reaction, 0.3, 0.6)
    sub = build_subsolution(chord, l=2 * MANUAL_LMIN, M=1.0)
    assert sub.phi_of_stream(1.0) == pytest.approx(0.6, rel=1e-14)
    assert sub.phi_of_stream(0.0) == pytest.approx(sub.boundary_value, rel=1e-12)
    hu = np.linspace(0, 1, 500)
    assert np.all(np.diff(sub.phi_of_stream(hu)) > 0)


def test_floor_field_geometry(default_reaction):
    chord = build_chord_modification(default_reaction, 0.3, 0.6)
    l = 2 * MANUAL_LMIN
    sub = build_subsolution(chord, l=l, M=1.0)
    flow = CellularFlow(l)
    dom = StripDomain(flow, x_half_cells=2, n_per_cell=32)
    for cell in [(0, 0), (-1, 0), (0, -1)]:
        field = sub.floor_field(dom, cell)
        assert field.shape == dom.shape
        assert np.all(field >= 0)
        sy, sx = dom.cell_slices(*cell)
        inside = np.zeros(dom.shape, bool)
        inside[sy, sx] = True
        assert np.all(field[~inside] == 0)
        # center value is the profile maximum theta2
        cx, cy = flow.cell_center(*cell)
        assert dom.interp(field, cx, cy) == pytest.approx(0.6, rel=1e-3)
        # the barrier vanishes in a collar inside the separatrices
        assert field[sy, sx][0, :].max() == 0
    # cells of both rotation senses carry the same barrier, up to the grid
    # sampling the mirrored geometry at slightly different points
    f00 = sub.floor_field(dom, (0, 0))
    f10 = sub.floor_field(dom, (-1, 0))
    assert f10.max() == pytest.approx(f00.max(), rel=1e-9)
    assert f10.sum() == pytest.approx(f00.sum(), rel=1e-6)


def test_verify_subsolution_report(default_reaction):
    chord = build_chord_modification(default_reaction, 0.3, 0.6)
    l = 2 * MANUAL_LMIN
    sub = build_subsolution(chord, l=l, M=1.0)
    flow = CellularFlow(l)
    report = verify_subsolution(sub, flow, default_reaction, A=100.0, grid_resolution=256)
    assert report["applicable"]
    assert report["n"] == 256
    assert report["max_residual"] <= 1e-3
    # the advection term vanishes on streamlines; what remains is O(dx^4) FD
    # noise, absorbed by the inequality's interior margin
    assert report["max_advection"] <= 1e-2
    assert report["l_min"] == pytest.approx(MANUAL_LMIN, rel=1e-12)
    assert not report["grid_too_coarse"]
    rep0 = verify_subsolution(sub, flow, default_reaction, A=0.0, grid_resolution=64)
    assert rep0["max_advection"] == 0.0


def test_verify_subsolution_guards(default_reaction):
    chord = build_chord_modification(default_reaction, 0.3, 0.6)
    sub = build_subsolution(chord, l=2 * MANUAL_LMIN, M=1.0)
    flow = CellularFlow(sub.l)
    with pytest.raises(ValidationError, match="grid_resolution"):
        verify_subsolution(sub, flow, default_reaction, A=0.0, grid_resolution=16)
