"""Stream function geometry, strip grid indexing, and streamline extraction."""

import numpy as np
import numpy.testing as npt
import pytest

from quenchlab import CellularFlow, StripDomain, trace_streamline, polyline_arc_length
from quenchlab.errors import ValidationError


def test_velocity_is_curl_of_stream():
    # u = (h_y, -h_x) checked against central differences of h
    flow = CellularFlow(0.7)
    rng = np.random.default_rng(3)
    x = rng.uniform(-5, 5, 200)
    y = rng.uniform(-5, 5, 200)
    eps = 1e-6
    hy = (flow.stream(x, y + eps) - flow.stream(x, y - eps)) / (2 * eps)
    hx = (flow.stream(x + eps, y) - flow.stream(x - eps, y)) / (2 * eps)
    u1, u2 = flow.velocity(x, y)
    npt.assert_allclose(u1, hy, atol=1e-9)
    npt.assert_allclose(u2, -hx, atol=1e-9)


def test_velocity_bounds_and_divergence():
    flow = CellularFlow(2.3)
    rng = np.random.default_rng(4)
    x = rng.uniform(-20, 20, 500)
    y = rng.uniform(-20, 20, 500)
    u1, u2 = flow.velocity(x, y)
    assert np.max(np.hypot(u1, u2)) <= 1.0 + 1e-12
    # the advective CFL constant: max(|u1| + |u2|) = 1, attained
    s = np.abs(u1) + np.abs(u2)
    assert np.max(s) <= 1.0 + 1e-12
    l = flow.l
    u1_max, _ = flow.velocity(np.pi * l / 2, 0.0)
    assert u1_max == pytest.approx(1.0, abs=1e-15)
    # discrete divergence of the analytic field vanishes to O(eps^2)
    eps = 1e-5
    div = ((flow.velocity(x + eps, y)[0] - flow.velocity(x - eps, y)[0])
           + (flow.velocity(x, y + eps)[1] - flow.velocity(x, y - eps)[1])) / (2 * eps)
    npt.assert_allclose(div, 0.0, atol=1e-9)


def test_separatrices_and_cell_signs():
    flow = CellularFlow(1.5)
    pl = np.pi * flow.l
    t = np.linspace(-4, 4, 50)
    npt.assert_allclose(flow.stream(pl * np.arange(-3, 4)[:, None], t[None, :]), 0.0, atol=1e-12)
    npt.assert_allclose(flow.stream(t[None, :], pl * np.arange(-3, 4)[:, None]), 0.0, atol=1e-12)
    for i in range(-2, 3):
        for j in range(-2, 3):
            cx, cy = flow.cell_center(i, j)
            assert np.sign(flow.stream(cx, cy)) == flow.cell_sign(i, j)
            x0, x1, y0, y1 = flow.cell_bounds(i, j)
            assert x1 - x0 == pytest.approx(pl)
            assert (cx, cy) == (pytest.approx(0.5 * (x0 + x1)), pytest.approx(0.5 * (y0 + y1)))


def test_stream_gradient_identity():
    # 2 hu (1 - hu) <= |grad h|^2 <= 2 (1 - hu^2) on the positive cell
    flow = CellularFlow(1.0)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, np.pi, 300)
    y = rng.uniform(0, np.pi, 300)
    hu = flow.stream_unit(x, y)
    g2 = flow.grad_stream_sq(x, y)
    assert np.all(g2 >= 2 * hu * (1 - hu) - 1e-12)
    assert np.all(g2 <= 2 * (1 - hu * hu) + 1e-12)


def test_invalid_flow_and_grid_args():
    with pytest.raises(ValidationError):
        CellularFlow(0.0)
    with pytest.raises(ValidationError):
        CellularFlow(-1.0)
    flow = CellularFlow(1.0)
    with pytest.raises(ValidationError):
        StripDomain(flow, 0, 32)
    with pytest.raises(ValidationError):
        StripDomain(flow, 2, 4)
    with pytest.raises(ValidationError):
        StripDomain(flow, 2.5, 32)


def test_strip_grid_layout():
    flow = CellularFlow(0.9)
    dom = StripDomain(flow, x_half_cells=3, n_per_cell=16)
    pl = np.pi * flow.l
    assert dom.shape == (32, 97)
    assert dom.dx == pytest.approx(pl / 16)
    assert dom.xs[0] == pytest.approx(-3 * pl)
    assert dom.xs[-1] == pytest.approx(3 * pl)
    # y is half-open periodic: last node one spacing short of +pi*l
    assert dom.ys[0] == pytest.approx(-pl)
    assert dom.ys[-1] == pytest.approx(pl - dom.dx)
    assert dom.total_area() == pytest.approx(6 * pl * 2 * pl)
    cells = list(dom.cells())
    assert len(cells) == 6 * 2
    assert (-3, -1) in cells and (2, 0) in cells and (3, 0) not in cells
    sy, sx = dom.cell_slices(0, 0)
    assert (sx.start, sx.stop) == (48, 65)
    assert (sy.start, sy.stop) == (16, 32)   # closing row wraps, block is clipped
    with pytest.raises(ValidationError):
        dom.cell_slices(3, 0)


def test_periodic_x_grid():
    flow = CellularFlow(1.0)
    dom = StripDomain(flow, x_half_cells=2, n_per_cell=8, periodic_x=True)
    assert dom.nx == 32
    assert dom.xs[-1] == pytest.approx(dom.X - dom.dx)


def test_interp_exact_on_bilinear_and_periodic_wrap():
    flow = CellularFlow(1.1)
    dom = StripDomain(flow, x_half_cells=2, n_per_cell=12)
    a, b, c = 0.3, -0.2, 0.05
    vals = a + b * dom.xs[None, :] + c * dom.ys[:, None]
    rng = np.random.default_rng(6)
    x = rng.uniform(dom.xs[0], dom.xs[-1], 100)
    y = rng.uniform(dom.ys[0], dom.ys[0] + 2 * dom.Y - dom.dx, 100)
    npt.assert_allclose(dom.interp(vals, x, y), a + b * x + c * y, rtol=0, atol=1e-12)
    # periodic wrap in y: shifting by a full period is invisible
    npt.assert_allclose(dom.interp(vals, x, y + 2 * dom.Y),
                        dom.interp(vals, x, y), atol=1e-9)
    with pytest.raises(ValidationError):
        dom.interp(vals, np.array([dom.X + 1.0]), np.array([0.0]))
    with pytest.raises(ValidationError):
        dom.interp(vals[:-1], x, y)


def _oracle_arc_length(flow, h0, n_steps=200000):
    """Independent perimeter: RK4 transport along u from a seed on {h = h0}.

    The streamline of the cellular flow is exactly the level set, so the
    closure arc length of the integrated orbit is the contour perimeter.
    """
    l = flow.l
    # seed on the diagonal x = y where h = l sin^2(x/l)
    x = y = l * np.arcsin(np.sqrt(h0 / l))

    def rhs(p):
        u1, u2 = flow.velocity(p[0], p[1])
        s = np.hypot(u1, u2)
        return np.array([u1 / s, u2 / s])   # unit speed: parameter = arc length

    p = np.array([x, y])
    start = p.copy()
    ds = 16.0 * l / n_steps
    length = 0.0
    armed = False
    for _ in range(n_steps):
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * ds * k1)
        k3 = rhs(p + 0.5 * ds * k2)
        k4 = rhs(p + ds * k3)
        p = p + (ds / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        length += ds
        d = np.hypot(*(p - start))
        if armed and d < 2 * ds:
            return length - (ds - d)   # first-order closure correction
        if d > 10 * ds:
            armed = True
    raise AssertionError("orbit failed to close")


# perimeter of {h = 0.5} in cell (0,0) at l = 1, 256-point polyline, frozen
ARC_L1_H05 = 6.792020101313382


def test_streamline_level_set_and_arc_length(unit_flow):
    poly = trace_streamline(unit_flow, (0, 0), 0.5, n_points=256)
    assert poly.shape == (256, 2)
    npt.assert_allclose(unit_flow.stream(poly[:, 0], poly[:, 1]), 0.5, atol=1e-8)
    # ordered along the flow: tangent dot velocity positive for every segment
    u1, u2 = unit_flow.velocity(poly[:, 0], poly[:, 1])
    tx = np.roll(poly[:, 0], -1) - poly[:, 0]
    ty = np.roll(poly[:, 1], -1) - poly[:, 1]
    assert np.all(u1 * tx + u2 * ty > 0)
    length = polyline_arc_length(poly)
    assert length == pytest.approx(ARC_L1_H05, rel=1e-12)
    # independent RK4 orbit oracle; the inscribed polyline sits slightly below
    oracle = _oracle_arc_length(unit_flow, 0.5)
    assert abs(length - oracle) / oracle < 2e-4


def test_streamline_negative_cell_and_scaling():
    flow = CellularFlow(2.0)
    # cell (1,0) has negative h; the level argument carries the magnitude
    poly = trace_streamline(flow, (1, 0), -1.0, n_points=128)
    npt.assert_allclose(flow.stream(poly[:, 0], poly[:, 1]), -1.0, atol=1e-8 * flow.l)
    x0, x1, y0, y1 = flow.cell_bounds(1, 0)
    assert np.all((poly[:, 0] > x0) & (poly[:, 0] < x1))
    assert np.all((poly[:, 1] > y0) & (poly[:, 1] < y1))
    # perimeter scales linearly with l at fixed unit level
    p1 = polyline_arc_length(trace_streamline(CellularFlow(1.0), (0, 0), 0.5, 256))
    p2 = polyline_arc_length(trace_streamline(CellularFlow(2.0), (0, 0), 1.0, 256))
    assert p2 == pytest.approx(2 * p1, rel=1e-9)


def test_streamline_rejects_bad_levels(unit_flow):
    with pytest.raises(ValidationError):
        trace_streamline(unit_flow, (0, 0), 0.0)
    with pytest.raises(ValidationError):
        trace_streamline(unit_flow, (0, 0), 1.0)
    with pytest.raises(ValidationError):
        trace_streamline(unit_flow, (0, 0), 0.5, n_points=4)
