"""Decay rates and along-streamline diagnostics.

Two groups of tools.  The first quantifies how fast transport-diffusion
flattens the temperature: the rate scale n(t) solving

    4 n^4 / (1 + 4 n^3 l^3) = C1 / (l^2 t)

and a log-log fit of the sup-norm decay from run monitors.  The second
measures how close a field is to being constant on streamlines: per-cell
oscillation along the |h| = h0 loop, the temperature drop across shared
cell edges, hot-cell counting, and the amplitude scaling of the
accumulated along-flow oscillation integral int int |u . grad phi|^2.

All field-on-streamline evaluations use bilinear interpolation, which is
monotone and consistent with the first-order solver.
"""

import math

import numpy as np

from .errors import ValidationError
from .flowfield import trace_streamline

DIAG_COLUMNS = ("t", "cell_i", "cell_j", "h0", "osc", "drop", "hot_flag")


# ---------------------------------------------------------------------------
# rate scale n(t)

def _nash_scalar(t, l, C1):
    if not t > 0.0:
        raise ValidationError("nash_n needs t > 0, got %r" % (t,))
    rhs = C1 / (l * l * t)

    def f(n):
        n3 = n * n * n
        return 4.0 * n3 * n / (1.0 + 4.0 * n3 * l * l * l) - rhs

    # the left side is strictly increasing (d/dn > 0), so bracket and bisect
    hi = max(1.0, (rhs / 4.0) ** 0.25, rhs * l ** 3)
    while f(hi) < 0.0:
        hi *= 2.0
    lo = 0.0
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class NashRate:
    """Rate scale n(t) defined by 4 n^4 / (1 + 4 n^3 l^3) = C1 / (l^2 t).

    The left side increases monotonically in n, so the root is unique;
    n(t) decreases strictly in t and blows up as t -> 0+.  Small times
    follow n ~ C1 l / t, large times n ~ (C1 / (4 l^2 t))^(1/4), i.e.
    n(t)^2 ~ sqrt(C1) / (2 l sqrt(t)).
    """

    def __init__(self, l, C1=1.0):
        if not l > 0.0:
            raise ValidationError("NashRate needs l > 0, got %r" % (l,))
        if not C1 > 0.0:
            raise ValidationError("NashRate needs C1 > 0, got %r" % (C1,))
        self.l = float(l)
        self.C1 = float(C1)

    def n(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return _nash_scalar(float(t), self.l, self.C1)
        return np.array([_nash_scalar(v, self.l, self.C1) for v in t.ravel()]
                        ).reshape(t.shape)

    def residual(self, t):
        """Relative defect of the defining equation at the computed root."""
        n = np.asarray(self.n(t), dtype=float)
        n3 = n ** 3
        lhs = 4.0 * n3 * n / (1.0 + 4.0 * n3 * self.l ** 3)
        rhs = self.C1 / (self.l ** 2 * np.asarray(t, dtype=float))
        return np.max(np.abs(lhs - rhs) / rhs)


def nash_n(t, l, C1=1.0):
    """Root n(t) of 4 n^4 / (1 + 4 n^3 l^3) = C1 / (l^2 t); see NashRate."""
    return NashRate(l, C1).n(t)


# ---------------------------------------------------------------------------
# sup-norm decay fitting

def _monitor_array(monitor):
    if hasattr(monitor, "monitor"):
        return np.asarray(monitor.monitor, dtype=float)
    if isinstance(monitor, (str, bytes)) or hasattr(monitor, "__fspath__"):
        from . import artifacts
        cols = artifacts.read_table(monitor)
        return np.column_stack([cols["t"], cols["sup_norm"]])
    return np.asarray(monitor, dtype=float)


def decay_exponent(monitor, t_min, t_max):
    """Least-squares slope of log sup-norm against log t on [t_min, t_max].

    monitor may be a RunRecord, a monitor CSV path, or a plain array whose
    first two columns are (t, sup_norm).  Returns (slope, stderr).
    """
    arr = _monitor_array(monitor)
    t = arr[:, 0]
    sup = arr[:, 1]
    keep = (t >= t_min) & (t <= t_max) & (t > 0.0) & (sup > 0.0)
    k = int(keep.sum())
    if k < 20:
        raise ValidationError(
            "insufficient-samples: need >= 20 monitor rows in [%g, %g], got %d"
            % (t_min, t_max, k))
    x = np.log(t[keep])
    y = np.log(sup[keep])
    xm = x - x.mean()
    sxx = float(np.dot(xm, xm))
    slope = float(np.dot(xm, y) / sxx)
    resid = y - y.mean() - slope * xm
    var = float(np.dot(resid, resid)) / (k - 2) / sxx
    return slope, math.sqrt(var)


# ---------------------------------------------------------------------------
# streamline diagnostics

def _cell_polyline_values(field, flow, cell, h0, n_points):
    poly = trace_streamline(flow, cell, h0, n_points)
    vals = field.domain.interp(field.values, poly[:, 0], poly[:, 1])
    return poly, vals


def streamline_oscillation(field, flow, h0, n_points=512):
    """Per-cell sup - inf of the field along its |h| = h0 streamline.

    Returns {(i, j): osc} over all whole cells of the field's domain.
    """
    _check_level(flow, h0)
    out = {}
    for cell in field.domain.cells():
        _, vals = _cell_polyline_values(field, flow, cell, h0, n_points)
        out[cell] = float(vals.max() - vals.min())
    return out


def hot_cell_count(field, flow, h0, beta, n_points=512):
    """Number of cells whose minimum along the h0-streamline is >= beta / 2."""
    _check_level(flow, h0)
    if not 0.0 < beta <= 1.0:
        raise ValidationError("hot_cell_count needs 0 < beta <= 1, got %r" % (beta,))
    count = 0
    for cell in field.domain.cells():
        _, vals = _cell_polyline_values(field, flow, cell, h0, n_points)
        if vals.min() >= 0.5 * beta:
            count += 1
    return count


def _check_level(flow, h0):
    if not 0.0 < h0 < flow.l:
        raise ValidationError("streamline level must satisfy 0 < h0 < l, got %r" % (h0,))


def _facing_arc(poly, center, direction):
    """Central half (by arc length) of the polyline arc facing a cell edge.

    direction is the unit outward normal of the shared edge seen from this
    cell; the facing arc is the 90-degree sector of the closed loop around
    that direction (the loop is star-shaped about the cell center, so the
    sector cuts one contiguous arc).
    """
    rel = poly - np.asarray(center)
    along = rel[:, 0] * direction[0] + rel[:, 1] * direction[1]
    perp = -rel[:, 0] * direction[1] + rel[:, 1] * direction[0]
    mask = (along > 0.0) & (along >= np.abs(perp))
    if not mask.any():
        raise ValidationError("degenerate-contour: no points face the shared edge")
    # rotate the closed polyline so the facing run is contiguous
    n = poly.shape[0]
    if mask.all():
        idx = np.arange(n)
    else:
        start = int(np.argmin(mask))        # some index outside the run
        rolled = np.roll(mask, -start)
        # the sector selects a single contiguous run on a star-shaped loop
        idx = (np.flatnonzero(rolled) + start) % n
    pts = poly[idx]
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    keep = (s >= 0.25 * total) & (s <= 0.75 * total)
    return pts[keep]


def _neighbor_pairs(domain):
    """Ordered (cell, neighbor, outward direction) triples, one per shared edge."""
    cells = set(domain.cells())
    jlo = -(domain.n_cells_y // 2)
    for (i, j) in sorted(cells):
        if (i + 1, j) in cells:
            yield (i, j), (i + 1, j), (1.0, 0.0)
        jn = j + 1 if j + 1 < jlo + domain.n_cells_y else jlo
        yield (i, j), (i, jn), (0.0, 1.0)


def cell_drop(field, flow, h0, n_points=512):
    """Temperature drop across every shared cell edge.

    For the two cells meeting at an edge, S+ and S- are the central halves
    (by arc length) of their h0-streamline arcs facing that edge, and

        drop = max(0, min_{S+} phi - max_{S-} phi, min_{S-} phi - max_{S+} phi).

    Returns {((i, j), (i2, j2)): drop}, keyed by the ordered pair; the
    second cell is the neighbor to the right or above (wrapping in y).
    """
    _check_level(flow, h0)
    dom = field.domain
    polys = {}
    for cell in dom.cells():
        polys[cell] = trace_streamline(flow, cell, h0, n_points)
    drops = {}
    for c1, c2, direction in _neighbor_pairs(dom):
        d2 = (-direction[0], -direction[1])
        s1 = _facing_arc(polys[c1], flow.cell_center(*c1), direction)
        s2 = _facing_arc(polys[c2], flow.cell_center(*c2), d2)
        f1 = dom.interp(field.values, s1[:, 0], s1[:, 1])
        f2 = dom.interp(field.values, s2[:, 0], s2[:, 1])
        drops[(c1, c2)] = float(max(0.0,
                                    f1.min() - f2.max(),
                                    f2.min() - f1.max()))
    return drops


def select_h0(field, flow, delta=None, levels=8, n_points=256):
    """Scan levels in (delta, 2 delta) and pick the one with least oscillation.

    delta defaults to l/16.  The score is sum over cells of osc^2, the
    integrand whose tube average the mean value theorem turns into a good
    single level; returns (h0, levels, scores).
    """
    l = flow.l
    if delta is None:
        delta = l / 16.0
    if not 0.0 < 2.0 * delta < l:
        raise ValidationError("select_h0 needs 0 < 2 delta < l, got delta=%r" % (delta,))
    grid = np.linspace(delta, 2.0 * delta, levels + 2)[1:-1]
    scores = np.empty(levels)
    for k, h in enumerate(grid):
        osc = streamline_oscillation(field, flow, float(h), n_points)
        scores[k] = sum(v * v for v in osc.values())
    best = int(np.argmin(scores))
    return float(grid[best]), grid, scores


class CellStats:
    """Streamline diagnostics of one field at a fixed level h0.

    osc[(i, j)]      sup - inf along the cell's |h| = h0 loop
    drop[(c1, c2)]   temperature drop across the shared edge (see cell_drop)
    hot[(i, j)]      min along the loop >= beta / 2
    """

    def __init__(self, h0, beta, osc, drop, hot):
        self.h0 = float(h0)
        self.beta = float(beta)
        self.osc = osc
        self.drop = drop
        self.hot = hot

    @classmethod
    def collect(cls, field, flow, h0=None, beta=0.5, n_points=512):
        if h0 is None:
            h0, _, _ = select_h0(field, flow)
        osc = streamline_oscillation(field, flow, h0, n_points)
        drop = cell_drop(field, flow, h0, n_points)
        hot = {}
        for cell in field.domain.cells():
            _, vals = _cell_polyline_values(field, flow, cell, h0, n_points)
            hot[cell] = bool(vals.min() >= 0.5 * beta)
        return cls(h0, beta, osc, drop, hot)

    def table(self, t=0.0):
        """Rows (t, cell_i, cell_j, h0, osc, drop, hot_flag); the drop column
        is the largest drop over the edges meeting that cell."""
        per_cell = {}
        for (c1, c2), v in self.drop.items():
            per_cell[c1] = max(per_cell.get(c1, 0.0), v)
            per_cell[c2] = max(per_cell.get(c2, 0.0), v)
        rows = []
        for (i, j) in sorted(self.osc):
            rows.append((t, i, j, self.h0, self.osc[(i, j)],
                         per_cell.get((i, j), 0.0), int(self.hot[(i, j)])))
        return rows


# ---------------------------------------------------------------------------
# along-flow oscillation scaling in the amplitude

def check_streamline_constant(field, flow=None, tol=1e-6, n_points=512):
    """Raise unless the field is constant on streamlines (osc <= tol).

    Probes a handful of levels; for data built by make_initial_data with a
    cutoff ramp the probes avoid the ramp band (where bilinear sampling of
    a curved profile would register grid error, not true oscillation) and
    sit where valid data is locally constant, keeping the tolerance honest.
    """
    if flow is None:
        flow = field.domain.flow
    l = flow.l
    dx = field.domain.dx
    delta0 = field.meta.get("delta0")
    if delta0 is not None:
        # keep the whole bilinear stencil (reach ~dx, |grad h| <= 1) inside a
        # flat band, so valid data scores exactly zero
        probes = []
        if 0.5 * delta0 + 2.0 * dx <= delta0:
            probes.append(0.5 * delta0)
        lo, hi = 2.0 * delta0 + 2.5 * dx, 0.95 * l
        if lo < hi:
            probes.extend(np.linspace(lo, hi, 4))
        if not probes:
            probes = list(np.linspace(0.15, 0.85, 5) * l)
    else:
        probes = list(np.linspace(0.15, 0.85, 5) * l)
    worst = 0.0
    for h in probes:
        osc = streamline_oscillation(field, flow, float(h), n_points)
        worst = max(worst, max(osc.values()))
    if worst > tol:
        raise ValidationError(
            "initial-data-not-streamline-constant: oscillation %.3g exceeds %.3g"
            % (worst, tol))
    return worst


def oscillation_decay_check(records, A_values, initial=None):
    """Accumulated int_0^t int |u . grad phi|^2 per amplitude, with a power fit.

    records are completed runs (matching A_values) of the same M = 0 problem
    whose monitors carry the oscillation accumulator; initial, when given, is
    the shared initial field and is required to be streamline constant.
    Returns (A sorted ascending, integrals, fitted log-log slope).
    """
    A = np.asarray(A_values, dtype=float)
    if len(records) != A.size or A.size < 2:
        raise ValidationError(
            "oscillation_decay_check needs matching records and >= 2 amplitudes")
    if np.any(A <= 0.0):
        raise ValidationError("amplitudes must be positive for the log-log fit")
    if initial is not None:
        check_streamline_constant(initial)
    vals = []
    for rec in records:
        m = rec.field.meta.get("M", 0.0)
        if m:
            raise ValidationError("oscillation_decay_check needs M = 0 runs, got M=%g" % m)
        vals.append(float(rec.monitor[-1, 6]))
    order = np.argsort(A)
    A = A[order]
    integ = np.asarray(vals)[order]
    if np.any(integ <= 0.0):
        raise ValidationError("oscillation accumulator is not positive; "
                              "was the run advective (A > 0) with moving data?")
    x = np.log(A)
    y = np.log(integ)
    xm = x - x.mean()
    slope = float(np.dot(xm, y) / np.dot(xm, xm))
    return A, integ, slope
