"""Cellular stream function, strip geometry, and streamline extraction.

The flow is u = (h_y, -h_x) with stream function h(x,y) = l sin(x/l) sin(y/l).
Separatrices are the lattice lines x, y in pi*l*Z; they split the strip into
square cells of side pi*l.  Cell (i,j) occupies [i*pi*l,(i+1)*pi*l] x
[j*pi*l,(j+1)*pi*l].  Everything downstream (solver, diagnostics, Monte
Carlo) shares these conventions.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


class CellularFlow:
    """Stream function h(x,y) = l sin(x/l) sin(y/l) and its velocity field.

    Immutable; only the cell scale l is stored.  max |u| = 1 and also
    max(|u1| + |u2|) = 1 (from |u1| + |u2| = max(|sin((x+y)/l)|, |sin((x-y)/l)|)),
    which is the constant the advective CFL condition uses.
    """

    def __init__(self, l=1.0):
        if not l > 0.0:
            raise ValidationError("cell size l must be positive, got %r" % (l,))
        self.l = float(l)

    def stream(self, x, y):
        """h(x,y) = l sin(x/l) sin(y/l); |h| <= l everywhere."""
        l = self.l
        return l * np.sin(np.asarray(x) / l) * np.sin(np.asarray(y) / l)

    def stream_unit(self, x, y):
        """h/l = sin(x/l) sin(y/l), the unit-amplitude stream value in [-1,1]."""
        l = self.l
        return np.sin(np.asarray(x) / l) * np.sin(np.asarray(y) / l)

    def velocity(self, x, y):
        """u = (h_y, -h_x) = (sin(x/l) cos(y/l), -cos(x/l) sin(y/l)).

        Divergence-free by construction; u1 vanishes on x in pi*l*Z and u2 on
        y in pi*l*Z, so no streamline crosses a separatrix.
        """
        l = self.l
        x = np.asarray(x) / l
        y = np.asarray(y) / l
        return np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)

    def grad_stream_sq(self, x, y):
        """|grad h|^2 = sin^2(x/l) cos^2(y/l) + cos^2(x/l) sin^2(y/l).

        Dimensionless (equals |u|^2).  For the unit stream value hu = h/l >= 0
        it satisfies 2 hu (1 - hu) <= |grad h|^2 <= 2 (1 - hu^2).
        """
        u1, u2 = self.velocity(x, y)
        return u1 * u1 + u2 * u2

    def cell_bounds(self, i, j):
        """Corner coordinates (x0, x1, y0, y1) of cell (i,j)."""
        pl = np.pi * self.l
        return i * pl, (i + 1) * pl, j * pl, (j + 1) * pl

    def cell_sign(self, i, j):
        """Sign of h inside cell (i,j): +1 when i+j is even, -1 otherwise."""
        return 1 if (i + j) % 2 == 0 else -1

    def cell_center(self, i, j):
        pl = np.pi * self.l
        return (i + 0.5) * pl, (j + 0.5) * pl


class StripDomain:
    """Uniform node-centred grid on the truncated strip [-X, X] x [-pi*l, pi*l).

    X = x_half_cells * pi*l keeps the truncation on separatrices.  The y
    direction is periodic with period 2*pi*l (n_cells_y cells across, default
    2); x carries nx = 2*X/dx + 1 nodes including both Dirichlet ends, or a
    half-open row of 2*X/dx nodes when periodic_x is set.  The grid spacing is
    the same in x and y: dx = dy = pi*l/n_per_cell.
    """

    def __init__(self, flow, x_half_cells, n_per_cell, n_cells_y=2, periodic_x=False):
        if x_half_cells < 1 or int(x_half_cells) != x_half_cells:
            raise ValidationError(
                "x_half_cells must be a positive integer (X on a separatrix), got %r"
                % (x_half_cells,))
        if n_per_cell < 8 or int(n_per_cell) != n_per_cell:
            raise ValidationError("n_per_cell must be an integer >= 8, got %r" % (n_per_cell,))
        if n_cells_y < 1 or int(n_cells_y) != n_cells_y:
            raise ValidationError("n_cells_y must be a positive integer, got %r" % (n_cells_y,))
        self.flow = flow
        self.l = flow.l
        self.x_half_cells = int(x_half_cells)
        self.n_per_cell = int(n_per_cell)
        self.n_cells_y = int(n_cells_y)
        self.periodic_x = bool(periodic_x)
        pl = np.pi * self.l
        self.X = self.x_half_cells * pl
        self.dx = pl / self.n_per_cell
        self.nx = 2 * self.x_half_cells * self.n_per_cell + (0 if self.periodic_x else 1)
        self.ny = self.n_cells_y * self.n_per_cell
        self.xs = -self.X + self.dx * np.arange(self.nx)
        # y covers [-Y, Y) half-open; the missing node is the periodic image of y = -Y
        self.Y = 0.5 * self.n_cells_y * pl
        self.ys = -self.Y + self.dx * np.arange(self.ny)

    @property
    def shape(self):
        """Array shape (ny, nx): y is the slow axis, x is contiguous."""
        return (self.ny, self.nx)

    def cell_area(self):
        return (np.pi * self.l) ** 2

    def total_area(self):
        return 2.0 * self.X * 2.0 * self.Y

    def cells(self):
        """Iterate (i, j) over all whole cells inside the truncated strip."""
        jlo = -(self.n_cells_y // 2)
        for j in range(jlo, jlo + self.n_cells_y):
            for i in range(-self.x_half_cells, self.x_half_cells):
                yield i, j

    def cell_slices(self, i, j):
        """Index slices (sy, sx) selecting the closed node block of cell (i,j)."""
        n = self.n_per_cell
        i0 = (i + self.x_half_cells) * n
        j0 = int(round((j * np.pi * self.l - self.ys[0]) / self.dx))
        if not (0 <= i0 and i0 + n <= self.nx - (0 if self.periodic_x else 1)
                and 0 <= j0 and j0 + n <= self.ny):
            raise ValidationError("empty-cell: cell (%d,%d) outside domain" % (i, j))
        # a closing row/column may wrap; the closed block is clipped to the array
        return slice(j0, min(j0 + n + 1, self.ny)), slice(i0, min(i0 + n + 1, self.nx))

    def interp(self, values, x, y):
        """Bilinear interpolation of a grid field at points (x, y).

        y is wrapped periodically; x must lie inside [-X, X].  Exact for
        functions that are bilinear on each grid cell, and monotone (convex
        combination of nodal values), matching the first-order solver.
        """
        values = np.asarray(values)
        if values.shape != self.shape:
            raise ValidationError("field shape %r does not match grid %r" % (values.shape, self.shape))
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.periodic_x:
            fx = (x - self.xs[0]) / self.dx
            ix0 = np.floor(fx).astype(np.int64)
            ax = fx - ix0
            i0 = np.mod(ix0, self.nx)
            i1 = np.mod(ix0 + 1, self.nx)
        else:
            if np.any(x < self.xs[0] - 1e-12) or np.any(x > self.xs[-1] + 1e-12):
                raise ValidationError("interpolation point outside [-X, X]")
            fx = np.clip((x - self.xs[0]) / self.dx, 0.0, self.nx - 1.0)
            i0 = np.minimum(fx.astype(np.int64), self.nx - 2)
            ax = fx - i0
            i1 = i0 + 1
        fy = (y - self.ys[0]) / self.dx
        jy = np.floor(fy).astype(np.int64)
        ay = fy - jy
        j0 = np.mod(jy, self.ny)
        j1 = np.mod(jy + 1, self.ny)
        v00 = values[j0, i0]
        v01 = values[j0, i1]
        v10 = values[j1, i0]
        v11 = values[j1, i1]
        return (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11)


def _marching_squares(F, xg, yg):
    """Extract the closed F = 0 contour from a sampled function on a single cell.

    F is (m, m) with F > 0 in the interior of the sought region.  Returns the
    crossing points chained into one closed loop (n, 2), unoriented.  Level
    sets of h within one cell are closed convex-ish curves, so exactly one
    loop exists and the ambiguous saddle cases cannot occur away from
    roundoff-degenerate levels.
    """
    m = F.shape[0]
    pos = F > 0.0

    # edge keys: horizontal edge (r, c)-(r, c+1) -> ('h', r, c); vertical -> ('v', r, c)
    pts = {}

    def _crossing(kind, r, c):
        key = (kind, r, c)
        if key not in pts:
            if kind == "h":
                f0, f1 = F[r, c], F[r, c + 1]
                t = f0 / (f0 - f1)
                pts[key] = (xg[c] + t * (xg[c + 1] - xg[c]), yg[r])
            else:
                f0, f1 = F[r, c], F[r + 1, c]
                t = f0 / (f0 - f1)
                pts[key] = (xg[c], yg[r] + t * (yg[r + 1] - yg[r]))
        return key

    # per square, collect the (usually 0 or 2) crossed edges and link them
    links = {}

    def _link(a, b):
        links.setdefault(a, []).append(b)
        links.setdefault(b, []).append(a)

    crossed_h = pos[:, :-1] != pos[:, 1:]   # (m, m-1)
    crossed_v = pos[:-1, :] != pos[1:, :]   # (m-1, m)
    sq_r, sq_c = np.nonzero(crossed_h[:-1, :] | crossed_h[1:, :]
                            | crossed_v[:, :-1] | crossed_v[:, 1:])
    for r, c in zip(sq_r, sq_c):
        edges = []
        if crossed_h[r, c]:
            edges.append(_crossing("h", r, c))
        if crossed_h[r + 1, c]:
            edges.append(_crossing("h", r + 1, c))
        if crossed_v[r, c]:
            edges.append(_crossing("v", r, c))
        if crossed_v[r, c + 1]:
            edges.append(_crossing("v", r, c + 1))
        if len(edges) == 2:
            _link(edges[0], edges[1])
        elif len(edges) == 4:
            # saddle square: resolve by the centre sample sign (connect around
            # the corner whose sign matches the centre)
            fc = 0.25 * (F[r, c] + F[r + 1, c] + F[r, c + 1] + F[r + 1, c + 1])
            e_bot, e_top = ("h", r, c), ("h", r + 1, c)
            e_lef, e_rig = ("v", r, c), ("v", r, c + 1)
            if (fc > 0) == pos[r, c]:
                _link(e_bot, e_rig)
                _link(e_top, e_lef)
            else:
                _link(e_bot, e_lef)
                _link(e_top, e_rig)

    if not links:
        return np.zeros((0, 2))

    # walk the loop
    start = next(iter(links))
    loop = [start]
    prev = None
    cur = start
    while True:
        nxt = [e for e in links[cur] if e != prev]
        if not nxt:
            break
        prev, cur = cur, nxt[0]
        if cur == start:
            break
        loop.append(cur)
    return np.array([pts[k] for k in loop])


def trace_streamline(flow, cell_index, h0, n_points=256, oversample=256):
    """Sample the level set {h = h0} inside one cell as a closed polyline.

    Parameters
    ----------
    flow : CellularFlow
    cell_index : (i, j)
        Cell whose interior level set is traced; sign of h0 must match the
        cell sign (|h0| is used against |h|).
    h0 : float
        Level, 0 < |h0| < l.
    n_points : int
        Points in the returned polyline, uniformly spaced in arc length and
        ordered along the flow direction.  The closing segment from the last
        point back to the first is implicit.

    Returns
    -------
    (n_points, 2) array of (x, y).

    Marching squares on an oversampled local grid gives the loop; uniform
    arc-length resampling bounds the spacing ratio; a final Newton projection
    along grad h pins each point to the level set to ~1e-12 l, far below the
    1e-8 l contract.
    """
    l = flow.l
    a = abs(float(h0))
    if not (1e-6 * l <= a <= (1.0 - 1e-9) * l):
        raise ValidationError("level-out-of-range: need 0 < |h0| < l, got h0=%r l=%r" % (h0, l))
    if n_points < 8:
        raise ValidationError("n_points must be >= 8")
    i, j = cell_index
    x0, x1, y0, y1 = flow.cell_bounds(i, j)
    s = flow.cell_sign(i, j)

    m = int(oversample) + 1
    xg = np.linspace(x0, x1, m)
    yg = np.linspace(y0, y1, m)
    F = s * flow.stream(xg[None, :], yg[:, None]) - a
    loop = _marching_squares(F, xg, yg)
    if loop.shape[0] < 8:
        raise ValidationError(
            "degenerate-contour: level |h0|=%g too close to cell max %g at this oversampling"
            % (a, l))

    # close the loop for arc-length bookkeeping
    closed = np.vstack([loop, loop[:1]])
    seg = np.hypot(np.diff(closed[:, 0]), np.diff(closed[:, 1]))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    targets = total * np.arange(n_points) / n_points
    px = np.interp(targets, arc, closed[:, 0])
    py = np.interp(targets, arc, closed[:, 1])

    # Newton projection along grad h: h has no critical points on the level set
    # (|grad h|^2 >= 2 hu (1 - hu) > 0 for 0 < |h0| < l)
    for _ in range(3):
        err = s * flow.stream(px, py) - a
        u1, u2 = flow.velocity(px, py)
        gx, gy = -s * u2, s * u1        # grad(s h - a) = s (h_x, h_y) = s (-u2, u1)
        g2 = gx * gx + gy * gy
        px = px - err * gx / g2
        py = py - err * gy / g2

    # orient along the flow: velocity at the first point vs the polyline tangent
    u1, u2 = flow.velocity(px[0], py[0])
    tx, ty = px[1] - px[0], py[1] - py[0]
    if u1 * tx + u2 * ty < 0.0:
        px = np.concatenate([px[:1], px[1:][::-1]])
        py = np.concatenate([py[:1], py[1:][::-1]])
    return np.column_stack([px, py])


def polyline_arc_length(poly):
    """Total length of a closed polyline (n, 2); the closing segment is included."""
    closed = np.vstack([poly, poly[:1]])
    return float(np.sum(np.hypot(np.diff(closed[:, 0]), np.diff(closed[:, 1]))))
