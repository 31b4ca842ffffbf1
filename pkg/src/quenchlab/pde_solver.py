"""Time integration of T_t + A u . grad T = Lap T + M f(T) on the truncated strip.

Two interchangeable monotone paths integrate the same semi-discretization
(donor-cell advection in flux form, 5-point diffusion, pointwise reaction):

* fused: a single forward-Euler pass doing advection and diffusion together,
  stable and monotone for dt <= cfl / (maxc/dx + 4/dx^2) where maxc is the
  exact discrete bound on the donor outflow coefficient;
* split: half-step implicit diffusion (alternating tridiagonal solves, each
  factor an M-matrix and hence monotone), explicit donor-cell advection and
  the reaction substep, then the second diffusion half step.

The fused step costs about an eighth of a split step per node, so the fused
path wins unless its diffusive dt restriction is more than ~8x tighter than
the advective one; the choice is automatic and recorded as the path label.
Reaction uses classical 4-stage substeps with M dt_sub <= 0.05, keeping the
substep error around 1e-9 and the map monotone in the initial value.

Face-sampled velocities of the cellular flow are discretely divergence-free,
so the donor-cell update conserves mass exactly; the run tracks the exact
discrete flux through the Dirichlet ends as "leak".

Runs on symmetric data can be reduced to a half or quarter strip: slab-type
data and the flow are invariant under x -> -x and y -> -y (u1 odd/even, u2
even/odd), the discrete operators commute with the reflections, and monitors
are recovered exactly through node multiplicity weights.  Cell-seeded data do
not qualify (reflection about a cell centre line reverses the circulation;
only the 180-degree rotation is a symmetry), so those runs use the full strip.

A third, non-monotone path ("high-order", third-order upwind-biased faces
with two-stage time stepping) exists for measurements that first-order
numerical diffusion would pollute; it never feeds verdicts.
"""

from __future__ import annotations

import math
import time as _time
import warnings

import numpy as np

from . import _kernels, artifacts
from .errors import NumericalAbort, ValidationError
from .flowfield import StripDomain

# measured single-core throughput ratio of one split step to one fused step;
# used only to pick the cheaper path, never affecting results
SPLIT_COST_RATIO = 7.7

MONITOR_COLUMNS = artifacts.MONITOR_COLUMNS


def cutoff_eta(s):
    """C^2 ramp: 0 for s <= 1, 1 for s >= 2, quintic smoothstep between."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


class Field:
    """A grid function on a StripDomain at a fixed time, plus run metadata."""

    def __init__(self, domain, values, time=0.0, meta=None):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != domain.shape:
            raise ValidationError(
                "field shape %r does not match grid %r" % (values.shape, domain.shape))
        self.domain = domain
        self.values = values
        self.time = float(time)
        self.meta = dict(meta) if meta else {}

    def copy(self):
        return Field(self.domain, self.values.copy(), self.time, self.meta)

    def save(self, path):
        d = self.domain
        sidecar = {
            "nx": d.nx, "ny": d.ny, "l": d.l, "X": d.X, "time": self.time,
            "A": float(self.meta.get("A", 0.0)),
            "M": float(self.meta.get("M", 0.0)),
            "theta0": float(self.meta.get("theta0", 0.0)),
        }
        artifacts.save_field_raw(path, self.values, sidecar)

    @staticmethod
    def load(path, flow=None):
        from .flowfield import CellularFlow
        values, sc = artifacts.load_field_raw(path)
        l = float(sc["l"])
        if flow is None:
            flow = CellularFlow(l)
        elif abs(flow.l - l) > 1e-12 * max(1.0, l):
            raise ValidationError("snapshot cell size %g does not match flow %g" % (l, flow.l))
        pl = math.pi * l
        x_half_cells = int(round(sc["X"] / pl))
        ny = int(sc["ny"])
        nx = int(sc["nx"])
        periodic_x = (nx % 2 == 0)
        n_per_cell = (nx if periodic_x else nx - 1) // (2 * x_half_cells)
        n_cells_y = ny // n_per_cell
        domain = StripDomain(flow, x_half_cells, n_per_cell, n_cells_y, periodic_x)
        if domain.shape != (ny, nx):
            raise ValidationError("snapshot geometry %r inconsistent" % (sc,))
        meta = {k: sc[k] for k in ("A", "M", "theta0")}
        return Field(domain, values, sc["time"], meta)


def make_initial_data(domain, kind, L0=None, delta0=None, cell=(0, 0)):
    """Standard initial data on the strip.

    kind "slab": indicator of |x| <= L0.  kind "cell": indicator of one flow
    cell.  kind "streamline-cutoff": the slab indicator shaped by the C^2 ramp
    eta(|h|/delta0), so the data vanish near separatrices and are streamline
    constant away from the slab edge; used for decay measurements where the
    initial along-flow oscillation must be zero.
    """
    x = domain.xs[None, :]
    y = domain.ys[:, None]
    if kind == "slab" or kind == "streamline-cutoff":
        if L0 is None or not L0 > 0.0:
            raise ValidationError("slab data need L0 > 0, got %r" % (L0,))
        if L0 > domain.X:
            raise ValidationError(
                "geometry: slab half-width L0=%g exceeds strip truncation X=%g"
                % (L0, domain.X))
        vals = np.where(np.abs(x) <= L0 + 1e-12 * domain.l, 1.0, 0.0) \
            * np.ones_like(y)
        meta = {"kind": kind, "L0": float(L0)}
        if kind == "streamline-cutoff":
            if delta0 is None or not (0.0 < delta0 <= 0.5 * domain.l):
                raise ValidationError(
                    "streamline-cutoff needs 0 < delta0 <= l/2, got %r" % (delta0,))
            habs = np.abs(domain.flow.stream(x, y))
            vals = vals * cutoff_eta(habs / delta0)
            meta["delta0"] = float(delta0)
        return Field(domain, vals, 0.0, meta)
    if kind == "cell":
        vals = np.zeros(domain.shape)
        sy, sx = domain.cell_slices(*cell)
        vals[sy, sx] = 1.0
        return Field(domain, vals, 0.0, {"kind": kind, "cell": tuple(cell)})
    raise ValidationError(
        "unknown initial data kind %r (expected slab, cell, streamline-cutoff)" % (kind,))


class SolverConfig:
    """Run controls; everything deterministic, no RNG anywhere in the solver."""

    def __init__(self, t_end, A=0.0, scheme="monotone", cfl=0.9, dt=None,
                 dt_max=None, monitor_stride=None, symmetric_x=False,
                 symmetric_y=False, stop_on_quench=False, stop_on_rebound=False,
                 rebound_dip=0.55, rebound_level=0.9, rebound_dwell=1.5,
                 floor_values=None, floor_tol=1e-3, snapshot_times=(),
                 auto_extend=False, max_extensions=2, leak_tol=1e-3,
                 inject_nan_step=None, max_updates=None, force_path=None,
                 theta_burn=None):
        if not t_end > 0.0:
            raise ValidationError("t_end must be positive, got %r" % (t_end,))
        if not 0.0 < cfl <= 0.9:
            raise ValidationError("cfl must lie in (0, 0.9], got %r" % (cfl,))
        if A < 0.0:
            raise ValidationError("flow amplitude A must be >= 0, got %r" % (A,))
        if scheme not in ("monotone", "high-order"):
            raise ValidationError("scheme must be monotone or high-order, got %r" % (scheme,))
        if force_path not in (None, "fused", "split"):
            raise ValidationError("force_path must be fused or split, got %r" % (force_path,))
        if scheme == "high-order" and (symmetric_x or symmetric_y):
            raise ValidationError("high-order path runs on the full strip only")
        self.t_end = float(t_end)
        self.A = float(A)
        self.scheme = scheme
        self.cfl = float(cfl)
        self.dt = dt
        self.dt_max = dt_max
        self.monitor_stride = monitor_stride
        self.symmetric_x = bool(symmetric_x)
        self.symmetric_y = bool(symmetric_y)
        self.stop_on_quench = bool(stop_on_quench)
        self.stop_on_rebound = bool(stop_on_rebound)
        self.rebound_dip = float(rebound_dip)
        self.rebound_level = float(rebound_level)
        self.rebound_dwell = float(rebound_dwell)
        self.floor_values = floor_values
        self.floor_tol = float(floor_tol)
        self.snapshot_times = tuple(sorted(float(t) for t in snapshot_times))
        self.auto_extend = bool(auto_extend)
        self.max_extensions = int(max_extensions)
        self.leak_tol = float(leak_tol)
        self.inject_nan_step = inject_nan_step
        self.max_updates = max_updates
        self.force_path = force_path
        self.theta_burn = theta_burn

    def describe(self):
        skip = ("floor_values",)
        return {k: v for k, v in vars(self).items() if k not in skip}


class RunRecord:
    """Everything a run produced: monitors, events, final field, snapshots."""

    def __init__(self):
        self.monitor = None          # (k, 7) array, columns MONITOR_COLUMNS
        self.events = []             # list of (t, name) pairs
        self.status = "completed"    # completed | quenched | rebound | cost-capped
        self.field = None            # final full-strip Field
        self.snapshots = []
        self.dt = 0.0
        self.n_steps = 0
        self.path_label = ""
        self.wall_time = 0.0
        self.initial_mass = 0.0
        self.leak = 0.0
        self.extensions = 0
        self.updates = 0
        self.floor_violation = 0.0
        self.min_sup = math.inf
        self.t_min_sup = 0.0

    def monitor_column(self, name):
        return self.monitor[:, MONITOR_COLUMNS.index(name)]

    def save_monitor(self, path):
        artifacts.write_table(path, MONITOR_COLUMNS, self.monitor)

    def event_names(self):
        return [name for _, name in self.events]


def _prefactor_tridiag(n, lam, mirror_first=False, mirror_last=False, cyclic=False):
    """Elimination coefficients for (I - lam D2) on n nodes.

    Returns (cp, invd, sub, z, zfac); z and zfac are the shared rank-one
    correction data for the cyclic case (None otherwise).  cp is stored with
    positive sign, matching the compiled back-substitution.
    """
    diag = np.full(n, 1.0 + 2.0 * lam)
    sup = np.full(n, lam)
    sub = np.full(n, lam)
    if mirror_first:
        sup[0] = 2.0 * lam
    if mirror_last:
        sub[n - 1] = 2.0 * lam
    if cyclic:
        # subtract u v^T with u = e0 + e_{n-1}, v = -lam (e0 + e_{n-1})
        diag[0] += lam
        diag[n - 1] += lam
    cp = np.zeros(n)
    invd = np.zeros(n)
    invd[0] = 1.0 / diag[0]
    cp[0] = sup[0] * invd[0]
    for k in range(1, n):
        invd[k] = 1.0 / (diag[k] - sub[k] * cp[k - 1])
        cp[k] = sup[k] * invd[k]
    z = zfac = None
    if cyclic:
        u = np.zeros(n)
        u[0] = 1.0
        u[n - 1] = 1.0
        d = np.empty(n)
        d[0] = u[0] * invd[0]
        for k in range(1, n):
            d[k] = (u[k] + sub[k] * d[k - 1]) * invd[k]
        for k in range(n - 2, -1, -1):
            d[k] = d[k] + cp[k] * d[k + 1]
        z = d
        zfac = -lam / (1.0 - lam * (z[0] + z[n - 1]))
    return cp, invd, sub, z, zfac


class _Stepper:
    """Precomputed arrays and the per-step advance for one run geometry.

    Construction fixes the geometry, the stability bound, and the path; the
    actual dt (possibly rounded down so the horizon is hit exactly) is then
    frozen with set_dt, which builds the dt-dependent factorizations.
    """

    def __init__(self, flow, reaction, config, xs, ys, dx, bcx, bcy, wy):
        self.flow = flow
        self.reaction = reaction
        self.config = config
        self.xs = xs
        self.ys = ys
        self.dx = float(dx)
        self.bcx = bcx
        self.bcy = bcy
        self.wy = np.asarray(wy, dtype=np.float64)
        l = flow.l
        A = config.A
        nx = xs.size
        ny = ys.size
        n_xfaces = nx if bcx == 2 else nx - 1
        # the amplitude A rides on exactly one 1-d factor per direction
        self.fx = A * np.sin((xs[:n_xfaces] + 0.5 * dx) / l)
        self.gy = np.cos(ys / l)
        self.gxd = -A * np.cos(xs / l)
        self.fy = np.sin((ys + 0.5 * dx) / l)
        self.fxl = A * math.sin((xs[0] - 0.5 * dx) / l)
        self.fyl = math.sin((ys[0] - 0.5 * dx) / l)
        self.maxc = self._donor_coefficient_bound()
        self.work_x = np.zeros(nx)
        self.work_y = np.zeros(ny)
        self.mu = 0.0
        self._choose_path()
        if config.scheme == "high-order":
            self.rhs1 = np.zeros((ny, nx))
            self.rhs2 = np.zeros((ny, nx))

    def _donor_coefficient_bound(self):
        """Exact sup over nodes of the donor outflow coefficient sum."""
        u1f = self.gy[:, None] * self.fx[None, :]
        u2f = self.gxd[None, :] * self.fy[:, None]
        a1 = np.maximum(u1f, 0.0)
        b1 = np.maximum(-u1f, 0.0)
        a2 = np.maximum(u2f, 0.0)
        b2 = np.maximum(-u2f, 0.0)
        nx = self.xs.size
        if self.bcx == 2:
            cx = a1 + np.roll(b1, 1, axis=1)
        else:
            cx = np.zeros((self.ys.size, nx))
            cx[:, 1:-1] = a1[:, 1:] + b1[:, :-1]
            if self.bcx == 1:
                cx[:, 0] = a1[:, 0] + np.maximum(-self.fxl * self.gy, 0.0)
        if self.bcy == 0:
            cy = a2 + np.roll(b2, 1, axis=0)
        else:
            cy = np.zeros_like(cx)
            cy[1:, :] = a2[1:, :] + b2[:-1, :]
            cy[0, :] = a2[0, :] + np.maximum(-self.fyl * self.gxd, 0.0)
        return float(np.max(cx + cy))

    def _choose_path(self):
        cfg = self.config
        dx = self.dx
        l = self.flow.l
        M = self.reaction.M if self.reaction is not None else 0.0
        dt_max = cfg.dt_max
        if dt_max is None:
            dt_max = 0.05 / M if M > 0.0 else l * l / 100.0
        dt_max = min(dt_max, cfg.t_end)
        if cfg.scheme == "high-order":
            self.path = "high-order"
            # advective and diffusive rates add for the two-stage scheme; the
            # coefficients are measured stability limits with a ~20% margin
            rate = self.maxc / (1.1 * dx) + 1.0 / (0.22 * dx * dx)
            self.dt_bound = min(1.0 / rate, dt_max)
            return
        dt_fused = cfg.cfl / (self.maxc / dx + 4.0 / (dx * dx))
        dt_split = min(cfg.cfl * dx / self.maxc if self.maxc > 0 else math.inf,
                       dt_max)
        if cfg.force_path == "fused":
            use_fused = True
        elif cfg.force_path == "split":
            use_fused = False
        else:
            use_fused = dt_fused * SPLIT_COST_RATIO >= dt_split
        if use_fused:
            self.path = "monotone[fused]"
            self.dt_bound = min(dt_fused, dt_max)
        else:
            self.path = "monotone[split]"
            self.dt_bound = dt_split

    def set_dt(self, dt):
        if dt > self.dt_bound * (1.0 + 1e-12):
            raise NumericalAbort(
                "cfl-violation: dt=%g exceeds the stable bound %g for path %s"
                % (dt, self.dt_bound, self.path))
        self.dt = float(dt)
        dx = self.dx
        if self.path == "monotone[fused]":
            self.mu = dt / (dx * dx)
        elif self.path == "monotone[split]":
            lam = 0.5 * dt / (dx * dx)
            self.lam = lam
            nx = self.xs.size
            ny = self.ys.size
            if self.bcx == 2:
                self.xfac = _prefactor_tridiag(nx, lam, cyclic=True)
                self.ilo = 0
            elif self.bcx == 1:
                self.xfac = _prefactor_tridiag(nx - 1, lam, mirror_first=True)
                self.ilo = 0
            else:
                self.xfac = _prefactor_tridiag(nx - 2, lam)
                self.ilo = 1
            if self.bcy == 0:
                self.yfac = _prefactor_tridiag(ny, lam, cyclic=True)
            else:
                self.yfac = _prefactor_tridiag(ny, lam, mirror_first=True,
                                               mirror_last=True)
        self._setup_reaction()

    def _setup_reaction(self):
        r = self.reaction
        self.react = None
        if r is None or r.M == 0.0:
            return
        mdt = r.M * self.dt
        nsub = max(1, int(math.ceil(mdt / 0.05)))
        if r.table is None:
            th0 = r.theta0
            cre = 1.0 / ((1.0 - th0) ** 2)
            self.react = lambda T: _kernels.react_default(T, mdt, nsub, th0, cre, True)
        else:
            xt = np.ascontiguousarray(r.table[0])
            yt = np.ascontiguousarray(r.table[1])
            self.react = lambda T: _kernels.react_table(T, mdt, nsub, xt, yt)

    def _diffuse_half(self, T):
        """One implicit diffusion half-step; returns the Dirichlet-end mass loss."""
        cp, invd, sub, z, zfac = self.xfac
        leak = 0.0
        if self.bcx == 2:
            _kernels.tri_sweep_rows_cyclic(T, cp, invd, sub, z, zfac, self.work_x)
        else:
            _kernels.tri_sweep_rows(T, cp, invd, sub, self.work_x, self.ilo)
            n = cp.size
            if self.bcx == 0:
                leak += self.lam * float(np.dot(self.wy, T[:, self.ilo]))
                leak += self.lam * float(np.dot(self.wy, T[:, self.ilo + n - 1]))
            else:
                # half grid: the right end stands for both strip ends
                leak += 2.0 * self.lam * float(np.dot(self.wy, T[:, n - 1]))
        cp, invd, sub, z, zfac = self.yfac
        if self.bcy == 0:
            _kernels.tri_sweep_cols_cyclic(T, cp, invd, sub, z, zfac, self.work_y)
        else:
            _kernels.tri_sweep_cols(T, cp, invd, sub, self.work_y)
        return leak

    def advance(self, Told, Tnew):
        """One full step reading Told, writing Tnew (Told may be scratched);
        returns the full-strip boundary leak in nodal-sum units."""
        dtdx = self.dt / self.dx
        if self.path == "monotone[fused]":
            leak = _kernels.advdiff_upwind(
                Told, Tnew, self.fx, self.gy, self.gxd, self.fy, dtdx, self.mu,
                self.bcx, self.bcy, self.fxl, self.fyl, self.wy)
            if self.react is not None:
                self.react(Tnew)
            return leak
        if self.path == "monotone[split]":
            leak = self._diffuse_half(Told)
            leak += _kernels.advdiff_upwind(
                Told, Tnew, self.fx, self.gy, self.gxd, self.fy, dtdx, 0.0,
                self.bcx, self.bcy, self.fxl, self.fyl, self.wy)
            if self.react is not None:
                self.react(Tnew)
            leak += self._diffuse_half(Tnew)
            return leak
        # high-order: two-stage time stepping of the biased-upwind RHS
        invdx = 1.0 / self.dx
        nu = 1.0 / (self.dx * self.dx)
        _kernels.rhs_highorder(Told, self.rhs1, self.fx, self.gy, self.gxd,
                               self.fy, invdx, nu)
        np.multiply(self.rhs1, self.dt, out=self.rhs1)
        np.add(Told, self.rhs1, out=Tnew)
        _kernels.rhs_highorder(Tnew, self.rhs2, self.fx, self.gy, self.gxd,
                               self.fy, invdx, nu)
        np.multiply(self.rhs2, self.dt, out=self.rhs2)
        np.add(Tnew, self.rhs2, out=Tnew)
        np.add(Tnew, Told, out=Tnew)
        np.multiply(Tnew, 0.5, out=Tnew)
        if self.react is not None:
            self.react(Tnew)
        return 0.0


def _mirror_check(values, axis, what):
    """Verify reflection symmetry of data before reducing the grid."""
    if axis == 1:
        ic = values.shape[1] // 2
        a = values[:, ic + 1:]
        b = values[:, ic - 1::-1]
    else:
        n = values.shape[0] // 2
        a = values[n + 1:, :]
        b = values[n - 1:0:-1, :]
    if a.shape != b.shape or not np.allclose(a, b, rtol=0.0, atol=1e-12):
        raise ValidationError(
            "data-not-symmetric: %s reduction needs mirror-symmetric data" % what)


def _restrict(values, sym_x, sym_y):
    if sym_y:
        values = values[:values.shape[0] // 2 + 1, :]
    if sym_x:
        values = values[:, values.shape[1] // 2:]
    # always copy: the result becomes a swap buffer, and aliasing the
    # caller's array would let the integrator overwrite the initial data
    return np.array(values, copy=True)


def _reconstruct(values, sym_x, sym_y, full_shape):
    if sym_x:
        nx = full_shape[1]
        ic = nx // 2
        out = np.empty((values.shape[0], nx), dtype=values.dtype)
        out[:, ic:] = values
        out[:, :ic] = values[:, 1:ic + 1][:, ::-1]
        values = out
    if sym_y:
        ny = full_shape[0]
        n = ny // 2
        out = np.empty((ny, values.shape[1]), dtype=values.dtype)
        out[:n + 1, :] = values
        out[n + 1:, :] = values[n - 1:0:-1, :]
        values = out
    return values


class _Monitors:
    """Weighted full-strip monitors evaluated on a possibly reduced grid."""

    def __init__(self, stepper, seed_mask, theta_burn):
        self.dx = stepper.dx
        self.dA = stepper.dx ** 2
        nx = stepper.xs.size
        ny = stepper.ys.size
        self.sym_x = stepper.bcx == 1
        self.sym_y = stepper.bcy == 1
        wx = np.ones(nx)
        wy = np.ones(ny)
        if self.sym_x:
            wx[1:] = 2.0
        if self.sym_y:
            wy[1:-1] = 2.0
        self.wx = wx
        self.wy = wy
        self.w2 = wy[:, None] * wx[None, :]
        self.periodic_x = stepper.bcx == 2
        self.seed_mask = seed_mask
        self.theta_burn = theta_burn
        u1, u2 = stepper.flow.velocity(stepper.xs[None, :], stepper.ys[:, None])
        self.u1 = u1
        self.u2 = u2

    def row(self, T, t):
        sup = float(T.max())
        l1 = float(np.sum(self.w2 * T)) * self.dA
        burned = float(np.sum(self.w2 * (T >= self.theta_burn))) * self.dA
        if self.seed_mask is not None and self.seed_mask.any():
            min_seed = float(T[self.seed_mask].min())
        else:
            min_seed = sup
        return [t, sup, l1, burned, min_seed]

    def dissipation(self, T):
        """Instantaneous int |grad T|^2 over the full strip."""
        dxf = np.diff(T, axis=1) / self.dx
        if self.periodic_x:
            wrap = (T[:, :1] - T[:, -1:]) / self.dx
            dxf = np.hstack([dxf, wrap])
        xw = (2.0 if self.sym_x else 1.0) * self.wy[:, None]
        total = np.sum(xw * dxf * dxf)
        if self.sym_y:
            dyf = np.diff(T, axis=0) / self.dx
            total += np.sum(2.0 * self.wx[None, :] * dyf * dyf)
        else:
            dyf = (np.roll(T, -1, axis=0) - T) / self.dx
            total += np.sum(self.wx[None, :] * dyf * dyf)
        return float(total) * self.dA

    def oscillation(self, T):
        """Instantaneous int |u . grad T|^2 (unit-amplitude flow)."""
        if self.sym_y:
            up = np.vstack([T[1:2, :], T[:-1, :]])
            dn = np.vstack([T[1:, :], T[-2:-1, :]])
        else:
            up = np.roll(T, 1, axis=0)
            dn = np.roll(T, -1, axis=0)
        gy = (dn - up) / (2.0 * self.dx)
        if self.periodic_x:
            gx = (np.roll(T, -1, axis=1) - np.roll(T, 1, axis=1)) / (2.0 * self.dx)
        else:
            gx = np.zeros_like(T)
            gx[:, 1:-1] = (T[:, 2:] - T[:, :-2]) / (2.0 * self.dx)
            # even data: the x-derivative vanishes on a mirror line
        adv = self.u1 * gx + self.u2 * gy
        return float(np.sum(self.w2 * adv * adv)) * self.dA


def _build_run(flow, reaction, config, domain, vals_full, dt_fixed):
    sx, sy = config.symmetric_x, config.symmetric_y
    T = _restrict(vals_full, sx, sy)
    if sx:
        xs = domain.xs[domain.nx // 2:]
        bcx = 1
    else:
        xs = domain.xs
        bcx = 2 if domain.periodic_x else 0
    if sy:
        ys = domain.ys[:domain.ny // 2 + 1]
        bcy = 1
    else:
        ys = domain.ys
        bcy = 0
    wy = np.ones(ys.size)
    if sy:
        wy[1:-1] = 2.0
    stepper = _Stepper(flow, reaction, config, xs, ys, domain.dx, bcx, bcy, wy)
    if dt_fixed is None:
        if config.dt is not None:
            dt = float(config.dt)
        else:
            n = max(1, int(math.ceil(config.t_end / stepper.dt_bound - 1e-12)))
            dt = config.t_end / n
    else:
        dt = dt_fixed
    stepper.set_dt(dt)
    return T, stepper


def run(initial, config, flow, reaction=None):
    """Integrate the model from the given data; returns a RunRecord.

    The reaction may be None (pure transport-diffusion).  Verdict logic lives
    elsewhere; this only evolves, monitors, and stops early on the configured
    events.  The step count is chosen so the horizon t_end is hit exactly.
    """
    t_start = _time.perf_counter()
    domain = initial.domain
    if abs(domain.l - flow.l) > 1e-12 * max(1.0, flow.l):
        raise ValidationError("flow cell size %g does not match domain %g" % (flow.l, domain.l))
    if config.symmetric_x and domain.periodic_x:
        raise ValidationError("symmetric_x requires the Dirichlet-truncated strip")
    if config.symmetric_y and domain.n_cells_y != 2:
        raise ValidationError("symmetric_y requires the standard two-cell strip")
    values = initial.values
    if config.symmetric_x:
        _mirror_check(values, 1, "x")
    if config.symmetric_y:
        _mirror_check(values, 0, "y")

    theta0 = reaction.theta0 if reaction is not None else 0.0
    theta_burn = config.theta_burn
    if theta_burn is None:
        theta_burn = 0.5 * (1.0 + theta0)
    monotone = config.scheme == "monotone"

    record = RunRecord()
    hi0 = float(values.max())
    bound_hi = max(1.0, hi0) if reaction is not None else hi0
    bound_lo = min(0.0, float(values.min()))

    T, stepper = _build_run(flow, reaction, config, domain, values, None)
    dt = stepper.dt
    n_steps = max(1, int(round(config.t_end / dt)))
    record.dt = dt
    record.path_label = stepper.path
    Tn = np.empty_like(T)

    seed_mask = T >= 1.0 - 1e-12
    if not seed_mask.any():
        # no saturated nodes (smooth data): track the hottest node instead
        seed_mask = T >= hi0 - 1e-12
    mon = _Monitors(stepper, seed_mask, theta_burn)
    floor_run = None
    if config.floor_values is not None:
        floor_run = _restrict(np.asarray(config.floor_values, dtype=float),
                              config.symmetric_x, config.symmetric_y)

    cur_domain = domain
    extensions = 0
    stride = config.monitor_stride or max(1, n_steps // 400)
    rows = []
    diss_cum = 0.0
    osc_cum = 0.0
    diss_prev = mon.dissipation(T)
    osc_prev = mon.oscillation(T)
    t_prev_mon = 0.0
    row0 = mon.row(T, 0.0)
    rows.append(row0 + [0.0, 0.0])
    record.initial_mass = row0[2]
    record.min_sup = row0[1]
    snap_left = list(config.snapshot_times)
    leak = 0.0
    leak_warned = False
    status = "completed"
    final_t = 0.0

    def full_field(Tcur, t):
        vals = _reconstruct(Tcur, config.symmetric_x, config.symmetric_y,
                            cur_domain.shape)
        meta = {"A": config.A, "M": reaction.M if reaction is not None else 0.0,
                "theta0": theta0}
        return Field(cur_domain, vals, t, meta)

    step_i = 0
    while step_i < n_steps:
        if config.max_updates is not None and \
                record.updates + T.size > config.max_updates:
            record.events.append((final_t, "cost-capped"))
            status = "cost-capped"
            break
        T, Tn = Tn, T                      # Tn now holds the previous state
        leak_step = stepper.advance(Tn, T)
        leak += leak_step * mon.dA
        record.updates += T.size
        step_i += 1
        t = step_i * dt
        final_t = t
        if config.inject_nan_step is not None and step_i == config.inject_nan_step:
            T[T.shape[0] // 2, T.shape[1] // 2] = math.nan

        if step_i % stride != 0 and step_i != n_steps:
            continue

        if not np.isfinite(T).all():
            raise NumericalAbort("nan-detected: non-finite field at t=%g" % t)
        if monotone:
            tmin = float(T.min())
            tmax = float(T.max())
            if tmin < bound_lo - 1e-10 or tmax > bound_hi + 1e-10:
                raise NumericalAbort(
                    "max-principle violation at t=%g: range [%g, %g] outside [%g, %g]"
                    % (t, tmin, tmax, bound_lo, bound_hi))

        row = mon.row(T, t)
        d_now = mon.dissipation(T)
        o_now = mon.oscillation(T)
        diss_cum += 0.5 * (diss_prev + d_now) * (t - t_prev_mon)
        osc_cum += 0.5 * (osc_prev + o_now) * (t - t_prev_mon)
        diss_prev, osc_prev, t_prev_mon = d_now, o_now, t
        rows.append(row + [diss_cum, osc_cum])
        sup = row[1]
        if sup < record.min_sup:
            record.min_sup = sup
            record.t_min_sup = t

        while snap_left and t >= snap_left[0] - 1e-12:
            snap_left.pop(0)
            record.snapshots.append(full_field(T, t))

        if floor_run is not None:
            viol = float(np.max(floor_run - T))
            if viol > record.floor_violation:
                record.floor_violation = viol
            if viol > config.floor_tol and "floor-violated" not in record.event_names():
                record.events.append((t, "floor-violated"))

        if leak > config.leak_tol * max(record.initial_mass, 1e-300):
            if config.auto_extend and extensions < config.max_extensions:
                fld = full_field(T, t)
                old = cur_domain
                cur_domain = StripDomain(flow, 2 * old.x_half_cells,
                                         old.n_per_cell, old.n_cells_y)
                off = (cur_domain.nx - old.nx) // 2
                vals = np.zeros(cur_domain.shape)
                vals[:, off:off + old.nx] = fld.values
                mask_full = _reconstruct(seed_mask.astype(np.float64),
                                         config.symmetric_x, config.symmetric_y,
                                         old.shape)
                mask_pad = np.zeros(cur_domain.shape)
                mask_pad[:, off:off + old.nx] = mask_full
                if floor_run is not None:
                    fl_full = _reconstruct(floor_run, config.symmetric_x,
                                           config.symmetric_y, old.shape)
                    fl_pad = np.zeros(cur_domain.shape)
                    fl_pad[:, off:off + old.nx] = fl_full
                    floor_run = _restrict(fl_pad, config.symmetric_x,
                                          config.symmetric_y)
                extensions += 1
                record.extensions = extensions
                record.events.append((t, "domain-extended"))
                T, stepper = _build_run(flow, reaction, config, cur_domain,
                                        vals, dt)
                Tn = np.empty_like(T)
                seed_mask = _restrict(mask_pad, config.symmetric_x,
                                      config.symmetric_y) > 0.5
                mon = _Monitors(stepper, seed_mask, theta_burn)
                leak = 0.0  # the warning threshold restarts on the wider strip
            elif not leak_warned:
                leak_warned = True
                warnings.warn(
                    "boundary-mass-leak: %.3g of initial mass lost through x=+-X "
                    "by t=%g; widen the strip or enable auto_extend" %
                    (leak / max(record.initial_mass, 1e-300), t))
                record.events.append((t, "boundary-mass-leak"))

        if config.stop_on_quench and reaction is not None and sup <= theta0:
            record.events.append((t, "quenched"))
            status = "quenched"
            break
        if config.stop_on_rebound and record.min_sup <= config.rebound_dip \
                and sup >= config.rebound_level \
                and record.t_min_sup > 0.0 \
                and t >= config.rebound_dwell * record.t_min_sup:
            record.events.append((t, "rebound"))
            status = "rebound"
            break

    record.monitor = np.array(rows)
    record.status = status
    record.n_steps = step_i
    record.leak = leak
    record.field = full_field(T, final_t)
    record.wall_time = _time.perf_counter() - t_start
    return record


def step(field, config, flow, reaction=None):
    """Advance a field by a single stable step on the full grid (test helper)."""
    domain = field.domain
    stepper = _Stepper(flow, reaction, config, domain.xs, domain.ys, domain.dx,
                       2 if domain.periodic_x else 0, 0, np.ones(domain.ny))
    stepper.set_dt(config.dt if config.dt is not None else stepper.dt_bound)
    Told = field.values.copy()
    Tnew = np.empty_like(Told)
    stepper.advance(Told, Tnew)
    return Field(domain, Tnew, field.time + stepper.dt, field.meta)


class CellRecord:
    """Output of run_dirichlet_cell: stored profiles and the mass history."""

    def __init__(self, xs, ys, dx, act, store_times, Q_store, mass_times, mass,
                 dt, A, h0, l):
        self.xs = xs
        self.ys = ys
        self.dx = dx
        self.act = act
        self.store_times = store_times
        self.Q_store = Q_store
        self.mass_times = mass_times
        self.mass = mass
        self.dt = dt
        self.A = A
        self.h0 = h0
        self.l = l

    @property
    def active_area(self):
        return float(self.act.sum()) * self.dx ** 2


def run_dirichlet_cell(flow, A, h0, t_max, sigma=0.0, g0=1.0, n_per_cell=256,
                       n_store=257, theta_min=0.3, cfl=0.9):
    """Explicit solve of Q_t + A u . grad Q = Lap Q on {h > h0} in one cell.

    The domain is the region of the first positive cell enclosed by the
    streamline h = h0; the boundary condition is the (possibly time-dependent)
    signal sigma.  Cut cells use first-order Shortley-Weller weights with the
    boundary fraction clamped at theta_min; the boundary streamline is tangent
    to the flow, so the clamp costs little accuracy.  Returns n_store
    uniformly spaced stored profiles (the step count is rounded up to a
    multiple of n_store - 1 so storage times are exact) and the active-region
    mass after every step.
    """
    l = flow.l
    if not (1e-6 * l <= h0 <= (1.0 - 1e-9) * l):
        raise ValidationError("level-out-of-range: need 0 < h0 < l, got h0=%r l=%r" % (h0, l))
    if not t_max > 0.0:
        raise ValidationError("t_max must be positive, got %r" % (t_max,))
    if n_store < 2:
        raise ValidationError("n_store must be >= 2, got %r" % (n_store,))
    n = int(n_per_cell)
    dx = math.pi * l / n
    xs = dx * np.arange(n + 1)
    ys = dx * np.arange(n + 1)
    F = flow.stream(xs[None, :], ys[:, None]) - h0
    act = (F > 0.0).astype(np.uint8)
    if act.sum() < 16:
        raise ValidationError(
            "degenerate-contour: level h0=%g leaves fewer than 16 active nodes" % (h0,))

    # Shortley-Weller fractional arms (units of dx), clamped from below
    hW = np.ones_like(F)
    hE = np.ones_like(F)
    hS = np.ones_like(F)
    hN = np.ones_like(F)
    inner = act[1:-1, 1:-1].astype(bool)
    Fc = F[1:-1, 1:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        def arm(Fn, cut):
            th = Fc / (Fc - Fn)
            return np.where(cut, np.clip(th, theta_min, 1.0), 1.0)
        hW[1:-1, 1:-1] = arm(F[1:-1, :-2], inner & (act[1:-1, :-2] == 0))
        hE[1:-1, 1:-1] = arm(F[1:-1, 2:], inner & (act[1:-1, 2:] == 0))
        hS[1:-1, 1:-1] = arm(F[:-2, 1:-1], inner & (act[:-2, 1:-1] == 0))
        hN[1:-1, 1:-1] = arm(F[2:, 1:-1], inner & (act[2:, 1:-1] == 0))
    inv_dx2 = 1.0 / (dx * dx)
    cW = 2.0 * inv_dx2 / (hW * (hW + hE))
    cE = 2.0 * inv_dx2 / (hE * (hW + hE))
    cS = 2.0 * inv_dx2 / (hS * (hS + hN))
    cN = 2.0 * inv_dx2 / (hN * (hS + hN))
    cC = 2.0 * inv_dx2 * (1.0 / (hW * hE) + 1.0 / (hS * hN))

    ufx = A * np.sin((xs[:-1] + 0.5 * dx) / l)
    gyv = np.cos(ys / l)
    gxv = -A * np.cos(xs / l)
    ufy = np.sin((ys[:-1] + 0.5 * dx) / l)

    u1f = np.abs(gyv[:, None] * ufx[None, :])
    u2f = np.abs(gxv[None, :] * ufy[:, None])
    adv_rate = np.zeros_like(F)
    adv_rate[1:-1, 1:-1] = (u1f[1:-1, 1:] + u1f[1:-1, :-1]
                            + u2f[1:, 1:-1] + u2f[:-1, 1:-1]) / dx
    rate = np.where(act == 1, cC + adv_rate, 0.0)
    dt0 = cfl / float(rate.max())
    blocks = n_store - 1
    n_steps = int(math.ceil(t_max / dt0 / blocks)) * blocks
    dt = t_max / n_steps

    sig_fun = sigma if callable(sigma) else (lambda t, s=float(sigma): s)
    Q = np.zeros((n + 1, n + 1))
    actb = act == 1
    if np.isscalar(g0):
        Q[actb] = float(g0)
    else:
        g0 = np.asarray(g0, dtype=float)
        Q[actb] = g0[actb]
    sig0 = float(sig_fun(0.0))
    Q[~actb] = sig0
    Qn = Q.copy()

    dA = dx * dx
    mass = np.empty(n_steps + 1)
    mass[0] = float(Q[actb].sum()) * dA
    Q_store = np.empty((n_store, n + 1, n + 1))
    Q_store[0] = Q
    store_every = n_steps // blocks
    dtdx = dt / dx
    sig_prev = sig0
    k_store = 1
    for k in range(n_steps):
        sig_now = float(sig_fun(k * dt))
        if sig_now != sig_prev:
            Q[~actb] = sig_now
            Qn[~actb] = sig_now
            sig_prev = sig_now
        total = _kernels.cell_step(Q, Qn, act, cW, cE, cS, cN, cC,
                                   ufx, ufy, gyv, gxv, dtdx, dt, sig_now)
        Q, Qn = Qn, Q
        mass[k + 1] = total * dA
        if (k + 1) % store_every == 0:
            if not np.isfinite(total):
                raise NumericalAbort("nan-detected in cell run at t=%g" % ((k + 1) * dt))
            Q_store[k_store] = Q
            k_store += 1
    store_times = t_max * np.arange(n_store) / blocks
    mass_times = dt * np.arange(n_steps + 1)
    return CellRecord(xs, ys, dx, act, store_times, Q_store, mass_times, mass,
                      dt, A, h0, l)
