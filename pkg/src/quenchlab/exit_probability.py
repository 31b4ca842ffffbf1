"""Survival probability of the drift-diffusion exit problem in one cell.

Omega is the region of a positive cell enclosed by the streamline h = h0;
Q(t, x) is the probability that the diffusion

    dX = -A u(X) dt + sqrt(2) dB,    X_0 = x,

has not left Omega by time t, so that E[g(X_t); alive] realizes e^{-tH}
with H = -Lap + A u . grad.  Q is computed two independent ways: a
counter-based Monte Carlo walker (bit-reproducible under any split of the
paths into blocks) and the masked Dirichlet solve of Q_t = Lap Q - A u .
grad Q (the oracle).  On top of the oracle table sit the boundary-heating
diagnostics: the retained-mass lower bound, the short-time heat uptake,
and the reconstruction

    w(t, x) = e^{-tH} g - int_0^t sigma(s) dQ/dt(t-s, x) ds

of the solution with boundary signal sigma.
"""

import json
import math
import os

import numpy as np

from . import _kernels, artifacts
from .errors import ValidationError
from .pde_solver import run_dirichlet_cell

MC_COLUMNS = ("t", "x", "y", "Q_hat", "stderr", "n_paths")


class ExitProblem:
    """Geometry, drift amplitude, and sampling controls for the exit problem.

    dt_sde obeys dt <= min(1e-3 l^2, 0.1 h0 / A): since max |u| = 1 and
    |grad h| <= 1, the drift then moves a path at most a tenth of the
    h-distance from the cell center's well to the boundary level per step.
    """

    def __init__(self, flow, A, h0, rng_seed=0, n_paths=4096, dt_sde=None):
        l = flow.l
        if not 0.0 < h0 < l:
            raise ValidationError("ExitProblem needs 0 < h0 < l, got h0=%r" % (h0,))
        if A < 0.0:
            raise ValidationError("amplitude must be nonnegative, got %r" % (A,))
        if n_paths < 1:
            raise ValidationError("n_paths must be positive, got %r" % (n_paths,))
        bound = 1e-3 * l * l
        if A > 0.0:
            bound = min(bound, 0.1 * h0 / A)
        if dt_sde is None:
            dt_sde = bound
        elif not 0.0 < dt_sde <= bound * (1.0 + 1e-12):
            raise ValidationError(
                "dt_sde=%g violates the step bound %g (resolution target h0)"
                % (dt_sde, bound))
        self.flow = flow
        self.A = float(A)
        self.h0 = float(h0)
        self.rng_seed = int(rng_seed)
        self.n_paths = int(n_paths)
        self.dt_sde = float(dt_sde)


class SurvivalEstimate:
    """Monte Carlo Q-hat on start points x monitor times, with its noise."""

    def __init__(self, times, points, q, stderr, n_paths):
        self.times = times
        self.points = points
        self.q = q
        self.stderr = stderr
        self.n_paths = n_paths

    def rows(self):
        """CSV rows (t, x, y, Q_hat, stderr, n_paths), point-major."""
        out = []
        for p in range(self.points.shape[0]):
            x, y = self.points[p]
            for k in range(self.times.size):
                out.append((self.times[k], x, y, self.q[p, k],
                            self.stderr[p, k], self.n_paths))
        return out


def simulate_survival(problem, start_points, t_max, n_times=33):
    """Fraction of paths from each start point still inside Omega over time.

    Exit is detected by the sign of h(X) - h0 plus a per-step Brownian
    bridge correction, so the estimate is not biased upward by the path
    skipping over the boundary between steps.  Per-estimate standard errors
    come from the binomial count.
    """
    flow = problem.flow
    l = flow.l
    if not 0.0 < t_max <= 10.0 * l * l:
        raise ValidationError("simulate_survival needs 0 < t_max <= 10 l^2")
    pts = np.atleast_2d(np.asarray(start_points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("start_points must be (k, 2) coordinates")
    h = flow.stream(pts[:, 0], pts[:, 1])
    if np.any(h <= problem.h0):
        bad = int(np.argmin(h))
        raise ValidationError(
            "start-point-outside-Omega: h(%g, %g)=%g is not above h0=%g"
            % (pts[bad, 0], pts[bad, 1], h[bad], problem.h0))
    n_steps = max(1, int(math.ceil(t_max / problem.dt_sde - 1e-12)))
    dt = t_max / n_steps
    mon = np.unique(np.round(np.linspace(0.0, n_steps, n_times)).astype(np.int64))
    q = np.empty((pts.shape[0], mon.size))
    for p in range(pts.shape[0]):
        counts = np.zeros(mon.size, dtype=np.int64)
        # probe index in the high bits keeps per-path streams disjoint
        _kernels.survival_paths(pts[p, 0], pts[p, 1], problem.n_paths,
                                p << 40, problem.rng_seed, problem.A, l,
                                problem.h0, dt, n_steps, mon, counts)
        q[p] = counts / problem.n_paths
    stderr = np.sqrt(q * (1.0 - q) / problem.n_paths)
    return SurvivalEstimate(mon * dt, pts, q, stderr, problem.n_paths)


def pde_exit_oracle(problem, t_max, n_per_cell=256, n_store=257):
    """Dirichlet-solve Q on the masked cell grid; the reference for the MC.

    Returns the full space-time table (a CellRecord): n_store stored
    profiles at uniform times plus the active-region mass after every step.
    """
    return run_dirichlet_cell(problem.flow, problem.A, problem.h0, t_max,
                              sigma=0.0, g0=1.0, n_per_cell=n_per_cell,
                              n_store=n_store)


def lowercell_check(problem, C1, record=None, n_per_cell=128, n_store=65):
    """Minimum of int_Omega Q dx / l^2 over t <= C1 l^2 (retained mass).

    The mass is non-increasing, so the minimum sits at the horizon; the
    whole series is scanned anyway as a cheap sanity check.
    """
    if not 0.5 <= C1 <= 4.0:
        raise ValidationError("lowercell_check needs C1 in [0.5, 4], got %r" % (C1,))
    l = problem.flow.l
    horizon = C1 * l * l
    if record is None:
        record = pde_exit_oracle(problem, horizon, n_per_cell, n_store)
    elif record.mass_times[-1] < horizon * (1.0 - 1e-12):
        raise ValidationError(
            "record horizon %g does not cover C1 l^2 = %g"
            % (record.mass_times[-1], horizon))
    keep = record.mass_times <= horizon * (1.0 + 1e-12)
    return float(record.mass[keep].min()) / (l * l)


def heat_uptake(problem, t, record=None, n_per_cell=128, n_store=65):
    """int_Omega (1 - Q(t, x)) dx: heat absorbed from the boundary by time t."""
    l = problem.flow.l
    if not 0.0 < t < l * l:
        raise ValidationError("heat_uptake needs 0 < t < l^2, got %r" % (t,))
    if record is None:
        record = pde_exit_oracle(problem, t, n_per_cell, n_store)
    elif record.mass_times[-1] < t * (1.0 - 1e-12):
        raise ValidationError(
            "record horizon %g does not cover t = %g" % (record.mass_times[-1], t))
    m = float(np.interp(t, record.mass_times, record.mass))
    return record.active_area - m


def _table_rate(record):
    """dQ/dt on the stored-time grid: centered inside, one-sided at the ends.

    With the uniform grid and trapezoid weights this choice telescopes
    exactly, so int_0^t (-dQ/dt) ds reproduces 1 - Q(t) to roundoff.
    """
    dt = record.store_times[1] - record.store_times[0]
    Q = record.Q_store
    dQ = np.empty_like(Q)
    dQ[1:-1] = (Q[2:] - Q[:-2]) / (2.0 * dt)
    dQ[0] = (Q[1] - Q[0]) / dt
    dQ[-1] = (Q[-1] - Q[-2]) / dt
    return dQ


def duhamel_reconstruct(problem, sigma, g, t, record=None, n_per_cell=128,
                        n_store=129):
    """Rebuild w(t) = e^{-tH} g - int_0^t sigma(s) dQ/dt(t-s) ds on the grid.

    sigma is a callable or an array sampled on the oracle's stored-time
    grid; g is a scalar or an array on the mask grid; t must lie on the
    stored-time grid.  Returns (w, record).
    """
    l = problem.flow.l
    if record is None:
        record = pde_exit_oracle(problem, t, n_per_cell, n_store)
    times = record.store_times
    dt = times[1] - times[0]
    it = int(round(t / dt))
    if not (1 <= it < times.size and abs(t - it * dt) <= 1e-9 * max(t, dt)):
        raise ValidationError(
            "grid mismatch: t=%g is not on the oracle time grid (spacing %g)"
            % (t, dt))
    if callable(sigma):
        sig = np.array([float(sigma(s)) for s in times])
    else:
        sig = np.asarray(sigma, dtype=float)
        if sig.shape != times.shape:
            raise ValidationError(
                "grid mismatch: sigma has %d samples, oracle grid has %d"
                % (sig.size, times.size))
    n = record.xs.size - 1
    if not np.isscalar(g):
        g = np.asarray(g, dtype=float)
        if g.shape != (n + 1, n + 1):
            raise ValidationError(
                "grid mismatch: g shape %r does not match the mask grid %r"
                % (g.shape, (n + 1, n + 1)))

    # n_store = it + 1 makes the solver pick the same per-block step count
    # as the record (both round ceil(block/dt0) per block), so e^{-tH}g is
    # evolved with the record's exact dt and the sigma = 1, g = 1 case
    # reproduces w = 1 to roundoff rather than to discretization error
    ehg = run_dirichlet_cell(problem.flow, problem.A, problem.h0, t,
                             sigma=0.0, g0=g, n_per_cell=n,
                             n_store=it + 1).Q_store[-1]
    dQ = _table_rate(record)
    acc = np.zeros_like(ehg)
    for k in range(it + 1):
        w = 0.5 * dt if (k == 0 or k == it) else dt
        acc += w * sig[k] * dQ[it - k]
    return ehg - acc, record


def l1_lower_check(problem, sigma, t, n_per_cell=128, n_store=65):
    """Ratio int_Omega w(t) dx / int_0^t sigma(s) ds for g = 0 boundary heating.

    w solves the cell problem with boundary signal sigma and zero initial
    data (direct masked solve, not the reconstruction).  The ratio is
    invariant under scaling sigma, and the mass lower bound says it stays
    above a positive constant uniformly in A.
    """
    l = problem.flow.l
    if not 0.0 < t <= 4.0 * l * l:
        raise ValidationError("l1_lower_check needs 0 < t <= 4 l^2, got %r" % (t,))
    rec = run_dirichlet_cell(problem.flow, problem.A, problem.h0, t,
                             sigma=sigma, g0=0.0, n_per_cell=n_per_cell,
                             n_store=n_store)
    if callable(sigma):
        sig = np.array([float(sigma(s)) for s in rec.mass_times])
        denom = float(np.trapezoid(sig, rec.mass_times))
    else:
        denom = float(sigma) * t
    if not denom > 0.0:
        raise ValidationError("zero-denominator: sigma integrates to %g" % denom)
    return float(rec.mass[-1]) / denom


def oracle_at(record, t_index, x, y):
    """Bilinear sample of a stored solver profile at one cell point."""
    q = record.Q_store[t_index]
    fx = (float(x) - record.xs[0]) / record.dx
    fy = (float(y) - record.ys[0]) / record.dx
    i = min(max(int(fx), 0), record.xs.size - 2)
    j = min(max(int(fy), 0), record.ys.size - 2)
    ax = min(max(fx - i, 0.0), 1.0)
    ay = min(max(fy - j, 0.0), 1.0)
    return float((1 - ay) * ((1 - ax) * q[j, i] + ax * q[j, i + 1])
                 + ay * ((1 - ax) * q[j + 1, i] + ax * q[j + 1, i + 1]))


# ---------------------------------------------------------------------------
# Q-table artifacts

def save_q_table(path, record):
    """Store the space-time oracle table as raw float64 plus a JSON sidecar."""
    path = os.fspath(path)
    q = np.ascontiguousarray(record.Q_store, dtype=np.float64)
    q.tofile(path)
    sidecar = {
        "nx": int(record.xs.size), "ny": int(record.ys.size),
        "l": record.l, "h0": record.h0, "A": record.A, "dt": record.dt,
        "times": [float(v) for v in record.store_times],
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def load_q_table(path):
    """Inverse of save_q_table: returns (times, Q array (nt, ny, nx), sidecar)."""
    path = os.fspath(path)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    nx, ny = int(sidecar["nx"]), int(sidecar["ny"])
    times = np.asarray(sidecar["times"], dtype=float)
    q = np.fromfile(path, dtype=np.float64)
    if q.size != times.size * ny * nx:
        raise ValidationError(
            "q-table size mismatch: %d values for %d x %d x %d"
            % (q.size, times.size, ny, nx))
    return times, q.reshape(times.size, ny, nx), sidecar


def write_mc_csv(path, estimate):
    """MC summary table (t, x, y, Q_hat, stderr, n_paths)."""
    artifacts.write_table(path, MC_COLUMNS, estimate.rows())
