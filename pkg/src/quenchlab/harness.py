"""Verdict classification and the quenching-threshold experiments.

This module turns raw runs into claims.  A run is Quenched once its sup norm
drops to the ignition temperature theta0: below that level the reaction is
off everywhere and the remaining heat decays to zero, so the event is final.
A run is Propagating when the solution dominates the compactly supported
sub-solution barrier max(Phi, 0) centred on a flow cell of size l >= l_min;
the maximum principle then keeps it above the barrier forever, so ignition
cannot be undone.  Everything else is Undecided at the horizon reached.

On top of classify() sit the two experiments:

* find_A0 brackets the quenching threshold A0(L0) for slab data of
  half-width L0 by doubling the flow amplitude until the first Quenched run,
  then bisecting geometrically.  Both bracket endpoints are re-verified at
  twice the grid resolution; a verdict that flips under refinement marks the
  row unstable.  If no amplitude up to A_max quenches, the row is censored
  ("horizon-exhausted") rather than fatal.
* theorem1_experiment maps verdicts over a (cell size, amplitude) grid and
  reports the transition band around the critical cell size.

scaling_fit turns a sweep of brackets into the growth law A0 ~ C * L0^p by
weighted least squares in log-log coordinates, with a companion fixed-p = 4
fit including the logarithmic correction A0 = C * L0^4 * ln L0.
"""

import math
import multiprocessing

import numpy as np

from . import artifacts
from .errors import ValidationError
from .flowfield import CellularFlow, StripDomain
from .pde_solver import SolverConfig, make_initial_data, run
from .subsolution import build_subsolution, critical_cell_size

QUENCHED = "Quenched"
PROPAGATING = "Propagating"
UNDECIDED = "Undecided"

SWEEP_COLUMNS = ("L0", "A_lo", "A_hi", "verdict_lo", "verdict_hi",
                 "censored", "grid", "horizon")


class Verdict:
    """Outcome of one run, with the time that certifies it.

    Quenched carries the first monitored time with sup T <= theta0,
    Propagating the first time the barrier comparison held, Undecided the
    horizon actually reached.  The note records why a run stopped early
    (rebound, cost cap) or why propagation evidence failed.
    """

    def __init__(self, kind, t, note=""):
        if kind not in (QUENCHED, PROPAGATING, UNDECIDED):
            raise ValidationError("unknown verdict kind %r" % (kind,))
        self.kind = kind
        self.t = float(t)
        self.note = str(note)

    @property
    def quenched(self):
        return self.kind == QUENCHED

    @property
    def propagating(self):
        return self.kind == PROPAGATING

    def __eq__(self, other):
        if not isinstance(other, Verdict):
            return NotImplemented
        return self.kind == other.kind and self.t == other.t

    def __repr__(self):
        s = "Verdict(%s, t=%.6g" % (self.kind, self.t)
        return s + (", %s)" % self.note if self.note else ")")


def _burned_tail_monotone(record, slack):
    """Non-decreasing burned area over the trailing quarter of the run."""
    t = record.monitor_column("t")
    if len(t) < 3:
        return False
    tail = t >= t[-1] - 0.25 * (t[-1] - t[0])
    b = record.monitor_column("burned_area")[tail]
    if len(b) < 2:
        return False
    return bool(np.all(np.diff(b) >= -slack) and b[-1] >= b[0])


def classify(record, reaction, sub=None, cell=(0, 0), barrier_tol=1e-3):
    """Assign a Verdict to a completed run.

    Quenching is read off the sup-norm monitor: the first recorded time at
    or below theta0.  Propagation requires a sub-solution barrier: the final
    field (and any snapshots, earliest first) must dominate
    max(Phi, 0) - barrier_tol centred on the given cell, and the burned area
    must be non-decreasing over the trailing quarter of the run, so a field
    momentarily above the barrier while collapsing is not misread.  With
    sub=None no propagation evidence is sought and non-quenched runs come
    back Undecided.

    Raises "subsolution-unavailable" when a barrier is supplied but its cell
    size is below critical; there is no propagation certificate to give.
    """
    t = record.monitor_column("t")
    sup = record.monitor_column("sup_norm")
    hit = np.flatnonzero(sup <= reaction.theta0)
    if hit.size:
        return Verdict(QUENCHED, t[hit[0]])
    if sub is None:
        return Verdict(UNDECIDED, t[-1], note=record.status)
    if not sub.applicable:
        raise ValidationError(
            "subsolution-unavailable: cell size l=%g is below the critical "
            "size l_min=%g, no propagation barrier exists" % (sub.l, sub.l_min))

    domain = record.field.domain
    barrier = sub.floor_field(domain, cell)
    candidates = [(f.time, f.values) for f in record.snapshots]
    candidates.append((record.field.time, record.field.values))
    candidates.sort(key=lambda p: p[0])
    t_detect = None
    for tc, vals in candidates:
        if np.all(vals >= barrier - barrier_tol):
            t_detect = tc
            break
    if t_detect is None:
        return Verdict(UNDECIDED, t[-1], note="barrier-not-dominated")
    if not _burned_tail_monotone(record, slack=domain.dx ** 2):
        return Verdict(UNDECIDED, t[-1], note="burned-area-not-monotone")
    return Verdict(PROPAGATING, t_detect)


def slab_run(L0, flow, reaction, A, horizon, n_per_cell,
             margin_cells=8, max_updates=None, dt_max=None):
    """One slab-data run configured for threshold scanning.

    Slab data and the flow share the x -> -x, y -> -y symmetries, so these
    runs integrate a quarter strip.  They stop early on quench or on a
    rebound of the sup norm (dip below the rebound level followed by
    recovery means the run is not on its way to quenching), and optionally
    on an update budget; classify() maps a capped run to Undecided.
    """
    pl = math.pi * flow.l
    half = int(math.ceil(L0 / pl - 1e-9)) + int(margin_cells)
    domain = StripDomain(flow, half, n_per_cell)
    init = make_initial_data(domain, "slab", L0=L0)
    # recovery to 0.8 after a dip below 0.55 means the reaction has won; the
    # regrown plateau sits near 0.85 (end absorption thins it), so the
    # default 0.9 recovery level would never fire
    cfg = SolverConfig(horizon, A=A, symmetric_x=True, symmetric_y=True,
                       stop_on_quench=True, stop_on_rebound=True,
                       rebound_dip=0.55, rebound_level=0.8,
                       max_updates=max_updates, dt_max=dt_max)
    return run(init, cfg, flow, reaction)


class BracketRow:
    """One quenching-threshold bracket at fixed slab half-width.

    A_lo carries the largest amplitude seen not to quench, A_hi the smallest
    seen to quench; censored rows exhausted A_max without quenching and have
    A_hi = nan.  trace lists every probe as (A, n_per_cell, Verdict) in the
    order run, so a row is a complete audit of how its bracket was found.
    """

    def __init__(self, L0, grid, horizon):
        self.L0 = float(L0)
        self.grid = int(grid)
        self.horizon = float(horizon)
        self.A_lo = 0.0
        self.A_hi = math.nan
        self.verdict_lo = None
        self.verdict_hi = None
        self.censored = False
        self.stable = True
        self.trace = []
        self.final_sup = None    # (t, sup) trajectory of last probe if censored
        self.wall_time = 0.0

    @property
    def estimate(self):
        """Geometric midpoint of the bracket; nan for censored rows."""
        if self.censored or not math.isfinite(self.A_hi):
            return math.nan
        if self.A_lo <= 0.0:
            return 0.5 * self.A_hi
        return math.sqrt(self.A_lo * self.A_hi)

    @property
    def log_width(self):
        if self.censored or self.A_lo <= 0.0:
            return math.inf
        return math.log(self.A_hi / self.A_lo)

    def csv_values(self):
        return (self.L0, self.A_lo, self.A_hi,
                self.verdict_lo.kind if self.verdict_lo else "",
                self.verdict_hi.kind if self.verdict_hi else "",
                self.censored, self.grid, self.horizon)


def find_A0(L0, flow, reaction, horizon=None, tol_rel=0.25, A_start=1.0,
            A_max=1e5, n_per_cell=128, margin_cells=8, max_updates=None,
            verify=True, verify_updates=None, max_refine=2):
    """Bracket the quenching threshold A0(L0) for slab initial data.

    Doubles the amplitude from A_start until the first Quenched run, then
    bisects geometrically until the bracket is relatively narrower than
    tol_rel.  If the starting amplitude already quenches, an A = 0 control
    run becomes the lower endpoint and the bisection switches to arithmetic
    midpoints.  With verify set, both endpoints are re-run at twice the
    resolution: the quench endpoint uncapped, the non-quench endpoint under
    verify_updates (default eight times max_updates, matching its cost
    ratio).  A quench verdict that fails to reproduce pushes the scan
    upward again, at most max_refine times, before the row is marked
    unstable.  Exhausting A_max censors the row instead of raising.
    """
    if not L0 > 0.0:
        raise ValidationError("slab half-width L0 must be positive, got %r" % (L0,))
    if not 0.0 < tol_rel < 1.0:
        raise ValidationError("tol_rel must lie in (0, 1), got %r" % (tol_rel,))
    if not 0.0 < A_start <= A_max:
        raise ValidationError("need 0 < A_start <= A_max, got %r, %r" % (A_start, A_max))
    if horizon is None:
        horizon = 20.0 * max(flow.l ** 2, 1.0 / reaction.M)
    if verify_updates is None and max_updates is not None:
        verify_updates = 8 * max_updates

    row = BracketRow(L0, n_per_cell, horizon)

    def probe(A, n, cap):
        rec = slab_run(L0, flow, reaction, A, horizon, n,
                       margin_cells=margin_cells, max_updates=cap)
        v = classify(rec, reaction)
        row.trace.append((float(A), int(n), v))
        row.wall_time += rec.wall_time
        return v, rec

    # doubling scan for the first quenching amplitude
    lo = hi = None
    v_lo = v_hi = None
    A = float(A_start)
    last_rec = None
    while A <= A_max * (1.0 + 1e-12):
        v, rec = probe(A, n_per_cell, max_updates)
        last_rec = rec
        if v.quenched:
            hi, v_hi = A, v
            break
        lo, v_lo = A, v
        A *= 2.0

    if hi is None:
        row.censored = True
        row.A_lo, row.verdict_lo = lo, v_lo
        row.final_sup = np.column_stack([last_rec.monitor_column("t"),
                                         last_rec.monitor_column("sup_norm")])
        return row

    if lo is None:
        # A_start already quenches; the control run anchors the bracket at 0
        v_lo, _ = probe(0.0, n_per_cell, max_updates)
        lo = 0.0
        if v_lo.quenched:
            # quenches without any flow; thresholding is vacuous here
            row.A_lo, row.A_hi = 0.0, 0.0
            row.verdict_lo = row.verdict_hi = v_lo
            return row

    for _ in range(max_refine + 1):
        # geometric bisection; arithmetic when the lower endpoint is zero
        guard = 0
        while (hi - lo) / hi > tol_rel and guard < 80:
            mid = math.sqrt(lo * hi) if lo > 0.0 else 0.5 * hi
            v, _ = probe(mid, n_per_cell, max_updates)
            if v.quenched:
                hi, v_hi = mid, v
            else:
                lo, v_lo = mid, v
            guard += 1
        if not verify:
            break
        v2, _ = probe(hi, 2 * n_per_cell, None)
        if v2.quenched:
            v_hi = v2
            if lo > 0.0:
                v2lo, _ = probe(lo, 2 * n_per_cell, verify_updates)
                if v2lo.quenched:
                    # finer grid quenches where the coarse one did not
                    row.stable = False
            break
        # quench verdict did not survive refinement: resume the scan upward
        lo, v_lo = hi, v2
        hi = None
        A = 2.0 * lo
        while A <= A_max * (1.0 + 1e-12):
            v, rec = probe(A, n_per_cell, max_updates)
            last_rec = rec
            if v.quenched:
                hi, v_hi = A, v
                break
            lo, v_lo = A, v
            A *= 2.0
        if hi is None:
            row.censored = True
            row.A_lo, row.verdict_lo = lo, v_lo
            row.final_sup = np.column_stack([last_rec.monitor_column("t"),
                                             last_rec.monitor_column("sup_norm")])
            return row
    else:
        row.stable = False

    row.A_lo, row.A_hi = lo, hi
    row.verdict_lo, row.verdict_hi = v_lo, v_hi
    return row


class SweepResult:
    """Bracket rows over a ladder of slab widths, in the order requested."""

    def __init__(self, rows):
        self.rows = list(rows)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    @property
    def censored(self):
        return any(r.censored for r in self.rows)

    def usable_rows(self):
        """Rows that can enter a fit: uncensored, stable, finite bracket."""
        return [r for r in self.rows
                if not r.censored and r.stable and math.isfinite(r.A_hi)
                and r.A_lo > 0.0]

    def write_csv(self, path):
        artifacts.write_table(path, SWEEP_COLUMNS,
                              [r.csv_values() for r in self.rows])

    @classmethod
    def from_csv(cls, path):
        table = artifacts.read_table(path)
        rows = []
        for k in range(len(table["L0"])):
            row = BracketRow(float(table["L0"][k]), int(float(table["grid"][k])),
                             float(table["horizon"][k]))
            row.A_lo = float(table["A_lo"][k])
            row.A_hi = float(table["A_hi"][k])
            row.censored = bool(int(float(table["censored"][k])))
            kind_lo = str(table["verdict_lo"][k])
            kind_hi = str(table["verdict_hi"][k])
            if kind_lo:
                row.verdict_lo = Verdict(kind_lo, row.horizon)
            if kind_hi:
                row.verdict_hi = Verdict(kind_hi, row.horizon)
            rows.append(row)
        return cls(rows)


def _sweep_row_task(args):
    L0, flow, reaction, kwargs = args
    return find_A0(L0, flow, reaction, **kwargs)


def run_sweep(L0_values, flow, reaction, horizon=None, tol_rel=0.25,
              A_start=1.0, A_max=1e5, n_per_cell=128, margin_cells=8,
              max_updates=None, verify=True, jobs=1, prescan_n_per_cell=None):
    """Bracket A0 over a ladder of slab half-widths.

    A_start may be a scalar or one value per row.  With prescan_n_per_cell
    set, each row first runs a cheap unverified bracket at that resolution
    and the main scan starts from its lower endpoint, which saves most of
    the doubling probes at the final resolution.  Rows are independent, so
    jobs > 1 fans them out over processes; results are identical to the
    serial order for any job count.
    """
    L0_values = [float(v) for v in L0_values]
    if not L0_values:
        raise ValidationError("sweep needs at least one L0 value")
    starts = np.broadcast_to(np.asarray(A_start, dtype=float), (len(L0_values),))

    if prescan_n_per_cell is not None:
        pre_kwargs = dict(horizon=horizon, tol_rel=0.5, A_max=A_max,
                          n_per_cell=int(prescan_n_per_cell),
                          margin_cells=margin_cells, max_updates=max_updates,
                          verify=False)
        pre_tasks = [(L0, flow, reaction, dict(pre_kwargs, A_start=float(s)))
                     for L0, s in zip(L0_values, starts)]
        pre_rows = _map_tasks(pre_tasks, jobs)
        starts = [max(float(s), r.A_lo) if r.A_lo > 0.0 else float(s)
                  for s, r in zip(starts, pre_rows)]

    kwargs = dict(horizon=horizon, tol_rel=tol_rel, A_max=A_max,
                  n_per_cell=n_per_cell, margin_cells=margin_cells,
                  max_updates=max_updates, verify=verify)
    tasks = [(L0, flow, reaction, dict(kwargs, A_start=float(s)))
             for L0, s in zip(L0_values, starts)]
    return SweepResult(_map_tasks(tasks, jobs))


def _map_tasks(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_sweep_row_task(t) for t in tasks]
    ctx = multiprocessing.get_context("spawn")
    with ctx.Pool(processes=min(jobs, len(tasks))) as pool:
        return pool.map(_sweep_row_task, tasks)


class FitReport:
    """Growth-law fit A0 ~ C * L0^p from a sweep of brackets."""

    def __init__(self, p, stderr, C, rows_used, C_ln=None):
        self.p = float(p)
        self.stderr = float(stderr)
        self.C = float(C)
        self.model = "A0 ~ C * L0^p"
        self.rows_used = [float(v) for v in rows_used]
        self.C_ln = None if C_ln is None else float(C_ln)

    def payload(self):
        out = {"p": self.p, "stderr": self.stderr, "C": self.C,
               "model": self.model, "rows_used": self.rows_used}
        if self.C_ln is not None:
            out["C_ln"] = self.C_ln
            out["model_ln"] = "A0 ~ C_ln * L0^4 * ln L0"
        return out


def scaling_fit(sweep, sigma_floor=1e-9):
    """Weighted log-log fit of the threshold growth law.

    Needs at least four usable rows spanning an octave in L0.  Each row
    enters at its geometric bracket midpoint, weighted by the inverse
    squared half-width of the bracket in log amplitude, so tight brackets
    dominate.  Alongside the free exponent, the fixed-exponent model
    A0 = C * L0^4 * ln L0 is fit whenever every L0 exceeds 1, as a check of
    the expected fourth-power law with logarithmic correction.
    """
    rows = sweep.usable_rows() if isinstance(sweep, SweepResult) else \
        [r for r in sweep if not r.censored and r.stable and r.A_lo > 0.0]
    if len(rows) < 4:
        raise ValidationError(
            "insufficient-rows: scaling fit needs >= 4 uncensored rows, "
            "got %d" % len(rows))
    L0s = np.array([r.L0 for r in rows])
    if np.max(L0s) < 2.0 * np.min(L0s):
        raise ValidationError(
            "insufficient-rows: L0 values span %.3g, need at least one octave"
            % (np.max(L0s) / np.min(L0s)))
    x = np.log(L0s)
    y = np.log([r.estimate for r in rows])
    sig = np.maximum([0.5 * r.log_width for r in rows], sigma_floor)
    w = 1.0 / sig ** 2
    W = w.sum()
    xb = (w * x).sum() / W
    yb = (w * y).sum() / W
    sxx = (w * (x - xb) ** 2).sum()
    p = (w * (x - xb) * (y - yb)).sum() / sxx
    b = yb - p * xb
    resid = y - (b + p * x)
    dof = len(rows) - 2
    s2 = (w * resid ** 2).sum() / dof
    stderr = math.sqrt(s2 / sxx)

    C_ln = None
    if np.min(L0s) > 1.0:
        zc = y - 4.0 * x - np.log(np.log(L0s))
        C_ln = math.exp((w * zc).sum() / W)
    return FitReport(p, stderr, math.exp(b), L0s, C_ln=C_ln)


class Theorem1Result:
    """Verdict matrix over (cell size, amplitude) with the transition band.

    band = (l_below, l_above): the largest tested cell size where some
    amplitude failed to propagate, and the smallest where every amplitude
    propagated; either may be None when the grid does not reach that side.
    """

    def __init__(self, l_values, A_values, l_min, rows, records):
        self.l_values = list(l_values)
        self.A_values = list(A_values)
        self.l_min = float(l_min)
        self.rows = rows          # (l, A, verdict) in run order
        self.records = records    # dict (l, A) -> RunRecord

    def verdict(self, l, A):
        for lv, av, v in self.rows:
            if lv == l and av == A:
                return v
        raise KeyError((l, A))

    @property
    def band(self):
        passed = {}
        for lv in self.l_values:
            vs = [v for l, _, v in self.rows if l == lv]
            passed[lv] = all(v.propagating for v in vs)
        below = [lv for lv in self.l_values if not passed[lv]]
        above = [lv for lv in self.l_values if passed[lv]]
        return (max(below) if below else None, min(above) if above else None)

    def csv_rows(self):
        return [(l, A, v.kind, v.t, v.note) for l, A, v in self.rows]


def seed_center_value(record, flow, cell=(0, 0)):
    """Final temperature at the centre of the seeded cell."""
    cx, cy = flow.cell_center(*cell)
    domain = record.field.domain
    return float(domain.interp(record.field.values, cx, cy))


def theorem1_experiment(l_values, A_values, reaction, chord, horizon=None,
                        n_per_cell=256, x_half_cells=9, barrier_tol=1e-3):
    """Verdicts for one ignited cell across cell sizes and amplitudes.

    Each run seeds cell (0, 0) with the indicator of the cell and asks
    classify() for a verdict, using the sub-solution barrier whenever the
    cell size admits one.  Cell data have no axis symmetry (the flow only
    matches them under 180 degree rotation), so these runs integrate the
    full strip.  For l above critical the expected outcome is Propagating
    at every amplitude; the transition band brackets where that starts.
    """
    if not l_values or not A_values:
        raise ValidationError("need at least one cell size and one amplitude")
    l_min = critical_cell_size(chord, reaction.M)
    rows = []
    records = {}
    for l in l_values:
        flow_l = CellularFlow(l)
        domain = StripDomain(flow_l, x_half_cells, n_per_cell)
        init = make_initial_data(domain, "cell", cell=(0, 0))
        sub = None
        if l > l_min:
            sub = build_subsolution(chord, l, reaction.M)
        t_end = horizon if horizon is not None else \
            20.0 * max(l ** 2, 1.0 / reaction.M)
        for A in A_values:
            cfg = SolverConfig(t_end, A=A, stop_on_quench=True)
            rec = run(init, cfg, flow_l, reaction)
            v = classify(rec, reaction, sub=sub, cell=(0, 0),
                         barrier_tol=barrier_tol)
            rows.append((float(l), float(A), v))
            records[(float(l), float(A))] = rec
    return Theorem1Result([float(l) for l in l_values],
                          [float(A) for A in A_values], l_min, rows, records)
