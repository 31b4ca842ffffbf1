"""Verdict logic, threshold bracketing, sweeps, and the growth-law fit.

The bracketing state machine is exercised two ways: scripted probes (a stub
solver whose quench threshold is an explicit function of amplitude and grid)
cover every refinement branch deterministically, and one real miniature
bracket checks the glue against the actual solver.  The fit is validated on
synthetic rows built from known laws.
"""

import math

import numpy as np
import numpy.testing as npt
import pytest

import quenchlab.harness as harness
from quenchlab import (
    BracketRow,
    CellularFlow,
    FitReport,
    StripDomain,
    SweepResult,
    Theorem1Result,
    ValidationError,
    Verdict,
    build_chord_modification,
    build_subsolution,
    classify,
    find_A0,
    run_sweep,
    scaling_fit,
    seed_center_value,
    slab_run,
    theorem1_experiment,
)
from quenchlab.harness import PROPAGATING, QUENCHED, UNDECIDED

LMIN_AUTO = 7.283828385893889  # frozen in test_subsolution
L_SMALL = LMIN_AUTO / 8.0      # cells far below critical: quenching reachable


@pytest.fixture(scope="module")
def chord(default_reaction):
    return build_chord_modification(default_reaction, 0.26153846153846155,
                                    0.6423076923076922)


# ---------------------------------------------------------------------------
# synthetic records for the pure classification logic

class _FakeField:
    def __init__(self, domain, values, time):
        self.domain = domain
        self.values = values
        self.time = time


class _FakeRecord:
    def __init__(self, t, sup, burned, field=None, snapshots=(),
                 status="completed"):
        self._mon = {"t": np.asarray(t, dtype=float),
                     "sup_norm": np.asarray(sup, dtype=float),
                     "burned_area": np.asarray(burned, dtype=float)}
        self.field = field
        self.snapshots = list(snapshots)
        self.status = status
        self.wall_time = 0.0

    def monitor_column(self, name):
        return self._mon[name]


def _flat_record(domain, value, status="completed"):
    t = np.linspace(0.0, 10.0, 11)
    vals = np.full(domain.shape, float(value))
    burned = np.linspace(1.0, 2.0, 11)
    return _FakeRecord(t, np.full(11, max(value, 0.9)), burned,
                       field=_FakeField(domain, vals, 10.0), status=status)


def test_verdict_basics():
    v = Verdict(QUENCHED, 3.0)
    assert v.quenched and not v.propagating
    assert v == Verdict(QUENCHED, 3.0)
    assert v != Verdict(UNDECIDED, 3.0)
    assert "Quenched" in repr(v)
    noted = Verdict(UNDECIDED, 5.0, note="cost-capped")
    assert "cost-capped" in repr(noted)
    with pytest.raises(ValidationError, match="unknown verdict"):
        Verdict("Maybe", 0.0)


def test_classify_quench_first_hit(default_reaction):
    t = np.array([0.0, 1.0, 2.0, 3.0])
    sup = np.array([1.0, 0.4, 0.25, 0.1])  # theta0 = 0.25 reached at t = 2
    rec = _FakeRecord(t, sup, np.zeros(4))
    v = classify(rec, default_reaction)
    assert v.kind == QUENCHED and v.t == 2.0


def test_classify_undecided_without_barrier(default_reaction):
    rec = _FakeRecord([0.0, 5.0], [1.0, 0.9], [1.0, 1.0], status="cost-capped")
    v = classify(rec, default_reaction)
    assert v.kind == UNDECIDED and v.t == 5.0 and v.note == "cost-capped"


def test_classify_propagation_branches(default_reaction, chord):
    l = 2.0 * LMIN_AUTO
    flow = CellularFlow(l)
    domain = StripDomain(flow, 2, 16)
    sub = build_subsolution(chord, l, default_reaction.M)

    hot = _flat_record(domain, 1.0)
    v = classify(hot, default_reaction, sub=sub)
    assert v.kind == PROPAGATING and v.t == 10.0

    cold = _flat_record(domain, 0.3)  # below the barrier core theta2 ~ 0.64
    v = classify(cold, default_reaction, sub=sub)
    assert v.kind == UNDECIDED and v.note == "barrier-not-dominated"

    # an early snapshot that already dominates moves the certificate back
    snap = _FakeField(domain, np.ones(domain.shape), 4.0)
    early = _flat_record(domain, 1.0)
    early.snapshots.append(snap)
    v = classify(early, default_reaction, sub=sub)
    assert v.kind == PROPAGATING and v.t == 4.0

    # collapsing burned area in the trailing quarter voids the certificate
    shrink = _flat_record(domain, 1.0)
    shrink._mon["burned_area"] = np.linspace(2.0, 1.0, 11)
    v = classify(shrink, default_reaction, sub=sub)
    assert v.kind == UNDECIDED and v.note == "burned-area-not-monotone"


def test_classify_rejects_subcritical_barrier(default_reaction, chord):
    l = 0.5 * LMIN_AUTO
    sub = build_subsolution(chord, l, default_reaction.M)
    assert not sub.applicable
    flow = CellularFlow(l)
    rec = _flat_record(StripDomain(flow, 2, 16), 1.0)
    with pytest.raises(ValidationError, match="subsolution-unavailable"):
        classify(rec, default_reaction, sub=sub)


# ---------------------------------------------------------------------------
# bracket rows and sweep containers

def test_bracket_row_summaries():
    row = BracketRow(4.0, 64, 20.0)
    assert math.isnan(row.estimate)
    row.A_lo, row.A_hi = 100.0, 200.0
    assert row.estimate == pytest.approx(math.sqrt(2e4))
    assert row.log_width == pytest.approx(math.log(2.0))
    zero = BracketRow(4.0, 64, 20.0)
    zero.A_lo, zero.A_hi = 0.0, 50.0
    assert zero.estimate == 25.0
    assert zero.log_width == math.inf
    cens = BracketRow(4.0, 64, 20.0)
    cens.censored = True
    cens.A_lo = 1e4
    assert math.isnan(cens.estimate)


def _synthetic_row(L0, est, width=1.05, grid=128, horizon=20.0):
    row = BracketRow(L0, grid, horizon)
    row.A_lo = est / width
    row.A_hi = est * width
    row.verdict_lo = Verdict(UNDECIDED, horizon)
    row.verdict_hi = Verdict(QUENCHED, 0.5 * horizon)
    return row


def test_sweep_csv_roundtrip(tmp_path):
    rows = [_synthetic_row(2.0, 32.0), _synthetic_row(4.0, 512.0)]
    cens = BracketRow(8.0, 128, 20.0)
    cens.censored = True
    cens.A_lo = 1e5
    cens.verdict_lo = Verdict(UNDECIDED, 20.0)
    rows.append(cens)
    sweep = SweepResult(rows)
    assert sweep.censored
    assert len(sweep.usable_rows()) == 2

    path = tmp_path / "sweep.csv"
    sweep.write_csv(path)
    back = SweepResult.from_csv(path)
    assert len(back) == 3
    for a, b in zip(sweep, back):
        assert a.L0 == b.L0 and a.grid == b.grid and a.horizon == b.horizon
        assert a.A_lo == b.A_lo and a.censored == b.censored
        assert (a.A_hi == b.A_hi) or (math.isnan(a.A_hi) and math.isnan(b.A_hi))
    assert back.rows[0].verdict_hi.kind == QUENCHED
    assert back.rows[2].verdict_hi is None
    assert back.censored


# ---------------------------------------------------------------------------
# growth-law fit on synthetic sweeps

def test_scaling_fit_power_law():
    rows = [_synthetic_row(L0, 7.0 * L0 ** 4) for L0 in (2.0, 3.0, 4.0, 6.0)]
    fit = scaling_fit(SweepResult(rows))
    assert fit.p == pytest.approx(4.0, abs=1e-10)
    assert fit.C == pytest.approx(7.0, rel=1e-10)
    assert fit.stderr < 1e-9
    assert fit.rows_used == [2.0, 3.0, 4.0, 6.0]
    assert "p" in fit.payload() and "C_ln" in fit.payload()


def test_scaling_fit_log_corrected():
    # data generated by the fourth-power law with logarithmic correction:
    # the fixed-exponent companion fit recovers its prefactor exactly
    rows = [_synthetic_row(L0, 5.0 * L0 ** 4 * math.log(L0))
            for L0 in (2.0, 3.0, 4.0, 6.0)]
    fit = scaling_fit(SweepResult(rows))
    assert fit.C_ln == pytest.approx(5.0, rel=1e-10)
    # d ln(ln L0) / d ln L0 = 1/ln L0 ~ 0.7-1.4 on this ladder, so the
    # apparent free exponent sits near 4.9
    assert 4.0 < fit.p < 5.2


def test_scaling_fit_guards():
    rows = [_synthetic_row(L0, L0 ** 4) for L0 in (2.0, 3.0, 4.0)]
    with pytest.raises(ValidationError, match="insufficient-rows"):
        scaling_fit(SweepResult(rows))
    narrow = [_synthetic_row(L0, L0 ** 4) for L0 in (2.0, 2.4, 2.8, 3.2)]
    with pytest.raises(ValidationError, match="octave"):
        scaling_fit(SweepResult(narrow))
    # censored rows are excluded, which can push the count below four
    rows = [_synthetic_row(L0, L0 ** 4) for L0 in (2.0, 3.0, 4.0, 6.0)]
    rows[0].censored = True
    with pytest.raises(ValidationError, match="insufficient-rows"):
        scaling_fit(SweepResult(rows))


# ---------------------------------------------------------------------------
# find_A0 control flow under scripted probes

class _ScriptedSolver:
    """Stub slab_run/classify pair with an explicit threshold per grid."""

    def __init__(self, thresholds):
        self.thresholds = dict(thresholds)
        self.calls = []

    def slab_run(self, L0, flow, reaction, A, horizon, n_per_cell, **kw):
        self.calls.append((float(A), int(n_per_cell)))
        rec = _FakeRecord([0.0, horizon], [1.0, 0.9], [1.0, 1.0])
        rec._A = float(A)
        rec._n = int(n_per_cell)
        return rec

    def classify(self, rec, reaction, **kw):
        thr = self.thresholds.get(rec._n, math.inf)
        if rec._A >= thr:
            return Verdict(QUENCHED, 1.0)
        return Verdict(UNDECIDED, rec._mon["t"][-1])


@pytest.fixture
def scripted(monkeypatch):
    def install(thresholds):
        stub = _ScriptedSolver(thresholds)
        monkeypatch.setattr(harness, "slab_run", stub.slab_run)
        monkeypatch.setattr(harness, "classify", stub.classify)
        return stub
    return install


def test_find_a0_validation(unit_flow, default_reaction):
    with pytest.raises(ValidationError, match="L0"):
        find_A0(-1.0, unit_flow, default_reaction)
    with pytest.raises(ValidationError, match="tol_rel"):
        find_A0(1.0, unit_flow, default_reaction, tol_rel=1.5)
    with pytest.raises(ValidationError, match="A_start"):
        find_A0(1.0, unit_flow, default_reaction, A_start=10.0, A_max=1.0)


def test_find_a0_stable_bracket(scripted, unit_flow, default_reaction):
    stub = scripted({32: 1000.0, 64: 1000.0})
    row = find_A0(2.0, unit_flow, default_reaction, A_start=300.0,
                  n_per_cell=32, tol_rel=0.25)
    assert not row.censored and row.stable
    assert row.A_lo < 1000.0 <= row.A_hi
    assert (row.A_hi - row.A_lo) / row.A_hi <= 0.25
    assert row.verdict_hi.quenched and not row.verdict_lo.quenched
    # both endpoints were re-verified at the doubled resolution
    fine = [c for c in stub.calls if c[1] == 64]
    assert len(fine) == 2
    assert len(row.trace) == len(stub.calls)


def test_find_a0_unstable_when_fine_grid_quenches_low(
        scripted, unit_flow, default_reaction):
    # the doubled grid quenches even at the non-quench endpoint
    scripted({32: 1000.0, 64: 10.0})
    row = find_A0(2.0, unit_flow, default_reaction, A_start=300.0,
                  n_per_cell=32, tol_rel=0.25)
    assert not row.censored
    assert not row.stable


def test_find_a0_refinement_rescan(scripted, unit_flow, default_reaction):
    # the doubled grid never confirms a quench: every refinement round
    # pushes the scan upward until the row is declared unstable
    stub = scripted({32: 1000.0, 64: math.inf})
    row = find_A0(2.0, unit_flow, default_reaction, A_start=300.0,
                  n_per_cell=32, tol_rel=0.25, max_refine=2)
    assert not row.stable
    assert sum(1 for c in stub.calls if c[1] == 64) == 3  # one per round
    assert math.isfinite(row.A_hi)


def test_find_a0_censored(scripted, unit_flow, default_reaction):
    scripted({})  # nothing ever quenches
    row = find_A0(2.0, unit_flow, default_reaction, A_start=100.0,
                  A_max=1000.0, n_per_cell=32)
    assert row.censored
    assert row.A_lo == 800.0  # last doubled probe below A_max
    assert math.isnan(row.A_hi)
    assert row.final_sup is not None and row.final_sup.shape[1] == 2
    assert math.isnan(row.estimate)


def test_find_a0_zero_anchor(scripted, unit_flow, default_reaction):
    # A_start already quenches: the bracket grows down from an A = 0 control
    scripted({32: 50.0, 64: 50.0})
    row = find_A0(2.0, unit_flow, default_reaction, A_start=100.0,
                  n_per_cell=32, tol_rel=0.25)
    assert not row.censored
    assert row.A_lo < row.A_hi <= 100.0
    assert (0.0, 32) in [(a, n) for a, n in
                         [(t[0], t[1]) for t in row.trace]]


def test_find_a0_vacuous_at_zero(scripted, unit_flow, default_reaction):
    # even the A = 0 control quenches: thresholding is meaningless
    scripted({32: -1.0})
    row = find_A0(2.0, unit_flow, default_reaction, A_start=100.0,
                  n_per_cell=32)
    assert row.A_lo == 0.0 and row.A_hi == 0.0
    assert row.verdict_lo.quenched


def test_run_sweep_scripted(scripted, unit_flow, default_reaction):
    stub = scripted({16: 400.0, 32: 400.0, 64: 400.0})
    sweep = run_sweep([1.0, 2.0], unit_flow, default_reaction,
                      A_start=[100.0, 150.0], n_per_cell=32, tol_rel=0.5,
                      verify=False, prescan_n_per_cell=16)
    assert len(sweep) == 2
    assert all(not r.censored for r in sweep)
    # the prescan ran at its own resolution before the main scan
    assert any(n == 16 for _, n in stub.calls)
    with pytest.raises(ValidationError, match="at least one L0"):
        run_sweep([], unit_flow, default_reaction)


# ---------------------------------------------------------------------------
# real miniature runs

@pytest.mark.filterwarnings("ignore:boundary-mass-leak")
def test_slab_run_and_classify_real(default_reaction):
    flow = CellularFlow(L_SMALL)
    rec = slab_run(2 * math.pi * L_SMALL, flow, default_reaction, 0.0, 2.0,
                   16, margin_cells=2)
    # the quarter-strip solve mirrors back out: exactly even in x
    vals = rec.field.values
    npt.assert_array_equal(vals, vals[:, ::-1])
    v = classify(rec, default_reaction)
    assert v.kind == UNDECIDED  # diffusion alone cannot quench slab data


@pytest.mark.filterwarnings("ignore:boundary-mass-leak")
def test_find_a0_real_bracket(default_reaction):
    # calibrated miniature: at this cell size the threshold sits in
    # (1000, 2000] for a 12-unit horizon, so the scan is a few probes
    flow = CellularFlow(L_SMALL)
    row = find_A0(2 * math.pi * L_SMALL, flow, default_reaction,
                  horizon=12.0, tol_rel=0.4, A_start=1000.0, A_max=1e4,
                  n_per_cell=32, margin_cells=4, verify=False)
    assert not row.censored
    assert row.stable
    assert 1000.0 <= row.A_lo < row.A_hi <= 4000.0
    assert (row.A_hi - row.A_lo) / row.A_hi <= 0.4
    assert row.verdict_hi.quenched
    assert row.wall_time > 0.0
    kinds = {v.kind for _, _, v in row.trace}
    assert kinds == {QUENCHED, UNDECIDED}


@pytest.mark.filterwarnings("ignore:boundary-mass-leak")
def test_sweep_jobs_invariance(default_reaction):
    # identical rows for any job count: the pool only changes scheduling
    flow = CellularFlow(L_SMALL)
    ladder = [math.pi * L_SMALL, 2 * math.pi * L_SMALL]
    kw = dict(horizon=5.0, tol_rel=0.5, A_start=500.0, A_max=8000.0,
              n_per_cell=16, margin_cells=2, verify=False)
    serial = run_sweep(ladder, flow, default_reaction, jobs=1, **kw)
    pooled = run_sweep(ladder, flow, default_reaction, jobs=2, **kw)
    assert [r.csv_values() for r in serial] == [r.csv_values() for r in pooled]


def test_theorem1_mini(default_reaction, chord):
    with pytest.raises(ValidationError, match="at least one"):
        theorem1_experiment([], [1.0], default_reaction, chord)
    l = 2.0 * LMIN_AUTO
    res = theorem1_experiment([l], [0.0], default_reaction, chord,
                              horizon=50.0, n_per_cell=16, x_half_cells=2)
    assert res.l_min == pytest.approx(LMIN_AUTO, rel=1e-12)
    v = res.verdict(l, 0.0)
    assert v.kind in (PROPAGATING, UNDECIDED)
    with pytest.raises(KeyError):
        res.verdict(l, 99.0)
    rows = res.csv_rows()
    assert len(rows) == 1 and rows[0][0] == l
    rec = res.records[(l, 0.0)]
    val = seed_center_value(rec, CellularFlow(l))
    assert 0.0 <= val <= 1.0 + 1e-12


def test_theorem1_band_logic():
    rows = [(1.0, 0.0, Verdict(PROPAGATING, 1.0)),
            (1.0, 10.0, Verdict(UNDECIDED, 5.0)),
            (2.0, 0.0, Verdict(PROPAGATING, 1.0)),
            (2.0, 10.0, Verdict(PROPAGATING, 2.0))]
    res = Theorem1Result([1.0, 2.0], [0.0, 10.0], 0.8, rows, {})
    assert res.band == (1.0, 2.0)
    all_pass = Theorem1Result([2.0], [0.0], 0.8,
                              [(2.0, 0.0, Verdict(PROPAGATING, 1.0))], {})
    assert all_pass.band == (None, 2.0)
