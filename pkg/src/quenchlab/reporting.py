"""Figure rendering for run artifacts.

Every delimited table the command line writes gets a PNG next to it, so a
run directory can be skimmed without loading anything into a session.  All
renderers take data already in memory plus a target path; none of them
compute anything beyond axis transforms.
"""

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

DPI = 130


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def render_monitor(monitor, path, title=""):
    """Sup norm, mass, and burned area against time from a monitor array."""
    t = monitor[:, 0]
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    axes[0].plot(t, monitor[:, 1])
    axes[0].set_ylabel("sup T")
    axes[1].plot(t, monitor[:, 2])
    axes[1].set_ylabel("L1 norm")
    axes[2].plot(t, monitor[:, 3])
    axes[2].set_ylabel("burned area")
    for ax in axes:
        ax.set_xlabel("t")
    if title:
        fig.suptitle(title)
    _finish(fig, path)


def render_field(values, X, Y, path, title=""):
    """Heat map of a strip field; x spans [-X, X], y spans [-Y, Y)."""
    fig, ax = plt.subplots(figsize=(9.0, max(2.2, 9.0 * Y / X)))
    im = ax.imshow(values, origin="lower", extent=(-X, X, -Y, Y),
                   vmin=0.0, vmax=1.0, cmap="inferno", aspect="equal",
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    _finish(fig, path)


def render_profile(sub, path):
    """The two-branch radial profile with its matching radii marked."""
    R = np.linspace(1e-3 * sub.R1, 1.15 * sub.R2, 600)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(R, sub.phi_of_R(R))
    ax.axvline(sub.R1, color="0.6", ls="--", lw=0.8)
    ax.axvline(sub.R2, color="0.6", ls=":", lw=0.8)
    ax.axhline(0.0, color="0.8", lw=0.6)
    ax.annotate("R1", (sub.R1, sub.theta1), textcoords="offset points",
                xytext=(4, 4))
    ax.annotate("R2", (sub.R2, 0.0), textcoords="offset points", xytext=(4, 4))
    ax.set_xlabel("R")
    ax.set_ylabel("Phi")
    ax.set_title("barrier profile: Bessel core, log tail")
    _finish(fig, path)


def render_decay(series, path):
    """Log-log sup-norm decay for several amplitudes.

    series: list of (label, t, sup) triples; zeros are masked.
    """
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    for label, t, sup in series:
        keep = (t > 0) & (sup > 0)
        ax.loglog(t[keep], sup[keep], label=str(label))
    ax.set_xlabel("t")
    ax.set_ylabel("sup T")
    ax.legend(fontsize=8)
    ax.set_title("sup-norm decay")
    _finish(fig, path)


def render_sweep(rows, path):
    """Threshold brackets against slab width on log-log axes."""
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for r in rows:
        if r.censored or not math.isfinite(r.A_hi):
            ax.plot([r.L0], [r.A_lo], marker="^", color="0.4")
            continue
        lo = max(r.A_lo, 1e-12)
        ax.plot([r.L0, r.L0], [lo, r.A_hi], color="C0", lw=2.0)
        ax.plot([r.L0], [r.estimate], marker="o", color="C0")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("L0")
    ax.set_ylabel("A0 bracket")
    ax.set_title("quenching threshold vs slab width")
    _finish(fig, path)


def render_fit(rows, fit, path):
    """Sweep points with the fitted growth law overlaid."""
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    L0 = np.array([r.L0 for r in rows])
    A0 = np.array([r.estimate for r in rows])
    ax.loglog(L0, A0, "o", label="bracket midpoints")
    xs = np.linspace(L0.min(), L0.max(), 50)
    ax.loglog(xs, fit.C * xs ** fit.p,
              label="C L0^p, p=%.2f+-%.2f" % (fit.p, fit.stderr))
    if fit.C_ln is not None:
        ax.loglog(xs, fit.C_ln * xs ** 4 * np.log(xs), ls="--",
                  label="C L0^4 ln L0")
    ax.set_xlabel("L0")
    ax.set_ylabel("A0")
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_exit(times, curves, path, title="survival probability"):
    """Survival decay curves: MC estimates (points) vs solver (lines).

    curves: list of (label, q_mc, stderr, q_pde) aligned with times; any of
    the last three may be None.
    """
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    for k, (label, q_mc, se, q_pde) in enumerate(curves):
        color = "C%d" % (k % 10)
        if q_pde is not None:
            ax.plot(times, q_pde, color=color, lw=1.0)
        if q_mc is not None:
            if se is not None:
                ax.errorbar(times, q_mc, yerr=se, color=color, fmt=".",
                            ms=3, lw=0.6, label=str(label))
            else:
                ax.plot(times, q_mc, ".", color=color, ms=3, label=str(label))
    ax.set_xlabel("t")
    ax.set_ylabel("Q")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_theorem1(result, path):
    """Verdict matrix over (l, A) with the critical size marked."""
    kinds = {"Quenched": 0, "Undecided": 1, "Propagating": 2}
    ls = result.l_values
    As = result.A_values
    grid = np.zeros((len(As), len(ls)))
    for i, A in enumerate(As):
        for j, l in enumerate(ls):
            grid[i, j] = kinds[result.verdict(l, A).kind]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(ls), 1.0 + 0.7 * len(As)))
    ax.imshow(grid, origin="lower", cmap="RdYlGn", vmin=0, vmax=2,
              aspect="auto")
    ax.set_xticks(range(len(ls)), ["%.3g" % l for l in ls])
    ax.set_yticks(range(len(As)), ["%.3g" % A for A in As])
    ax.set_xlabel("cell size l")
    ax.set_ylabel("amplitude A")
    for i in range(len(As)):
        for j in range(len(ls)):
            ax.text(j, i, result.verdict(ls[j], As[i]).kind[0],
                    ha="center", va="center", fontsize=8)
    ax.set_title("verdicts (l_min = %.3g)" % result.l_min)
    _finish(fig, path)
