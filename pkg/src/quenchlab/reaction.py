"""Ignition nonlinearity f, its validation, and the chord modification g.

The default profile is f(T) = (T - theta0)_+ (1 - T) / (1 - theta0)^2, which
vanishes on [0, theta0] and at 1, is positive between, Lipschitz, concave on
[theta0, 1], and satisfies f(T) <= T (the chord from (theta0, 0) to (1, 0)
stays below the identity).  User profiles are tabulated and interpolated
piecewise-linearly, validated on a dense grid.

The chord modification replaces f below theta2 by the straight line through
(theta1, 0) with slope alpha = f(theta2)/(theta2 - theta1); it is the rate the
sub-solution profile is built from, and must stay below f.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .subsolution import critical_radius

_GRID_N = 10000         # dense validation grid on [0, 1]
_DOMAIN_SLACK = 1e-12


class IgnitionReaction:
    """Reaction rate M * f(T) with ignition temperature theta0.

    profile is None for the built-in formula, or a (T, F) table pair for a
    user-supplied rate.  l_c = M^(-1/2) is the laminar front width, the length
    the critical cell size scales with.
    """

    def __init__(self, theta0=0.25, M=1.0, profile=None):
        if not (0.0 < theta0 < 1.0):
            raise ValidationError("theta0 must lie in (0,1), got %r" % (theta0,))
        if not M > 0.0:
            raise ValidationError("reaction rate M must be positive, got %r" % (M,))
        self.theta0 = float(theta0)
        self.M = float(M)
        if profile is None:
            self.table = None
        else:
            T, F = profile
            T = np.asarray(T, dtype=float)
            F = np.asarray(F, dtype=float)
            if T.ndim != 1 or T.shape != F.shape or T.size < 4:
                raise ValidationError("profile-invalid: need two equal 1-d columns, >= 4 rows")
            if np.any(np.diff(T) <= 0.0):
                raise ValidationError("profile-invalid: T column must be strictly increasing")
            if T[0] > 0.0 or T[-1] < 1.0:
                raise ValidationError("profile-invalid: T column must cover [0, 1]")
            self.table = (T, F)
        self._validate()

    @property
    def laminar_width(self):
        return 1.0 / math.sqrt(self.M)

    def f(self, T):
        """The unit-rate profile f(T); multiply by M for the PDE source term."""
        T = np.asarray(T, dtype=float)
        if self.table is None:
            th = self.theta0
            return np.maximum(T - th, 0.0) * (1.0 - T) / (1.0 - th) ** 2
        return np.interp(T, self.table[0], self.table[1])

    def _validate(self):
        """Dense-grid check of the rate conditions; names the violated one."""
        T = np.linspace(0.0, 1.0, _GRID_N)
        F = self.f(T)
        if not np.all(np.isfinite(F)):
            raise ValidationError("profile-invalid: non-finite values")
        below = T <= self.theta0
        if np.max(np.abs(F[below])) > 1e-12:
            raise ValidationError("profile-invalid: f must vanish on [0, theta0]")
        if abs(F[-1]) > 1e-12:
            raise ValidationError("profile-invalid: f(1) must be 0")
        inside = (T > self.theta0 + 2.0 / _GRID_N) & (T < 1.0 - 2.0 / _GRID_N)
        if np.any(F[inside] <= 0.0):
            raise ValidationError("profile-invalid: f must be positive on (theta0, 1)")
        if np.max(F - T) > 1e-12:
            raise ValidationError("profile-invalid: f(T) <= T violated")
        quot = np.abs(np.diff(F) / np.diff(T))
        self.lipschitz = float(np.max(quot))


def evaluate_f(reaction, T):
    """f(T) with the domain guard: T must lie in [0,1] up to 1e-12 slack."""
    T = np.asarray(T, dtype=float)
    if np.any(T < -_DOMAIN_SLACK) or np.any(T > 1.0 + _DOMAIN_SLACK):
        raise ValidationError("temperature outside [0,1] beyond rounding slack")
    return reaction.f(np.clip(T, 0.0, 1.0))


class ChordModifiedReaction:
    """g(T): zero below theta1, slope alpha up to theta2, then f itself."""

    def __init__(self, base, theta1, theta2, alpha):
        self.base = base
        self.theta1 = float(theta1)
        self.theta2 = float(theta2)
        self.alpha = float(alpha)

    def g(self, T):
        T = np.asarray(T, dtype=float)
        lin = self.alpha * np.clip(T - self.theta1, 0.0, self.theta2 - self.theta1)
        return np.where(T >= self.theta2, self.base.f(T), lin)


def build_chord_modification(reaction, theta1, theta2):
    """Validated chord: theta0 < theta1 < theta2 < 1 and g <= f on a dense grid."""
    if not (reaction.theta0 < theta1 < theta2 < 1.0):
        raise ValidationError(
            "chord thresholds must satisfy theta0 < theta1 < theta2 < 1, got (%r, %r)"
            % (theta1, theta2))
    f2 = float(reaction.f(np.array(theta2)))
    if not f2 > 0.0:
        raise ValidationError("chord-above-graph: f(theta2) = %g is not positive" % f2)
    alpha = f2 / (theta2 - theta1)
    chord = ChordModifiedReaction(reaction, theta1, theta2, alpha)
    T = np.linspace(0.0, 1.0, _GRID_N)
    gap = np.max(chord.g(T) - reaction.f(T))
    if gap > 1e-10:
        raise ValidationError(
            "chord-above-graph: max(g - f) = %g for thetas (%g, %g)" % (gap, theta1, theta2))
    return chord


def _chord_valid(reaction, theta1, theta2, f2, n=1024):
    # the chord can only poke above f on (theta1, theta2); outside, g is 0 or f
    T = np.linspace(theta1, theta2, n)
    alpha = f2 / (theta2 - theta1)
    return bool(np.max(alpha * (T - theta1) - reaction.f(T)) <= 1e-10)


def auto_select_chord(reaction, n_grid=64):
    """Grid search for the chord pair minimizing the critical cell size.

    Scans n_grid x n_grid candidate pairs theta0 < theta1 < theta2 < 1 and
    returns the valid pair whose critical radius R2 (hence l_min, at any M) is
    smallest.  Small R2 wants theta1 close to theta0 (short logarithmic tail)
    and theta2 balancing alpha against the tail start.
    """
    th0 = reaction.theta0
    grid = th0 + (1.0 - th0) * np.arange(1, n_grid + 1) / (n_grid + 1.0)
    fgrid = reaction.f(grid)
    best = None
    best_r2 = math.inf
    for b, theta2 in enumerate(grid):
        f2 = fgrid[b]
        if f2 <= 0.0:
            continue
        for a in range(b):
            theta1 = grid[a]
            r2 = critical_radius(theta1, theta2, f2 / (theta2 - theta1))
            if r2 >= best_r2:
                continue
            if _chord_valid(reaction, theta1, theta2, f2):
                best = (float(theta1), float(theta2))
                best_r2 = r2
    if best is None:
        raise ValidationError("no-valid-chord: every candidate pair failed g <= f")
    return best


def load_profile_csv(path):
    """Two-column CSV (T, f(T)) with strictly increasing T covering [0,1]."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ValidationError("profile-invalid: expected two columns, got %d" % data.shape[1])
    return data[:, 0], data[:, 1]
