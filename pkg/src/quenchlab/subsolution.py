"""Radial sub-solution profile: Bessel core, logarithmic tail, critical cell size.

For a chord-modified rate g (slope alpha between theta1 and theta2) the profile

    Phi(R) = theta1 + (theta2 - theta1) J0(sqrt(alpha) R)   for R <= R1,
    Phi(R) = B log(R2 / R)                                  for R >= R1,

with R1 = xi1/sqrt(alpha), solves Phi'' + Phi'/R + g(Phi) = 0 from the center
value Phi(0) = theta2, Phi'(0) = 0.  Matching value and slope at R1 fixes

    B  = (theta2 - theta1) xi1 J1(xi1),
    R2 = R1 exp(theta1 / B).

On the cell, R = (l / (l_c sqrt(2))) (1 - h/l) with l_c = M^(-1/2), so the
profile is a stationary sub-solution of T_t + A u . grad T = Lap T + M f(T)
for every A (it is constant on streamlines).  It turns negative on the cell
boundary exactly when l exceeds l_min = l_c sqrt(2) R2, which is the critical
cell size for this construction.

J0 and J1 are implemented here (power series up to x = 12, Hankel asymptotic
beyond) so the package carries no special-function dependency.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import ValidationError

# ---------------------------------------------------------------------------
# Bessel functions of order zero and one

_X_SWITCH = 12.0
_X_MAX = 50.0
_N_SERIES = 40          # power-series terms; term 40 at x=12 is ~1e-34
_N_HANKEL = 13          # asymptotic coefficients c_0..c_12

_J0_COEF = np.array([1.0 / (math.factorial(k) ** 2) for k in range(_N_SERIES + 1)])
_J1_COEF = np.array([1.0 / (math.factorial(k) * math.factorial(k + 1))
                     for k in range(_N_SERIES + 1)])


def _series_eval(x, coef):
    z = -0.25 * x * x
    acc = np.full_like(z, coef[_N_SERIES])
    for k in range(_N_SERIES - 1, -1, -1):
        acc = acc * z + coef[k]
    return acc


def _j0_series(x):
    return _series_eval(x, _J0_COEF)


def _j1_series(x):
    return 0.5 * x * _series_eval(x, _J1_COEF)


def _hankel_coeffs(four_nu_sq):
    # c_m = prod_{j<=m} (4 nu^2 - (2j-1)^2) / (m! 8^m)
    c = [1.0]
    num = 1.0
    for m in range(1, _N_HANKEL):
        num *= four_nu_sq - (2 * m - 1) ** 2
        c.append(num / (math.factorial(m) * 8.0 ** m))
    return np.array(c)


_HANKEL_C0 = _hankel_coeffs(0.0)
_HANKEL_C1 = _hankel_coeffs(4.0)


def _hankel_eval(x, c, chi_shift):
    # J_nu(x) ~ sqrt(2/(pi x)) [P cos(chi) - Q sin(chi)], chi = x - chi_shift,
    # P = sum (-1)^k c_{2k} x^{-2k},  Q = sum (-1)^k c_{2k+1} x^{-(2k+1)}
    xi = 1.0 / x
    xi2 = xi * xi
    P = np.zeros_like(x)
    Q = np.zeros_like(x)
    for k in range((_N_HANKEL - 1) // 2, -1, -1):
        sign = 1.0 if k % 2 == 0 else -1.0
        P = P * xi2 + sign * c[2 * k]
        if 2 * k + 1 < _N_HANKEL:
            Q = Q * xi2 + sign * c[2 * k + 1]
    Q = Q * xi
    chi = x - chi_shift
    return np.sqrt(2.0 / (np.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def _bessel_piecewise(x, series_fn, hankel_c, chi_shift):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x < -1e-12) or np.any(x > _X_MAX):
        raise ValidationError("bessel argument outside [0, %g]" % _X_MAX)
    x = np.maximum(x, 0.0)
    out = np.empty_like(x)
    lo = x <= _X_SWITCH
    if np.any(lo):
        out[lo] = series_fn(x[lo])
    if np.any(~lo):
        out[~lo] = _hankel_eval(x[~lo], hankel_c, chi_shift)
    return out[0] if scalar else out


def bessel_j0(x):
    """J0 on [0, 50]; absolute error below 1e-10 against the power series."""
    return _bessel_piecewise(x, _j0_series, _HANKEL_C0, 0.25 * np.pi)


def bessel_j1(x):
    """J1 on [0, 50]; same accuracy contract as bessel_j0."""
    return _bessel_piecewise(x, _j1_series, _HANKEL_C1, 0.75 * np.pi)


def _find_xi1():
    # first zero of J0; bisection on the power series, bracket width 1e-12
    lo, hi = 2.0, 3.0
    flo = _j0_series(np.array([lo]))[0]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = _j0_series(np.array([mid]))[0]
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


XI1 = _find_xi1()
J1_AT_XI1 = float(_j1_series(np.array([XI1]))[0])


class BesselTable:
    """Precomputed constants xi1, J1(xi1) plus the J0/J1 evaluators."""

    def __init__(self):
        self.xi1 = XI1
        self.j1_at_xi1 = J1_AT_XI1

    def j0(self, x):
        return bessel_j0(x)

    def j1(self, x):
        return bessel_j1(x)


# ---------------------------------------------------------------------------
# profile construction


def critical_radius(theta1, theta2, alpha):
    """R2 = (xi1/sqrt(alpha)) exp(theta1 / B), the radius where Phi hits zero."""
    B = (theta2 - theta1) * XI1 * J1_AT_XI1
    return XI1 / math.sqrt(alpha) * math.exp(theta1 / B)


class SubSolution:
    """The two-branch profile with its matching constants, tied to a cell size.

    Attributes
    ----------
    theta1, theta2, alpha : chord parameters
    B, R1, R2 : matching constants
    l, M : cell size and reaction rate; rho = l/(l_c sqrt(2)) is the boundary radius
    l_min : critical cell size l_c sqrt(2) R2
    boundary_value : Phi at the cell boundary (R = rho); negative iff l > l_min
    """

    def __init__(self, theta1, theta2, alpha, l, M):
        self.theta1 = float(theta1)
        self.theta2 = float(theta2)
        self.alpha = float(alpha)
        self.l = float(l)
        self.M = float(M)
        self.B = (self.theta2 - self.theta1) * XI1 * J1_AT_XI1
        self.R1 = XI1 / math.sqrt(self.alpha)
        self.R2 = self.R1 * math.exp(self.theta1 / self.B)
        self.l_c = 1.0 / math.sqrt(self.M)
        self.rho = self.l / (self.l_c * math.sqrt(2.0))
        self.l_min = self.l_c * math.sqrt(2.0) * self.R2
        self.boundary_value = float(self.phi_of_R(self.rho))

    @property
    def applicable(self):
        """True when Phi < 0 on the cell boundary, i.e. l > l_min."""
        return self.boundary_value < 0.0

    def phi_of_R(self, R):
        """Profile value; Bessel core for R <= R1, log tail beyond (any R > 0)."""
        R = np.asarray(R, dtype=float)
        scalar = R.ndim == 0
        R = np.atleast_1d(R)
        out = np.empty_like(R)
        core = R <= self.R1
        if np.any(core):
            out[core] = self.theta1 + (self.theta2 - self.theta1) \
                * bessel_j0(np.sqrt(self.alpha) * R[core])
        if np.any(~core):
            out[~core] = self.B * np.log(self.R2 / R[~core])
        return out[0] if scalar else out

    def dphi_dR(self, R):
        R = np.asarray(R, dtype=float)
        scalar = R.ndim == 0
        R = np.atleast_1d(R)
        out = np.empty_like(R)
        core = R <= self.R1
        if np.any(core):
            sa = math.sqrt(self.alpha)
            out[core] = -(self.theta2 - self.theta1) * sa * bessel_j1(sa * R[core])
        if np.any(~core):
            out[~core] = -self.B / R[~core]
        return out[0] if scalar else out

    def phi_of_stream(self, hu):
        """Phi as a function of the signed unit stream value h/l in [-1, 1]."""
        R = self.rho * (1.0 - np.asarray(hu, dtype=float))
        return self.phi_of_R(np.maximum(R, 0.0))

    def floor_field(self, domain, cell=(0, 0)):
        """max(Phi, 0) on the grid, supported on one cell, zero elsewhere.

        This is the barrier the maximum principle propagates: for l > l_min
        the profile is negative in a collar inside the cell boundary, so the
        zero extension is continuous and remains a sub-solution.
        """
        field = np.zeros(domain.shape)
        sy, sx = domain.cell_slices(*cell)
        s = domain.flow.cell_sign(*cell)
        xs = domain.xs[sx]
        ys = domain.ys[sy]
        hu = s * domain.flow.stream_unit(xs[None, :], ys[:, None])
        field[sy, sx] = np.maximum(self.phi_of_stream(hu), 0.0)
        return field


def build_subsolution(chord, l, M):
    """Assemble the profile for a chord-modified reaction and self-check it.

    The checks assert the matching conditions (value and slope at R1 to 1e-10
    relative) and the radial ODE residual Phi'' + Phi'/R + g(Phi) on a 1e4
    point grid, with Phi'' obtained by differencing the analytic Phi' so the
    Bessel implementation itself is being probed, not an algebraic identity.
    """
    if not (l > 0.0 and M > 0.0):
        raise ValidationError("cell size and reaction rate must be positive")
    sub = SubSolution(chord.theta1, chord.theta2, chord.alpha, l, M)

    # matching: Phi(R1) = theta1 (J0(xi1) = 0 forces it) and slope continuity
    left = sub.theta1 + (sub.theta2 - sub.theta1) * bessel_j0(math.sqrt(sub.alpha) * sub.R1)
    if abs(left - sub.theta1) > 1e-10 * max(1.0, abs(sub.theta1)):
        raise ValidationError("profile value mismatch at R1: %r vs %r" % (left, sub.theta1))
    dl = -(sub.theta2 - sub.theta1) * math.sqrt(sub.alpha) * bessel_j1(math.sqrt(sub.alpha) * sub.R1)
    dr = -sub.B / sub.R1
    if abs(dl - dr) > 1e-10 * abs(dr):
        raise ValidationError("profile slope mismatch at R1: %r vs %r" % (dl, dr))

    # radial ODE residual; g needs no base profile here: on the core branch
    # Phi lies in [theta1, theta2] where g = alpha (Phi - theta1), on the tail
    # Phi <= theta1 where g = 0
    R = np.linspace(1e-3 * sub.R1, sub.R2, 10000)
    h = 1e-5 * max(1.0, sub.R1)
    dpp = (sub.dphi_dR(R + h) - sub.dphi_dR(R - h)) / (2.0 * h)
    phi = sub.phi_of_R(R)
    gval = sub.alpha * np.clip(phi - sub.theta1, 0.0, None)
    resid = dpp + sub.dphi_dR(R) / R + gval
    # skip samples whose FD stencil straddles R1: the matching point is C1 but
    # not C2, so differencing Phi' across it is meaningless
    keep = np.abs(R - sub.R1) > 2.0 * h
    worst = float(np.max(np.abs(resid[keep])))
    if worst > 1e-8:
        raise ValidationError("radial ODE residual %g exceeds 1e-8" % worst)
    return sub


def critical_cell_size(chord, M):
    """l_min = l_c sqrt(2) R2; cells at least this large admit the barrier."""
    if not M > 0.0:
        raise ValidationError("reaction rate must be positive")
    return math.sqrt(2.0 / M) * critical_radius(chord.theta1, chord.theta2, chord.alpha)


def verify_subsolution(sub, flow, reaction, A, grid_resolution=1024):
    """Evaluate the sub-solution inequality on one cell by finite differences.

    Samples the smooth profile Phi(h/l) on an n x n grid over cell (0,0) and
    forms A u . grad(Phi) - Lap(Phi) - M f(max(Phi,0)) with 4th-order centred
    differences.  The advection term vanishes analytically (Phi is constant
    on streamlines), and -Lap(Phi) <= M g(Phi) <= M f(Phi+) pointwise on both
    branches, so the maximum must be <= 0 up to discretization error.  A band
    of width 2 dx along the separatrices is excluded, where |grad h| degenerates.

    Returns a dict with max_residual, max_advection, boundary_value, l_min,
    applicable, n, and a grid_too_coarse flag (warned when residual > 1e-2).
    """
    if abs(flow.l - sub.l) > 1e-12 * sub.l:
        raise ValidationError("flow cell size %r does not match profile %r" % (flow.l, sub.l))
    n = int(grid_resolution)
    if n < 64:
        raise ValidationError("grid_resolution must be >= 64")
    l = sub.l
    dx = np.pi * l / (n - 1)
    x = dx * np.arange(n)
    y = dx * np.arange(n)
    XX = x[None, :]
    YY = y[:, None]
    hu = flow.stream_unit(XX, YY)
    PH = sub.phi_of_stream(hu)
    u1, u2 = flow.velocity(XX, YY)
    u1 = np.broadcast_to(u1, PH.shape)
    u2 = np.broadcast_to(u2, PH.shape)

    c = slice(2, n - 2)

    def d1(f, axis):
        # (-f[i+2] + 8 f[i+1] - 8 f[i-1] + f[i-2]) / (12 dx)
        if axis == 1:
            return (-f[c, 4:] + 8 * f[c, 3:-1] - 8 * f[c, 1:-3] + f[c, :-4]) / (12 * dx)
        return (-f[4:, c] + 8 * f[3:-1, c] - 8 * f[1:-3, c] + f[:-4, c]) / (12 * dx)

    def d2(f, axis):
        # (-f[i+2] + 16 f[i+1] - 30 f[i] + 16 f[i-1] - f[i-2]) / (12 dx^2)
        if axis == 1:
            return (-f[c, 4:] + 16 * f[c, 3:-1] - 30 * f[c, 2:-2]
                    + 16 * f[c, 1:-3] - f[c, :-4]) / (12 * dx * dx)
        return (-f[4:, c] + 16 * f[3:-1, c] - 30 * f[2:-2, c]
                + 16 * f[1:-3, c] - f[:-4, c]) / (12 * dx * dx)

    adv = A * (u1[c, c] * d1(PH, 1) + u2[c, c] * d1(PH, 0))
    lap = d2(PH, 1) + d2(PH, 0)
    rate = sub.M * reaction.f(np.clip(PH[c, c], 0.0, 1.0))
    resid = adv - lap - rate

    max_residual = float(np.max(resid))
    report = {
        "max_residual": max_residual,
        "max_advection": float(np.max(np.abs(adv))),
        "boundary_value": sub.boundary_value,
        "l_min": sub.l_min,
        "applicable": sub.applicable,
        "n": n,
        "grid_too_coarse": max_residual > 1e-2,
    }
    if report["grid_too_coarse"]:
        warnings.warn("grid-too-coarse: residual %g at n=%d" % (max_residual, n))
    return report
