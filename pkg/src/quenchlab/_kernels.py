"""Compiled inner loops: upwind transport, tridiagonal sweeps, cell-heating
steps, and the counter-based Monte Carlo walker.

All kernels are single-threaded on purpose: parallelism lives at the process
level (independent runs), which keeps every result bit-identical for any
worker count.  Face velocities are passed as separable 1-d factors,

    u1(x_{i+1/2}, y_j) = fx[i] * gy[j],      fx[i] = A sin(x_{i+1/2}/l)
    u2(x_i, y_{j+1/2}) = gxd[i] * fy[j],     gxd[i] = -A cos(x_i/l)

with gy[j] = cos(y_j/l) and fy[j] = A sin(y_{j+1/2}/l) folded so the amplitude
never appears inside the loops.  Face-sampled velocities of this flow are
discretely divergence-free (the 2 cos sin(d/2) factors cancel between the two
directions), so the flux-form donor-cell update conserves mass exactly and
preserves constants.

Boundary codes: bcx 0 = Dirichlet both ends, 1 = reflection at the left end
with Dirichlet at the right (half domain of an even-in-x solution), 2 =
periodic.  bcy 0 = periodic, 1 = reflection at both ends.  Reflection uses the
true geometric face velocity at the ghost face (fxl / fyl), which reproduces
the full-grid scheme exactly for symmetric data whether the velocity is even
or odd across the mirror line.
"""

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# monotone advection-diffusion step (forward Euler, donor cell + 5-point)

@njit(cache=True)
def advdiff_upwind(T, Tn, fx, gy, gxd, fy, dtdx, mu, bcx, bcy, fxl, fyl, wy):
    """One explicit step of T_t + div(u T) = Lap T into Tn; returns the mass
    (in nodal-sum units) lost through the Dirichlet x-faces this step.

    wy holds the row multiplicities of a reflection-reduced grid (all ones on
    a full grid) so the reported leak always refers to the full strip.
    """
    ny, nx = T.shape
    leak = 0.0
    for j in range(ny):
        if bcy == 0:
            jm = j - 1 if j > 0 else ny - 1
            jp = j + 1 if j < ny - 1 else 0
            fym = fy[j - 1] if j > 0 else fy[ny - 1]
        else:
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < ny - 1 else ny - 2
            fym = fy[j - 1] if j > 0 else fyl
        fyp = fy[j]
        g = gy[j]
        # interior columns: branch-free donor form (max/min is the same
        # arithmetic as the sign test and lets the loop vectorize)
        for i in range(1, nx - 1):
            uxm = fx[i - 1] * g
            uxp = fx[i] * g
            uym = gxd[i] * fym
            uyp = gxd[i] * fyp
            tc = T[j, i]
            tw = T[j, i - 1]
            te = T[j, i + 1]
            ts = T[jm, i]
            tn = T[jp, i]
            frx = max(uxp, 0.0) * tc + min(uxp, 0.0) * te
            flx = max(uxm, 0.0) * tw + min(uxm, 0.0) * tc
            fry = max(uyp, 0.0) * tc + min(uyp, 0.0) * tn
            fly = max(uym, 0.0) * ts + min(uym, 0.0) * tc
            Tn[j, i] = tc - dtdx * (frx - flx + fry - fly) \
                + mu * (tw + te + ts + tn - 4.0 * tc)
        if bcx == 2:
            # the two wrap columns
            for i in range(0, nx, nx - 1):
                im = nx - 1 if i == 0 else i - 1
                ip = 1 if i == 0 else 0
                uxm = (fx[nx - 1] if i == 0 else fx[i - 1]) * g
                uxp = fx[i] * g
                uym = gxd[i] * fym
                uyp = gxd[i] * fyp
                tc = T[j, i]
                tw = T[j, im]
                te = T[j, ip]
                ts = T[jm, i]
                tn = T[jp, i]
                frx = max(uxp, 0.0) * tc + min(uxp, 0.0) * te
                flx = max(uxm, 0.0) * tw + min(uxm, 0.0) * tc
                fry = max(uyp, 0.0) * tc + min(uyp, 0.0) * tn
                fly = max(uym, 0.0) * ts + min(uym, 0.0) * tc
                Tn[j, i] = tc - dtdx * (frx - flx + fry - fly) \
                    + mu * (tw + te + ts + tn - 4.0 * tc)
        else:
            if bcx == 1:
                # mirror column i = 0: west ghost is column 1
                uxm = fxl * g
                uxp = fx[0] * g
                uym = gxd[0] * fym
                uyp = gxd[0] * fyp
                tc = T[j, 0]
                tw = T[j, 1]
                te = T[j, 1]
                ts = T[jm, 0]
                tn = T[jp, 0]
                frx = max(uxp, 0.0) * tc + min(uxp, 0.0) * te
                flx = max(uxm, 0.0) * tw + min(uxm, 0.0) * tc
                fry = max(uyp, 0.0) * tc + min(uyp, 0.0) * tn
                fly = max(uym, 0.0) * ts + min(uym, 0.0) * tc
                Tn[j, 0] = tc - dtdx * (frx - flx + fry - fly) \
                    + mu * (tw + te + ts + tn - 4.0 * tc)
            Tn[j, nx - 1] = 0.0
            u0 = fx[0] * g
            uR = fx[nx - 2] * g
            # on a reflected half grid the right end stands for both strip ends
            wxe = 2.0 if bcx == 1 else 1.0
            if bcx == 0:
                Tn[j, 0] = 0.0
                # left face: advective outflow only when u < 0; diffusive always
                if u0 < 0.0:
                    leak += -dtdx * u0 * T[j, 1] * wy[j]
                leak += mu * T[j, 1] * wy[j]
            if uR > 0.0:
                leak += dtdx * uR * T[j, nx - 2] * wy[j] * wxe
            leak += mu * T[j, nx - 2] * wy[j] * wxe
    return leak


@njit(cache=True)
def tri_sweep_rows_cyclic(T, cp, invd, sub, z, zfac, work):
    """Periodic-in-x row solve via the Sherman-Morrison correction."""
    ny, nx = T.shape
    n = cp.shape[0]
    for j in range(ny):
        work[0] = T[j, 0] * invd[0]
        for k in range(1, n):
            work[k] = (T[j, k] + sub[k] * work[k - 1]) * invd[k]
        for k in range(n - 2, -1, -1):
            work[k] = work[k] + cp[k] * work[k + 1]
        corr = (work[0] + work[n - 1]) * zfac
        for k in range(n):
            T[j, k] = work[k] - corr * z[k]
    return None


# ---------------------------------------------------------------------------
# reaction substeps: classical 4-stage integration of T' = M f(T)

@njit(cache=True)
def react_default(T, mdt, nsub, th0, cre, lo_skip):
    """Pointwise RK4 of the default ignition profile f = (T-th0)+ (1-T) cre.

    mdt = M * dt; nsub substeps keep M * h <= 0.05 so the local error is below
    1e-8 and the map stays monotone.  Nodes at or below th0 (when lo_skip) and
    at 1 are exact fixed points and are skipped.
    """
    ny, nx = T.shape
    h = mdt / nsub
    for j in range(ny):
        for i in range(nx):
            v = T[j, i]
            if (lo_skip and v <= th0) or v >= 1.0:
                continue
            for _ in range(nsub):
                k1 = (v - th0) * (1.0 - v) * cre if v > th0 else 0.0
                w = v + 0.5 * h * k1
                k2 = (w - th0) * (1.0 - w) * cre if w > th0 else 0.0
                w = v + 0.5 * h * k2
                k3 = (w - th0) * (1.0 - w) * cre if w > th0 else 0.0
                w = v + h * k3
                k4 = (w - th0) * (1.0 - w) * cre if w > th0 else 0.0
                v += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            T[j, i] = v
    return None


@njit(cache=True)
def _interp_scalar(v, xt, yt):
    n = xt.shape[0]
    if v <= xt[0]:
        return yt[0]
    if v >= xt[n - 1]:
        return yt[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xt[mid] <= v:
            lo = mid
        else:
            hi = mid
    t = (v - xt[lo]) / (xt[lo + 1] - xt[lo])
    return yt[lo] + t * (yt[lo + 1] - yt[lo])


@njit(cache=True)
def react_table(T, mdt, nsub, xt, yt):
    """RK4 reaction substep for a tabulated piecewise-linear profile."""
    ny, nx = T.shape
    h = mdt / nsub
    for j in range(ny):
        for i in range(nx):
            v = T[j, i]
            for _ in range(nsub):
                k1 = _interp_scalar(v, xt, yt)
                k2 = _interp_scalar(v + 0.5 * h * k1, xt, yt)
                k3 = _interp_scalar(v + 0.5 * h * k2, xt, yt)
                k4 = _interp_scalar(v + h * k3, xt, yt)
                v += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            T[j, i] = v
    return None


# ---------------------------------------------------------------------------
# implicit diffusion sweeps (constant-coefficient Thomas, prefactored)

@njit(cache=True)
def tri_sweep_rows(T, cp, invd, sub, work, ilo):
    """Solve (I - lam D2) row-wise in place on columns ilo..ilo+n-1.

    cp, invd, sub are prefactored elimination coefficients (cp stored with
    positive sign; sub[k] is the magnitude of the sub-diagonal in row k, which
    is 2 lam at a mirrored end).  Dirichlet neighbours outside the solved
    block contribute zero.
    """
    ny, nx = T.shape
    n = cp.shape[0]
    for j in range(ny):
        work[0] = T[j, ilo] * invd[0]
        for k in range(1, n):
            work[k] = (T[j, ilo + k] + sub[k] * work[k - 1]) * invd[k]
        T[j, ilo + n - 1] = work[n - 1]
        for k in range(n - 2, -1, -1):
            work[k] = work[k] + cp[k] * work[k + 1]
            T[j, ilo + k] = work[k]
    return None


@njit(cache=True)
def tri_sweep_cols(T, cp, invd, sub, work):
    """Solve (I - lam D2) down each column (reflecting ends) in place."""
    ny, nx = T.shape
    n = cp.shape[0]
    for i in range(nx):
        work[0] = T[0, i] * invd[0]
        for k in range(1, n):
            work[k] = (T[k, i] + sub[k] * work[k - 1]) * invd[k]
        T[n - 1, i] = work[n - 1]
        for k in range(n - 2, -1, -1):
            work[k] = work[k] + cp[k] * work[k + 1]
            T[k, i] = work[k]
    return None


@njit(cache=True)
def tri_sweep_cols_cyclic(T, cp, invd, sub, z, zfac, work):
    """Periodic-in-y column solve via the Sherman-Morrison correction.

    z is the presolved correction column of the rank-one update and
    zfac = 1/(1 + z[0] + z[n-1]); both are shared by every column.
    """
    ny, nx = T.shape
    n = cp.shape[0]
    for i in range(nx):
        work[0] = T[0, i] * invd[0]
        for k in range(1, n):
            work[k] = (T[k, i] + sub[k] * work[k - 1]) * invd[k]
        for k in range(n - 2, -1, -1):
            work[k] = work[k] + cp[k] * work[k + 1]
        corr = (work[0] + work[n - 1]) * zfac
        for k in range(n):
            T[k, i] = work[k] - corr * z[k]
    return None


# ---------------------------------------------------------------------------
# third-order upwind-biased right-hand side (diagnostics scheme)

@njit(cache=True)
def rhs_highorder(T, R, fx, gy, gxd, fy, invdx, nu):
    """R = -div(u T) + nu_coef * Lap T with 3rd-order biased face states.

    Dirichlet in x (end faces fall back to donor cell), periodic in y.
    nu = 1/dx^2 times the molecular diffusivity (unity here).
    """
    ny, nx = T.shape
    for j in range(ny):
        jm = j - 1 if j > 0 else ny - 1
        jp = j + 1 if j < ny - 1 else 0
        jp2 = jp + 1 if jp < ny - 1 else 0
        jm2 = jm - 1 if jm > 0 else ny - 1
        g = gy[j]
        for i in range(1, nx - 1):
            # x faces i-1/2 and i+1/2
            uxm = fx[i - 1] * g
            uxp = fx[i] * g
            if i >= 2 and i <= nx - 3:
                if uxp > 0.0:
                    tfp = (2.0 * T[j, i + 1] + 5.0 * T[j, i] - T[j, i - 1]) / 6.0
                else:
                    tfp = (2.0 * T[j, i] + 5.0 * T[j, i + 1] - T[j, i + 2]) / 6.0
                if uxm > 0.0:
                    tfm = (2.0 * T[j, i] + 5.0 * T[j, i - 1] - T[j, i - 2]) / 6.0
                else:
                    tfm = (2.0 * T[j, i - 1] + 5.0 * T[j, i] - T[j, i + 1]) / 6.0
            else:
                tfp = T[j, i] if uxp > 0.0 else T[j, i + 1]
                tfm = T[j, i - 1] if uxm > 0.0 else T[j, i]
            uym = gxd[i] * (fy[j - 1] if j > 0 else fy[ny - 1])
            uyp = gxd[i] * fy[j]
            if uyp > 0.0:
                tgp = (2.0 * T[jp, i] + 5.0 * T[j, i] - T[jm, i]) / 6.0
            else:
                tgp = (2.0 * T[j, i] + 5.0 * T[jp, i] - T[jp2, i]) / 6.0
            if uym > 0.0:
                tgm = (2.0 * T[j, i] + 5.0 * T[jm, i] - T[jm2, i]) / 6.0
            else:
                tgm = (2.0 * T[jm, i] + 5.0 * T[j, i] - T[jp, i]) / 6.0
            adv = invdx * (uxp * tfp - uxm * tfm + uyp * tgp - uym * tgm)
            lap = nu * (T[j, i - 1] + T[j, i + 1] + T[jm, i] + T[jp, i] - 4.0 * T[j, i])
            R[j, i] = lap - adv
        R[j, 0] = 0.0
        R[j, nx - 1] = 0.0
    return None


# ---------------------------------------------------------------------------
# cell-heating problem on the masked level-set domain

@njit(cache=True)
def cell_step(Q, Qn, act, cW, cE, cS, cN, cC, ufx, ufy, gyv, gxv, dtdx, dt, sig):
    """One explicit step of the Dirichlet cell problem; returns sum over the
    active nodes of Qn.

    Inactive nodes hold the boundary signal sig; the c* arrays are the
    Shortley-Weller diffusion weights (already folded with 1/dx^2), cC the
    centre weight.  Advection is donor-cell on the same masked stencil; the
    boundary streamline is tangent to the flow so cut-face transport is small.
    """
    ny, nx = Q.shape
    total = 0.0
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            if act[j, i] == 0:
                continue
            qc = Q[j, i]
            qw = Q[j, i - 1] if act[j, i - 1] == 1 else sig
            qe = Q[j, i + 1] if act[j, i + 1] == 1 else sig
            qs = Q[j - 1, i] if act[j - 1, i] == 1 else sig
            qn = Q[j + 1, i] if act[j + 1, i] == 1 else sig
            uxm = ufx[i - 1] * gyv[j]
            uxp = ufx[i] * gyv[j]
            uym = gxv[i] * ufy[j - 1]
            uyp = gxv[i] * ufy[j]
            frx = uxp * qc if uxp > 0.0 else uxp * qe
            flx = uxm * qw if uxm > 0.0 else uxm * qc
            fry = uyp * qc if uyp > 0.0 else uyp * qn
            fly = uym * qs if uym > 0.0 else uym * qc
            val = qc + dt * (cW[j, i] * qw + cE[j, i] * qe + cS[j, i] * qs
                             + cN[j, i] * qn - cC[j, i] * qc) \
                - dtdx * (frx - flx + fry - fly)
            Qn[j, i] = val
            total += val
    return total


# ---------------------------------------------------------------------------
# counter-based RNG (4x32 counters, 10 rounds) and the survival walker

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint32(0x9E3779B9)
PHILOX_W1 = np.uint32(0xBB67AE85)
_U32 = np.uint64(0xFFFFFFFF)


@njit(cache=True)
def _philox4(c0, c1, c2, c3, k0, k1):
    """10-round 4x32 keyed counter hash; returns four uint32 lanes."""
    for _ in range(10):
        p0 = PHILOX_M0 * np.uint64(c0)
        p1 = PHILOX_M1 * np.uint64(c2)
        hi0 = np.uint32(p0 >> np.uint64(32))
        lo0 = np.uint32(p0 & _U32)
        hi1 = np.uint32(p1 >> np.uint64(32))
        lo1 = np.uint32(p1 & _U32)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = np.uint32(k0 + PHILOX_W0)
        k1 = np.uint32(k1 + PHILOX_W1)
    return c0, c1, c2, c3


_INV32 = 1.0 / 4294967296.0


@njit(cache=True)
def survival_paths(x0, y0, n_paths, path_base, seed, A, l, h0, dt, n_steps,
                   monitor_steps, counts):
    """Walk paths of dX = -A u dt + sqrt(2) dB from (x0, y0); count survivors.

    A path survives a monitor step if it has not crossed the level h = h0 by
    then, including the sub-step Brownian-bridge crossing test.  counts[k]
    accumulates survivors at monitor_steps[k]; integer accumulation makes the
    result independent of how paths are split into blocks.
    """
    n_mon = monitor_steps.shape[0]
    sloc = 1.0 / l
    root = np.sqrt(2.0 * dt)
    k0 = np.uint32(seed & 0xFFFFFFFF)
    k1 = np.uint32((seed >> 32) & 0xFFFFFFFF)
    for p in range(n_paths):
        pid = path_base + p
        c2 = np.uint32(pid & 0xFFFFFFFF)
        c3 = np.uint32((pid >> 32) & 0xFFFFFFFF)
        x = x0
        y = y0
        sx = np.sin(x * sloc)
        cx = np.cos(x * sloc)
        sy = np.sin(y * sloc)
        cy = np.cos(y * sloc)
        f_old = l * sx * sy - h0
        death = n_steps + 1
        for s in range(n_steps):
            r0, r1, r2, r3 = _philox4(np.uint32(s), np.uint32(s >> 32), c2, c3, k0, k1)
            u1 = (r0 + 0.5) * _INV32
            u2 = (r1 + 0.5) * _INV32
            u3 = (r2 + 0.5) * _INV32
            rad = np.sqrt(-2.0 * np.log(u1))
            n1 = rad * np.cos(2.0 * np.pi * u2)
            n2 = rad * np.sin(2.0 * np.pi * u2)
            # drift -A u = (-A sin cx... ) evaluated at the current point
            x = x - A * sx * cy * dt + root * n1
            y = y + A * cx * sy * dt + root * n2
            sx = np.sin(x * sloc)
            cx = np.cos(x * sloc)
            sy = np.sin(y * sloc)
            cy = np.cos(y * sloc)
            f_new = l * sx * sy - h0
            if f_new <= 0.0:
                death = s + 1
                break
            g2 = sx * sx * cy * cy + cx * cx * sy * sy
            prod = f_old * f_new
            if prod < 20.0 * g2 * dt:
                if u3 < np.exp(-prod / (g2 * dt)):
                    death = s + 1
                    break
            f_old = f_new
        for k in range(n_mon):
            if death > monitor_steps[k]:
                counts[k] += 1
    return None
