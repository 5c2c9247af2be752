"""Compiled closed-loop right-hand side and fixed-step integrators.

The plant is passed in a uniform affine form shared by both circuit classes::

    dI = -Linv (R I + Gamma(u) V - b(u))      Gamma(u) = Gamma0 + sum_k u_k dGamma[k]
    dV =  Cinv (Gamma(u)^T I - G V)            b(u)     = b0 + sum_k u_k db[k]

A constant-topology circuit maps to ``dGamma = 0``, ``b0 = 0``, ``db[k] = B[:, k]``.
The ODE state is ``z = (I, V, c)`` with ``c`` the controller state: the duty or
source vector for laws 0-2 and the integrator ``phi`` for law 3.

Laws: 0 input shaping, 1 output shaping through an integrating factor,
2 output shaping of a constant-topology circuit, 3 its integrator form.
"""

import math

import numpy as np
from numba import njit

LAW_INPUT = 0
LAW_OUTPUT_SWITCHED = 1
LAW_OUTPUT_RLC = 2
LAW_OUTPUT_RLC_ALT = 3

METHOD_RK4 = 0
METHOD_RADAU = 1

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_NEWTON = 2


@njit(cache=True)
def _gamma_factor(code, scale, I1, V1):
    """Return ``(m, gamma)``; NaN outside the domain."""
    if code == 0:
        return 1.0, scale * I1
    if code == 1:
        if V1 <= 0.0:
            return math.nan, math.nan
        return 1.0 / (V1 * V1), I1 / V1
    if code == 2:
        if I1 <= 0.0:
            return math.nan, math.nan
        return 1.0 / (I1 * I1), -V1 / I1
    if code == 3:
        if V1 <= 0.0:
            return math.nan, math.nan
        return 1.0 / (V1 * V1 + I1 * I1), math.atan(I1 / V1)
    if I1 <= 0.0 or V1 <= 0.0:
        return math.nan, math.nan
    return 1.0 / (I1 * V1), math.log(I1 / V1)


@njit(cache=True)
def rates(z, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
          law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
          dz, u, y, ups, gam, tmp):
    """Fill ``dz`` and the auxiliaries ``u``, ``y`` (outputs) and ``ups`` (input rates)."""
    p = kd.shape[0]
    off = sig + rho
    # source or duty values
    for k in range(p):
        if law == LAW_OUTPUT_RLC_ALT:
            bi = 0.0
            for i in range(sig):
                bi += db[k, i] * z[i]
            u[k] = -(ki[k] * z[off + k] + kd[k] * bi)
        else:
            u[k] = z[off + k]
    for i in range(sig):
        for j in range(rho):
            acc = Gamma0[i, j]
            for k in range(p):
                acc += u[k] * dGamma[k, i, j]
            gam[i, j] = acc
    # tmp = R I + Gamma V - b
    for i in range(sig):
        acc = -b0[i]
        for k in range(p):
            acc -= u[k] * db[k, i]
        for j in range(sig):
            acc += R[i, j] * z[j]
        for j in range(rho):
            acc += gam[i, j] * z[sig + j]
        tmp[i] = acc
    for i in range(sig):
        acc = 0.0
        for j in range(sig):
            acc -= Linv[i, j] * tmp[j]
        dz[i] = acc
    for j in range(rho):
        acc = 0.0
        for i in range(sig):
            acc += gam[i, j] * z[i]
        for l in range(rho):
            acc -= G[j, l] * z[sig + l]
        tmp[j] = acc
    for j in range(rho):
        acc = 0.0
        for l in range(rho):
            acc += Cinv[j, l] * tmp[l]
        dz[sig + j] = acc
    for k in range(p):
        acc = 0.0
        for i in range(sig):
            for j in range(rho):
                c = dGamma[k, i, j]
                if c != 0.0:
                    acc += c * (z[i] * dz[sig + j] - dz[i] * z[sig + j])
            acc += db[k, i] * dz[i]
        y[k] = acc
    if law == LAW_INPUT:
        for k in range(p):
            ups[k] = (mu[k] - ki[k] * (u[k] - ubar[k]) - y[k]) / kd[k]
    elif law == LAW_OUTPUT_SWITCHED:
        m, g = _gamma_factor(gcode, gscale, z[gi], z[sig + gv])
        for k in range(p):
            ups[k] = m * (mu[k] - ki[k] * (g - gstar) - kd[k] * m * y[k])
    elif law == LAW_OUTPUT_RLC:
        for k in range(p):
            bi = 0.0
            for i in range(sig):
                bi += db[k, i] * z[i]
            ups[k] = mu[k] - ki[k] * (bi - target[k]) - kd[k] * y[k]
    else:
        for k in range(p):
            bi = 0.0
            for i in range(sig):
                bi += db[k, i] * z[i]
            phidot = -mu[k] / ki[k] + (bi - target[k])
            dz[off + k] = phidot
            ups[k] = -(ki[k] * phidot + kd[k] * y[k])
    if sat and law != LAW_OUTPUT_RLC_ALT:
        for k in range(p):
            if (u[k] <= 0.0 and ups[k] < 0.0) or (u[k] >= 1.0 and ups[k] > 0.0):
                ups[k] = 0.0
    if law != LAW_OUTPUT_RLC_ALT:
        for k in range(p):
            dz[off + k] = ups[k]


@njit(cache=True)
def _quad(v, M):
    n = v.shape[0]
    acc = 0.0
    for i in range(n):
        for j in range(n):
            acc += v[i] * M[i, j] * v[j]
    return acc


@njit(cache=True)
def run_segment(z0, k_start, k_end, dt, stride, method,
                sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
                law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
                rec_t, rec_z, rec_u, rec_dz, rec_ups, rec_supply, rec_supply_step, rec_diss_step,
                sat_times):
    """Integrate grid steps ``k_start .. k_end`` writing records in place.

    Returns ``(status, k_fail, n_records, n_saturation_events, z_end)``.
    """
    n = z0.shape[0]
    p = kd.shape[0]
    off = sig + rho
    z = z0.copy()
    dz = np.empty(n)
    u = np.empty(p)
    y = np.empty(p)
    ups = np.empty(p)
    gam = np.empty((sig, rho))
    tmp = np.empty(max(sig, rho))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    zt = np.empty(n)
    u2 = np.empty(p)
    y2 = np.empty(p)
    ups2 = np.empty(p)
    # Radau IIA (two stages, order 3, stiffly accurate)
    a11, a12, a21, a22 = 5.0 / 12.0, -1.0 / 12.0, 0.75, 0.25
    J = np.zeros((n, n))
    M = np.zeros((2 * n, 2 * n))
    Z = np.zeros(2 * n)
    F1 = np.empty(n)
    F2 = np.empty(n)
    res = np.empty(2 * n)
    clamped = np.zeros(p, dtype=np.bool_)
    n_sat = 0
    nrec = 0
    sup_acc = 0.0
    diss_acc = 0.0
    prev_y = np.zeros(p)
    prev_u = np.zeros(p)
    prev_diss = 0.0
    for k in range(k_start, k_end + 1):
        rates(z, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
              law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
              k1, u, y, ups, gam, tmp)
        sup = 0.0
        for q in range(p):
            sup += ups[q] * y[q]
        diss = _quad(k1[:sig], R) + _quad(k1[sig:off], G)
        if not (math.isfinite(sup) and math.isfinite(diss)):
            return STATUS_NONFINITE, k, nrec, n_sat, z
        if k > k_start:
            # supply as the Stieltjes sum of y du: well conditioned even when
            # the input rate is a small difference of large terms
            for q in range(p):
                sup_acc += 0.5 * (prev_y[q] + y[q]) * (u[q] - prev_u[q])
            diss_acc += 0.5 * dt * (prev_diss + diss)
        for q in range(p):
            prev_y[q] = y[q]
            prev_u[q] = u[q]
        prev_diss = diss
        if (k - k_start) % stride == 0 or k == k_end:
            rec_t[nrec] = k * dt
            rec_z[nrec, :] = z
            rec_u[nrec, :] = u
            rec_dz[nrec, :] = k1[:off]
            rec_ups[nrec, :] = ups
            rec_supply[nrec] = sup
            rec_supply_step[nrec] = sup_acc
            rec_diss_step[nrec] = diss_acc
            sup_acc = 0.0
            diss_acc = 0.0
            nrec += 1
        if k == k_end:
            break
        if method == METHOD_RK4:
            for i in range(n):
                zt[i] = z[i] + 0.5 * dt * k1[i]
            rates(zt, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
                  law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
                  k2, u2, y2, ups2, gam, tmp)
            for i in range(n):
                zt[i] = z[i] + 0.5 * dt * k2[i]
            rates(zt, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
                  law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
                  k3, u2, y2, ups2, gam, tmp)
            for i in range(n):
                zt[i] = z[i] + dt * k3[i]
            rates(zt, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
                  law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
                  k4, u2, y2, ups2, gam, tmp)
            for i in range(n):
                z[i] = z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            # forward-difference Jacobian at the grid point
            for j in range(n):
                h = 1e-7 * max(abs(z[j]), 1e-3)
                for i in range(n):
                    zt[i] = z[i]
                zt[j] += h
                rates(zt, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
                      law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
                      k2, u2, y2, ups2, gam, tmp)
                for i in range(n):
                    J[i, j] = (k2[i] - k1[i]) / h
            for i in range(n):
                for j in range(n):
                    d = 1.0 if i == j else 0.0
                    M[i, j] = d - dt * a11 * J[i, j]
                    M[i, n + j] = -dt * a12 * J[i, j]
                    M[n + i, j] = -dt * a21 * J[i, j]
                    M[n + i, n + j] = d - dt * a22 * J[i, j]
            for i in range(n):
                Z[i] = dt * (a11 + a12) * k1[i]
                Z[n + i] = dt * k1[i]
            scale = 1.0
            for i in range(n):
                scale = max(scale, abs(z[i]))
            converged = False
            for it in range(50):
                for i in range(n):
                    zt[i] = z[i] + Z[i]
                rates(zt, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
                      law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
                      F1, u2, y2, ups2, gam, tmp)
                for i in range(n):
                    zt[i] = z[i] + Z[n + i]
                rates(zt, sig, rho, Linv, Cinv, R, G, Gamma0, dGamma, b0, db,
                      law, kd, ki, mu, ubar, target, gcode, gscale, gi, gv, gstar, sat,
                      F2, u2, y2, ups2, gam, tmp)
                for i in range(n):
                    res[i] = -(Z[i] - dt * (a11 * F1[i] + a12 * F2[i]))
                    res[n + i] = -(Z[n + i] - dt * (a21 * F1[i] + a22 * F2[i]))
                delta = np.linalg.solve(M, res)
                step = 0.0
                for i in range(2 * n):
                    Z[i] += delta[i]
                    step = max(step, abs(delta[i]))
                if not math.isfinite(step):
                    break
                if step <= 1e-14 * scale:
                    converged = True
                    break
            if not converged:
                return STATUS_NEWTON, k, nrec, n_sat, z
            for i in range(n):
                z[i] = z[i] + Z[n + i]
        if sat and law != LAW_OUTPUT_RLC_ALT:
            for q in range(p):
                v = min(max(z[off + q], 0.0), 1.0)
                z[off + q] = v
                at_bound = v <= 0.0 or v >= 1.0
                if at_bound and not clamped[q]:
                    if n_sat < sat_times.shape[0]:
                        sat_times[n_sat] = (k + 1) * dt
                    n_sat += 1
                clamped[q] = at_bound
        for i in range(n):
            if not math.isfinite(z[i]):
                return STATUS_NONFINITE, k + 1, nrec, n_sat, z
    return STATUS_OK, k_end, nrec, n_sat, z
