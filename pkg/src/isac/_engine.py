"""Compiled inner loops: RK4 rollouts, backward adjoint, cost terms and the
per-knot closed-form action schedule.

All kernels are ``numba``-compiled and operate on flat arrays. Model dynamics
enter as compiled callbacks ``drift(t, x, p, out)``, ``imap(t, x, p, out)``,
``jac(t, x, u, p, out)`` plus a parameter vector ``p``. Control is
sample-and-hold: the value active at a step's start is held through all four
RK4 stages of that step. Quaternion blocks (identified by their start index)
are renormalized after every step, and the adjoint applies the matching
tangent projection so that costates stay exact sensitivities of the simulated
(projected) trajectory.
"""

import numpy as np
from numba import njit

_TWO_PI = 2.0 * np.pi


@njit(cache=True)
def _renorm(x, qstarts):
    for b in range(qstarts.shape[0]):
        s = qstarts[b]
        nrm = np.sqrt(x[s] ** 2 + x[s + 1] ** 2 + x[s + 2] ** 2 + x[s + 3] ** 2)
        if nrm > 1e-12:
            x[s] /= nrm
            x[s + 1] /= nrm
            x[s + 2] /= nrm
            x[s + 3] /= nrm


@njit(cache=True)
def _project_costate(rho, x, qstarts):
    # transpose-Jacobian of the per-step renormalization: (I - q q^T) on each block
    for b in range(qstarts.shape[0]):
        s = qstarts[b]
        dot = (rho[s] * x[s] + rho[s + 1] * x[s + 1]
               + rho[s + 2] * x[s + 2] + rho[s + 3] * x[s + 3])
        rho[s] -= dot * x[s]
        rho[s + 1] -= dot * x[s + 1]
        rho[s + 2] -= dot * x[s + 2]
        rho[s + 3] -= dot * x[s + 3]


@njit(cache=True)
def _error_vec(x, xd, angle_mask, qstarts, e):
    n = x.shape[0]
    for i in range(n):
        e[i] = x[i] - xd[i]
        if angle_mask[i]:
            e[i] = np.pi - np.mod(np.pi - e[i], _TWO_PI)
    for b in range(qstarts.shape[0]):
        s = qstarts[b]
        dot = (xd[s] * x[s] + xd[s + 1] * x[s + 1]
               + xd[s + 2] * x[s + 2] + xd[s + 3] * x[s + 3])
        sign = 1.0 if dot >= 0.0 else -1.0
        for i in range(s, s + 4):
            e[i] = sign * x[i] - xd[i]


@njit(cache=True)
def _quat_sign(x, xd, qstarts, signs):
    for b in range(qstarts.shape[0]):
        s = qstarts[b]
        dot = (xd[s] * x[s] + xd[s + 1] * x[s + 1]
               + xd[s + 2] * x[s + 2] + xd[s + 3] * x[s + 3])
        signs[b] = 1.0 if dot >= 0.0 else -1.0


@njit(cache=True)
def _cost_grad(x, xd, w, angle_mask, qstarts, e, grad):
    # gradient of 0.5 * e^T W e with respect to x
    n = x.shape[0]
    _error_vec(x, xd, angle_mask, qstarts, e)
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += w[i, j] * e[j]
        grad[i] = s
    for b in range(qstarts.shape[0]):
        s = qstarts[b]
        dot = (xd[s] * x[s] + xd[s + 1] * x[s + 1]
               + xd[s + 2] * x[s + 2] + xd[s + 3] * x[s + 3])
        if dot < 0.0:
            for i in range(s, s + 4):
                grad[i] = -grad[i]


@njit(cache=True)
def _quad_form(e, w):
    n = e.shape[0]
    acc = 0.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += w[i, j] * e[j]
        acc += e[i] * s
    return 0.5 * acc


@njit(cache=True)
def running_cost_knots(states, xd, q, angle_mask, qstarts, l_out):
    """Per-knot incremental cost 0.5 * e^T Q e along a stored trajectory."""
    n = states.shape[1]
    e = np.empty(n)
    for k in range(states.shape[0]):
        _error_vec(states[k], xd[k], angle_mask, qstarts, e)
        l_out[k] = _quad_form(e, q)


@njit(cache=True)
def point_cost(x, xd, w, angle_mask, qstarts):
    e = np.empty(x.shape[0])
    _error_vec(x, xd, angle_mask, qstarts, e)
    return _quad_form(e, w)


@njit
def rollout(drift, imap, p, t0, dt, u, x0, qstarts, renorm_start, states):
    """RK4 rollout under per-step held control.

    ``u`` has shape (N, m); ``states`` (N+1, n) is written in place, row 0
    being the initial state (quaternion-normalized iff ``renorm_start``, used
    to resume mid-trajectory without re-projecting an already stored knot).
    Returns -1 on success or the index of the first non-finite knot.
    """
    n = x0.shape[0]
    big_n = u.shape[0]
    m = u.shape[1]
    g = np.empty(n)
    h = np.empty((n, m))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xt = np.empty(n)
    for i in range(n):
        states[0, i] = x0[i]
    if renorm_start:
        _renorm(states[0], qstarts)
    for k in range(big_n):
        t = t0 + k * dt
        x = states[k]
        uk = u[k]

        drift(t, x, p, g)
        imap(t, x, p, h)
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += h[i, j] * uk[j]
            k1[i] = g[i] + s
            xt[i] = x[i] + 0.5 * dt * k1[i]

        drift(t + 0.5 * dt, xt, p, g)
        imap(t + 0.5 * dt, xt, p, h)
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += h[i, j] * uk[j]
            k2[i] = g[i] + s
        for i in range(n):
            xt[i] = x[i] + 0.5 * dt * k2[i]

        drift(t + 0.5 * dt, xt, p, g)
        imap(t + 0.5 * dt, xt, p, h)
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += h[i, j] * uk[j]
            k3[i] = g[i] + s
        for i in range(n):
            xt[i] = x[i] + dt * k3[i]

        drift(t + dt, xt, p, g)
        imap(t + dt, xt, p, h)
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += h[i, j] * uk[j]
            k4[i] = g[i] + s

        ok = True
        for i in range(n):
            v = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            states[k + 1, i] = v
            if not np.isfinite(v):
                ok = False
        if not ok:
            return k + 1
        _renorm(states[k + 1], qstarts)
    return -1


@njit
def adjoint(jac, p, t0, dt, states, u, xd2, q, p1, angle_mask, qstarts, rho):
    """Backward RK4 for the costate along a stored trajectory.

    ``xd2`` holds the desired state on the half-grid (2N+1 rows) so the RK4
    interior stages see the desired signal at the right times; interior-stage
    states are the linear interpolation of neighbouring knots. ``rho``
    (N+1, n) is written in place; row N is the terminal-cost gradient.
    """
    n = states.shape[1]
    big_n = u.shape[0]
    a = np.empty((n, n))
    e = np.empty(n)
    grad = np.empty(n)
    r = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    rt = np.empty(n)
    xm = np.empty(n)

    _cost_grad(states[big_n], xd2[2 * big_n], p1, angle_mask, qstarts, e, grad)
    for i in range(n):
        rho[big_n, i] = grad[i]
        r[i] = grad[i]

    for k in range(big_n - 1, -1, -1):
        t = t0 + k * dt
        uk = u[k]
        _project_costate(r, states[k + 1], qstarts)
        for i in range(n):
            xm[i] = 0.5 * (states[k, i] + states[k + 1, i])

        # rhodot = -D2l^T - D2f^T rho, integrated from t+dt down to t
        _cost_grad(states[k + 1], xd2[2 * k + 2], q, angle_mask, qstarts, e, grad)
        jac(t + dt, states[k + 1], uk, p, a)
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += a[j, i] * r[j]
            k1[i] = -grad[i] - s
            rt[i] = r[i] - 0.5 * dt * k1[i]

        _cost_grad(xm, xd2[2 * k + 1], q, angle_mask, qstarts, e, grad)
        jac(t + 0.5 * dt, xm, uk, p, a)
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += a[j, i] * rt[j]
            k2[i] = -grad[i] - s
        for i in range(n):
            rt[i] = r[i] - 0.5 * dt * k2[i]
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += a[j, i] * rt[j]
            k3[i] = -grad[i] - s
        for i in range(n):
            rt[i] = r[i] - dt * k3[i]

        _cost_grad(states[k], xd2[2 * k], q, angle_mask, qstarts, e, grad)
        jac(t, states[k], uk, p, a)
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += a[j, i] * rt[j]
            k4[i] = -grad[i] - s

        for i in range(n):
            r[i] = r[i] - dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            rho[k, i] = r[i]
    _project_costate(rho[0], states[0], qstarts)


@njit
def action_schedule(imap, p, t0, dt, states, rho, u_def, r_mat, alpha_d,
                    u_min, u_max, u_s, djdl_sat, djdl_pre, gamma_norm, rho_norm):
    """Closed-form optimal action candidates at every knot.

    For knot k the candidate is
        u_s[k] = sat( u_def[k] + (Gam Gam^T + R)^-1 Gam * alpha_d ),
    Gam = h(t_k, x_k)^T rho_k. ``djdl_pre`` is the mode insertion gradient at
    the unsaturated candidate, ``djdl_sat`` at the saturated one.
    """
    n = states.shape[1]
    big_n = u_def.shape[0]
    m = u_def.shape[1]
    h = np.empty((n, m))
    gam = np.empty(m)
    a = np.empty((m, m))
    b = np.empty(m)
    for k in range(big_n):
        t = t0 + k * dt
        imap(t, states[k], p, h)
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += h[i, j] * rho[k, i]
            gam[j] = s
        gn = 0.0
        for j in range(m):
            gn += gam[j] * gam[j]
        gamma_norm[k] = np.sqrt(gn)
        rn = 0.0
        for i in range(n):
            rn += rho[k, i] * rho[k, i]
        rho_norm[k] = np.sqrt(rn)
        for i in range(m):
            for j in range(m):
                a[i, j] = gam[i] * gam[j] + r_mat[i, j]
            b[i] = gam[i] * alpha_d
        delta = np.linalg.solve(a, b)
        pre = 0.0
        sat = 0.0
        for j in range(m):
            pre += gam[j] * delta[j]
            v = u_def[k, j] + delta[j]
            if v < u_min[j]:
                v = u_min[j]
            elif v > u_max[j]:
                v = u_max[j]
            u_s[k, j] = v
            sat += gam[j] * (v - u_def[k, j])
        djdl_pre[k] = pre
        djdl_sat[k] = sat


def trapezoid(values: np.ndarray, dt: float) -> float:
    """Trapezoidal rule on a uniform grid."""
    if values.shape[0] < 2:
        return 0.0
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))
