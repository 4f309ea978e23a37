"""Control-affine system models.

Every system is expressed as ``xdot = f(t, x, u) = drift(t, x) + input_map(t, x) @ u``
and carries an analytic state Jacobian ``D2f = df/dx``. The five benchmark
vehicles (acrobot, cart-pendulum, car, PVTOL, quadrotor) are built by
:func:`make_model`; arbitrary LTI systems for testing come from
:func:`make_linear_model`.

The heavy lifting (rollouts, adjoints) happens in compiled kernels, so each
model stores three ``numba``-compiled functions operating on a flat parameter
vector. The Python-facing methods are thin allocating wrappers around them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .errors import ConfigError, InvalidInputError

__all__ = [
    "SystemModel",
    "make_model",
    "make_linear_model",
    "eval_dynamics",
    "finite_diff_jacobian",
    "MODEL_NAMES",
]

MODEL_NAMES = ("acrobot", "cart_pendulum", "car", "pvtol", "quadrotor")


# ---------------------------------------------------------------------------
# car: state (x_c, y_c, v, theta), inputs (acceleration, turn rate)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _car_drift(t, x, p, out):
    v = x[2]
    th = x[3]
    out[0] = v * np.cos(th)
    out[1] = v * np.sin(th)
    out[2] = 0.0
    out[3] = 0.0


@njit(cache=True)
def _car_imap(t, x, p, out):
    out[:, :] = 0.0
    out[2, 0] = 1.0
    out[3, 1] = 1.0


@njit(cache=True)
def _car_jac(t, x, u, p, out):
    out[:, :] = 0.0
    v = x[2]
    th = x[3]
    c = np.cos(th)
    s = np.sin(th)
    out[0, 2] = c
    out[0, 3] = -v * s
    out[1, 2] = s
    out[1, 3] = v * c


# ---------------------------------------------------------------------------
# cart-pendulum: state (theta, thetadot, x_c, xdot_c), input = cart accel.
# theta is measured from the upright position, so the origin is the inverted
# equilibrium. p = [g, length]
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cartpend_drift(t, x, p, out):
    g = p[0]
    ell = p[1]
    out[0] = x[1]
    out[1] = (g / ell) * np.sin(x[0])
    out[2] = x[3]
    out[3] = 0.0


@njit(cache=True)
def _cartpend_imap(t, x, p, out):
    ell = p[1]
    out[0, 0] = 0.0
    out[1, 0] = -np.cos(x[0]) / ell
    out[2, 0] = 0.0
    out[3, 0] = 1.0


@njit(cache=True)
def _cartpend_jac(t, x, u, p, out):
    g = p[0]
    ell = p[1]
    out[:, :] = 0.0
    out[0, 1] = 1.0
    out[1, 0] = (g * np.cos(x[0]) + u[0] * np.sin(x[0])) / ell
    out[2, 3] = 1.0


# ---------------------------------------------------------------------------
# acrobot: state (theta1, theta1dot, theta2, theta2dot), input = elbow torque.
# Angles from upright; theta2 is relative to link 1.
# p = [a1, a2, a3, b1, b2] with
#   a1 = I1 + m1*lc1^2 + m2*l1^2,  a2 = I2 + m2*lc2^2,  a3 = m2*l1*lc2,
#   b1 = (m1*lc1 + m2*l1)*g,       b2 = m2*lc2*g
# ---------------------------------------------------------------------------

@njit(cache=True)
def _acrobot_accel(x, u0, p, out2):
    a1 = p[0]
    a2 = p[1]
    a3 = p[2]
    b1 = p[3]
    b2 = p[4]
    q1 = x[0]
    dq1 = x[1]
    q2 = x[2]
    dq2 = x[3]
    c2 = np.cos(q2)
    s2 = np.sin(q2)
    m11 = a1 + a2 + 2.0 * a3 * c2
    m12 = a2 + a3 * c2
    m22 = a2
    det = m11 * m22 - m12 * m12
    cor1 = -a3 * s2 * (2.0 * dq1 * dq2 + dq2 * dq2)
    cor2 = a3 * s2 * dq1 * dq1
    g1 = -b1 * np.sin(q1) - b2 * np.sin(q1 + q2)
    g2 = -b2 * np.sin(q1 + q2)
    w1 = -cor1 - g1
    w2 = u0 - cor2 - g2
    out2[0] = (m22 * w1 - m12 * w2) / det
    out2[1] = (m11 * w2 - m12 * w1) / det


@njit(cache=True)
def _acrobot_drift(t, x, p, out):
    acc = np.empty(2)
    _acrobot_accel(x, 0.0, p, acc)
    out[0] = x[1]
    out[1] = acc[0]
    out[2] = x[3]
    out[3] = acc[1]


@njit(cache=True)
def _acrobot_imap(t, x, p, out):
    a2 = p[1]
    a3 = p[2]
    c2 = np.cos(x[2])
    m11 = p[0] + a2 + 2.0 * a3 * c2
    m12 = a2 + a3 * c2
    det = m11 * a2 - m12 * m12
    out[0, 0] = 0.0
    out[1, 0] = -m12 / det
    out[2, 0] = 0.0
    out[3, 0] = m11 / det


@njit(cache=True)
def _acrobot_jac(t, x, u, p, out):
    a1 = p[0]
    a2 = p[1]
    a3 = p[2]
    b1 = p[3]
    b2 = p[4]
    q1 = x[0]
    dq1 = x[1]
    q2 = x[2]
    dq2 = x[3]
    c1 = np.cos(q1)
    c2 = np.cos(q2)
    s2 = np.sin(q2)
    c12 = np.cos(q1 + q2)
    m11 = a1 + a2 + 2.0 * a3 * c2
    m12 = a2 + a3 * c2
    m22 = a2
    det = m11 * m22 - m12 * m12
    cor1 = -a3 * s2 * (2.0 * dq1 * dq2 + dq2 * dq2)
    cor2 = a3 * s2 * dq1 * dq1
    g1 = -b1 * np.sin(q1) - b2 * np.sin(q1 + q2)
    g2 = -b2 * np.sin(q1 + q2)
    w1 = -cor1 - g1
    w2 = u[0] - cor2 - g2
    qdd1 = (m22 * w1 - m12 * w2) / det
    qdd2 = (m11 * w2 - m12 * w1) / det

    out[:, :] = 0.0
    out[0, 1] = 1.0
    out[2, 3] = 1.0

    # d/dq1: only gravity terms depend on q1
    dw1 = b1 * c1 + b2 * c12
    dw2 = b2 * c12
    out[1, 0] = (m22 * dw1 - m12 * dw2) / det
    out[3, 0] = (m11 * dw2 - m12 * dw1) / det

    # d/dq2: mass matrix, Coriolis and gravity all move
    dm11 = -2.0 * a3 * s2
    dm12 = -a3 * s2
    ddet = dm11 * m22 - 2.0 * m12 * dm12
    dcor1 = -a3 * c2 * (2.0 * dq1 * dq2 + dq2 * dq2)
    dcor2 = a3 * c2 * dq1 * dq1
    dw1 = -dcor1 + b2 * c12
    dw2 = -dcor2 + b2 * c12
    out[1, 2] = (m22 * dw1 - dm12 * w2 - m12 * dw2) / det - qdd1 * ddet / det
    out[3, 2] = (dm11 * w2 + m11 * dw2 - dm12 * w1 - m12 * dw1) / det - qdd2 * ddet / det

    # d/ddq1
    dw1 = a3 * s2 * 2.0 * dq2
    dw2 = -2.0 * a3 * s2 * dq1
    out[1, 1] = (m22 * dw1 - m12 * dw2) / det
    out[3, 1] = (m11 * dw2 - m12 * dw1) / det

    # d/ddq2
    dw1 = a3 * s2 * (2.0 * dq1 + 2.0 * dq2)
    out[1, 3] = (m22 * dw1) / det
    out[3, 3] = (-m12 * dw1) / det


# ---------------------------------------------------------------------------
# PVTOL (normalized): state (x_a, xdot_a, y_a, ydot_a, theta, thetadot),
# inputs (thrust, rolling moment). Gravity is normalized to 1. p = [eps]
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pvtol_drift(t, x, p, out):
    out[0] = x[1]
    out[1] = 0.0
    out[2] = x[3]
    out[3] = -1.0
    out[4] = x[5]
    out[5] = 0.0


@njit(cache=True)
def _pvtol_imap(t, x, p, out):
    eps = p[0]
    c = np.cos(x[4])
    s = np.sin(x[4])
    out[:, :] = 0.0
    out[1, 0] = -s
    out[1, 1] = eps * c
    out[3, 0] = c
    out[3, 1] = eps * s
    out[5, 1] = 1.0


@njit(cache=True)
def _pvtol_jac(t, x, u, p, out):
    eps = p[0]
    c = np.cos(x[4])
    s = np.sin(x[4])
    out[:, :] = 0.0
    out[0, 1] = 1.0
    out[2, 3] = 1.0
    out[4, 5] = 1.0
    out[1, 4] = -u[0] * c - eps * u[1] * s
    out[3, 4] = -u[0] * s + eps * u[1] * c


# ---------------------------------------------------------------------------
# quadrotor: state (x, xdot, y, ydot, z, zdot, q0, q1, q2, q3, p, q, r),
# scalar-first unit quaternion, body rates, inputs = squared rotor speeds.
# p = [mass, g, kT, kM, L, Jx, Jy, Jz]
# Rotor layout (+ configuration): 1 front (+x), 2 left (+y), 3 back, 4 right.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _quad_drift(t, x, p, out):
    g = p[1]
    jx = p[5]
    jy = p[6]
    jz = p[7]
    q0 = x[6]
    q1 = x[7]
    q2 = x[8]
    q3 = x[9]
    wp = x[10]
    wq = x[11]
    wr = x[12]
    out[0] = x[1]
    out[1] = 0.0
    out[2] = x[3]
    out[3] = 0.0
    out[4] = x[5]
    out[5] = -g
    out[6] = -0.5 * (wp * q1 + wq * q2 + wr * q3)
    out[7] = 0.5 * (wp * q0 + wr * q2 - wq * q3)
    out[8] = 0.5 * (wq * q0 - wr * q1 + wp * q3)
    out[9] = 0.5 * (wr * q0 + wq * q1 - wp * q2)
    out[10] = (jy - jz) * wq * wr / jx
    out[11] = (jz - jx) * wp * wr / jy
    out[12] = (jx - jy) * wp * wq / jz


@njit(cache=True)
def _quad_imap(t, x, p, out):
    mass = p[0]
    kt = p[2]
    km = p[3]
    arm = p[4]
    jx = p[5]
    jy = p[6]
    jz = p[7]
    q0 = x[6]
    q1 = x[7]
    q2 = x[8]
    q3 = x[9]
    # body z-axis in world frame
    dx = 2.0 * (q1 * q3 + q0 * q2)
    dy = 2.0 * (q2 * q3 - q0 * q1)
    dz = 1.0 - 2.0 * (q1 * q1 + q2 * q2)
    ktm = kt / mass
    out[:, :] = 0.0
    for j in range(4):
        out[1, j] = ktm * dx
        out[3, j] = ktm * dy
        out[5, j] = ktm * dz
    lk = arm * kt
    out[10, 1] = lk / jx
    out[10, 3] = -lk / jx
    out[11, 0] = -lk / jy
    out[11, 2] = lk / jy
    out[12, 0] = km / jz
    out[12, 1] = -km / jz
    out[12, 2] = km / jz
    out[12, 3] = -km / jz


@njit(cache=True)
def _quad_jac(t, x, u, p, out):
    mass = p[0]
    kt = p[2]
    jx = p[5]
    jy = p[6]
    jz = p[7]
    q0 = x[6]
    q1 = x[7]
    q2 = x[8]
    q3 = x[9]
    wp = x[10]
    wq = x[11]
    wr = x[12]
    out[:, :] = 0.0
    out[0, 1] = 1.0
    out[2, 3] = 1.0
    out[4, 5] = 1.0
    # translational acceleration depends on attitude through the thrust axis
    s = kt / mass * (u[0] + u[1] + u[2] + u[3])
    out[1, 6] = s * 2.0 * q2
    out[1, 7] = s * 2.0 * q3
    out[1, 8] = s * 2.0 * q0
    out[1, 9] = s * 2.0 * q1
    out[3, 6] = s * -2.0 * q1
    out[3, 7] = s * -2.0 * q0
    out[3, 8] = s * 2.0 * q3
    out[3, 9] = s * 2.0 * q2
    out[5, 7] = s * -4.0 * q1
    out[5, 8] = s * -4.0 * q2
    # quaternion kinematics: linear in q and in omega
    out[6, 7] = -0.5 * wp
    out[6, 8] = -0.5 * wq
    out[6, 9] = -0.5 * wr
    out[7, 6] = 0.5 * wp
    out[7, 8] = 0.5 * wr
    out[7, 9] = -0.5 * wq
    out[8, 6] = 0.5 * wq
    out[8, 7] = -0.5 * wr
    out[8, 9] = 0.5 * wp
    out[9, 6] = 0.5 * wr
    out[9, 7] = 0.5 * wq
    out[9, 8] = -0.5 * wp
    out[6, 10] = -0.5 * q1
    out[6, 11] = -0.5 * q2
    out[6, 12] = -0.5 * q3
    out[7, 10] = 0.5 * q0
    out[7, 11] = -0.5 * q3
    out[7, 12] = 0.5 * q2
    out[8, 10] = 0.5 * q3
    out[8, 11] = 0.5 * q0
    out[8, 12] = -0.5 * q1
    out[9, 10] = -0.5 * q2
    out[9, 11] = 0.5 * q1
    out[9, 12] = 0.5 * q0
    # gyroscopic coupling
    out[10, 11] = (jy - jz) * wr / jx
    out[10, 12] = (jy - jz) * wq / jx
    out[11, 10] = (jz - jx) * wr / jy
    out[11, 12] = (jz - jx) * wp / jy
    out[12, 10] = (jx - jy) * wq / jz
    out[12, 11] = (jx - jy) * wp / jz


# ---------------------------------------------------------------------------
# generic LTI system xdot = A x + B u + c, parameters packed flat.
# p = [n, m, A.ravel(), B.ravel(), c]
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lin_drift(t, x, p, out):
    n = int(p[0])
    for i in range(n):
        s = p[2 + n * n + n * int(p[1]) + i]  # constant term
        for j in range(n):
            s += p[2 + i * n + j] * x[j]
        out[i] = s


@njit(cache=True)
def _lin_imap(t, x, p, out):
    n = int(p[0])
    m = int(p[1])
    off = 2 + n * n
    for i in range(n):
        for j in range(m):
            out[i, j] = p[off + i * m + j]


@njit(cache=True)
def _lin_jac(t, x, u, p, out):
    n = int(p[0])
    for i in range(n):
        for j in range(n):
            out[i, j] = p[2 + i * n + j]


@dataclass(frozen=True)
class SystemModel:
    """A control-affine system ``xdot = drift(t,x) + input_map(t,x) @ u``.

    Immutable after construction; every method is a pure function of its
    arguments, so models are safe to share across threads.

    ``state_kinds`` labels each state component ``"linear"``, ``"angle"``
    (wrapped to (-pi, pi] in error computations) or ``"quaternion"``
    (consecutive runs of four form unit-norm blocks that are renormalized
    during integration).
    """

    name: str
    n: int
    m: int
    params: np.ndarray
    state_kinds: tuple[str, ...]
    x_eq: np.ndarray
    u_eq: np.ndarray
    meta: dict = field(default_factory=dict)
    _drift: Callable = None
    _imap: Callable = None
    _jac: Callable = None

    @property
    def angle_indices(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.state_kinds) if k == "angle")

    @property
    def quaternion_starts(self) -> tuple[int, ...]:
        starts = []
        i = 0
        while i < self.n:
            if self.state_kinds[i] == "quaternion":
                starts.append(i)
                i += 4
            else:
                i += 1
        return tuple(starts)

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.empty(self.n)
        self._drift(float(t), np.asarray(x, dtype=float), self.params, out)
        return out

    def input_map(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.empty((self.n, self.m))
        self._imap(float(t), np.asarray(x, dtype=float), self.params, out)
        return out

    def state_jacobian(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = np.empty((self.n, self.n))
        self._jac(float(t), np.asarray(x, dtype=float),
                  np.asarray(u, dtype=float), self.params, out)
        return out


def eval_dynamics(model: SystemModel, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate ``f(t, x, u) = drift + input_map @ u``.

    Raises :class:`InvalidInputError` on dimension mismatch or non-finite
    state/input.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n,):
        raise InvalidInputError(f"state must have shape ({model.n},), got {x.shape}")
    if u.shape != (model.m,):
        raise InvalidInputError(f"input must have shape ({model.m},), got {u.shape}")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(u)):
        raise InvalidInputError("state and input must be finite")
    return model.drift(t, x) + model.input_map(t, x) @ u


def finite_diff_jacobian(model: SystemModel, t: float, x: np.ndarray,
                         u: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference approximation of df/dx (test oracle for the
    analytic Jacobians)."""
    if step <= 0:
        raise InvalidInputError("step must be positive")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.empty((model.n, model.n))
    for j in range(model.n):
        h = step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        out[:, j] = (eval_dynamics(model, t, xp, u) - eval_dynamics(model, t, xm, u)) / (2 * h)
    return out


_ACROBOT_DEFAULTS = dict(m1=1.0, m2=1.0, l1=1.0, l2=1.0, lc1=0.5, lc2=0.5,
                         i1=1.0 / 12.0, i2=1.0 / 12.0, gravity=9.81)
_CARTPEND_DEFAULTS = dict(gravity=9.81, length=1.0)
_PVTOL_DEFAULTS = dict(eps=0.3)
_QUAD_DEFAULTS = dict(mass=0.5, gravity=9.81, kt=0.45, km=0.05, arm=0.17,
                      jx=3e-3, jy=3e-3, jz=5e-3)


def make_model(name: str, **params) -> SystemModel:
    """Build one of the five benchmark systems.

    State orderings:
      acrobot        (theta1, theta1dot, theta2, theta2dot)
      cart_pendulum  (theta, thetadot, x_c, xdot_c)
      car            (x_c, y_c, v, theta)
      pvtol          (x_a, xdot_a, y_a, ydot_a, theta, thetadot)
      quadrotor      (x, xdot, y, ydot, z, zdot, q0, q1, q2, q3, p, q, r)

    Angle states are not wrapped inside the dynamics; wrapping happens only in
    error computations. Unknown names raise :class:`ConfigError`.
    """
    if name == "car":
        _reject_unknown(params, ())
        return SystemModel(
            name=name, n=4, m=2, params=np.zeros(1),
            state_kinds=("linear", "linear", "linear", "angle"),
            x_eq=np.zeros(4), u_eq=np.zeros(2), meta={},
            _drift=_car_drift, _imap=_car_imap, _jac=_car_jac)
    if name == "cart_pendulum":
        merged = _merge(_CARTPEND_DEFAULTS, params)
        p = np.array([merged["gravity"], merged["length"]])
        return SystemModel(
            name=name, n=4, m=1, params=p,
            state_kinds=("angle", "linear", "linear", "linear"),
            x_eq=np.zeros(4), u_eq=np.zeros(1), meta=merged,
            _drift=_cartpend_drift, _imap=_cartpend_imap, _jac=_cartpend_jac)
    if name == "acrobot":
        merged = _merge(_ACROBOT_DEFAULTS, params)
        m1, m2 = merged["m1"], merged["m2"]
        l1 = merged["l1"]
        lc1, lc2 = merged["lc1"], merged["lc2"]
        g = merged["gravity"]
        p = np.array([
            merged["i1"] + m1 * lc1 ** 2 + m2 * l1 ** 2,
            merged["i2"] + m2 * lc2 ** 2,
            m2 * l1 * lc2,
            (m1 * lc1 + m2 * l1) * g,
            m2 * lc2 * g,
        ])
        return SystemModel(
            name=name, n=4, m=1, params=p,
            state_kinds=("angle", "linear", "angle", "linear"),
            x_eq=np.zeros(4), u_eq=np.zeros(1), meta=merged,
            _drift=_acrobot_drift, _imap=_acrobot_imap, _jac=_acrobot_jac)
    if name == "pvtol":
        merged = _merge(_PVTOL_DEFAULTS, params)
        return SystemModel(
            name=name, n=6, m=2, params=np.array([merged["eps"]]),
            state_kinds=("linear",) * 4 + ("angle", "linear"),
            x_eq=np.zeros(6), u_eq=np.array([1.0, 0.0]), meta=merged,
            _drift=_pvtol_drift, _imap=_pvtol_imap, _jac=_pvtol_jac)
    if name == "quadrotor":
        merged = _merge(_QUAD_DEFAULTS, params)
        p = np.array([merged["mass"], merged["gravity"], merged["kt"],
                      merged["km"], merged["arm"], merged["jx"],
                      merged["jy"], merged["jz"]])
        x_eq = np.zeros(13)
        x_eq[6] = 1.0
        hover = merged["mass"] * merged["gravity"] / (4.0 * merged["kt"])
        return SystemModel(
            name=name, n=13, m=4, params=p,
            state_kinds=("linear",) * 6 + ("quaternion",) * 4 + ("linear",) * 3,
            x_eq=x_eq, u_eq=np.full(4, hover), meta=merged,
            _drift=_quad_drift, _imap=_quad_imap, _jac=_quad_jac)
    raise ConfigError(f"unknown model name {name!r}; expected one of {MODEL_NAMES}")


def make_linear_model(a: np.ndarray, b: np.ndarray, c: np.ndarray | None = None,
                      name: str = "linear") -> SystemModel:
    """Wrap an LTI system ``xdot = A x + B u + c`` in the model interface."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    n = a.shape[0]
    m = b.shape[1]
    if a.shape != (n, n) or b.shape != (n, m):
        raise ConfigError("A must be n-by-n and B n-by-m")
    if c is None:
        c = np.zeros(n)
    p = np.concatenate(([float(n), float(m)], a.ravel(), b.ravel(),
                        np.asarray(c, dtype=float)))
    return SystemModel(
        name=name, n=n, m=m, params=p,
        state_kinds=("linear",) * n,
        x_eq=np.zeros(n), u_eq=np.zeros(m), meta={},
        _drift=_lin_drift, _imap=_lin_imap, _jac=_lin_jac)


def _merge(defaults: dict, overrides: dict) -> dict:
    _reject_unknown(overrides, defaults.keys())
    merged = dict(defaults)
    merged.update({k: float(v) for k, v in overrides.items()})
    return merged


def _reject_unknown(params: dict, allowed) -> None:
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown model parameters: {sorted(unknown)}")
