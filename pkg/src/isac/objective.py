"""Quadratic tracking objectives in error coordinates.

The cost of a trajectory is the running term ``0.5 * e(t)^T Q e(t)``
integrated over the horizon plus the terminal term ``0.5 * e^T P1 e``, where
``e = x - x_d(t)`` with angle components wrapped to (-pi, pi] and quaternion
blocks flipped into the hemisphere of the target before differencing. The
control weight ``R`` does not appear in the trajectory cost; it prices
deviation from the default control when action candidates are synthesized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _engine
from .errors import ConfigError, InvalidInputError

__all__ = ["DesiredTrajectory", "QuadraticObjective", "wrap_angle"]


def wrap_angle(x):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class DesiredTrajectory:
    """Target state as a function of time, defined for all queried t.

    ``kind`` is a label ("setpoint" or the name of an analytic signal);
    ``sample_fn`` maps an array of times (K,) to targets (K, n).
    """

    kind: str
    n: int
    sample_fn: Callable[[np.ndarray], np.ndarray]
    meta: dict = field(default_factory=dict)

    def value(self, t: float) -> np.ndarray:
        return self.sample(np.array([float(t)]))[0]

    def sample(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.asarray(self.sample_fn(ts), dtype=float)
        if out.shape != (ts.shape[0], self.n):
            raise ConfigError(
                f"desired trajectory returned shape {out.shape}, "
                f"expected ({ts.shape[0]}, {self.n})")
        return out

    @classmethod
    def setpoint(cls, x_d) -> "DesiredTrajectory":
        x_d = np.asarray(x_d, dtype=float)
        return cls(kind="setpoint", n=x_d.shape[0],
                   sample_fn=lambda ts: np.broadcast_to(x_d, (ts.shape[0], x_d.shape[0])).copy(),
                   meta={"value": x_d})


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """Weights plus the target trajectory and the state-space metadata needed
    to form wrapped/sign-disambiguated errors."""

    q: np.ndarray
    p1: np.ndarray
    r: np.ndarray
    desired: DesiredTrajectory
    angle_mask: np.ndarray
    quat_starts: np.ndarray

    def __post_init__(self):
        n = self.q.shape[0]
        if self.q.shape != (n, n) or self.p1.shape != (n, n):
            raise ConfigError("Q and P1 must be square matrices of matching size")
        if self.desired.n != n:
            raise ConfigError("desired trajectory dimension does not match Q")
        for name, mat in (("Q", self.q), ("P1", self.p1)):
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ConfigError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(mat).min() < -1e-10:
                raise ConfigError(f"{name} must be positive semidefinite")
        if not np.allclose(self.r, self.r.T, atol=1e-12):
            raise ConfigError("R must be symmetric")
        if np.linalg.eigvalsh(self.r).min() <= 0:
            raise ConfigError("R must be positive definite")

    @classmethod
    def build(cls, model, q, p1, r, desired: DesiredTrajectory) -> "QuadraticObjective":
        """Assemble an objective for ``model``, accepting diagonal weights as
        1-D arrays."""
        q = _as_weight(q, model.n)
        p1 = _as_weight(p1, model.n)
        r = _as_weight(r, model.m)
        mask = np.zeros(model.n, dtype=np.bool_)
        for i in model.angle_indices:
            mask[i] = True
        return cls(q=q, p1=p1, r=r, desired=desired, angle_mask=mask,
                   quat_starts=np.asarray(model.quaternion_starts, dtype=np.int64))

    # -- error coordinates ------------------------------------------------

    def error(self, t: float, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        e = np.empty(x.shape[0])
        _engine._error_vec(x, self.desired.value(t), self.angle_mask,
                           self.quat_starts, e)
        return e

    # -- running cost ------------------------------------------------------

    def incremental_cost(self, t: float, x: np.ndarray) -> float:
        x = self._check(x)
        return float(_engine.point_cost(x, self.desired.value(t), self.q,
                                        self.angle_mask, self.quat_starts))

    def incremental_grad(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._grad(t, x, self.q)

    # -- terminal cost -----------------------------------------------------

    def terminal_cost(self, t: float, x: np.ndarray) -> float:
        x = self._check(x)
        return float(_engine.point_cost(x, self.desired.value(t), self.p1,
                                        self.angle_mask, self.quat_starts))

    def terminal_grad(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._grad(t, x, self.p1)

    def _grad(self, t, x, w):
        x = self._check(x)
        n = x.shape[0]
        e = np.empty(n)
        grad = np.empty(n)
        _engine._cost_grad(x, self.desired.value(t), w, self.angle_mask,
                           self.quat_starts, e, grad)
        return grad

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.q.shape[0],):
            raise InvalidInputError(
                f"state must have shape ({self.q.shape[0]},), got {x.shape}")
        return x


def _as_weight(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        if w.shape[0] != n:
            raise ConfigError(f"diagonal weight must have length {n}")
        return np.ascontiguousarray(np.diag(w))
    if w.shape != (n, n):
        raise ConfigError(f"weight must be {n}-by-{n} or a length-{n} diagonal")
    return np.ascontiguousarray(w)
