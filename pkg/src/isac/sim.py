"""Fixed-grid simulation: forward state rollout, backward adjoint, and cost
quadrature, all on the same uniform time grid.

The integrator is classic fourth-order Runge-Kutta with the control held at
the value active at each step's start (sample-and-hold). The adjoint is
integrated backward along a stored trajectory, reading interior-stage states
from linear interpolation of the knots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from .errors import ConfigError, ContractError, DivergenceError, InvalidInputError
from .models import SystemModel
from .objective import QuadraticObjective
from .signals import ControlSignal

__all__ = [
    "TimeGrid",
    "Trajectory",
    "AdjointTrajectory",
    "integrate_forward",
    "integrate_adjoint",
    "quadrature_cost",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform knots t0, t0+dt, ..., tf. The span must be an integer number
    of steps (relative tolerance 1e-9)."""

    t0: float
    tf: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.tf <= self.t0:
            raise ConfigError("tf must exceed t0")
        ratio = (self.tf - self.t0) / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, round(ratio)):
            raise ConfigError(
                f"grid does not close: span {self.tf - self.t0} is not an "
                f"integer multiple of dt={self.dt}")

    @classmethod
    def from_steps(cls, t0: float, dt: float, n_steps: int) -> "TimeGrid":
        return cls(float(t0), float(t0) + int(n_steps) * float(dt), float(dt))

    @property
    def n_steps(self) -> int:
        return int(round((self.tf - self.t0) / self.dt))

    @property
    def knots(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    @property
    def half_knots(self) -> np.ndarray:
        """Knots plus midpoints (2N+1 samples), for RK4 interior stages."""
        return self.t0 + np.arange(2 * self.n_steps + 1) * (0.5 * self.dt)


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (N+1, n)

    def __post_init__(self):
        if self.states.shape[0] != self.grid.n_steps + 1:
            raise ContractError("trajectory length does not match grid")


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    grid: TimeGrid
    costates: np.ndarray  # (N+1, n)

    def __post_init__(self):
        if self.costates.shape[0] != self.grid.n_steps + 1:
            raise ContractError("costate array length does not match grid")


def _check_cover(signal: ControlSignal, grid: TimeGrid) -> None:
    tol = 1e-9 * max(1.0, grid.tf - grid.t0)
    if signal.t_start > grid.t0 + tol or signal.t_end < grid.tf - tol:
        raise ContractError(
            f"control signal domain [{signal.t_start}, {signal.t_end}] does "
            f"not cover grid [{grid.t0}, {grid.tf}]")


def integrate_forward(model: SystemModel, x0: np.ndarray, signal: ControlSignal,
                      grid: TimeGrid, *, renorm_start: bool = True) -> Trajectory:
    """Roll the system forward under a piecewise-constant control signal.

    Raises :class:`DivergenceError` if the state becomes non-finite, carrying
    the first failing knot.
    """
    x0 = np.ascontiguousarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise InvalidInputError(f"x0 must have shape ({model.n},)")
    if not np.all(np.isfinite(x0)):
        raise InvalidInputError("x0 must be finite")
    _check_cover(signal, grid)
    u = signal.values_on_grid(grid)
    states = np.empty((grid.n_steps + 1, model.n))
    qstarts = np.asarray(model.quaternion_starts, dtype=np.int64)
    bad = _engine.rollout(model._drift, model._imap, model.params, grid.t0,
                          grid.dt, u, x0, qstarts, renorm_start, states)
    if bad >= 0:
        raise DivergenceError(bad, grid.t0 + bad * grid.dt)
    return Trajectory(grid, states)


def integrate_adjoint(model: SystemModel, traj: Trajectory,
                      objective: QuadraticObjective,
                      signal: ControlSignal) -> AdjointTrajectory:
    """Integrate the costate backward from the terminal-cost gradient.

    rhodot = -D2l(t, x)^T - D2f(t, x, u)^T rho, terminal condition
    rho(tf) = D2m(tf, x(tf))^T, along the stored trajectory.
    """
    grid = traj.grid
    _check_cover(signal, grid)
    u = signal.values_on_grid(grid)
    xd2 = objective.desired.sample(grid.half_knots)
    rho = np.empty_like(traj.states)
    qstarts = np.asarray(model.quaternion_starts, dtype=np.int64)
    _engine.adjoint(model._jac, model.params, grid.t0, grid.dt, traj.states,
                    u, xd2, objective.q, objective.p1, objective.angle_mask,
                    qstarts, rho)
    return AdjointTrajectory(grid, rho)


def quadrature_cost(traj: Trajectory, objective: QuadraticObjective) -> float:
    """Trapezoidal running cost plus the terminal cost at the last knot."""
    grid = traj.grid
    xd = objective.desired.sample(grid.knots)
    l_vals = np.empty(grid.n_steps + 1)
    _engine.running_cost_knots(traj.states, xd, objective.q,
                               objective.angle_mask, objective.quat_starts,
                               l_vals)
    terminal = _engine.point_cost(traj.states[-1], xd[-1], objective.p1,
                                  objective.angle_mask, objective.quat_starts)
    return _engine.trapezoid(l_vals, grid.dt) + float(terminal)
