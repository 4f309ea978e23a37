"""Piecewise-constant control signals and actions.

A :class:`ControlSignal` is a list of contiguous segments tiling its domain
exactly; evaluation is right-continuous at breakpoints, matching the
sample-and-hold semantics of the integrator. Signals are immutable: every
operation returns a new signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

__all__ = [
    "SaturationBox",
    "Action",
    "ControlSignal",
    "saturate",
    "insert_action",
    "shift_default",
]


@dataclass(frozen=True, eq=False)
class SaturationBox:
    """Componentwise control bounds with u_min <= 0 <= u_max."""

    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        u_min = np.asarray(self.u_min, dtype=float)
        u_max = np.asarray(self.u_max, dtype=float)
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)
        if u_min.shape != u_max.shape or u_min.ndim != 1:
            raise ConfigError("u_min and u_max must be 1-D with equal length")
        if np.any(u_min > 0) or np.any(u_max < 0):
            raise ConfigError("saturation box must satisfy u_min <= 0 <= u_max")

    @property
    def m(self) -> int:
        return self.u_min.shape[0]

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.u_min, self.u_max)


def saturate(u: np.ndarray, box: SaturationBox) -> np.ndarray:
    """Componentwise clamp of a control vector into the box."""
    return box.clip(np.asarray(u, dtype=float))


@dataclass(frozen=True, eq=False)
class Action:
    """A constant control value applied over a finite window."""

    u_a: np.ndarray
    lambda_a: float
    tau_a: float

    def __post_init__(self):
        object.__setattr__(self, "u_a", np.asarray(self.u_a, dtype=float))
        if self.lambda_a <= 0:
            raise ConfigError("action duration must be positive")


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise-constant map from [t_start, t_end] to inputs.

    ``breaks`` has S+1 strictly increasing entries; segment s holds
    ``values[s]`` on [breaks[s], breaks[s+1]).
    """

    breaks: np.ndarray  # (S+1,)
    values: np.ndarray  # (S, m)

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "values", values)
        self.validate()

    def validate(self) -> None:
        """Check the tiling invariant (contiguous, increasing, finite)."""
        if self.breaks.ndim != 1 or self.breaks.shape[0] < 2:
            raise ContractError("signal needs at least one segment")
        if self.values.shape[0] != self.breaks.shape[0] - 1:
            raise ContractError("segment count does not match breakpoints")
        if not np.all(np.isfinite(self.breaks)) or not np.all(np.isfinite(self.values)):
            raise ContractError("signal contains non-finite entries")
        if np.any(np.diff(self.breaks) <= 0):
            raise ContractError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, t_start: float, t_end: float, value) -> "ControlSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.array([float(t_start), float(t_end)]), value[None, :])

    @property
    def t_start(self) -> float:
        return float(self.breaks[0])

    @property
    def t_end(self) -> float:
        return float(self.breaks[-1])

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def _tol(self) -> float:
        return 1e-9 * max(1.0, self.t_end - self.t_start)

    def _segment_of(self, t) -> np.ndarray:
        # Small rightward bias so queries a rounding error below a breakpoint
        # still resolve to the segment starting there (right-continuity).
        idx = np.searchsorted(self.breaks, np.asarray(t, dtype=float) + self._tol(),
                              side="right") - 1
        return np.clip(idx, 0, self.values.shape[0] - 1)

    def __call__(self, t: float) -> np.ndarray:
        tol = self._tol()
        if t < self.t_start - tol or t > self.t_end + tol:
            raise ContractError(
                f"t={t} outside signal domain [{self.t_start}, {self.t_end}]")
        return self.values[int(self._segment_of(t))].copy()

    def values_on_grid(self, grid) -> np.ndarray:
        """Per-step held values at the start of each grid step, shape (N, m)."""
        starts = grid.knots[:-1]
        return np.ascontiguousarray(self.values[self._segment_of(starts)])


def insert_action(signal: ControlSignal, action: Action) -> ControlSignal:
    """Overwrite the window [tau_A, tau_A + lambda_A] with the action value,
    splitting segments as needed. The window must lie inside the domain."""
    u_a = np.atleast_1d(action.u_a)
    if u_a.shape[0] != signal.m:
        raise ContractError("action dimension does not match signal")
    tol = signal._tol()
    lo = float(action.tau_a)
    hi = lo + float(action.lambda_a)
    if lo < signal.t_start - tol or hi > signal.t_end + tol:
        raise ContractError(
            f"action window [{lo}, {hi}] outside signal domain "
            f"[{signal.t_start}, {signal.t_end}]")
    lo = min(max(lo, signal.t_start), signal.t_end)
    hi = min(max(hi, signal.t_start), signal.t_end)

    new_breaks = [signal.t_start]
    new_values = []
    for s in range(signal.values.shape[0]):
        b1 = float(signal.breaks[s + 1])
        if b1 <= lo + tol:
            if b1 > new_breaks[-1] + tol:
                new_breaks.append(b1)
                new_values.append(signal.values[s])
        else:
            if lo > new_breaks[-1] + tol:
                new_breaks.append(lo)
                new_values.append(signal.values[s])
            break
    new_breaks.append(hi)
    new_values.append(u_a)
    for s in range(signal.values.shape[0]):
        b0 = float(signal.breaks[s])
        b1 = float(signal.breaks[s + 1])
        if b1 > hi + tol:
            if b1 > new_breaks[-1] + tol:
                new_breaks.append(b1)
                new_values.append(signal.values[s])
    return ControlSignal(np.array(new_breaks), np.vstack(new_values))


def shift_default(prev_u_star: ControlSignal, t_i: float, horizon: float,
                  nominal) -> ControlSignal:
    """Shift the previous open-loop solution by one sampling period.

    Returns a signal on [t_i, t_i + horizon] equal to the previous solution
    where the horizons overlap, with a nominal-valued tail appended on the
    newly exposed interval.
    """
    nominal = np.atleast_1d(np.asarray(nominal, dtype=float))
    if nominal.shape[0] != prev_u_star.m:
        raise ContractError("nominal dimension does not match signal")
    tol = prev_u_star._tol()
    if t_i < prev_u_star.t_start - tol or t_i > prev_u_star.t_end + tol:
        raise ContractError(
            f"shift start {t_i} outside previous domain "
            f"[{prev_u_star.t_start}, {prev_u_star.t_end}]")
    new_end = float(t_i) + float(horizon)
    if new_end <= prev_u_star.t_end + tol:
        raise ContractError("shifted horizon must extend past the previous one")

    new_breaks = [float(t_i)]
    new_values = []
    for s in range(prev_u_star.values.shape[0]):
        b1 = float(prev_u_star.breaks[s + 1])
        if b1 > new_breaks[-1] + tol:
            new_breaks.append(b1)
            new_values.append(prev_u_star.values[s])
    if not new_values:  # t_i at (or past) the previous end: all-nominal signal
        return ControlSignal.constant(t_i, new_end, nominal)
    new_breaks.append(new_end)
    new_values.append(nominal)
    return ControlSignal(np.array(new_breaks), np.vstack(new_values))
