"""Receding-horizon closed loop.

Each sampling period: solve the open-loop problem from the measured state,
apply the resulting control to the plant for one sampling period (injecting
any configured disturbance), shift the solution by one period to become the
next default control, and re-measure. Near an equilibrium a scenario may
switch (once, latched) to a duration-free local linear feedback mode whose
gain comes from a backward Riccati solve of the equivalent LQR problem with
control weight R / |alpha_d|.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _engine, __version__
from .errors import ConfigError, ContractError, DivergenceError
from .models import SystemModel
from .objective import QuadraticObjective
from .runlog import RunLog, StepTelemetry, config_hash
from .scenarios import ScenarioConfig, make_objective, make_synthesis_config
from .signals import ControlSignal, SaturationBox, shift_default
from .sim import TimeGrid
from .synthesis import OpenLoopResult, SynthesisConfig, solve_open_loop

__all__ = [
    "ControllerState",
    "Disturbance",
    "SwitchConfig",
    "RiccatiSolution",
    "riccati_solve",
    "switch_check",
    "local_feedback_control",
    "step",
    "ClosedLoop",
    "run",
]


@dataclass
class ControllerState:
    """Mutable per-step bookkeeping of the receding-horizon loop."""

    t: float
    x: np.ndarray
    u_def: ControlSignal
    prev_result: OpenLoopResult | None
    step_index: int
    mode: str = "isac"  # or "local_feedback"


@dataclass(frozen=True, eq=False)
class Disturbance:
    """Plant-only perturbations: impulsive state deltas and/or a continuous
    additive term eta(t) on the state derivative."""

    impulses: tuple = ()  # of (time_sec, delta ndarray)
    continuous: object = None  # callable t -> R^n, or None
    bounds: tuple | None = None  # declared decay of the continuous bound

    def __post_init__(self):
        imps = []
        for t_ev, delta in self.impulses:
            delta = np.asarray(delta, dtype=float)
            if not np.all(np.isfinite(delta)):
                raise ConfigError("impulse deltas must be finite")
            imps.append((float(t_ev), delta))
        object.__setattr__(self, "impulses", tuple(imps))
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            if np.any(np.diff(b) > 1e-12) or np.any(b < 0):
                raise ConfigError("disturbance bound sequence must be "
                                  "nonnegative and nonincreasing")

    def impulses_in(self, t0: float, t1: float):
        return [(t, d) for t, d in self.impulses if t0 - 1e-12 <= t < t1 - 1e-12]


@dataclass(frozen=True)
class SwitchConfig:
    """Latched switch to the local feedback regulator once the Q-weighted
    error norm drops below ``radius``. ``arm_time`` delays arming so that
    maneuvers passing near the target early on (a flip's starting attitude,
    say) do not trip the switch prematurely."""

    radius: float
    alpha_d_feedback: float
    horizon: float
    arm_time: float = 0.0

    def __post_init__(self):
        if self.alpha_d_feedback >= 0:
            raise ConfigError("feedback alpha_d must be negative")
        if self.horizon <= 0:
            raise ConfigError("feedback Riccati horizon must be positive")


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    grid: TimeGrid
    p_knots: np.ndarray  # (N+1, n, n)
    k_gains: np.ndarray  # (N+1, m, n)


def riccati_solve(a: np.ndarray, b: np.ndarray, q: np.ndarray,
                  r_bar: np.ndarray, p1: np.ndarray,
                  grid: TimeGrid) -> RiccatiSolution:
    """Backward RK4 on the Riccati differential equation

        Pdot = -Q - A^T P - P A + P B Rbar^-1 B^T P,  P(tf) = P1,

    with gains K(t) = Rbar^-1 B^T P(t). P is re-symmetrized every step."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    n = a.shape[0]
    s = b @ np.linalg.solve(r_bar, b.T)

    def pdot(p):
        return -q - a.T @ p - p @ a + p @ s @ p

    n_steps = grid.n_steps
    dt = grid.dt
    p_knots = np.empty((n_steps + 1, n, n))
    p_knots[n_steps] = 0.5 * (p1 + p1.T)
    p = p_knots[n_steps].copy()
    for k in range(n_steps - 1, -1, -1):
        k1 = pdot(p)
        k2 = pdot(p - 0.5 * dt * k1)
        k3 = pdot(p - 0.5 * dt * k2)
        k4 = pdot(p - dt * k3)
        p = p - dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        p = 0.5 * (p + p.T)
        if not np.all(np.isfinite(p)) or np.linalg.norm(p) > 1e12:
            raise ConfigError(
                "Riccati solution blew up: horizon too long for this "
                "linearization (closed loop not stabilizable at this weight)")
        p_knots[k] = p
    k_gains = np.einsum("mj,kjn->kmn", np.linalg.inv(r_bar),
                        np.einsum("jm,kjn->kmn", b, p_knots))
    return RiccatiSolution(grid, p_knots, k_gains)


def switch_check(state: ControllerState, switch_cfg: SwitchConfig | None,
                 objective: QuadraticObjective) -> str:
    """Latched mode decision: once in local feedback, stay there."""
    if switch_cfg is None:
        return "isac"
    if state.mode == "local_feedback":
        return "local_feedback"
    e = objective.error(state.t, state.x)
    if float(np.sqrt(e @ objective.q @ e)) < switch_cfg.radius:
        return "local_feedback"
    return "isac"


def local_feedback_control(t: float, x: np.ndarray,
                           objective: QuadraticObjective,
                           riccati: RiccatiSolution, nominal: np.ndarray,
                           box: SaturationBox) -> np.ndarray:
    """Saturated regulator value u = sat(u_nom - K(t0) e(t, x))."""
    e = objective.error(t, x)
    return box.clip(nominal - riccati.k_gains[0] @ e)


def step(state: ControllerState, model: SystemModel,
         objective: QuadraticObjective, cfg: SynthesisConfig,
         disturbance: Disturbance | None = None,
         nominal: np.ndarray | None = None):
    """One receding-horizon step in action-synthesis mode.

    Solves the open-loop problem from the measured state, applies the
    solution to the plant for one sampling period (with disturbance
    injection), and shifts the default control. Returns
    ``(next_state, window_states, telemetry)`` where ``window_states`` holds
    the plant knots over the applied window.
    """
    if nominal is None:
        nominal = model.u_eq
    t_ns = time.perf_counter_ns()
    result = solve_open_loop(model, state.x, state.t, state.u_def, objective,
                             cfg, state.prev_result)
    window = _apply_window(model, state.x, state.t, result.u_star,
                           cfg.n_apply, cfg.dt, disturbance)
    t_next = state.t + cfg.t_sample
    u_def_next = shift_default(result.u_star, t_next, cfg.horizon_eff, nominal)
    wall = time.perf_counter_ns() - t_ns
    telemetry = StepTelemetry(
        t=state.t, j_def=result.j_def, j_star=result.j_star,
        c_bound=result.c_bound,
        tau_a=result.action.tau_a if result.action else float("nan"),
        lambda_a=result.action.lambda_a if result.action else float("nan"),
        djdlam=result.djdlam_at_tau, ls_iters=result.ls_iters,
        status=result.ls_status, mode="isac", wall_ns=wall)
    next_state = ControllerState(
        t=t_next, x=window[-1].copy(), u_def=u_def_next,
        prev_result=result, step_index=state.step_index + 1, mode=state.mode)
    return next_state, window, telemetry


def _apply_window(model: SystemModel, x: np.ndarray, t_i: float,
                  u_star: ControlSignal, n_apply: int, dt: float,
                  disturbance: Disturbance | None) -> np.ndarray:
    """Integrate the plant over [t_i, t_i + n_apply*dt] under the applied
    control, adding impulsive state deltas at their (grid-aligned) event
    times and any continuous disturbance term. Returns (n_apply+1, n) knots.
    """
    grid = TimeGrid.from_steps(t_i, dt, n_apply)
    u = u_star.values_on_grid(grid)
    qstarts = np.asarray(model.quaternion_starts, dtype=np.int64)
    states = np.empty((n_apply + 1, model.n))

    events = disturbance.impulses_in(t_i, t_i + n_apply * dt) if disturbance else []
    eta = disturbance.continuous if disturbance else None

    if not events and eta is None:
        bad = _engine.rollout(model._drift, model._imap, model.params, t_i,
                              dt, u, np.ascontiguousarray(x, float), qstarts,
                              True, states)
        if bad >= 0:
            raise DivergenceError(bad, t_i + bad * dt)
        return states

    deltas = {}
    for t_ev, delta in events:
        k = min(max(int(round((t_ev - t_i) / dt)), 0), n_apply - 1)
        deltas[k] = deltas.get(k, 0.0) + delta

    x_cur = np.ascontiguousarray(x, dtype=float)
    renorm = True
    k = 0
    states[0] = x_cur
    while k < n_apply:
        if k in deltas:
            x_cur = x_cur + deltas[k]
            states[k] = x_cur
            renorm = True
        k_stop = min((e for e in deltas if e > k), default=n_apply)
        if eta is None:
            seg = np.empty((k_stop - k + 1, model.n))
            bad = _engine.rollout(model._drift, model._imap, model.params,
                                  t_i + k * dt, dt, u[k:k_stop], x_cur,
                                  qstarts, renorm, seg)
            if bad >= 0:
                raise DivergenceError(k + bad, t_i + (k + bad) * dt)
            states[k:k_stop + 1] = seg
        else:
            xw = x_cur.copy()
            _engine._renorm(xw, qstarts) if renorm else None
            states[k] = xw
            for j in range(k, k_stop):
                xw = _rk4_disturbed(model, xw, t_i + j * dt, dt, u[j], eta)
                _engine._renorm(xw, qstarts)
                if not np.all(np.isfinite(xw)):
                    raise DivergenceError(j + 1, t_i + (j + 1) * dt)
                states[j + 1] = xw
        x_cur = states[k_stop].copy()
        renorm = False
        k = k_stop
    return states


def _rk4_disturbed(model, x, t, dt, u_val, eta):
    def f(tt, xx):
        return model.drift(tt, xx) + model.input_map(tt, xx) @ u_val + eta(tt)

    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


class ClosedLoop:
    """Owns all objects of one scenario run and drives the loop.

    Construction compiles/warms the numeric kernels so that the timed loop
    measures steady-state control computation, not JIT latency.
    """

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self.model = scenario.make_model()
        self.objective = make_objective(scenario, self.model)
        self.cfg = make_synthesis_config(scenario)
        self.nominal = scenario.nominal(self.model)
        self.disturbance = (Disturbance(impulses=scenario.impulses)
                            if scenario.impulses else None)
        self.switch_cfg = None
        if scenario.switch is not None:
            sw = dict(scenario.switch)
            self.switch_cfg = SwitchConfig(
                radius=float(sw.pop("radius")),
                alpha_d_feedback=float(sw.pop("alpha_d_feedback")),
                horizon=float(sw.pop("horizon_sec")))
            if sw:
                raise ConfigError(f"unknown switch fields: {sorted(sw)}")
        self.riccati: RiccatiSolution | None = None
        self._warmup()

    def initial_state(self) -> ControllerState:
        x0 = np.asarray(self.scenario.x0, dtype=float)
        u_def = ControlSignal.constant(0.0, self.cfg.horizon_eff, self.nominal)
        return ControllerState(t=0.0, x=x0, u_def=u_def, prev_result=None,
                               step_index=0, mode="isac")

    def _warmup(self):
        state = self.initial_state()
        solve_open_loop(self.model, state.x, state.t, state.u_def,
                        self.objective, self.cfg, None)

    def _solve_riccati(self) -> RiccatiSolution:
        x_set = self.objective.desired.value(0.0)
        a = self.model.state_jacobian(0.0, x_set, self.nominal)
        b = self.model.input_map(0.0, x_set)
        r_bar = self.objective.r / abs(self.switch_cfg.alpha_d_feedback)
        grid = TimeGrid.from_steps(
            0.0, self.cfg.dt,
            max(1, int(round(self.switch_cfg.horizon / self.cfg.dt))))
        return riccati_solve(a, b, self.objective.q, r_bar,
                             self.objective.p1, grid)

    def _feedback_step(self, state: ControllerState):
        t_ns = time.perf_counter_ns()
        if self.riccati is None:
            self.riccati = self._solve_riccati()
        u_fb = local_feedback_control(state.t, state.x, self.objective,
                                      self.riccati, self.nominal, self.cfg.box)
        window_end = state.t + self.cfg.n_apply * self.cfg.dt
        u_sig = ControlSignal.constant(state.t, window_end, u_fb)
        window = _apply_window(self.model, state.x, state.t, u_sig,
                               self.cfg.n_apply, self.cfg.dt, self.disturbance)
        j_fb = self._feedback_horizon_cost(state.t, state.x)
        wall = time.perf_counter_ns() - t_ns
        telemetry = StepTelemetry(
            t=state.t, j_def=j_fb, j_star=j_fb, c_bound=float("nan"),
            tau_a=float("nan"), lambda_a=float("nan"), djdlam=float("nan"),
            ls_iters=0, status="feedback", mode="local_feedback", wall_ns=wall)
        next_state = ControllerState(
            t=state.t + self.cfg.t_sample, x=window[-1].copy(),
            u_def=state.u_def, prev_result=None,
            step_index=state.step_index + 1, mode="local_feedback")
        return next_state, window, u_sig, telemetry

    def _feedback_horizon_cost(self, t_i: float, x_i: np.ndarray) -> float:
        """Predicted horizon cost under the held regulator (the feedback
        analogue of the default-trajectory cost, for telemetry)."""
        n_h = self.cfg.n_horizon
        dt = self.cfg.dt
        qstarts = np.asarray(self.model.quaternion_starts, dtype=np.int64)
        grid = TimeGrid.from_steps(t_i, dt, n_h)
        xd = self.objective.desired.sample(grid.knots)
        x = np.ascontiguousarray(x_i, dtype=float)
        l_vals = np.empty(n_h + 1)
        seg = np.empty((2, self.model.n))
        u_hold = np.empty((1, self.model.m))
        for k in range(n_h):
            t_k = t_i + k * dt
            l_vals[k] = _engine.point_cost(x, xd[k], self.objective.q,
                                           self.objective.angle_mask, qstarts)
            u_hold[0] = local_feedback_control(t_k, x, self.objective,
                                               self.riccati, self.nominal,
                                               self.cfg.box)
            bad = _engine.rollout(self.model._drift, self.model._imap,
                                  self.model.params, t_k, dt, u_hold, x,
                                  qstarts, False, seg)
            if bad >= 0:
                raise DivergenceError(k + 1, t_k + dt)
            x = seg[1].copy()
        l_vals[n_h] = _engine.point_cost(x, xd[n_h], self.objective.q,
                                         self.objective.angle_mask, qstarts)
        terminal = _engine.point_cost(x, xd[n_h], self.objective.p1,
                                      self.objective.angle_mask, qstarts)
        return _engine.trapezoid(l_vals, dt) + float(terminal)

    def run(self) -> RunLog:
        sc = self.scenario
        n_steps = sc.n_steps()
        s = self.cfg.n_apply
        n = self.model.n
        m = self.model.m
        n_rows = n_steps * s + 1

        knot_t = np.empty(n_rows)
        knot_states = np.empty((n_rows, n))
        knot_controls = np.empty((n_rows, m))
        telem: list[StepTelemetry] = []
        switch_step = -1

        state = self.initial_state()
        knot_t[0] = 0.0
        knot_states[0] = state.x
        wall_start = time.perf_counter_ns()
        for i in range(n_steps):
            new_mode = switch_check(state, self.switch_cfg, self.objective)
            if new_mode == "local_feedback" and state.mode == "isac":
                switch_step = i
                state.mode = "local_feedback"
            if state.mode == "isac":
                state_next, window, tele = step(
                    state, self.model, self.objective, self.cfg,
                    self.disturbance, self.nominal)
                u_sig = state_next.prev_result.u_star
            else:
                state_next, window, u_sig, tele = self._feedback_step(state)
            lo = i * s
            w_grid = TimeGrid.from_steps(state.t, self.cfg.dt, s)
            knot_t[lo:lo + s + 1] = w_grid.knots
            knot_states[lo:lo + s + 1] = window
            knot_controls[lo:lo + s] = u_sig.values_on_grid(w_grid)
            telem.append(tele)
            state = state_next
        wall_total = time.perf_counter_ns() - wall_start
        knot_controls[-1] = knot_controls[-2] if n_rows > 1 else 0.0

        knot_desired = self.objective.desired.sample(knot_t)
        meta = {
            "state_kinds": list(self.model.state_kinds),
            "q_diag": list(np.diag(self.objective.q)),
            "t_sample_sec": sc.t_sample_sec,
            "dt_sec": sc.dt_sec,
            "end_time_sec": sc.end_time_sec,
            "n_steps": n_steps,
            "knots_per_step": s,
            "switch_step": switch_step,
            "wall_ns_total": int(wall_total),
        }
        log = RunLog(
            scenario_id=sc.scenario_id,
            config_hash=config_hash(sc),
            version=__version__,
            knot_t=knot_t, knot_states=knot_states,
            knot_controls=knot_controls, knot_desired=knot_desired,
            steps=telem, meta=meta)
        log.finalize_summary()
        return log


def run(scenario: ScenarioConfig) -> RunLog:
    """Build the closed loop for a scenario, execute it, return the log."""
    return ClosedLoop(scenario).run()
