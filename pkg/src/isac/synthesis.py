"""Closed-form open-loop action synthesis.

One synthesis step solves: find a single constant-valued action (value,
application time, duration) whose insertion into the default control makes
the predicted trajectory cost drop by at least the contraction bound. The
solve has four stages, none of which needs a nonlinear-programming solver:

1. predict: roll the system forward under the default control and integrate
   the costate backward along the prediction;
2. schedule: at every knot, the value that optimally improves the cost for a
   vanishing-duration switch has a closed form,
       u_s(t) = u_def(t) + (Gam Gam^T + R)^-1 Gam * alpha_d,
   Gam = h(t, x)^T rho(t), followed by componentwise saturation;
3. application time: pick the knot minimizing the mode insertion gradient
   evaluated at the saturated schedule, restricted to knots where
   ||Gam|| exceeds an actionability tolerance;
4. duration: shrink a trial duration geometrically until the re-simulated
   cost satisfies the contraction bound; on exhaustion fall back to the
   default control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from .errors import ActionabilityError, ConfigError, DivergenceError
from .models import SystemModel
from .objective import QuadraticObjective
from .signals import Action, ControlSignal, SaturationBox, insert_action
from .sim import AdjointTrajectory, TimeGrid, Trajectory, integrate_adjoint, \
    integrate_forward, quadrature_cost

__all__ = [
    "AlphaMode",
    "SynthesisConfig",
    "OpenLoopResult",
    "predict",
    "mode_insertion_gradient",
    "pointwise_candidate",
    "optimal_action_schedule",
    "select_application_time",
    "contraction_bound",
    "line_search_duration",
    "solve_open_loop",
]


@dataclass(frozen=True)
class AlphaMode:
    """Improvement-rate target: a fixed negative value, or a negative
    multiple of the current default-trajectory cost."""

    kind: str  # "constant" | "proportional"
    value: float

    def __post_init__(self):
        if self.kind not in ("constant", "proportional"):
            raise ConfigError(f"unknown alpha_d mode {self.kind!r}")
        if self.value >= 0:
            raise ConfigError("alpha_d must be negative (constant value or gain)")

    def resolve(self, j_def: float) -> float:
        if self.kind == "constant":
            return self.value
        return self.value * j_def


@dataclass(frozen=True, eq=False)
class SynthesisConfig:
    """Knobs of one open-loop solve.

    ``horizon`` is realized as round(horizon/dt) grid steps; ``t_sample``
    must be an integer number of grid steps. ``lambda0`` defaults to an
    eighth of the realized horizon; durations are grid-snapped with a floor
    of one step.
    """

    horizon: float
    t_sample: float
    dt: float
    alpha_d: AlphaMode
    box: SaturationBox
    lambda0: float | None = None
    beta: float = 0.5
    max_ls_iters: int = 10
    gamma_tol: float = 1e-8

    def __post_init__(self):
        if self.dt <= 0 or self.t_sample <= 0 or self.horizon <= 0:
            raise ConfigError("dt, t_sample and horizon must be positive")
        ratio = self.t_sample / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, round(ratio)):
            raise ConfigError("t_sample must be an integer number of dt steps")
        if self.t_sample > self.horizon + 1e-12:
            raise ConfigError("t_sample must not exceed the horizon")
        if not (0.0 < self.beta < 1.0):
            raise ConfigError("line-search shrink factor must be in (0, 1)")
        if self.max_ls_iters < 1:
            raise ConfigError("line search needs at least one iteration")
        if self.lambda0 is not None and self.lambda0 < self.dt - 1e-12:
            raise ConfigError("lambda0 must be at least one grid step")
        if self.gamma_tol <= 0:
            raise ConfigError("gamma_tol must be positive")

    @property
    def n_horizon(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))

    @property
    def horizon_eff(self) -> float:
        return self.n_horizon * self.dt

    @property
    def n_apply(self) -> int:
        return int(round(self.t_sample / self.dt))

    @property
    def lambda0_eff(self) -> float:
        if self.lambda0 is not None:
            return self.lambda0
        return max(self.dt, self.horizon_eff / 8.0)


@dataclass(frozen=True, eq=False)
class OpenLoopResult:
    """Outcome of one synthesis step.

    When ``ls_status == "accepted"``, ``u_star`` is the default control with
    the action window overwritten and ``j_star - j_def <= c_bound`` holds;
    ``"improved"`` marks an action that beat the default but not the bound
    (infeasible-regime behavior); on ``"fallback"`` the default control is
    returned unchanged.
    """

    action: Action | None
    u_star: ControlSignal
    x_star: Trajectory
    j_star: float
    j_def: float
    c_bound: float
    djdlam_at_tau: float
    ls_status: str
    ls_iters: int


def mode_insertion_gradient(rho_t: np.ndarray, model: SystemModel, t: float,
                            x_t: np.ndarray, u_cand: np.ndarray,
                            u_def_t: np.ndarray) -> float:
    """First-order sensitivity of the trajectory cost to switching the input
    from u_def to u_cand for a vanishing duration at time t:
    rho^T [f(t,x,u_cand) - f(t,x,u_def)] = rho^T h(t,x) (u_cand - u_def)."""
    h = model.input_map(t, x_t)
    return float(rho_t @ h @ (np.asarray(u_cand, float) - np.asarray(u_def_t, float)))


def pointwise_candidate(model: SystemModel, t: float, x_t: np.ndarray,
                        rho_t: np.ndarray, u_def_t: np.ndarray, r: np.ndarray,
                        alpha_d: float, box: SaturationBox):
    """Closed-form action candidate at a single (t, x, rho).

    Returns ``(u_sat, djdl_pre, djdl_sat, gamma)`` where ``gamma = h^T rho``
    and the mode insertion gradients are evaluated at the unsaturated and
    saturated candidate respectively.
    """
    h = model.input_map(t, x_t)
    gamma = h.T @ np.asarray(rho_t, float)
    a = np.outer(gamma, gamma) + r
    delta = np.linalg.solve(a, gamma * alpha_d)
    u_sat = box.clip(np.asarray(u_def_t, float) + delta)
    return u_sat, float(gamma @ delta), float(gamma @ (u_sat - u_def_t)), gamma


def predict(model: SystemModel, x_i: np.ndarray, t_i: float,
            u_def: ControlSignal, objective: QuadraticObjective,
            grid: TimeGrid):
    """Forward rollout under the default control, backward costate along it,
    and the default-trajectory cost."""
    traj = integrate_forward(model, x_i, u_def, grid)
    rho = integrate_adjoint(model, traj, objective, u_def)
    return traj, rho, quadrature_cost(traj, objective)


def optimal_action_schedule(x_def: Trajectory, rho: AdjointTrajectory,
                            u_def: ControlSignal, model: SystemModel,
                            r: np.ndarray, alpha_d: float,
                            box: SaturationBox) -> ControlSignal:
    """The saturated optimal action candidate at every knot, as a
    piecewise-constant signal on the horizon."""
    ws = _schedule_arrays(x_def, rho, u_def, model, r, alpha_d, box)
    return ControlSignal(x_def.grid.knots, ws["u_s"])


def select_application_time(u_s_star: ControlSignal, x_def: Trajectory,
                            rho: AdjointTrajectory, u_def: ControlSignal,
                            model: SystemModel, gamma_tol: float = 1e-8):
    """Pick the knot minimizing the mode insertion gradient at the saturated
    schedule, among knots passing the actionability gate
    ||h^T rho|| > gamma_tol * (1 + ||rho||). Earliest knot wins ties.

    Returns ``(tau_a, u_a, djdlam_at_tau)``; raises
    :class:`ActionabilityError` if every knot fails the gate.
    """
    grid = x_def.grid
    knots = grid.knots
    u_sv = u_s_star.values_on_grid(grid)
    u_dv = u_def.values_on_grid(grid)
    best = None
    for k in range(grid.n_steps):
        h = model.input_map(knots[k], x_def.states[k])
        gamma = h.T @ rho.costates[k]
        if np.linalg.norm(gamma) <= gamma_tol * (1.0 + np.linalg.norm(rho.costates[k])):
            continue
        dj = float(gamma @ (u_sv[k] - u_dv[k]))
        if best is None or dj < best[2]:
            best = (float(knots[k]), u_sv[k].copy(), dj)
    if best is None:
        raise ActionabilityError("no knot passes the actionability gate")
    return best


def contraction_bound(prev_result: OpenLoopResult | None, x_def: Trajectory,
                      objective: QuadraticObjective, t_i: float,
                      t_sample: float) -> float:
    """Cost headroom carried over from the previous step:

        C = m(prev horizon end) - int_{tail} l(x_def) dt - m(current end)

    where the tail is the newly exposed interval of length ``t_sample``. At
    the first step (no previous result) the bound is zero, which reduces the
    acceptance test to plain improvement over the default control.
    """
    if prev_result is None:
        return 0.0
    grid = x_def.grid
    s = int(round(t_sample / grid.dt))
    if s < 1 or s > grid.n_steps:
        raise ConfigError("t_sample does not fit the prediction grid")
    prev_grid = prev_result.x_star.grid
    m_prev = objective.terminal_cost(prev_grid.tf, prev_result.x_star.states[-1])
    tail_knots = grid.knots[grid.n_steps - s:]
    l_tail = np.array([objective.incremental_cost(t, x) for t, x in
                       zip(tail_knots, x_def.states[grid.n_steps - s:])])
    m_end = objective.terminal_cost(grid.tf, x_def.states[-1])
    return float(m_prev - _engine.trapezoid(l_tail, grid.dt) - m_end)


def line_search_duration(model: SystemModel, x_i: np.ndarray, t_i: float,
                         u_def: ControlSignal, action_seed,
                         objective: QuadraticObjective, c_bound: float,
                         cfg: SynthesisConfig) -> OpenLoopResult:
    """Geometric backtracking over the action duration.

    ``action_seed`` is ``(u_a, tau_a, djdlam_at_tau)`` from
    :func:`select_application_time`. Durations are grid-snapped with a floor
    of one step and the window is clipped to the horizon; the first duration
    whose re-simulated cost change is at most ``c_bound`` is accepted
    (``ls_status == "accepted"``). When the iteration budget runs out, the
    best duration that at least improved on the default is applied instead
    (``ls_status == "improved"``): in regimes where the contraction bound is
    infeasible (disturbances, non-admissible targets) the controller must
    keep acting to bound the tracking error, trading a guaranteed decrease
    for the best available improvement. Only when no duration improves at
    all is the default control returned (``ls_status == "fallback"``).
    """
    ws = _predict_arrays(model, x_i, t_i, u_def, objective, cfg)
    u_a, tau_a, dj_tau = action_seed
    k_tau = int(round((tau_a - t_i) / cfg.dt))
    return _line_search(model, objective, cfg, ws, k_tau, np.asarray(u_a, float),
                        float(dj_tau), float(c_bound))


def solve_open_loop(model: SystemModel, x_i: np.ndarray, t_i: float,
                    u_def: ControlSignal, objective: QuadraticObjective,
                    cfg: SynthesisConfig,
                    prev_result: OpenLoopResult | None = None) -> OpenLoopResult:
    """Compose the four synthesis stages into one step.

    Proportional alpha_d is resolved against the freshly computed default
    cost. A failed actionability gate (or a vanishing alpha_d at an already
    solved state) yields a fallback result carrying the default control.
    """
    ws = _predict_arrays(model, x_i, t_i, u_def, objective, cfg)
    alpha = cfg.alpha_d.resolve(ws["j_def"])

    # contraction bound from stored arrays (same trapezoid as the cost)
    if prev_result is None:
        c_bound = 0.0
    else:
        s = cfg.n_apply
        prev_grid = prev_result.x_star.grid
        m_prev = objective.terminal_cost(prev_grid.tf, prev_result.x_star.states[-1])
        tail = _engine.trapezoid(ws["l_def"][ws["n"] - s:], cfg.dt)
        c_bound = float(m_prev - tail - ws["m_def_end"])

    n_h = ws["n"]
    u_s = np.empty((n_h, model.m))
    djdl_sat = np.empty(n_h)
    djdl_pre = np.empty(n_h)
    gnorm = np.empty(n_h)
    rnorm = np.empty(n_h)
    if alpha < 0.0:
        _engine.action_schedule(model._imap, model.params, t_i, cfg.dt,
                                ws["states"], ws["rho"], ws["u_knots"],
                                objective.r, alpha, cfg.box.u_min,
                                cfg.box.u_max, u_s, djdl_sat, djdl_pre,
                                gnorm, rnorm)
        gate = gnorm > cfg.gamma_tol * (1.0 + rnorm)
    else:
        gate = np.zeros(n_h, dtype=bool)

    if not gate.any():
        return _fallback_result(ws, c_bound, float("nan"), 0)

    k_tau = int(np.argmin(np.where(gate, djdl_sat, np.inf)))
    return _line_search(model, objective, cfg, ws, k_tau,
                        u_s[k_tau].copy(), float(djdl_sat[k_tau]), c_bound)


# -- internals --------------------------------------------------------------


def _predict_arrays(model, x_i, t_i, u_def, objective, cfg):
    """Prediction pass producing the flat arrays the other stages consume."""
    n_h = cfg.n_horizon
    dt = cfg.dt
    grid = TimeGrid.from_steps(t_i, dt, n_h)
    qstarts = np.asarray(model.quaternion_starts, dtype=np.int64)
    u_knots = u_def.values_on_grid(grid)
    xd2 = objective.desired.sample(grid.half_knots)
    xd = np.ascontiguousarray(xd2[0::2])
    x_i = np.ascontiguousarray(x_i, dtype=float)
    states = np.empty((n_h + 1, model.n))
    bad = _engine.rollout(model._drift, model._imap, model.params, t_i, dt,
                          u_knots, x_i, qstarts, True, states)
    if bad >= 0:
        raise DivergenceError(bad, t_i + bad * dt)
    l_def = np.empty(n_h + 1)
    _engine.running_cost_knots(states, xd, objective.q, objective.angle_mask,
                               qstarts, l_def)
    m_def_end = float(_engine.point_cost(states[n_h], xd[n_h], objective.p1,
                                         objective.angle_mask, qstarts))
    j_def = _engine.trapezoid(l_def, dt) + m_def_end
    rho = np.empty_like(states)
    _engine.adjoint(model._jac, model.params, t_i, dt, states, u_knots, xd2,
                    objective.q, objective.p1, objective.angle_mask, qstarts,
                    rho)
    return {"n": n_h, "t_i": t_i, "grid": grid, "qstarts": qstarts,
            "u_knots": u_knots, "xd": xd, "states": states, "l_def": l_def,
            "m_def_end": m_def_end, "j_def": j_def, "rho": rho,
            "u_def": u_def}


def _schedule_arrays(x_def, rho, u_def, model, r, alpha_d, box):
    grid = x_def.grid
    n_h = grid.n_steps
    u_knots = u_def.values_on_grid(grid)
    u_s = np.empty((n_h, model.m))
    djdl_sat = np.empty(n_h)
    djdl_pre = np.empty(n_h)
    gnorm = np.empty(n_h)
    rnorm = np.empty(n_h)
    _engine.action_schedule(model._imap, model.params, grid.t0, grid.dt,
                            x_def.states, rho.costates, u_knots,
                            np.ascontiguousarray(r, dtype=float), alpha_d,
                            box.u_min, box.u_max, u_s, djdl_sat, djdl_pre,
                            gnorm, rnorm)
    return {"u_s": u_s, "djdl_sat": djdl_sat, "djdl_pre": djdl_pre,
            "gnorm": gnorm, "rnorm": rnorm}


def _fallback_result(ws, c_bound, dj_tau, iters):
    grid = ws["grid"]
    return OpenLoopResult(
        action=None,
        u_star=ws["u_def"],
        x_star=Trajectory(grid, ws["states"]),
        j_star=ws["j_def"],
        j_def=ws["j_def"],
        c_bound=c_bound,
        djdlam_at_tau=dj_tau,
        ls_status="fallback",
        ls_iters=iters,
    )


def _line_search(model, objective, cfg, ws, k_tau, u_a, dj_tau, c_bound):
    n_h = ws["n"]
    dt = cfg.dt
    states = ws["states"]
    l_def = ws["l_def"]
    xd = ws["xd"]
    qstarts = ws["qstarts"]
    grid = ws["grid"]
    k_tau = min(max(k_tau, 0), n_h - 1)

    # running-cost integral of the default prediction up to each knot; the
    # candidate trajectory coincides with the prediction before tau_A
    prefix = np.concatenate(([0.0],
                             np.cumsum(0.5 * dt * (l_def[1:] + l_def[:-1]))))

    lam0 = cfg.lambda0_eff
    j_prev = -1
    iters = 0
    best = None  # (j_try, j_steps, suffix) of the best improving candidate
    for it in range(cfg.max_ls_iters):
        iters = it + 1
        lam = lam0 * cfg.beta ** it
        j = max(1, int(round(lam / dt)))
        j = min(j, n_h - k_tau)
        if j == j_prev:
            continue
        j_prev = j
        u_try = ws["u_knots"].copy()
        u_try[k_tau:k_tau + j, :] = u_a
        suffix = np.empty((n_h - k_tau + 1, model.n))
        bad = _engine.rollout(model._drift, model._imap, model.params,
                              grid.knots[k_tau], dt, u_try[k_tau:],
                              states[k_tau], qstarts, False, suffix)
        if bad >= 0:
            continue  # diverging candidate cannot satisfy the bound
        l_suf = np.empty(n_h - k_tau + 1)
        _engine.running_cost_knots(suffix, xd[k_tau:], objective.q,
                                   objective.angle_mask, qstarts, l_suf)
        m_end = float(_engine.point_cost(suffix[-1], xd[n_h], objective.p1,
                                         objective.angle_mask, qstarts))
        j_try = float(prefix[k_tau] + _engine.trapezoid(l_suf, dt) + m_end)
        if j_try - ws["j_def"] <= c_bound:
            return _action_result(ws, model, k_tau, u_a, j, suffix, j_try,
                                  c_bound, dj_tau, "accepted", iters)
        if j_try < ws["j_def"] and (best is None or j_try < best[0]):
            best = (j_try, j, suffix)
    if best is not None:
        j_try, j, suffix = best
        return _action_result(ws, model, k_tau, u_a, j, suffix, j_try,
                              c_bound, dj_tau, "improved", iters)
    return _fallback_result(ws, c_bound, dj_tau, iters)


def _action_result(ws, model, k_tau, u_a, j_steps, suffix, j_try, c_bound,
                   dj_tau, status, iters):
    grid = ws["grid"]
    action = Action(u_a=u_a, lambda_a=j_steps * ws["grid"].dt,
                    tau_a=float(grid.knots[k_tau]))
    u_star = insert_action(ws["u_def"], action)
    full = np.vstack((ws["states"][:k_tau + 1], suffix[1:]))
    return OpenLoopResult(
        action=action,
        u_star=u_star,
        x_star=Trajectory(grid, full),
        j_star=j_try,
        j_def=ws["j_def"],
        c_bound=c_bound,
        djdlam_at_tau=dj_tau,
        ls_status=status,
        ls_iters=iters,
    )
