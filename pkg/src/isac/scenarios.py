"""Declarative definitions of the nine benchmark control scenarios.

Each scenario bundles a model, quadratic weights, the desired trajectory, the
synthesis parameters (horizon, sampling time, improvement-rate mode,
saturation box), a disturbance schedule where applicable, and run length.
Values that the benchmark literature fixes (weights, horizons, sampling
times, boxes, improvement-rate modes) are transcribed in ``build_scenario``;
values it leaves open (integration step, initial poses, figure-eight
amplitudes, flip timing, switching radius) are declared here as defaults and
documented in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError
from .models import SystemModel, make_model
from .objective import DesiredTrajectory, QuadraticObjective
from .signals import SaturationBox
from .synthesis import AlphaMode, SynthesisConfig

__all__ = [
    "SCENARIO_IDS",
    "ScenarioConfig",
    "build_scenario",
    "build_desired",
    "desired_signal",
    "make_objective",
    "make_synthesis_config",
]

SCENARIO_IDS = (
    "acrobot_swingup",
    "cart_pendulum_swingup",
    "cart_pendulum_tracking",
    "car_parking",
    "car_tracking_disturbed",
    "pvtol_gust",
    "pvtol_figure_eight",
    "quadrotor_flip",
    "quadrotor_figure_eight",
)


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Complete, serializable description of one closed-loop run."""

    scenario_id: str
    model_name: str
    model_params: dict
    q_diag: tuple
    p1_diag: tuple
    r_diag: tuple
    desired: dict
    horizon_sec: float
    t_sample_sec: float
    dt_sec: float
    alpha_d_mode: str
    alpha_d_value: float
    u_min: tuple
    u_max: tuple
    x0: tuple
    end_time_sec: float
    impulses: tuple = ()  # of (time_sec, state_delta tuple)
    switch: dict | None = None
    lambda0_sec: float | None = None
    ls_beta: float = 0.5
    ls_max_iters: int = 10
    nominal_control: tuple | None = None  # default: model equilibrium input

    def __post_init__(self):
        if self.t_sample_sec > self.horizon_sec + 1e-12:
            raise ConfigError("t_sample_sec must not exceed horizon_sec")
        if self.end_time_sec <= 0:
            raise ConfigError("end_time_sec must be positive")
        if self.alpha_d_mode not in ("constant", "proportional"):
            raise ConfigError(f"unknown alpha_d_mode {self.alpha_d_mode!r}")
        if self.alpha_d_value >= 0:
            raise ConfigError("alpha_d_value must be negative")

    # -- object builders ---------------------------------------------------

    def make_model(self) -> SystemModel:
        return make_model(self.model_name, **self.model_params)

    def nominal(self, model: SystemModel) -> np.ndarray:
        if self.nominal_control is not None:
            return np.asarray(self.nominal_control, dtype=float)
        return model.u_eq.copy()

    def n_steps(self) -> int:
        return int(round(self.end_time_sec / self.t_sample_sec))


def make_objective(config: ScenarioConfig, model: SystemModel) -> QuadraticObjective:
    desired = build_desired(config.desired, model.n)
    return QuadraticObjective.build(model, np.asarray(config.q_diag, float),
                                    np.asarray(config.p1_diag, float),
                                    np.asarray(config.r_diag, float), desired)


def make_synthesis_config(config: ScenarioConfig) -> SynthesisConfig:
    return SynthesisConfig(
        horizon=config.horizon_sec,
        t_sample=config.t_sample_sec,
        dt=config.dt_sec,
        alpha_d=AlphaMode(config.alpha_d_mode, config.alpha_d_value),
        box=SaturationBox(np.asarray(config.u_min, float),
                          np.asarray(config.u_max, float)),
        lambda0=config.lambda0_sec,
        beta=config.ls_beta,
        max_ls_iters=config.ls_max_iters,
    )


# -- desired trajectories ----------------------------------------------------


def build_desired(spec: dict, n: int) -> DesiredTrajectory:
    """Construct the target signal named by a desired-trajectory spec dict."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "setpoint":
        value = np.asarray(_take(spec, "value_state", kind), dtype=float)
        _done(spec, kind)
        if value.shape != (n,):
            raise ConfigError(f"setpoint must have {n} components")
        return DesiredTrajectory.setpoint(value)

    if kind == "pendulum_angle_sine":
        amp = float(_take(spec, "amplitude_rad", kind))
        omega = float(_take(spec, "omega_rad_s", kind))
        _done(spec, kind)

        def sample(ts, amp=amp, omega=omega):
            out = np.zeros((ts.shape[0], n))
            out[:, 0] = amp * np.sin(omega * ts)
            out[:, 1] = amp * omega * np.cos(omega * ts)
            return out

        return DesiredTrajectory("pendulum_angle_sine", n, sample,
                                 meta={"amplitude_rad": amp, "omega_rad_s": omega})

    if kind == "car_sine_path":
        _done(spec, kind)

        def sample(ts):
            out = np.zeros((ts.shape[0], n))
            out[:, 0] = ts
            out[:, 1] = np.sin(ts)
            out[:, 3] = np.arctan(np.cos(ts))
            return out

        return DesiredTrajectory("car_sine_path", n, sample)

    if kind == "figure_eight_planar":
        ax = float(_take(spec, "amp_x_m", kind))
        ay = float(_take(spec, "amp_y_m", kind))
        omega = float(_take(spec, "omega_rad_s", kind))
        _done(spec, kind)

        def sample(ts, ax=ax, ay=ay, w=omega):
            out = np.zeros((ts.shape[0], n))
            out[:, 0] = ax * np.sin(w * ts)
            out[:, 1] = ax * w * np.cos(w * ts)
            out[:, 2] = ay * np.sin(2 * w * ts)
            out[:, 3] = 2 * ay * w * np.cos(2 * w * ts)
            return out

        return DesiredTrajectory("figure_eight_planar", n, sample,
                                 meta={"period_sec": 2 * np.pi / omega})

    if kind == "figure_eight_3d":
        ax = float(_take(spec, "amp_x_m", kind))
        ay = float(_take(spec, "amp_y_m", kind))
        az = float(_take(spec, "amp_z_m", kind))
        omega = float(_take(spec, "omega_rad_s", kind))
        _done(spec, kind)

        def sample(ts, ax=ax, ay=ay, az=az, w=omega):
            out = np.zeros((ts.shape[0], n))
            out[:, 0] = ax * np.sin(w * ts)
            out[:, 1] = ax * w * np.cos(w * ts)
            out[:, 2] = ay * np.sin(2 * w * ts)
            out[:, 3] = 2 * ay * w * np.cos(2 * w * ts)
            out[:, 4] = az * np.sin(w * ts)
            out[:, 5] = az * w * np.cos(w * ts)
            out[:, 6] = 1.0  # identity attitude throughout
            return out

        return DesiredTrajectory("figure_eight_3d", n, sample,
                                 meta={"period_sec": 2 * np.pi / omega})

    if kind == "quad_flip":
        pos = np.asarray(_take(spec, "position_m", kind), dtype=float)
        rise = float(_take(spec, "rise_sec", kind))
        hold = float(_take(spec, "hold_sec", kind))
        ret = float(_take(spec, "return_sec", kind))
        _done(spec, kind)
        if pos.shape != (3,) or min(rise, hold, ret) <= 0:
            raise ConfigError("quad_flip needs a 3-D position and positive "
                              "rise/hold/return durations")

        def sample(ts, pos=pos, rise=rise, hold=hold, ret=ret):
            # roll about body-x: identity -> half turn (held) -> full turn,
            # which is the identity again on the opposite quaternion sheet
            out = np.zeros((ts.shape[0], n))
            out[:, 0] = pos[0]
            out[:, 2] = pos[1]
            out[:, 4] = pos[2]
            angle = np.where(
                ts < rise, np.pi * ts / rise,
                np.where(ts < rise + hold, np.pi,
                         np.pi * (1.0 + np.clip((ts - rise - hold) / ret,
                                                0.0, 1.0))))
            out[:, 6] = np.cos(0.5 * angle)
            out[:, 7] = np.sin(0.5 * angle)
            return out

        return DesiredTrajectory("quad_flip", n, sample,
                                 meta={"rise_sec": rise, "hold_sec": hold,
                                       "return_sec": ret})

    raise ConfigError(f"unknown desired-trajectory kind {kind!r}")


def desired_signal(spec: dict, t: float, n: int) -> np.ndarray:
    """Evaluate a desired-trajectory spec at a single time."""
    return build_desired(spec, n).value(t)


def _take(spec: dict, key: str, kind: str):
    if key not in spec:
        raise ConfigError(f"desired kind {kind!r} requires field {key!r}")
    return spec.pop(key)


def _done(spec: dict, kind: str):
    if spec:
        raise ConfigError(f"unknown fields for desired kind {kind!r}: {sorted(spec)}")


# -- the nine benchmark scenarios --------------------------------------------


def build_scenario(scenario_id: str) -> ScenarioConfig:
    """Fully populated configuration for one of the nine benchmark runs."""
    if scenario_id == "acrobot_swingup":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="acrobot",
            model_params=dict(m1=1.0, m2=1.0, l1=1.0, l2=1.0, lc1=0.5,
                              lc2=0.5, i1=1.0 / 12.0, i2=1.0 / 12.0,
                              gravity=9.81),
            q_diag=(1000.0, 0.0, 500.0, 11.0),
            p1_diag=(0.0, 0.0, 0.0, 0.0),
            r_diag=(0.01,),
            desired={"kind": "setpoint", "value_state": (0.0, 0.0, 0.0, 0.0)},
            horizon_sec=1.1,
            t_sample_sec=0.02,
            dt_sec=0.005,
            alpha_d_mode="proportional",
            alpha_d_value=-15.0,
            u_min=(-20.0,),
            u_max=(20.0,),
            x0=(np.pi, 0.0, 0.0, 0.0),
            end_time_sec=15.0,
            switch={"radius": 3.0, "alpha_d_feedback": -5.0,
                    "horizon_sec": 3.0},
        )
    if scenario_id == "cart_pendulum_swingup":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="cart_pendulum",
            model_params=dict(gravity=9.81, length=1.5),
            q_diag=(20.0, 0.0, 5.0, 0.0),
            p1_diag=(0.1, 0.0, 5.0, 0.0),
            r_diag=(0.3,),
            desired={"kind": "setpoint", "value_state": (0.0, 0.0, 1.0, 0.0)},
            horizon_sec=1.2,
            t_sample_sec=0.01,
            dt_sec=0.0025,
            alpha_d_mode="proportional",
            alpha_d_value=-15.0,
            u_min=(-20.0,),
            u_max=(20.0,),
            x0=(np.pi, 0.0, 0.0, 0.0),
            end_time_sec=15.0,
        )
    if scenario_id == "cart_pendulum_tracking":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="cart_pendulum",
            model_params=dict(gravity=9.81, length=1.0),
            q_diag=(5000.0, 0.0, 0.0, 0.0),
            p1_diag=(500.0, 0.0, 0.0, 0.0),
            r_diag=(0.3,),
            desired={"kind": "pendulum_angle_sine",
                     "amplitude_rad": np.pi / 5.0, "omega_rad_s": 1.0},
            horizon_sec=0.05,
            t_sample_sec=0.005,
            dt_sec=0.00125,
            alpha_d_mode="constant",
            alpha_d_value=-1050.0,
            u_min=(-20.0,),
            u_max=(20.0,),
            x0=(0.0, np.pi / 5.0, 0.0, 0.0),
            end_time_sec=20.0,
        )
    if scenario_id == "car_parking":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="car",
            model_params={},
            q_diag=(1.0, 15.0, 0.8, 0.8),
            p1_diag=(0.0, 25.0, 0.0, 0.0),
            r_diag=(0.1, 0.1),
            desired={"kind": "setpoint", "value_state": (0.0, 0.0, 0.0, 0.0)},
            horizon_sec=1.2,
            t_sample_sec=0.02,
            dt_sec=0.005,
            alpha_d_mode="proportional",
            alpha_d_value=-100.0,
            u_min=(-10.0, -4.0),
            u_max=(10.0, 4.0),
            x0=(1.5, 1.0, 0.0, 0.0),
            end_time_sec=15.0,
        )
    if scenario_id == "car_tracking_disturbed":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="car",
            model_params={},
            q_diag=(100.0, 100.0, 0.0, 10.0),
            p1_diag=(0.0, 0.0, 0.0, 0.0),
            r_diag=(0.1, 0.1),
            desired={"kind": "car_sine_path"},
            horizon_sec=0.35,
            t_sample_sec=0.03,
            dt_sec=0.005,
            alpha_d_mode="proportional",
            alpha_d_value=-100.0,
            u_min=(-10.0, -4.0),
            u_max=(10.0, 4.0),
            x0=(0.0, 0.0, np.sqrt(2.0), np.pi / 4.0),
            end_time_sec=20.0,
            impulses=tuple(
                (t, (0.0, 0.0, 3.0, np.pi / 4.0)) for t in (0.0, 3.0, 6.0, 9.0)),
        )
    if scenario_id == "pvtol_gust":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="pvtol",
            model_params=dict(eps=0.3),
            q_diag=(15.0, 3.0, 15.0, 3.0, 3.0, 0.0),
            p1_diag=(0.0,) * 6,
            r_diag=(0.1, 0.1),
            desired={"kind": "setpoint",
                     "value_state": (1.0, 0.0, 0.5, 0.0, 0.0, 0.0)},
            horizon_sec=3.0,
            t_sample_sec=0.02,
            dt_sec=0.005,
            alpha_d_mode="proportional",
            alpha_d_value=-10.0,
            u_min=(0.0, -100.0),
            u_max=(5.0, 100.0),
            x0=(0.0,) * 6,
            end_time_sec=15.0,
            impulses=tuple(
                (t, (0.0, 0.1, 0.0, 0.0, 0.0, 0.0)) for t in (0.0, 2.0, 4.0, 6.0, 8.0)),
        )
    if scenario_id == "pvtol_figure_eight":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="pvtol",
            model_params=dict(eps=0.05),
            q_diag=(45.0, 0.0, 45.0, 0.0, 20.0, 0.0),
            p1_diag=(0.0,) * 6,
            r_diag=(0.1, 0.1),
            desired={"kind": "figure_eight_planar", "amp_x_m": 1.0,
                     "amp_y_m": 0.5, "omega_rad_s": 2.0 * np.pi / 10.0},
            horizon_sec=3.0,
            t_sample_sec=0.007,
            dt_sec=0.0035,
            alpha_d_mode="proportional",
            alpha_d_value=-10.0,
            u_min=(0.0, -100.0),
            u_max=(5.0, 100.0),
            x0=(0.0,) * 6,
            end_time_sec=20.0,
        )
    if scenario_id == "quadrotor_flip":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="quadrotor",
            model_params=dict(mass=0.5, gravity=9.81, kt=0.45, km=0.05,
                              arm=0.17, jx=3e-3, jy=3e-3, jz=5e-3),
            q_diag=(3.0, 0.0, 3.0, 0.0, 3.0, 0.0,
                    1500.0, 1500.0, 1500.0, 1500.0, 0.0, 0.0, 0.0),
            p1_diag=(0.0,) * 13,
            r_diag=(0.1, 0.1, 0.1, 0.1),
            desired={"kind": "quad_flip", "position_m": (1.0, 1.0, 1.0),
                     "flip_duration_sec": 2.0},
            horizon_sec=3.0,
            t_sample_sec=0.02,
            dt_sec=0.01,
            alpha_d_mode="constant",
            alpha_d_value=-5000.0,
            u_min=(0.0,) * 4,
            u_max=(12.0,) * 4,
            x0=(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            end_time_sec=15.0,
        )
    if scenario_id == "quadrotor_figure_eight":
        return ScenarioConfig(
            scenario_id=scenario_id,
            model_name="quadrotor",
            model_params=dict(mass=0.5, gravity=9.81, kt=0.45, km=0.05,
                              arm=0.17, jx=3e-3, jy=3e-3, jz=5e-3),
            q_diag=(10.0, 0.0, 10.0, 0.0, 10.0, 0.0,
                    1000.0, 1000.0, 1000.0, 1000.0, 0.0, 0.0, 0.0),
            p1_diag=(0.0,) * 13,
            r_diag=(0.1, 0.1, 0.1, 0.1),
            desired={"kind": "figure_eight_3d", "amp_x_m": 1.0,
                     "amp_y_m": 0.5, "amp_z_m": 0.5,
                     "omega_rad_s": 2.0 * np.pi / 10.0},
            horizon_sec=2.0,
            t_sample_sec=0.05,
            dt_sec=0.0125,
            alpha_d_mode="constant",
            alpha_d_value=-5000.0,
            u_min=(0.0,) * 4,
            u_max=(12.0,) * 4,
            x0=(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            end_time_sec=20.0,
        )
    raise ConfigError(
        f"unknown scenario {scenario_id!r}; expected one of {SCENARIO_IDS}")
