"""Closed-form receding-horizon action control for control-affine systems.

The library synthesizes a single constant-valued control action per sampling
period in closed form (no nonlinear programming), inserts it into the shifted
previous solution, and enforces a contractive bound on the predicted cost so
the closed loop is stabilizing. Near an equilibrium it can switch to an
equivalent local linear (Riccati) feedback mode. Five benchmark vehicles and
nine ready-made control scenarios are included.
"""

__version__ = "0.1.0"

from .errors import (ActionabilityError, ConfigError, ContractError,
                     DivergenceError, IntegrityError, InvalidInputError,
                     IsacError)
from .models import (MODEL_NAMES, SystemModel, eval_dynamics,
                     finite_diff_jacobian, make_linear_model, make_model)
from .objective import DesiredTrajectory, QuadraticObjective, wrap_angle
from .signals import (Action, ControlSignal, SaturationBox, insert_action,
                      saturate, shift_default)
from .sim import (AdjointTrajectory, TimeGrid, Trajectory, integrate_adjoint,
                  integrate_forward, quadrature_cost)
from .synthesis import (AlphaMode, OpenLoopResult, SynthesisConfig,
                        contraction_bound, line_search_duration,
                        mode_insertion_gradient, optimal_action_schedule,
                        pointwise_candidate, predict, select_application_time,
                        solve_open_loop)
from .scenarios import (SCENARIO_IDS, ScenarioConfig, build_desired,
                        build_scenario, desired_signal, make_objective,
                        make_synthesis_config)
from .configio import (config_hash, dumps_config, parse_config, save_config,
                       scenario_from_dict, scenario_to_dict,
                       validate_scenario)
from .runlog import RunLog, StepTelemetry, read_runlog, summarize, write_runlog
from .controller import (ClosedLoop, ControllerState, Disturbance,
                         RiccatiSolution, SwitchConfig, local_feedback_control,
                         riccati_solve, run, step, switch_check)
