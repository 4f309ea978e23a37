"""Run logs: per-knot trajectory rows, per-step synthesis telemetry, and the
derived summary metrics. Logs serialize to two CSV files plus a JSON summary
so they stay diff-able and tool-agnostic.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .configio import config_hash  # re-exported for the controller
from .errors import IntegrityError

__all__ = [
    "StepTelemetry",
    "RunLog",
    "summarize",
    "write_runlog",
    "read_runlog",
    "error_matrix",
    "config_hash",
]

STEP_COLUMNS = ("t", "j_def", "j_star", "c_bound", "tau_a", "lambda_a",
                "djdlam", "ls_iters", "status", "mode", "wall_ns")


@dataclass(frozen=True)
class StepTelemetry:
    t: float
    j_def: float
    j_star: float
    c_bound: float
    tau_a: float
    lambda_a: float
    djdlam: float
    ls_iters: int
    status: str  # accepted | fallback | feedback
    mode: str  # isac | local_feedback
    wall_ns: int


@dataclass(eq=False)
class RunLog:
    scenario_id: str
    config_hash: str
    version: str
    knot_t: np.ndarray
    knot_states: np.ndarray
    knot_controls: np.ndarray
    knot_desired: np.ndarray
    steps: list
    meta: dict
    summary: dict = field(default_factory=dict)

    def finalize_summary(self):
        self.summary = summarize(self)


def error_matrix(states: np.ndarray, desired: np.ndarray,
                 state_kinds) -> np.ndarray:
    """Row-wise tracking error with angle wrapping and quaternion
    hemisphere disambiguation, matching the objective's error convention."""
    n = states.shape[1]
    angle_mask = np.array([k == "angle" for k in state_kinds], dtype=np.bool_)
    qstarts = []
    i = 0
    while i < n:
        if state_kinds[i] == "quaternion":
            qstarts.append(i)
            i += 4
        else:
            i += 1
    qstarts = np.asarray(qstarts, dtype=np.int64)
    out = np.empty_like(states)
    e = np.empty(n)
    for k in range(states.shape[0]):
        _engine._error_vec(np.ascontiguousarray(states[k]),
                           np.ascontiguousarray(desired[k]),
                           angle_mask, qstarts, e)
        out[k] = e
    return out


def summarize(log: RunLog) -> dict:
    """Summary metrics recomputed from the raw rows.

    Tracking error is measured on the components the running cost weights
    (positive Q diagonal). The cost-decrease statistics consider consecutive
    action-synthesis steps only; with fewer than two such steps the decrease
    fraction is 1.0 by convention.
    """
    meta = log.meta
    expected_rows = meta["n_steps"] * meta["knots_per_step"] + 1
    if log.knot_t.shape[0] != expected_rows:
        raise IntegrityError(
            f"log has {log.knot_t.shape[0]} knot rows, expected {expected_rows}")
    if len(log.steps) != meta["n_steps"]:
        raise IntegrityError(
            f"log has {len(log.steps)} step rows, expected {meta['n_steps']}")

    errs = error_matrix(log.knot_states, log.knot_desired, meta["state_kinds"])
    mask = np.asarray(meta["q_diag"], dtype=float) > 0
    norms = np.linalg.norm(errs[:, mask], axis=1) if mask.any() else \
        np.zeros(errs.shape[0])

    j_seq = [s.j_def for s in log.steps if s.mode == "isac"]
    pairs = len(j_seq) - 1
    if pairs >= 1:
        diffs = np.diff(np.asarray(j_seq))
        decrease_fraction = float(np.mean(diffs < 1e-12))
        max_cost_rise = float(max(0.0, diffs.max()))
    else:
        decrease_fraction = 1.0
        max_cost_rise = 0.0

    statuses = [s.status for s in log.steps]
    wall_s = meta["wall_ns_total"] / 1e9
    sim_s = meta["end_time_sec"]
    return {
        "final_tracking_error": float(norms[-1]),
        "rms_tracking_error": float(np.sqrt(np.mean(norms ** 2))),
        "max_tracking_error": float(norms.max()),
        "steps_total": len(log.steps),
        "steps_accepted": statuses.count("accepted"),
        "steps_improved": statuses.count("improved"),
        "steps_fallback": statuses.count("fallback"),
        "steps_feedback": statuses.count("feedback"),
        "decrease_fraction": decrease_fraction,
        "max_cost_rise": max_cost_rise,
        "wall_seconds": wall_s,
        "sim_seconds": sim_s,
        "wall_sim_ratio": wall_s / sim_s,
    }


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def write_runlog(log: RunLog, out_dir) -> None:
    """Write knots.csv, steps.csv and summary.json into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    n = log.knot_states.shape[1]
    m = log.knot_controls.shape[1]
    header_lines = [f"# scenario_id={log.scenario_id}",
                    f"# config_hash={log.config_hash}",
                    f"# version={log.version}"]

    with open(os.path.join(out_dir, "knots.csv"), "w", newline="") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i}" for i in range(n)]
                        + [f"u{j}" for j in range(m)]
                        + [f"xd{i}" for i in range(n)])
        for k in range(log.knot_t.shape[0]):
            writer.writerow([_fmt(log.knot_t[k])]
                            + [_fmt(v) for v in log.knot_states[k]]
                            + [_fmt(v) for v in log.knot_controls[k]]
                            + [_fmt(v) for v in log.knot_desired[k]])

    with open(os.path.join(out_dir, "steps.csv"), "w", newline="") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(STEP_COLUMNS)
        for s in log.steps:
            writer.writerow([
                _fmt(s.t), _fmt(s.j_def), _fmt(s.j_star), _fmt(s.c_bound),
                _fmt(s.tau_a), _fmt(s.lambda_a), _fmt(s.djdlam),
                str(s.ls_iters), s.status, s.mode, str(s.wall_ns)])

    payload = {
        "scenario_id": log.scenario_id,
        "config_hash": log.config_hash,
        "version": log.version,
        "meta": log.meta,
        "summary": log.summary,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_runlog(run_dir) -> RunLog:
    """Rebuild a RunLog from its serialized files."""
    with open(os.path.join(run_dir, "summary.json")) as fh:
        payload = json.load(fh)

    def read_csv(path):
        header = {}
        with open(path, newline="") as fh:
            rows = []
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    header[key.strip()] = value
                    continue
                rows.append(line)
        reader = csv.reader(rows)
        columns = next(reader)
        return header, columns, list(reader)

    header, columns, rows = read_csv(os.path.join(run_dir, "knots.csv"))
    n = sum(1 for c in columns if c.startswith("x") and not c.startswith("xd"))
    m = sum(1 for c in columns if c.startswith("u"))
    data = np.array([[float(v) for v in row] for row in rows])
    if data.shape[1] != 1 + 2 * n + m:
        raise IntegrityError("knots.csv column count mismatch")
    knot_t = data[:, 0]
    knot_states = data[:, 1:1 + n]
    knot_controls = data[:, 1 + n:1 + n + m]
    knot_desired = data[:, 1 + n + m:]

    _, s_cols, s_rows = read_csv(os.path.join(run_dir, "steps.csv"))
    if tuple(s_cols) != STEP_COLUMNS:
        raise IntegrityError("steps.csv column mismatch")
    steps = [StepTelemetry(
        t=float(r[0]), j_def=float(r[1]), j_star=float(r[2]),
        c_bound=float(r[3]), tau_a=float(r[4]), lambda_a=float(r[5]),
        djdlam=float(r[6]), ls_iters=int(r[7]), status=r[8], mode=r[9],
        wall_ns=int(r[10])) for r in s_rows]

    return RunLog(
        scenario_id=payload["scenario_id"],
        config_hash=payload["config_hash"],
        version=payload["version"],
        knot_t=knot_t, knot_states=knot_states, knot_controls=knot_controls,
        knot_desired=knot_desired, steps=steps, meta=payload["meta"],
        summary=payload["summary"])
