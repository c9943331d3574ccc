"""Iterative estimate -> train -> compensate loop around the magnetorquer PID.

Iteration ``k`` (0-based) simulates the period [kT, (k+1)T] with the command

    u_cmd(t) = u_PID(t) - sum_i Delta_i(t)

where Delta_1..Delta_k are the forecasters trained after earlier periods. The
plant always receives the true disturbance. After the period the disturbance
is re-estimated from telemetry, the applied corrections are subtracted to get
the virtual disturbance, and the next forecaster is trained on it.

Two ways to produce Delta_i(t) during a period:

``conditioned``
    one-step-ahead prediction from the last ``w`` disturbance estimates
    computed on board from telemetry (central differences, one sample behind).
    Forecaster ``i`` sees the estimate minus the outputs of forecasters
    ``1..i-1``, which is the same virtual series it was trained on.
``rollout``
    the whole period is forecast autoregressively from the last ``w`` samples
    of the forecaster's training series.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import gru, seeding
from .actuation import ActuatorConfig, FieldModel, PidGains, PidState, actuate, pid_term
from .disturbance import (DisturbanceModel, DisturbanceSeries, estimate_from_arrays,
                          synthesize, virtual_residual)
from .dynamics import AttitudeState, attitude_error, check_inertia, propagate, rotation_from_euler
from .errors import TrainingDiverged

log = logging.getLogger(__name__)

PREDICTION_MODES = ("conditioned", "rollout")
STOP_RULES = ("fixed_N", "rmse_plateau")


@dataclass(frozen=True)
class Scenario:
    inertia: np.ndarray = field(default_factory=lambda: np.diag([120.0, 100.0, 90.0]))
    gains: PidGains = PidGains()
    actuator: ActuatorConfig = ActuatorConfig()
    field_model: FieldModel = FieldModel()
    disturbance: DisturbanceModel = DisturbanceModel()
    initial_euler: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    control_dt: float = 1.0
    substeps: int = 10

    def __post_init__(self):
        object.__setattr__(self, "inertia", check_inertia(self.inertia))
        if not self.control_dt > 0:
            raise ValueError("control_dt must be > 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    def initial_state(self) -> AttitudeState:
        return AttitudeState(rotation_from_euler(self.initial_euler),
                             np.asarray(self.initial_omega, dtype=float).copy(), 0.0)


@dataclass(frozen=True)
class IterationConfig:
    period: float = 5400.0
    num_iterations: int = 4
    prediction_mode: str = "conditioned"
    stop_rule: str = "fixed_N"
    plateau_tol: float = 0.01

    def __post_init__(self):
        if self.num_iterations < 1:
            raise ValueError("num_iterations must be >= 1")
        if self.prediction_mode not in PREDICTION_MODES:
            raise ValueError(f"prediction_mode must be one of {PREDICTION_MODES}")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"stop_rule must be one of {STOP_RULES}")
        if not self.plateau_tol >= 0:
            raise ValueError("plateau_tol must be >= 0")

    def steps(self, dt: float) -> int:
        if self.period < 100 * dt:
            raise ValueError("period must be >= 100 * control_dt")
        return int(round(self.period / dt))


class GruCorrection:
    """A trained forecaster in the correction stack."""

    uses_window = True

    def __init__(self, net, seed_window, start_index: int):
        self.net = net
        self.packed = net.packed()
        self.seed_window = np.array(seed_window, dtype=float)
        self.window = self.seed_window.shape[0]
        self.start_index = start_index  # global step right after the training series
        self._rollout = np.zeros((0, 3))

    def predict(self, t, window):
        return gru.predict_next(self.net, window, self.packed)

    def forecast(self, start_index: int, times):
        stop = start_index + len(times) - self.start_index
        if stop > len(self._rollout):
            self._rollout = gru.predict_series(self.net, self.seed_window, stop).samples
        return self._rollout[start_index - self.start_index:stop]


class OracleCorrection:
    """Correction given by a known function of time (test double / upper bound)."""

    uses_window = False
    window = 0

    def __init__(self, fn):
        self.fn = fn

    def predict(self, t, window):
        return np.asarray(self.fn(t), dtype=float)

    def forecast(self, start_index: int, times):
        return np.array([self.fn(t) for t in times], dtype=float).reshape(len(times), 3)


@dataclass
class History:
    """Tail of the previous period needed to seed on-board estimates."""

    omega: np.ndarray        # (h, 3)
    tau: np.ndarray          # (h, 3)
    corrections: np.ndarray  # (m, h, 3)

    @classmethod
    def from_record(cls, rec: "IterationRecord", length: int) -> "History":
        length = min(length, len(rec.times))
        return cls(rec.omega[-length:].copy(), rec.tau[-length:].copy(),
                   rec.corrections[:, -length:].copy())


@dataclass
class IterationRecord:
    k: int
    times: np.ndarray
    rotation: np.ndarray
    omega: np.ndarray
    euler: np.ndarray
    gimbal: np.ndarray
    u_pid: np.ndarray
    corrections: np.ndarray
    u_cmd: np.ndarray
    dipole: np.ndarray
    tau: np.ndarray
    tau_magnetic: np.ndarray
    tau_thruster: np.ndarray
    thruster: np.ndarray
    field: np.ndarray
    d_true: np.ndarray
    d_est: DisturbanceSeries
    d_virtual: DisturbanceSeries
    end_state: AttitudeState
    end_pid: PidState
    model: object = None
    training: object = None

    @property
    def correction_total(self) -> np.ndarray:
        return self.corrections.sum(axis=0) if len(self.corrections) else np.zeros_like(self.u_pid)

    @property
    def channels(self) -> np.ndarray:
        """(n, 6) array of phi, theta, psi, p, q, r."""
        return np.hstack([self.euler, self.omega])


def run_iteration(k: int, stack, scenario: Scenario, cfg: IterationConfig, ground: DisturbanceSeries,
                  state: AttitudeState = None, pid: PidState = None, history: History = None,
                  ) -> IterationRecord:
    """Simulate period ``k`` with the corrections in ``stack`` applied."""
    dt = scenario.control_dt
    n = cfg.steps(dt)
    if len(ground) != n:
        raise ValueError(f"ground series has {len(ground)} samples, period needs {n}")
    state = scenario.initial_state() if state is None else state
    pid = PidState() if pid is None else pid
    inertia = scenario.inertia
    t0 = k * cfg.period
    times = t0 + dt * np.arange(n)
    m = len(stack)

    h = 0 if history is None else len(history.omega)
    omega_buf = np.zeros((h + n + 1, 3))
    tau_buf = np.zeros((h + n, 3))
    est_buf = np.full((h + n, 3), np.nan)
    corr_buf = np.zeros((m, h + n, 3))
    if h:
        omega_buf[:h] = history.omega
        tau_buf[:h] = history.tau
        m_hist = min(m, history.corrections.shape[0])
        corr_buf[:m_hist, :h] = history.corrections[:m_hist]

    windowed = cfg.prediction_mode == "conditioned"
    if not windowed:
        for i, entry in enumerate(stack):
            corr_buf[i, h:] = entry.forecast(k * n, times)
    momentum_inertia = inertia.T

    def onboard_estimate(q):
        w_dot = (omega_buf[q + 1] - omega_buf[q - 1]) / (2.0 * dt)
        w_q = omega_buf[q]
        return w_dot @ momentum_inertia + np.cross(w_q, w_q @ momentum_inertia) - 0.5 * (tau_buf[q - 1] + tau_buf[q])

    for q in range(1, h - 1):
        est_buf[q] = onboard_estimate(q)

    rotation = np.empty((n, 3, 3))
    omega = np.empty((n, 3))
    euler = np.empty((n, 3))
    gimbal = np.zeros(n, dtype=bool)
    u_pid = np.empty((n, 3))
    u_cmd = np.empty((n, 3))
    dipole = np.empty((n, 3))
    tau_mag = np.empty((n, 3))
    tau_thr = np.empty((n, 3))
    thruster = np.zeros(n, dtype=bool)
    field_b = np.empty((n, 3))

    for j in range(n):
        p = h + j
        omega_buf[p] = state.omega
        if p >= 2:
            est_buf[p - 1] = onboard_estimate(p - 1)

        err = attitude_error(state)
        u, pid = pid_term(err, pid, scenario.gains, dt)
        if windowed:
            for i, entry in enumerate(stack):
                if entry.uses_window:
                    lo = p - entry.window
                    if lo < 1:
                        continue
                    inputs = est_buf[lo:p] - corr_buf[:i, lo:p].sum(axis=0)
                    corr_buf[i, p] = entry.predict(times[j], inputs)
                else:
                    corr_buf[i, p] = entry.predict(times[j], None)
        cmd = u - corr_buf[:, p].sum(axis=0) if m else u
        b_field = state.rotation.T @ scenario.field_model.at(times[j])
        out = actuate(cmd, b_field, scenario.actuator)

        rotation[j], omega[j], euler[j], gimbal[j] = state.rotation, state.omega, err.euler, err.gimbal_proximity
        u_pid[j], u_cmd[j], dipole[j] = u, cmd, out.dipole
        tau_mag[j], tau_thr[j], thruster[j], field_b[j] = out.tau_magnetic, out.tau_thruster, out.thruster_active, b_field
        tau_buf[p] = out.tau
        state = propagate(state, inertia, out.tau, ground.samples[j], dt, scenario.substeps)

    tau = tau_buf[h:].copy()
    corrections = corr_buf[:, h:].copy()
    d_est = estimate_from_arrays(times, omega, tau, inertia)
    applied = DisturbanceSeries(corrections.sum(axis=0) if m else np.zeros((n, 3)), dt, t0, "estimated")
    d_virtual = virtual_residual(d_est, applied)
    return IterationRecord(
        k=k, times=times, rotation=rotation, omega=omega, euler=euler, gimbal=gimbal,
        u_pid=u_pid, corrections=corrections, u_cmd=u_cmd, dipole=dipole, tau=tau,
        tau_magnetic=tau_mag, tau_thruster=tau_thr, thruster=thruster, field=field_b,
        d_true=ground.samples.copy(), d_est=d_est, d_virtual=d_virtual,
        end_state=state, end_pid=pid,
    )


def mean_attitude_rmse(rec: IterationRecord) -> float:
    return float(np.sqrt(np.mean(rec.euler ** 2, axis=0)).mean())


def run_campaign(scenario: Scenario, cfg: IterationConfig, train_cfg: gru.TrainConfig = gru.TrainConfig(),
                 seed: int = 42, ground: DisturbanceSeries = None):
    """Run the full iterative procedure; returns the list of iteration records.

    ``ground`` overrides the synthesized disturbance (must cover N periods).
    Raises :class:`TrainingDiverged` (with the partial records attached) if a
    training run ends with a non-finite loss.
    """
    dt = scenario.control_dt
    n = cfg.steps(dt)
    if ground is None:
        ground = synthesize(scenario.disturbance, cfg.num_iterations * n * dt, dt)
    if len(ground) < cfg.num_iterations * n:
        raise ValueError("ground disturbance series is shorter than the campaign")
    state, pid = scenario.initial_state(), PidState()
    stack, records, history = [], [], None
    for k in range(cfg.num_iterations):
        rec = run_iteration(k, stack, scenario, cfg, ground.slice(k * n, (k + 1) * n),
                            state=state, pid=pid, history=history)
        tcfg = replace(train_cfg, seed=seeding.derive_seed(seed, f"train/{k}"))
        net, tlog = gru.train(rec.d_virtual, tcfg)
        rec.model, rec.training = net, tlog
        records.append(rec)
        log.info("iteration %d: mean attitude RMSE %.4g rad, training %.1f s (%d epochs)",
                 k + 1, mean_attitude_rmse(rec), tlog.wall_time, tlog.epochs_run)
        if not math.isfinite(tlog.final_loss):
            raise TrainingDiverged(f"training after iteration {k + 1} diverged", records)
        stack.append(GruCorrection(net, rec.d_virtual.samples[-train_cfg.window:], (k + 1) * n))
        state, pid = rec.end_state, rec.end_pid
        history = History.from_record(rec, train_cfg.window + 1)
        if cfg.stop_rule == "rmse_plateau" and k >= 1:
            prev, cur = mean_attitude_rmse(records[-2]), mean_attitude_rmse(rec)
            if prev <= 0 or (prev - cur) / prev < cfg.plateau_tol:
                break
    return records
