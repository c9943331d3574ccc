"""Magnetic field surrogate, PID law, magnetorquer mapping and thruster fallback.

The magnetorquers realize the PID command ``u`` through the cross-product law

    m = B x u / |B|^2,    tau = m x B = u - (u . b) b,

which delivers the component of ``u`` orthogonal to the field. Setting
``normalize=False`` gives the unscaled law ``m = B x u`` (torque scaled by
|B|^2). Whatever the magnetorquers cannot deliver is left to the thrusters.
"""

from dataclasses import dataclass, field, replace

import numpy as np

THRUSTER_MODES = ("assist", "switch")


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.5
    kd: float = 5.0
    ki: float = 0.01
    integral_clamp: float = 10.0

    def __post_init__(self):
        if not self.kp > 0:
            raise ValueError("kp must be > 0")
        if not self.kd > 0:
            raise ValueError("kd must be > 0")
        if not self.ki >= 0:
            raise ValueError("ki must be >= 0")
        if not self.integral_clamp > 0:
            raise ValueError("integral_clamp must be > 0")


@dataclass(frozen=True)
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_error: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class ActuatorConfig:
    """Thruster behaviour when the field is (nearly) parallel to the command.

    ``switch``: thrusters replace the magnetic torque entirely when it falls
    below ``fallback_fraction`` of the command.
    ``assist``: thrusters supply the along-field part of the command whenever
    that part exceeds ``fallback_fraction`` of the command.
    """

    fallback_fraction: float = 0.05
    tau_max: float = 1e-3
    thruster_mode: str = "assist"
    normalize_dipole: bool = True

    def __post_init__(self):
        if self.thruster_mode not in THRUSTER_MODES:
            raise ValueError(f"thruster_mode must be one of {THRUSTER_MODES}")
        if not 0 < self.fallback_fraction < 1:
            raise ValueError("fallback_fraction must be in (0, 1)")
        if not self.tau_max > 0:
            raise ValueError("tau_max must be > 0")


@dataclass(frozen=True)
class ControlOutput:
    u_pid: np.ndarray
    dipole: np.ndarray
    tau: np.ndarray
    thruster_active: bool = False
    tau_magnetic: np.ndarray = None
    tau_thruster: np.ndarray = None


@dataclass(frozen=True)
class FieldModel:
    """Tilted-dipole surrogate sampled along a circular polar orbit.

    B(t) = B0 (cos(2 pi t / P) a + sin(2 pi t / P) b + out_of_plane c)
    """

    B0: float = 3e-5
    orbit_period: float = 5400.0
    out_of_plane: float = 0.3
    basis: np.ndarray = field(default_factory=lambda: np.eye(3))  # rows a, b, c

    def at(self, t: float) -> np.ndarray:
        return field_at(t, self.orbit_period, B0=self.B0, basis=self.basis,
                        out_of_plane=self.out_of_plane)


def field_at(time, orbit_period, B0=3e-5, basis=None, out_of_plane=0.3) -> np.ndarray:
    if orbit_period <= 0:
        raise ValueError("orbit_period must be > 0")
    a, b, c = np.eye(3) if basis is None else np.asarray(basis, dtype=float)
    angle = 2.0 * np.pi * time / orbit_period
    return B0 * (np.cos(angle) * a + np.sin(angle) * b + out_of_plane * c)


def pid_term(error, pid: PidState, gains: PidGains, dt: float):
    """PID command u = -kp e - kd e_dot - ki int(e), integral by the trapezoid rule.

    ``error`` is an :class:`~gru_attitude.dynamics.AttitudeError`; the rate
    error stands in for the derivative of the angle error.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    e = np.asarray(error.euler, dtype=float)
    e_dot = np.asarray(error.rate_error, dtype=float)
    integral = pid.integral + 0.5 * dt * (e + pid.last_error)
    norm = np.linalg.norm(integral)
    if norm > gains.integral_clamp:
        integral = integral * (gains.integral_clamp / norm)
    u = -gains.kp * e - gains.kd * e_dot - gains.ki * integral
    return u, PidState(integral, e.copy())


def dipole_and_torque(u_pid, B, normalize: bool = True) -> ControlOutput:
    u = np.asarray(u_pid, dtype=float)
    B = np.asarray(B, dtype=float)
    m = np.cross(B, u)
    if normalize:
        b2 = float(B @ B)
        m = m / b2 if b2 > 0 else np.zeros(3)
    tau = np.cross(m, B)
    return ControlOutput(u, m, tau, False, tau, np.zeros(3))


def thruster_fallback(u_pid, B, out: ControlOutput, fallback_fraction=0.05,
                      tau_max=1e-3, mode="assist", normalize: bool = True) -> ControlOutput:
    u = np.asarray(u_pid, dtype=float)
    B = np.asarray(B, dtype=float)
    u_norm = np.linalg.norm(u)
    b2 = float(B @ B)
    if mode == "switch":
        # Magnetic torque scales with |B|^2 under the unnormalized law.
        scale = 1.0 if normalize else b2
        if np.linalg.norm(out.tau) < fallback_fraction * u_norm * scale:
            thrust = np.clip(u, -tau_max, tau_max)
            return replace(out, tau=thrust, thruster_active=True,
                           tau_magnetic=np.zeros(3), tau_thruster=thrust)
        return out
    if mode != "assist":
        raise ValueError(f"unknown thruster mode {mode!r}")
    along = (u @ B) / b2 * B if b2 > 0 else u
    if np.linalg.norm(along) > fallback_fraction * u_norm:
        thrust = np.clip(along, -tau_max, tau_max)
        return replace(out, tau=out.tau + thrust, thruster_active=True, tau_thruster=thrust)
    return out


def actuate(u_cmd, B, cfg: ActuatorConfig = ActuatorConfig()) -> ControlOutput:
    out = dipole_and_torque(u_cmd, B, normalize=cfg.normalize_dipole)
    return thruster_fallback(u_cmd, B, out, cfg.fallback_fraction, cfg.tau_max,
                             cfg.thruster_mode, cfg.normalize_dipole)
