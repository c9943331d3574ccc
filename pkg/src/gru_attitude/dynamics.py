"""Rigid-body attitude kinematics/dynamics and the formation reference frame.

The body attitude is stored as a full rotation matrix ``R`` (body relative to
the reference frame) and propagated with

    R_dot = R hat(omega)
    I omega_dot = -omega x (I omega) + tau + d

using fixed-step RK4 followed by a polar re-orthonormalization.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import DegenerateGeometry

GIMBAL_MARGIN = 1e-3
_DEGENERATE_TOL = 1e-6  # meters


@dataclass(frozen=True)
class AttitudeState:
    rotation: np.ndarray
    omega: np.ndarray
    time: float = 0.0


@dataclass(frozen=True)
class AttitudeError:
    """Relative attitude error.

    ``euler`` is (phi, theta, psi) from a Z-Y-X (yaw-pitch-roll) extraction and
    ``rate_error`` is the body angular velocity.
    """

    euler: np.ndarray
    rate_error: np.ndarray
    gimbal_proximity: bool = False


@dataclass(frozen=True)
class FormationGeometry:
    r1: np.ndarray
    r2: np.ndarray
    v1: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v2: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def separation(self) -> float:
        return float(np.linalg.norm(np.asarray(self.r1) - np.asarray(self.r2)))


def check_inertia(inertia) -> np.ndarray:
    """Return ``inertia`` as a float array after checking it is SPD."""
    inertia = np.asarray(inertia, dtype=float)
    if inertia.shape != (3, 3):
        raise ValueError(f"inertia must be 3x3, got shape {inertia.shape}")
    if not np.allclose(inertia, inertia.T, rtol=0.0, atol=1e-12):
        raise ValueError("inertia must be symmetric")
    if np.linalg.eigvalsh(inertia).min() <= 0.0:
        raise ValueError("inertia must be positive definite")
    return inertia


def reference_basis(geom: FormationGeometry):
    """Orthonormal reference basis built from the inter-satellite line of sight.

    e1 points from satellite 2 to satellite 1, e3 is minus the component of r2
    orthogonal to e1 (nadir-like), and e2 = e3 x e1 completes a right-handed set.
    """
    r1 = np.asarray(geom.r1, dtype=float)
    r2 = np.asarray(geom.r2, dtype=float)
    los = r1 - r2
    dist = np.linalg.norm(los)
    if dist < _DEGENERATE_TOL:
        raise DegenerateGeometry(f"satellites coincide (separation {dist:.3g} m)")
    e1 = los / dist
    perp = r2 - e1 * np.dot(r2, e1)
    perp_norm = np.linalg.norm(perp)
    if perp_norm < _DEGENERATE_TOL:
        raise DegenerateGeometry("r2 is parallel to the line of sight")
    e3 = -perp / perp_norm
    e2 = np.cross(e3, e1)
    return e1, e2, e3


def dynamics_derivative(state: AttitudeState, inertia, tau, d):
    """Return (R_dot, omega_dot) for control torque ``tau`` and disturbance ``d``."""
    inertia = np.asarray(inertia, dtype=float)
    torque = np.asarray(tau, dtype=float) + np.asarray(d, dtype=float)
    return kernels.body_rates(
        np.ascontiguousarray(state.rotation, dtype=float),
        np.ascontiguousarray(state.omega, dtype=float),
        inertia,
        np.linalg.inv(inertia),
        torque,
    )


def step_rk4(state: AttitudeState, inertia, tau, d, dt: float) -> AttitudeState:
    """One classical RK4 step with torques held constant over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    inertia = np.asarray(inertia, dtype=float)
    torque = np.asarray(tau, dtype=float) + np.asarray(d, dtype=float)
    R, w = kernels.rk4_step(
        np.ascontiguousarray(state.rotation, dtype=float),
        np.ascontiguousarray(state.omega, dtype=float),
        inertia,
        np.linalg.inv(inertia),
        torque,
        float(dt),
    )
    return AttitudeState(R, w, state.time + dt)


def propagate(state: AttitudeState, inertia, tau, d, dt: float, substeps: int = 10) -> AttitudeState:
    """Advance by ``dt`` under zero-order-hold torques using ``substeps`` RK4 steps."""
    inertia = np.asarray(inertia, dtype=float)
    torque = np.asarray(tau, dtype=float) + np.asarray(d, dtype=float)
    R, w = kernels.propagate(
        np.ascontiguousarray(state.rotation, dtype=float),
        np.ascontiguousarray(state.omega, dtype=float),
        inertia,
        np.linalg.inv(inertia),
        torque,
        float(dt),
        int(substeps),
    )
    return replace(state, rotation=R, omega=w, time=state.time + dt)


def euler_from_rotation(R) -> np.ndarray:
    """Z-Y-X Euler angles (phi, theta, psi) with psi, phi in (-pi, pi]."""
    R = np.asarray(R, dtype=float)
    theta = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    angles = np.array([phi, theta, psi])
    angles[[0, 2]] = np.where(angles[[0, 2]] <= -np.pi, np.pi, angles[[0, 2]])
    return angles


def rotation_from_euler(euler) -> np.ndarray:
    """Inverse of :func:`euler_from_rotation`: R = Rz(psi) Ry(theta) Rx(phi)."""
    phi, theta, psi = np.asarray(euler, dtype=float)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def attitude_error(state: AttitudeState) -> AttitudeError:
    # The reference frame is treated as inertial over a period, so the rate
    # error is the body rate itself (no reference feed-forward).
    euler = euler_from_rotation(state.rotation)
    near_gimbal = bool(abs(euler[1]) > np.pi / 2 - GIMBAL_MARGIN)
    return AttitudeError(euler, np.array(state.omega, dtype=float), near_gimbal)


def kinetic_energy(omega, inertia) -> float:
    omega = np.asarray(omega, dtype=float)
    return 0.5 * float(omega @ np.asarray(inertia) @ omega)


def inertial_momentum(state: AttitudeState, inertia) -> np.ndarray:
    """Angular momentum expressed in the (inertial) reference frame."""
    return np.asarray(state.rotation) @ (np.asarray(inertia) @ np.asarray(state.omega))
