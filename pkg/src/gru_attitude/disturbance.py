"""Ground-truth disturbance synthesis and disturbance estimation from telemetry."""

from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .errors import GridMismatch, NonUniformSampling

KINDS = ("ground_truth", "estimated", "virtual")
_GRID_TOL = 1e-9  # seconds


@dataclass(frozen=True)
class DisturbanceSeries:
    """Uniformly sampled 3-axis torque series [N m]."""

    samples: np.ndarray
    dt: float = 1.0
    t0: float = 0.0
    kind: str = "ground_truth"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise ValueError(f"samples must have shape (n, 3), got {samples.shape}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def slice(self, start: int, stop: int) -> "DisturbanceSeries":
        return DisturbanceSeries(self.samples[start:stop], self.dt,
                                 self.t0 + start * self.dt, self.kind)


def _default_amplitudes():
    return np.array([[1.0e-4, 5.0e-5], [8.0e-5, 4.0e-5], [6.0e-5, 6.0e-5]])


def _default_frequencies():
    once = 1.0 / 5400.0
    return np.tile([once, 2.0 * once], (3, 1))


def _default_phases():
    return np.array([[0.0, 0.7], [1.9, 2.6], [4.1, 5.3]])


@dataclass(frozen=True)
class DisturbanceModel:
    """Per-axis sum of sinusoids plus linear drift plus white noise.

    d_j(t) = sum_k A_jk sin(2 pi f_jk t + phi_jk) + drift_j t + sigma n_j(t)
    """

    amplitudes: np.ndarray = field(default_factory=_default_amplitudes)
    frequencies: np.ndarray = field(default_factory=_default_frequencies)
    phases: np.ndarray = field(default_factory=_default_phases)
    drift: np.ndarray = field(default_factory=lambda: np.full(3, 1e-9))
    noise_sigma: float = 1e-6
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("amplitudes", "frequencies", "phases"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape[0] != 3:
                raise ValueError(f"{name} must have one row per axis (3 rows)")
            object.__setattr__(self, name, arr)
        if not (self.amplitudes.shape == self.frequencies.shape == self.phases.shape):
            raise ValueError("amplitudes, frequencies and phases must share a shape")
        if np.any(self.amplitudes < 0):
            raise ValueError("amplitudes must be >= 0")
        if np.any(self.frequencies <= 0):
            raise ValueError("frequencies must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        object.__setattr__(self, "drift", np.broadcast_to(
            np.asarray(self.drift, dtype=float), (3,)).copy())

    @classmethod
    def zero(cls, rng_seed: int = 0) -> "DisturbanceModel":
        return cls(np.zeros((3, 1)), np.ones((3, 1)), np.zeros((3, 1)), np.zeros(3), 0.0, rng_seed)


def synthesize(model: DisturbanceModel, horizon: float, dt: float = 1.0, t0: float = 0.0) -> DisturbanceSeries:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if horizon < dt:
        raise ValueError("horizon must be >= dt")
    n = int(np.floor(horizon / dt + 1e-9))
    t = t0 + dt * np.arange(n)
    arg = 2.0 * np.pi * model.frequencies[None, :, :] * t[:, None, None] + model.phases[None, :, :]
    samples = (model.amplitudes[None, :, :] * np.sin(arg)).sum(axis=2)
    samples += t[:, None] * model.drift[None, :]
    if model.noise_sigma > 0:
        rng = seeding.stream(model.rng_seed, "disturbance-noise")
        samples += model.noise_sigma * rng.standard_normal((n, 3))
    return DisturbanceSeries(samples, dt, t0, "ground_truth")


def _uniform_step(times) -> float:
    times = np.asarray(times, dtype=float)
    dt = (times[-1] - times[0]) / (len(times) - 1)
    grid = times[0] + dt * np.arange(len(times))
    if dt <= 0 or np.max(np.abs(times - grid)) > _GRID_TOL:
        raise NonUniformSampling("telemetry timestamps are not on a uniform grid")
    return float(dt)


def stencil_torque(taus) -> np.ndarray:
    """Torque seen by the derivative stencil at each sample of a held series."""
    taus = np.asarray(taus, dtype=float)
    out = np.empty_like(taus)
    out[1:-1] = 0.5 * (taus[:-2] + taus[1:-1])
    # one-sided stencils weight the first / last two hold intervals 3/2, -1/2
    out[0] = 1.5 * taus[0] - 0.5 * taus[1]
    out[-1] = 1.5 * taus[-2] - 0.5 * taus[-3]
    return out


def estimate_from_arrays(times, omega, taus, inertia) -> DisturbanceSeries:
    """Invert the rotational dynamics on sampled telemetry.

    d = I omega_dot + omega x (I omega) - tau, with omega_dot from central
    differences (second-order one-sided stencils at both ends).

    ``taus[i]`` is the torque held over [t_i, t_i+1). The central stencil at
    t_i spans both neighbouring hold intervals, so tau(t_i) is taken as the
    mean of the torques before and after the switching instant.
    """
    omega = np.asarray(omega, dtype=float)
    taus = np.asarray(taus, dtype=float)
    inertia = np.asarray(inertia, dtype=float)
    if len(omega) < 3:
        raise ValueError("need at least 3 telemetry samples")
    if taus.shape != omega.shape:
        raise ValueError("taus and omega must have the same shape")
    dt = _uniform_step(times)
    omega_dot = np.gradient(omega, dt, axis=0, edge_order=2)
    momentum = omega @ inertia.T
    d = omega_dot @ inertia.T + np.cross(omega, momentum) - stencil_torque(taus)
    return DisturbanceSeries(d, dt, float(times[0]), "estimated")


def estimate_from_telemetry(states, taus, inertia) -> DisturbanceSeries:
    times = np.array([s.time for s in states], dtype=float)
    omega = np.array([s.omega for s in states], dtype=float)
    return estimate_from_arrays(times, omega, taus, inertia)


def virtual_residual(ground: DisturbanceSeries, predictions: DisturbanceSeries) -> DisturbanceSeries:
    """Element-wise residual ``ground - predictions`` on a shared grid."""
    if (len(ground) != len(predictions) or abs(ground.dt - predictions.dt) > _GRID_TOL
            or abs(ground.t0 - predictions.t0) > _GRID_TOL):
        raise GridMismatch("series do not share a grid")
    return DisturbanceSeries(ground.samples - predictions.samples, ground.dt, ground.t0, "virtual")
