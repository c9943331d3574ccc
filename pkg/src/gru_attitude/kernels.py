"""Hot inner loops: rigid-body RK4 propagation and single-window GRU inference.

Everything here is written against the numba-supported subset of numpy so the
same source serves as the jitted kernel and as the pure-numpy fallback (see
``_accel``). Callers pass contiguous float64 arrays.
"""

import numpy as np

from ._accel import jit


@jit
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@jit
def hat(w):
    """Skew-symmetric matrix with ``hat(w) @ v == w x v``."""
    m = np.zeros((3, 3))
    m[0, 1] = -w[2]
    m[0, 2] = w[1]
    m[1, 0] = w[2]
    m[1, 2] = -w[0]
    m[2, 0] = -w[1]
    m[2, 1] = w[0]
    return m


@jit
def polar(R):
    """Nearest rotation matrix in the Frobenius sense (orthogonal polar factor)."""
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        u[:, 2] = -u[:, 2]
        out = u @ vt
    return out


@jit
def body_rates(R, w, inertia, inertia_inv, torque):
    """Right-hand side of the rotational equations of motion.

    ``torque`` is the total external torque (control plus disturbance).
    """
    r_dot = R @ hat(w)
    w_dot = inertia_inv @ (torque - cross3(w, inertia @ w))
    return r_dot, w_dot


@jit
def rk4_step(R, w, inertia, inertia_inv, torque, dt):
    k1r, k1w = body_rates(R, w, inertia, inertia_inv, torque)
    k2r, k2w = body_rates(R + 0.5 * dt * k1r, w + 0.5 * dt * k1w, inertia, inertia_inv, torque)
    k3r, k3w = body_rates(R + 0.5 * dt * k2r, w + 0.5 * dt * k2w, inertia, inertia_inv, torque)
    k4r, k4w = body_rates(R + dt * k3r, w + dt * k3w, inertia, inertia_inv, torque)
    r_new = R + (dt / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    w_new = w + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return polar(r_new), w_new


@jit
def propagate(R, w, inertia, inertia_inv, torque, dt, substeps):
    """Hold ``torque`` constant and take ``substeps`` RK4 steps of ``dt / substeps``."""
    h = dt / substeps
    for _ in range(substeps):
        R, w = rk4_step(R, w, inertia, inertia_inv, torque, h)
    return R, w


@jit
def _sigmoid(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        if x[i] >= 0.0:
            out[i] = 1.0 / (1.0 + np.exp(-x[i]))
        else:
            e = np.exp(x[i])
            out[i] = e / (1.0 + e)
    return out


@jit
def gru_cell(wu, wh, b, u, h_prev):
    """One GRU update with gates stacked as [update, reset, candidate]."""
    n = h_prev.shape[0]
    xu = wu @ u
    z = _sigmoid(xu[:n] + wh[:n] @ h_prev + b[:n])
    r = _sigmoid(xu[n:2 * n] + wh[n:2 * n] @ h_prev + b[n:2 * n])
    cand = np.tanh(xu[2 * n:] + wh[2 * n:] @ (r * h_prev) + b[2 * n:])
    return (1.0 - z) * h_prev + z * cand


@jit
def gru_forward_window(window, wu_first, wu_rest, wh, b, w_out, b_out):
    """Many-to-one forward pass of a stacked GRU over one window.

    window   : (w, input_dim)
    wu_first : (3h, input_dim) input weights of the first layer
    wu_rest  : (L-1, 3h, h) input weights of layers 2..L
    wh       : (L, 3h, h) recurrent weights
    b        : (L, 3h) biases
    """
    num_layers = wh.shape[0]
    hidden = wh.shape[2]
    h = np.zeros((num_layers, hidden))
    for t in range(window.shape[0]):
        x = np.ascontiguousarray(window[t])
        h[0] = gru_cell(wu_first, wh[0], b[0], x, h[0])
        for layer in range(1, num_layers):
            h[layer] = gru_cell(wu_rest[layer - 1], wh[layer], b[layer], h[layer - 1], h[layer])
    return w_out @ h[num_layers - 1] + b_out


@jit
def gru_rollout(seed_window, steps, wu_first, wu_rest, wh, b, w_out, b_out):
    """Autoregressive rollout: each prediction is fed back as the newest sample."""
    w = seed_window.shape[0]
    buf = np.empty((w + steps, seed_window.shape[1]))
    buf[:w] = seed_window
    for i in range(steps):
        buf[w + i] = gru_forward_window(buf[i:i + w], wu_first, wu_rest, wh, b, w_out, b_out)
    return buf[w:].copy()
