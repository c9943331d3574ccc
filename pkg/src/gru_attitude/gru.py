"""Stacked GRU forecaster trained from scratch.

The network maps a window of ``w`` past disturbance samples to the next
sample (many-to-one). Each layer applies

    z  = sigmoid(W_uz u + W_hz h + b_z)
    r  = sigmoid(W_ur u + W_hr h + b_r)
    h~ = tanh(W_uh u + W_hh (r * h) + b_h)
    h' = (1 - z) * h + z * h~

and a linear head reads the top layer's final hidden state. Gradients are
exact reverse-mode through the unrolled window (BPTT); parameters are updated
with Adam on a summed Huber loss.

Weights are stored with the three gates stacked row-wise in the order
[update, reset, candidate], so ``wu`` is (3h, input) and ``wh`` is (3h, h).
"""

import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import kernels, seeding
from .disturbance import DisturbanceSeries
from .errors import InsufficientData, ModelFormatError


@dataclass
class GruLayerParams:
    wu: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.wh.shape[1]

    def _gate(self, arr, k):
        n = self.hidden
        return arr[k * n:(k + 1) * n]

    W_uz = property(lambda self: self._gate(self.wu, 0))
    W_ur = property(lambda self: self._gate(self.wu, 1))
    W_uh = property(lambda self: self._gate(self.wu, 2))
    W_hz = property(lambda self: self._gate(self.wh, 0))
    W_hr = property(lambda self: self._gate(self.wh, 1))
    W_hh = property(lambda self: self._gate(self.wh, 2))
    b_z = property(lambda self: self._gate(self.b, 0))
    b_r = property(lambda self: self._gate(self.b, 1))
    b_h = property(lambda self: self._gate(self.b, 2))


@dataclass
class GruNetwork:
    layers: list
    w_out: np.ndarray
    b_out: np.ndarray
    mean: np.ndarray = None
    scale: np.ndarray = None

    def __post_init__(self):
        out = self.w_out.shape[0]
        if self.mean is None:
            self.mean = np.zeros(out)
        if self.scale is None:
            self.scale = np.ones(out)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def hidden(self) -> int:
        return self.layers[0].hidden

    @property
    def input_dim(self) -> int:
        return self.layers[0].wu.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w_out.shape[0]

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"layer{i}.wu", layer.wu), (f"layer{i}.wh", layer.wh), (f"layer{i}.b", layer.b)]
        out += [("head.w", self.w_out), ("head.b", self.b_out)]
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def copy(self) -> "GruNetwork":
        layers = [GruLayerParams(l.wu.copy(), l.wh.copy(), l.b.copy()) for l in self.layers]
        return GruNetwork(layers, self.w_out.copy(), self.b_out.copy(),
                          self.mean.copy(), self.scale.copy())

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def denormalize(self, y):
        return np.asarray(y, dtype=float) * self.scale + self.mean

    def packed(self):
        """Weights laid out for :mod:`kernels` (contiguous float64 copies)."""
        hidden = self.hidden
        wu_rest = np.stack([l.wu for l in self.layers[1:]]) if self.num_layers > 1 \
            else np.zeros((0, 3 * hidden, hidden))
        return (
            np.ascontiguousarray(self.layers[0].wu),
            np.ascontiguousarray(wu_rest),
            np.ascontiguousarray(np.stack([l.wh for l in self.layers])),
            np.ascontiguousarray(np.stack([l.b for l in self.layers])),
            np.ascontiguousarray(self.w_out),
            np.ascontiguousarray(self.b_out),
        )


def glorot_init(shape, rng) -> np.ndarray:
    """Glorot/Xavier uniform draw for a (fan_out, fan_in) weight matrix."""
    fan_out, fan_in = shape
    if fan_out <= 0 or fan_in <= 0:
        raise ValueError("shape must have positive dims")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_network(input_dim=3, hidden=128, num_layers=3, output_dim=3, rng=None) -> GruNetwork:
    """Glorot-uniform weights (one draw per gate matrix), zero biases."""
    rng = np.random.default_rng(0) if rng is None else rng
    layers = []
    for i in range(num_layers):
        n_in = input_dim if i == 0 else hidden
        wu = np.concatenate([glorot_init((hidden, n_in), rng) for _ in range(3)])
        wh = np.concatenate([glorot_init((hidden, hidden), rng) for _ in range(3)])
        layers.append(GruLayerParams(wu, wh, np.zeros(3 * hidden)))
    return GruNetwork(layers, glorot_init((output_dim, hidden), rng), np.zeros(output_dim))


def gru_cell_step(params: GruLayerParams, u_t, h_prev) -> np.ndarray:
    return kernels.gru_cell(
        np.ascontiguousarray(params.wu, dtype=float),
        np.ascontiguousarray(params.wh, dtype=float),
        np.ascontiguousarray(params.b, dtype=float),
        np.ascontiguousarray(u_t, dtype=float),
        np.ascontiguousarray(h_prev, dtype=float),
    )


def forward_window(net: GruNetwork, window) -> np.ndarray:
    """Prediction (network units) for one (w, input_dim) window, zero initial state."""
    return kernels.gru_forward_window(np.ascontiguousarray(window, dtype=float), *net.packed())


def predict_next(net: GruNetwork, window, packed=None) -> np.ndarray:
    """One-step-ahead prediction in physical units from a physical window."""
    x = np.ascontiguousarray(net.normalize(window))
    y = kernels.gru_forward_window(x, *(packed or net.packed()))
    return net.denormalize(y)


def predict_series(net: GruNetwork, seed_window, horizon_steps: int, dt: float = 1.0,
                   t0: float = 0.0, kind: str = "virtual") -> DisturbanceSeries:
    """Autoregressive rollout of ``horizon_steps`` predictions after ``seed_window``."""
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")
    seed = np.ascontiguousarray(net.normalize(seed_window))
    out = kernels.gru_rollout(seed, int(horizon_steps), *net.packed())
    return DisturbanceSeries(net.denormalize(out), dt, t0, kind)


# -- batched forward / backward ------------------------------------------------

def forward_batch(net: GruNetwork, X):
    """Forward a batch of windows X (B, w, input_dim); returns (Y, cache)."""
    seq = np.asarray(X, dtype=float)
    batch, steps, _ = seq.shape
    caches = []
    for layer in net.layers:
        n = layer.hidden
        xu = seq @ layer.wu.T + layer.b
        h = np.zeros((batch, n))
        h_prev = np.empty((batch, steps, n))
        zs = np.empty_like(h_prev)
        rs = np.empty_like(h_prev)
        cs = np.empty_like(h_prev)
        outs = np.empty_like(h_prev)
        w_zr, w_c = layer.wh[:2 * n], layer.wh[2 * n:]
        for t in range(steps):
            hz = h @ w_zr.T
            z = expit(xu[:, t, :n] + hz[:, :n])
            r = expit(xu[:, t, n:2 * n] + hz[:, n:])
            c = np.tanh(xu[:, t, 2 * n:] + (r * h) @ w_c.T)
            h_prev[:, t], zs[:, t], rs[:, t], cs[:, t] = h, z, r, c
            h = (1.0 - z) * h + z * c
            outs[:, t] = h
        caches.append((seq, h_prev, zs, rs, cs))
        seq = outs
    top = seq[:, -1]
    return top @ net.w_out.T + net.b_out, (caches, top)


def backward_batch(net: GruNetwork, cache, dY):
    """Gradients of sum(dY * Y) w.r.t. every parameter, ordered as ``net.params()``."""
    caches, top = cache
    grads_head = [dY.T @ top, dY.sum(axis=0)]
    d_seq = None
    layer_grads = []
    for li in range(net.num_layers - 1, -1, -1):
        layer = net.layers[li]
        seq_in, h_prev, zs, rs, cs = caches[li]
        batch, steps, n = h_prev.shape
        w_zr, w_c = layer.wh[:2 * n], layer.wh[2 * n:]
        if d_seq is None:
            d_seq = np.zeros((batch, steps, n))
            d_seq[:, -1] = dY @ net.w_out
        g_wh = np.zeros_like(layer.wh)
        d_pre = np.empty((batch, steps, 3 * n))
        dh = np.zeros((batch, n))
        for t in range(steps - 1, -1, -1):
            hp, z, r, c = h_prev[:, t], zs[:, t], rs[:, t], cs[:, t]
            dh_t = dh + d_seq[:, t]
            da_c = dh_t * z * (1.0 - c * c)
            d_rh = da_c @ w_c
            da_z = dh_t * (c - hp) * z * (1.0 - z)
            da_r = d_rh * hp * r * (1.0 - r)
            da_zr = np.concatenate([da_z, da_r], axis=1)
            g_wh[2 * n:] += da_c.T @ (r * hp)
            g_wh[:2 * n] += da_zr.T @ hp
            dh = dh_t * (1.0 - z) + d_rh * r + da_zr @ w_zr
            d_pre[:, t, :2 * n] = da_zr
            d_pre[:, t, 2 * n:] = da_c
        flat = d_pre.reshape(-1, 3 * n)
        g_wu = flat.T @ seq_in.reshape(-1, seq_in.shape[2])
        g_b = flat.sum(axis=0)
        layer_grads.append([g_wu, g_wh, g_b])
        d_seq = d_pre @ layer.wu
    grads = []
    for g in reversed(layer_grads):
        grads += g
    return grads + grads_head


def huber_loss(y, y_hat, delta: float = 1.0) -> float:
    """Huber loss summed over all components."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    a = np.abs(np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float))
    quad = a <= delta
    return float(np.where(quad, 0.5 * a * a, delta * (a - 0.5 * delta)).sum())


def huber_grad(y, y_hat, delta: float = 1.0) -> np.ndarray:
    """d huber_loss / d y_hat."""
    return np.clip(np.asarray(y_hat, dtype=float) - np.asarray(y, dtype=float), -delta, delta)


def backward(net: GruNetwork, X, targets, delta: float = 1.0):
    """Summed Huber loss over the batch and its gradient for every parameter."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    Y, cache = forward_batch(net, X)
    loss = huber_loss(targets, Y, delta)
    return loss, backward_batch(net, cache, huber_grad(targets, Y, delta))


# -- optimizer -------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr=0.005, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# -- training ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    num_layers: int = 3
    hidden: int = 128
    learning_rate: float = 0.005
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 50
    window: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    huber_delta: float = 1.0
    restarts: int = 5
    # 1 = one sampled mini-batch per epoch; 0 = full pass over the windows.
    batches_per_epoch: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("num_layers", "hidden", "batch_size", "max_epochs", "patience",
                     "window", "restarts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("learning_rate", "adam_eps", "huber_delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be < max_epochs")
        if self.batches_per_epoch < 0:
            raise ValueError("batches_per_epoch must be >= 0")


class EarlyStopping:
    """Stop once the best loss has not improved for more than ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.counter = 0

    def update(self, loss: float) -> bool:
        if loss < self.best:
            self.best = loss
            self.counter = 0
        else:
            self.counter += 1
        return self.counter > self.patience


@dataclass
class RestartLog:
    restart: int
    epoch_losses: list
    final_loss: float
    wall_time: float


@dataclass
class TrainingLog:
    restarts: list = field(default_factory=list)
    selected: int = 0
    wall_time: float = 0.0

    @property
    def best(self) -> RestartLog:
        return self.restarts[self.selected]

    @property
    def epoch_losses(self):
        return self.best.epoch_losses

    @property
    def epochs_run(self) -> int:
        return len(self.best.epoch_losses)

    @property
    def final_loss(self) -> float:
        return self.best.final_loss


def make_windows(samples, window: int):
    """Sliding windows X[i] = samples[i:i+w] with targets Y[i] = samples[i+w]."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0] - window
    if n < 1:
        raise InsufficientData(f"need at least {window + 1} samples, got {samples.shape[0]}")
    idx = np.arange(window)[None, :] + np.arange(n)[:, None]
    return samples[idx], samples[window:]


def normalization_stats(samples):
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    std = samples.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def dataset_loss(net: GruNetwork, X, Y, delta: float, chunk: int = 2048) -> float:
    """Mean per-window Huber loss over a whole dataset."""
    total = 0.0
    for i in range(0, X.shape[0], chunk):
        pred, _ = forward_batch(net, X[i:i + chunk])
        total += huber_loss(Y[i:i + chunk], pred, delta)
    return total / X.shape[0]


def train_once(X, Y, cfg: TrainConfig, restart: int, mean, scale) -> tuple:
    t_start = time.perf_counter()
    init_rng = seeding.stream(cfg.seed, f"init/{restart}")
    shuffle_rng = seeding.stream(cfg.seed, f"shuffle/{restart}")
    net = init_network(X.shape[2], cfg.hidden, cfg.num_layers, Y.shape[1], init_rng)
    net.mean, net.scale = mean.copy(), scale.copy()
    params = net.params()
    adam = AdamState.zeros_like(params)
    stopper = EarlyStopping(cfg.patience)
    n = X.shape[0]
    size = min(cfg.batch_size, n)
    per_epoch = cfg.batches_per_epoch or math.ceil(n / size)
    order = shuffle_rng.permutation(n)
    pos = 0
    losses = []
    for _ in range(cfg.max_epochs):
        total = 0.0
        for _ in range(per_epoch):
            if pos >= n or (cfg.batches_per_epoch and pos + size > n):
                order = shuffle_rng.permutation(n)
                pos = 0
            idx = order[pos:pos + size]
            pos += size
            loss, grads = backward(net, X[idx], Y[idx], cfg.huber_delta)
            adam_step(params, grads, adam, cfg.learning_rate, cfg.adam_beta1,
                      cfg.adam_beta2, cfg.adam_eps)
            total += loss
        losses.append(total)
        if not math.isfinite(total) or stopper.update(total):
            break
    final = dataset_loss(net, X, Y, cfg.huber_delta) if math.isfinite(losses[-1]) else math.nan
    return net, RestartLog(restart, losses, final, time.perf_counter() - t_start)


def train(series, cfg: TrainConfig = TrainConfig()):
    """Fit a GRU forecaster to one series; returns (network, TrainingLog).

    The series is z-scored per axis (statistics stored on the network), cut
    into sliding windows, and trained ``cfg.restarts`` times from independent
    initializations. The restart with the lowest final full-data loss wins.
    """
    samples = series.samples if isinstance(series, DisturbanceSeries) else np.asarray(series, dtype=float)
    if samples.shape[0] < cfg.window + 1:
        raise InsufficientData(f"need at least {cfg.window + 1} samples, got {samples.shape[0]}")
    t_start = time.perf_counter()
    mean, scale = normalization_stats(samples)
    X, Y = make_windows((samples - mean) / scale, cfg.window)
    log = TrainingLog()
    best_net, best_loss = None, math.inf
    for restart in range(cfg.restarts):
        net, rlog = train_once(X, Y, cfg, restart, mean, scale)
        log.restarts.append(rlog)
        if best_net is None or rlog.final_loss < best_loss:
            best_net, best_loss, log.selected = net, rlog.final_loss, restart
    log.wall_time = time.perf_counter() - t_start
    return best_net, log


# -- serialization -------------------------------------------------------------------

MAGIC = b"GRUNET\x00\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIII")


def model_to_bytes(net: GruNetwork) -> bytes:
    """Little-endian binary: header, normalization stats, row-major float64 tensors."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, net.num_layers, net.input_dim,
                          net.hidden, net.output_dim)
    body = [np.asarray(net.mean, "<f8"), np.asarray(net.scale, "<f8")]
    body += [np.ascontiguousarray(p, dtype="<f8") for p in net.params()]
    return header + b"".join(a.tobytes() for a in body)


def model_from_bytes(data: bytes) -> GruNetwork:
    if len(data) < _HEADER.size:
        raise ModelFormatError("truncated model header")
    magic, version, num_layers, input_dim, hidden, output_dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError("not a GRU model file")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    shapes = [(output_dim,), (output_dim,)]
    for i in range(num_layers):
        n_in = input_dim if i == 0 else hidden
        shapes += [(3 * hidden, n_in), (3 * hidden, hidden), (3 * hidden,)]
    shapes += [(output_dim, hidden), (output_dim,)]
    expected = _HEADER.size + 8 * sum(math.prod(s) for s in shapes)
    if len(data) != expected:
        raise ModelFormatError(f"model file has {len(data)} bytes, expected {expected}")
    arrays, offset = [], _HEADER.size
    for shape in shapes:
        count = math.prod(shape)
        arrays.append(np.frombuffer(data, "<f8", count, offset).reshape(shape).astype(float))
        offset += 8 * count
    mean, scale, rest = arrays[0], arrays[1], arrays[2:]
    layers = [GruLayerParams(*rest[3 * i:3 * i + 3]) for i in range(num_layers)]
    return GruNetwork(layers, rest[-2], rest[-1], mean, scale)


def save_model(net: GruNetwork, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(net))


def load_model(path) -> GruNetwork:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
