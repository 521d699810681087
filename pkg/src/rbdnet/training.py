"""Training loop: Adam, polynomial LR decay, early stopping, model files.

Training is bit-reproducible for fixed seeds: shuffling and dropout use
seeded PCG64 streams, and the linear algebra is pinned to one BLAS thread
so results do not depend on the machine's thread count.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import network
from .errors import BadMagicError, FileFormatError, TrainingDivergedError, UnsupportedVersionError
from .fileio import Reader, Writer, atomic_write
from .network import NetworkConfig, NetworkParameters, forward, loss_mse
from .scenarios import Normalizer

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

EVAL_CHUNK = 4096  # fixed eval batch so reduction order never varies


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr0: float = 1e-3
    lr_gamma: float = 0.1
    lr_power: float = 0.75
    l2: float = 1e-4
    patience: int = 20
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size, and patience must be >= 1")
        if self.lr0 <= 0.0 or self.l2 < 0.0:
            raise ValueError("lr0 must be positive and l2 nonnegative")


def lr_schedule(t: int, lr0: float = 1e-3, gamma: float = 0.1, power: float = 0.75) -> float:
    """Learning rate at epoch t (0-based): lr0·(1+gamma·t)^(-power)."""
    if t < 0:
        raise ValueError("epoch index must be >= 0")
    return lr0 * (1.0 + gamma * t) ** (-power)


def adam_update(value: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                t: int, lr: float, beta1: float = ADAM_BETA1,
                beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
    """One bias-corrected Adam step, in place (value, m, v all updated)."""
    if t < 1:
        raise ValueError("Adam step count starts at 1")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Per-parameter moment state over a NetworkParameters tree."""

    def __init__(self, params: NetworkParameters):
        self.m = {name: np.zeros_like(a) for name, a in params.items()}
        self.v = {name: np.zeros_like(a) for name, a in params.items()}
        self.t = 0

    def step(self, params: NetworkParameters, grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        for name, value in params.items():
            adam_update(value, grads[name], self.m[name], self.v[name], self.t, lr)


@dataclass
class EpochStats:
    epoch: int        # 1-based, for humans; lr used is lr_schedule(epoch-1)
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    params: NetworkParameters
    history: list[EpochStats]
    best_epoch: int
    best_val_loss: float


def eval_loss(params: NetworkParameters, inputs: np.ndarray, targets: np.ndarray,
              masks: np.ndarray | None) -> float:
    """Unregularized masked MSE in eval mode, fixed chunking."""
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty evaluation set")
    total = 0.0
    for start in range(0, n, EVAL_CHUNK):
        sl = slice(start, min(start + EVAL_CHUNK, n))
        pred, _ = forward(params, inputs[sl], train=False)
        sq = (pred - targets[sl]) ** 2
        if masks is not None:
            sq = sq * masks[sl]
        total += float(sq.sum())
    return total / n


def train(params: NetworkParameters,
          train_inputs: np.ndarray, train_targets: np.ndarray, train_masks: np.ndarray,
          val_inputs: np.ndarray, val_targets: np.ndarray, val_masks: np.ndarray,
          cfg: TrainConfig) -> TrainResult:
    """Minibatch Adam with per-epoch LR decay and early stopping.

    Returns the parameters of the best-validation epoch. Raises
    TrainingDivergedError if any batch loss goes non-finite.
    """
    if train_inputs.shape[0] < 1 or val_inputs.shape[0] < 1:
        raise ValueError("train and validation splits must be nonempty")
    rng_shuffle = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([cfg.shuffle_seed, 0x5348])))
    rng_dropout = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([cfg.shuffle_seed, 0x4452])))
    net_cfg = params.config
    optimizer = Adam(params)
    history: list[EpochStats] = []
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    wait = 0
    n = train_inputs.shape[0]
    with threadpool_limits(limits=1):
        for epoch_idx in range(cfg.epochs):
            lr = lr_schedule(epoch_idx, cfg.lr0, cfg.lr_gamma, cfg.lr_power)
            perm = rng_shuffle.permutation(n)
            sse_sum = 0.0
            for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
                idx = perm[start:start + cfg.batch_size]
                xb = train_inputs[idx]
                tb = train_targets[idx]
                mb = train_masks[idx]
                masks = (network.sample_dropout_masks(net_cfg, xb.shape[0], rng_dropout)
                         if net_cfg.dropout_rate > 0.0 else None)
                pred, cache = forward(params, xb, train=True, dropout_masks=masks)
                batch_loss = loss_mse(pred, tb, mb)
                if not np.isfinite(batch_loss):
                    raise TrainingDivergedError(epoch_idx + 1, batch_no)
                grads = network.backward(params, cache, pred, tb, mb, l2=cfg.l2)
                optimizer.step(params, grads, lr)
                sse_sum += batch_loss * xb.shape[0]
            train_loss = sse_sum / n
            val_loss = eval_loss(params, val_inputs, val_targets, val_masks)
            history.append(EpochStats(epoch_idx + 1, train_loss, val_loss, lr))
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
                best_epoch = epoch_idx + 1
                wait = 0
            else:
                wait += 1
                if wait > cfg.patience:
                    break
    return TrainResult(best_params, history, best_epoch, best_val)


def history_csv(history: list[EpochStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss", "lr"])
    for row in history:
        w.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss), repr(row.lr)])
    return buf.getvalue()


def write_history(path, history: list[EpochStats]) -> None:
    data = history_csv(history).encode()
    with atomic_write(path) as f:
        f.write(data)


MODEL_MAGIC = b"RBM1"
MODEL_VERSION = 1

# architecture byte: bit 0 = feedforward, bit 1 = delta-prediction mode
_ARCH_CODES = {("residual", False): 0, ("feedforward", False): 1,
               ("residual", True): 2, ("feedforward", True): 3}
_ARCH_DECODE = {v: k for k, v in _ARCH_CODES.items()}


def write_model(path, params: NetworkParameters, normalizer: Normalizer) -> None:
    cfg = params.config
    w = Writer()
    w.raw(MODEL_MAGIC)
    w.u32(MODEL_VERSION)
    w.u8(_ARCH_CODES[(cfg.architecture, cfg.predict_delta)])
    w.u32(cfg.input_dim)
    w.u32(cfg.hidden_dim)
    w.u32(cfg.num_blocks)
    w.u32(cfg.output_dim)
    w.f64_array(normalizer.input_mean)
    w.f64_array(normalizer.input_std)
    w.f64_array(normalizer.target_mean)
    w.f64_array(normalizer.target_std)
    for _name, a in params.items():
        w.f64_array(a)
    with atomic_write(path) as f:
        f.write(w.getvalue())


def read_model(path):
    """Returns (NetworkParameters, Normalizer)."""
    with open(path, "rb") as f:
        r = Reader(f.read())
    if r.raw(4) != MODEL_MAGIC:
        raise BadMagicError(f"{path}: bad magic, expected {MODEL_MAGIC!r}")
    version = r.u32()
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported model version {version}")
    arch_code = r.u8()
    if arch_code not in _ARCH_DECODE:
        raise FileFormatError(f"{path}: unknown architecture code {arch_code}")
    architecture, predict_delta = _ARCH_DECODE[arch_code]
    input_dim = r.u32()
    hidden = r.u32()
    num_blocks = r.u32()
    output_dim = r.u32()
    cfg = NetworkConfig(input_dim=input_dim, hidden_dim=hidden, num_blocks=num_blocks,
                        output_dim=output_dim, architecture=architecture,
                        predict_delta=predict_delta)
    norm = Normalizer(r.f64_array(input_dim), r.f64_array(input_dim),
                      r.f64_array(output_dim), r.f64_array(output_dim))
    in_w = r.f64_array(hidden * input_dim, (hidden, input_dim))
    in_b = r.f64_array(hidden)
    blocks = []
    for _k in range(num_blocks):
        w1 = r.f64_array(hidden * hidden, (hidden, hidden))
        b1 = r.f64_array(hidden)
        w2 = r.f64_array(hidden * hidden, (hidden, hidden))
        b2 = r.f64_array(hidden)
        blocks.append(network.BlockParams(w1, b1, w2, b2))
    out_w = r.f64_array(output_dim * hidden, (output_dim, hidden))
    out_b = r.f64_array(output_dim)
    if not r.at_end():
        raise FileFormatError(f"{path}: trailing data after payload")
    params = NetworkParameters(cfg, in_w, in_b, blocks, out_w, out_b)
    return params, norm
