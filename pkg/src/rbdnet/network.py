"""From-scratch residual MLP: forward pass, dropout, losses, backprop.

Architecture: affine input layer + ReLU, K residual blocks
(y = x + W2·relu(W1·x + b1) + b2, inverted dropout on each block's ReLU
output in training mode), affine output layer. The feedforward variant is
the same stack with the skip connections removed. All math is float64
numpy; gradients are exact (checked against central finite differences).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ARCHITECTURES = ("residual", "feedforward")


@dataclass
class NetworkConfig:
    input_dim: int = 100
    hidden_dim: int = 256
    num_blocks: int = 4
    output_dim: int = 65
    architecture: str = "residual"
    dropout_rate: float = 0.2
    init_seed: int = 0
    predict_delta: bool = False  # train on state deltas instead of next states

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) <= 0:
            raise ValueError("network dimensions must be positive")
        if not 0 <= self.num_blocks <= 16:
            raise ValueError("num_blocks must be in [0, 16]")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")


@dataclass
class BlockParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class NetworkParameters:
    config: NetworkConfig
    in_w: np.ndarray
    in_b: np.ndarray
    blocks: list[BlockParams]
    out_w: np.ndarray
    out_b: np.ndarray

    def items(self):
        """(name, array) pairs in the serialization order."""
        yield "in_w", self.in_w
        yield "in_b", self.in_b
        for k, blk in enumerate(self.blocks):
            yield f"block{k}.w1", blk.w1
            yield f"block{k}.b1", blk.b1
            yield f"block{k}.w2", blk.w2
            yield f"block{k}.b2", blk.b2
        yield "out_w", self.out_w
        yield "out_b", self.out_b

    def weight_names(self):
        """Names of weight matrices (L2-regularized; biases are not)."""
        return {name for name, a in self.items() if a.ndim == 2}

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            self.config, self.in_w.copy(), self.in_b.copy(),
            [BlockParams(b.w1.copy(), b.b1.copy(), b.w2.copy(), b.b2.copy())
             for b in self.blocks],
            self.out_w.copy(), self.out_b.copy())


def init_network(cfg: NetworkConfig, seed: int | None = None) -> NetworkParameters:
    """He-style init: weights ~ Normal(0, 2/fan_in), biases zero."""
    rng = np.random.Generator(np.random.PCG64(cfg.init_seed if seed is None else seed))

    def w(rows, cols):
        return rng.normal(0.0, np.sqrt(2.0 / cols), size=(rows, cols))

    h, d, o = cfg.hidden_dim, cfg.input_dim, cfg.output_dim
    blocks = [BlockParams(w(h, h), np.zeros(h), w(h, h), np.zeros(h))
              for _ in range(cfg.num_blocks)]
    return NetworkParameters(cfg, w(h, d), np.zeros(h), blocks, w(o, h), np.zeros(o))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def dropout(x: np.ndarray, rate: float, train: bool,
            seed: int = 0, mask: np.ndarray | None = None) -> np.ndarray:
    """Inverted dropout: zero units with probability `rate`, scale survivors.

    Eval mode (train=False) is the identity. `mask` (0/1 keep indicators)
    overrides random sampling; otherwise the mask is drawn from `seed`.
    """
    x = np.asarray(x, dtype=np.float64)
    if not train or rate == 0.0:
        return x.copy()
    if mask is None:
        rng = np.random.Generator(np.random.PCG64(seed))
        mask = (rng.random(x.shape) >= rate).astype(np.float64)
    return x * mask / (1.0 - rate)


def sample_dropout_masks(cfg: NetworkConfig, batch: int, rng) -> list[np.ndarray]:
    """Pre-scaled keep masks (0 or 1/(1-rate)), one per block, fixed order."""
    scale = 1.0 / (1.0 - cfg.dropout_rate)
    return [(rng.random((batch, cfg.hidden_dim)) >= cfg.dropout_rate) * scale
            for _ in range(cfg.num_blocks)]


def forward(params: NetworkParameters, x: np.ndarray, train: bool = False,
            rng=None, dropout_masks: list[np.ndarray] | None = None):
    """Batched forward pass. Returns (outputs, cache-for-backward).

    Training mode applies dropout to each block's ReLU output; masks come
    from `dropout_masks` if given, else are sampled from `rng`.
    """
    cfg = params.config
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    use_dropout = train and cfg.dropout_rate > 0.0
    if use_dropout and dropout_masks is None:
        if rng is None:
            raise ValueError("training forward with dropout needs rng or masks")
        dropout_masks = sample_dropout_masks(cfg, x2.shape[0], rng)
    z0 = x2 @ params.in_w.T + params.in_b
    a = relu(z0)
    residual = cfg.architecture == "residual"
    block_cache = []
    for k, blk in enumerate(params.blocks):
        z1 = a @ blk.w1.T + blk.b1
        hidden = relu(z1)
        mask = dropout_masks[k] if use_dropout else None
        h_drop = hidden * mask if mask is not None else hidden
        f = h_drop @ blk.w2.T + blk.b2
        a_next = a + f if residual else f
        block_cache.append((a, z1, h_drop, mask))
        a = a_next
    y = a @ params.out_w.T + params.out_b
    cache = (x2, z0, block_cache, a)
    return y.reshape(np.shape(x)[:-1] + (cfg.output_dim,)), cache


def network_forward(params: NetworkParameters, x: np.ndarray,
                    mode: str = "eval", dropout_seed: int = 0) -> np.ndarray:
    """Seed-based forward: eval mode deterministic, train mode seeded."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    train = mode == "train"
    rng = np.random.Generator(np.random.PCG64(dropout_seed)) if train else None
    y, _ = forward(params, x, train=train, rng=rng)
    return y


def loss_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean over the batch of squared error summed over unmasked features."""
    p = np.atleast_2d(pred)
    t = np.atleast_2d(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.shape[0] == 0:
        raise ValueError("empty batch")
    sq = (p - t) ** 2
    if mask is not None:
        sq = sq * np.atleast_2d(mask)
    return float(sq.sum() / p.shape[0])


def l2_penalty(params: NetworkParameters) -> float:
    """Sum of squared entries over weight matrices (biases excluded)."""
    return float(sum((a * a).sum() for _, a in params.items() if a.ndim == 2))


def regularized_loss(data_loss: float, params: NetworkParameters, l2: float) -> float:
    if l2 < 0.0:
        raise ValueError("l2 coefficient must be nonnegative")
    return data_loss + l2 * l2_penalty(params)


def backward(params: NetworkParameters, cache, pred: np.ndarray,
             target: np.ndarray, mask: np.ndarray | None, l2: float = 0.0):
    """Exact gradients of the regularized batch loss w.r.t. all parameters.

    Returns a dict keyed like ``params.items()``.
    """
    cfg = params.config
    x2, z0, block_cache, a_last = cache
    batch = x2.shape[0]
    p = np.atleast_2d(pred)
    t = np.atleast_2d(target)
    d_y = 2.0 * (p - t) / batch
    if mask is not None:
        d_y = d_y * np.atleast_2d(mask)
    grads: dict[str, np.ndarray] = {}
    grads["out_w"] = d_y.T @ a_last + 2.0 * l2 * params.out_w
    grads["out_b"] = d_y.sum(axis=0)
    d_a = d_y @ params.out_w
    residual = cfg.architecture == "residual"
    for k in range(len(params.blocks) - 1, -1, -1):
        blk = params.blocks[k]
        a_in, z1, h_drop, drop_mask = block_cache[k]
        d_f = d_a
        grads[f"block{k}.w2"] = d_f.T @ h_drop + 2.0 * l2 * blk.w2
        grads[f"block{k}.b2"] = d_f.sum(axis=0)
        d_h = d_f @ blk.w2
        if drop_mask is not None:
            d_h = d_h * drop_mask
        d_z1 = d_h * (z1 > 0.0)
        grads[f"block{k}.w1"] = d_z1.T @ a_in + 2.0 * l2 * blk.w1
        grads[f"block{k}.b1"] = d_z1.sum(axis=0)
        d_a_in = d_z1 @ blk.w1
        d_a = d_a_in + d_f if residual else d_a_in
    d_z0 = d_a * (z0 > 0.0)
    grads["in_w"] = d_z0.T @ x2 + 2.0 * l2 * params.in_w
    grads["in_b"] = d_z0.sum(axis=0)
    return grads


def residual_block_forward(x: np.ndarray, block: BlockParams, train: bool = False,
                           dropout_rate: float = 0.0,
                           mask: np.ndarray | None = None) -> np.ndarray:
    """One block on its own: y = x + W2·dropout(relu(W1·x + b1)) + b2."""
    x = np.asarray(x, dtype=np.float64)
    hidden = relu(x @ block.w1.T + block.b1)
    hidden = dropout(hidden, dropout_rate, train, mask=mask)
    return x + hidden @ block.w2.T + block.b2
