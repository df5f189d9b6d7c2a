"""Small 1-D convolutional autoencoder with hand-written backpropagation.

Encoder: conv(k=3) -> dropout(0.1) -> conv(k=3) -> dropout(0.1) -> maxpool(2).
Decoder: nearest-neighbour upsample(2) -> conv(k=3) -> dropout(0.1) -> conv(k=3),
trimmed back to the input length.  All convolutions are zero "same" padded and
linear unless ``relu=True``.  Training minimizes mean absolute error with Adam.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import EmptyGrid, EmptyInput, ShapeMismatch

IN_CHANNELS = 4
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")
CHECKPOINT_FORMAT = "trailmark-ae/1"


@dataclass(frozen=True)
class AEHyper:
    channels: tuple = (4, 4)
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0
    conv_window: int = 3
    dropout_p: float = 0.1
    pool_window: int = 2
    relu: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.conv_window != 3 or self.pool_window != 2 or self.dropout_p != 0.1:
            raise ValueError("conv_window=3, dropout_p=0.1 and pool_window=2 are fixed")
        if len(self.channels) != 2 or min(self.channels) < 1:
            raise ValueError("channels must be two positive widths")
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("learning_rate > 0, epochs >= 0 and batch_size >= 1 required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


def default_grid(seed: int = 0) -> list:
    """c1, c2 in {4, 8}; lr in {1e-2, 1e-3}; epochs in {200, 500}; batch 8."""
    return [
        AEHyper((c1, c2), lr, ep, 8, seed)
        for c1 in (4, 8)
        for c2 in (4, 8)
        for lr in (1e-2, 1e-3)
        for ep in (200, 500)
    ]


def param_shapes(c1: int, c2: int) -> dict:
    return {
        "w1": (c1, IN_CHANNELS, 3), "b1": (c1,),
        "w2": (c2, c1, 3), "b2": (c2,),
        "w3": (c1, c2, 3), "b3": (c1,),
        "w4": (IN_CHANNELS, c1, 3), "b4": (IN_CHANNELS,),
    }


def init_params(c1: int, c2: int, rng: np.random.Generator) -> dict:
    """Kernels uniform in +-sqrt(1/fan_in); biases zero."""
    params = {}
    for name, shape in param_shapes(c1, c2).items():
        if name.startswith("w"):
            bound = math.sqrt(1.0 / (shape[1] * shape[2]))
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def zero_params(c1: int, c2: int) -> dict:
    return {name: np.zeros(shape) for name, shape in param_shapes(c1, c2).items()}


def _channels_of(params):
    return params["w1"].shape[0], params["w2"].shape[0]


def _check_shapes(params, x):
    if x.ndim != 3 or x.shape[1] != IN_CHANNELS:
        raise ShapeMismatch(f"input must be (batch, {IN_CHANNELS}, m); got {x.shape}")
    if x.shape[2] < 2:
        raise ShapeMismatch("series length m must be at least 2")
    c1, c2 = _channels_of(params)
    for name, shape in param_shapes(c1, c2).items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name} has shape {params[name].shape}, expected {shape}")


def dropout_masks(shapes, p: float, rng: np.random.Generator):
    """Inverted-dropout masks: 0 with probability p, else 1/(1-p)."""
    return [(rng.random(s) >= p) / (1.0 - p) for s in shapes]


def _mask_shapes(params, x):
    c1, c2 = _channels_of(params)
    bsz, _, m = x.shape
    up = 2 * ((m + 1) // 2)
    return [(bsz, c1, m), (bsz, c2, m), (bsz, c1, up)]


def _forward(params, x, masks, relu):
    """Forward pass keeping the intermediates needed for backprop."""
    m = x.shape[2]
    cache = {"x": x, "masks": masks, "relu": relu}
    h1 = K.conv1d_forward(x, params["w1"], params["b1"])
    a1 = np.maximum(h1, 0.0) if relu else h1
    d1 = a1 * masks[0] if masks is not None else a1
    h2 = K.conv1d_forward(d1, params["w2"], params["b2"])
    a2 = np.maximum(h2, 0.0) if relu else h2
    d2 = a2 * masks[1] if masks is not None else a2
    z, pool_idx = K.maxpool2_forward(d2)
    u = np.repeat(z, 2, axis=2)
    h3 = K.conv1d_forward(u, params["w3"], params["b3"])
    a3 = np.maximum(h3, 0.0) if relu else h3
    d3 = a3 * masks[2] if masks is not None else a3
    full = K.conv1d_forward(d3, params["w4"], params["b4"])
    cache.update(h1=h1, d1=d1, h2=h2, d2=d2, pool_idx=pool_idx, u=u, h3=h3, d3=d3)
    return z, full[:, :, :m], cache


def forward(params: dict, x, mode: str = "eval", rng: Optional[np.random.Generator] = None,
            relu: bool = False):
    """Run the autoencoder on a batch ``(B, 4, m)`` (or a single ``(4, m)`` sample).

    Returns ``(latent, recon)`` where latent is ``(B, c2, ceil(m/2))``.
    ``mode="train"`` applies dropout with masks drawn from ``rng``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    _check_shapes(params, x)
    masks = None
    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs a seeded generator")
        masks = dropout_masks(_mask_shapes(params, x), 0.1, rng)
    elif mode != "eval":
        raise ValueError(f"unknown mode {mode!r}")
    z, recon, _ = _forward(params, x, masks, relu)
    if single:
        return z[0], recon[0]
    return z, recon


def mae(recon, x) -> float:
    recon = np.asarray(recon, dtype=float)
    x = np.asarray(x, dtype=float)
    if recon.shape != x.shape:
        raise ShapeMismatch(f"{recon.shape} vs {x.shape}")
    return float(np.mean(np.abs(recon - x)))


def loss_and_gradient(params: dict, batch, masks=None, relu: bool = False):
    """Mean absolute error of the batch and its gradient for every parameter.

    ``masks`` are the dropout masks to apply (None = eval mode).  The MAE
    subgradient at zero residual is taken as 0.
    """
    x = np.asarray(batch, dtype=float)
    _check_shapes(params, x)
    m = x.shape[2]
    _, recon, c = _forward(params, x, masks, relu)
    resid = recon - x
    loss = float(np.mean(np.abs(resid)))

    dfull = np.zeros((x.shape[0], IN_CHANNELS, c["d3"].shape[2]))
    dfull[:, :, :m] = np.sign(resid) / resid.size
    grads = {}
    dd3, grads["w4"], grads["b4"] = K.conv1d_backward(c["d3"], params["w4"], dfull)
    dh3 = _through_dropout_relu(dd3, c["h3"], masks, 2, relu)
    du, grads["w3"], grads["b3"] = K.conv1d_backward(c["u"], params["w3"], dh3)
    dz = du[:, :, 0::2] + du[:, :, 1::2]
    dd2 = K.maxpool2_backward(dz, c["pool_idx"], m)
    dh2 = _through_dropout_relu(dd2, c["h2"], masks, 1, relu)
    dd1, grads["w2"], grads["b2"] = K.conv1d_backward(c["d1"], params["w2"], dh2)
    dh1 = _through_dropout_relu(dd1, c["h1"], masks, 0, relu)
    _, grads["w1"], grads["b1"] = K.conv1d_backward(x, params["w1"], dh1)
    return loss, grads


def _through_dropout_relu(grad, pre_activation, masks, which, relu):
    if masks is not None:
        grad = grad * masks[which]
    if relu:
        grad = grad * (pre_activation > 0)
    return grad


def gradient(params: dict, batch, mode: str = "eval", seed: Optional[int] = None,
             relu: bool = False) -> dict:
    """Gradient of the mean batch loss.  In train mode the dropout masks come from ``seed``."""
    batch = np.asarray(batch, dtype=float)
    masks = None
    if mode == "train":
        rng = np.random.default_rng(seed)
        masks = dropout_masks(_mask_shapes(params, batch), 0.1, rng)
    return loss_and_gradient(params, batch, masks, relu)[1]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update; returns new params and a new state."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        mom = b1 * state.m[name] + (1.0 - b1) * g
        vel = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = mom / (1.0 - b1 ** t)
        v_hat = vel / (1.0 - b2 ** t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = mom, vel
    return new_params, AdamState(new_m, new_v, t, b1, b2, state.eps)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def eval_loss(params: dict, data, relu: bool = False, chunk: int = 64) -> float:
    data = np.asarray(data, dtype=float)
    total = 0.0
    for start in range(0, len(data), chunk):
        part = data[start:start + chunk]
        _, recon, _ = _forward(params, part, None, relu)
        total += float(np.abs(recon - part).sum())
    return total / data.size


def train_autoencoder(data, hyper: AEHyper):
    """Mini-batch Adam training.

    Returns ``(params, loss_curve)`` where ``loss_curve[e]`` is the eval-mode
    MAE over all of ``data`` after epoch ``e``.  Shuffling, initialization and
    dropout all draw from one generator seeded by ``hyper.seed``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 3 or len(data) == 0:
        raise EmptyInput("training needs at least one (4, m) sample")
    rng = np.random.default_rng(hyper.seed)
    c1, c2 = hyper.channels
    params = init_params(c1, c2, rng)
    _check_shapes(params, data)
    state = AdamState.fresh(params)
    curve = []
    n = len(data)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = data[order[start:start + hyper.batch_size]]
            masks = dropout_masks(_mask_shapes(params, batch), hyper.dropout_p, rng)
            _, grads = loss_and_gradient(params, batch, masks, hyper.relu)
            params, state = adam_step(params, grads, state, hyper.learning_rate)
        curve.append(eval_loss(params, data, hyper.relu))
    return params, curve


def encode(params: dict, data, relu: bool = False) -> np.ndarray:
    """Eval-mode encoder output, one flattened vector per sample ``(n, c2 * ceil(m/2))``."""
    data = np.asarray(data, dtype=float)
    _check_shapes(params, data)
    z, _, _ = _forward(params, data, None, relu)
    return z.reshape(len(data), -1)


@dataclass(frozen=True)
class GridResult:
    best: AEHyper
    scores: tuple  # (hyper, holdout MAE) in grid order
    train_index: tuple
    holdout_index: tuple


def split_holdout(n: int, holdout_fraction: float, seed: int):
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in (0, 1)")
    if n < 2:
        return (0,), (0,)
    order = np.random.default_rng(seed).permutation(n)
    n_hold = min(n - 1, max(1, int(round(holdout_fraction * n))))
    return tuple(sorted(order[n_hold:].tolist())), tuple(sorted(order[:n_hold].tolist()))


def grid_search_ae(data, grid: Sequence[AEHyper], holdout_fraction: float = 0.2,
                   seed: int = 0, workers: int = 1) -> GridResult:
    """Train each candidate on a seeded train split, score eval MAE on the holdout.

    Candidate ``i`` trains with seed ``seed ^ i`` so results do not depend on
    how candidates are scheduled.  Ties go to the smaller ``c1 + c2``, then the
    lower learning rate, then grid order.
    """
    grid = list(grid)
    if not grid:
        raise EmptyGrid("hyperparameter grid is empty")
    data = np.asarray(data, dtype=float)
    train_idx, hold_idx = split_holdout(len(data), holdout_fraction, seed)
    train, hold = data[list(train_idx)], data[list(hold_idx)]
    candidates = [replace(h, seed=(seed ^ i)) for i, h in enumerate(grid)]

    def score(h):
        params, _ = train_autoencoder(train, h)
        return eval_loss(params, hold, h.relu)

    if workers > 1 and len(candidates) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            maes = list(pool.map(score, candidates))
    else:
        maes = [score(h) for h in candidates]
    ranked = sorted(
        range(len(candidates)),
        key=lambda i: (maes[i], sum(candidates[i].channels), candidates[i].learning_rate, i),
    )
    return GridResult(
        candidates[ranked[0]],
        tuple(zip(candidates, maes)),
        train_idx,
        hold_idx,
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def checkpoint_dict(params: dict, hyper: AEHyper) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "hyper": hyper.to_dict(),
        "seed": hyper.seed,
        "params": {
            name: {"shape": list(params[name].shape), "data": params[name].ravel().tolist()}
            for name in PARAM_NAMES
        },
    }


def save_checkpoint(path, params: dict, hyper: AEHyper) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(params, hyper), fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    return checkpoint_from_dict(doc)


def checkpoint_from_dict(doc: dict):
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not an autoencoder checkpoint: {doc.get('format')!r}")
    hyper = AEHyper(**{**doc["hyper"], "channels": tuple(doc["hyper"]["channels"])})
    params = {
        name: np.array(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    return params, hyper
