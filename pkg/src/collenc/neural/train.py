"""Adam trainer with a per-epoch loss curve and strict determinism.

A fixed seed fixes the shuffle order, the reparameterization noise, and
therefore every parameter update; two runs produce bit-identical curves.
The optional data-parallel mode (grad_workers > 1) splits batches into
shards whose gradients are mathematically exact partial sums, so results
agree with the serial path up to floating-point summation order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .vae import VaeModel


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    beta: float | None = None  # None: use the model's beta_norm
    seed: int = 0
    lr_decay: float = 1.0  # per-epoch multiplier
    sample: bool = True  # False: train with z = mu (no noise)
    grad_workers: int = 1

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must be in (0, 1]")
        if self.grad_workers < 1:
            raise ValueError("grad_workers must be >= 1")


class Adam:
    """Bias-corrected Adam; state keyed like the parameter dict."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict, lr=None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            m = self.m.get(key)
            if m is None:
                m = np.zeros_like(g)
                self.m[key] = m
                self.v[key] = np.zeros_like(g)
            v = self.v[key]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            params[key] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _batch_grads(model, xb, tb, mb, beta, eps, workers):
    n_valid = int(np.count_nonzero(mb))
    n = xb.shape[0]
    if workers <= 1 or n < 2 * workers:
        return model.loss_and_grads(xb, tb, mb, beta, eps,
                                    recon_denom=n_valid, batch_denom=n)
    shards = np.array_split(np.arange(n), workers)
    shards = [s for s in shards if len(s)]

    def run(idx):
        e = None if eps is None else eps[idx]
        return model.loss_and_grads(xb[idx], tb[idx], mb[idx], beta, e,
                                    recon_denom=n_valid, batch_denom=n)

    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        results = list(pool.map(run, shards))
    parts = {k: sum(p[k] for p, _ in results) for k in ("total", "recon", "kl")}
    grads = {}
    for _, g in results:
        for key, val in g.items():
            if key in grads:
                grads[key] = grads[key] + val
            else:
                grads[key] = val
    return parts, grads


def train(model: VaeModel, inputs, targets, masks, config: TrainConfig):
    """Optimize in place; returns the per-epoch loss curve.

    inputs/targets are normalized (N,1,H,W) batches; masks flag the
    pixels that count toward the reconstruction term. The curve is a
    list of dicts with keys total/recon/kl, one entry per epoch (a pass
    over the shuffled dataset), averaged over that epoch's steps.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    if inputs.shape != targets.shape or inputs.shape != masks.shape:
        raise ValueError("inputs, targets and masks must share a shape")
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")

    beta = model.config.beta_norm if config.beta is None else config.beta
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=config.seed,
                                                spawn_key=(11,)))
    )
    opt = Adam(lr=config.lr)
    lr = config.lr
    history = []
    epoch_parts = []
    order = None
    cursor = 0

    for step in range(config.steps):
        if order is None:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size
        xb, tb, mb = inputs[idx], targets[idx], masks[idx]
        eps = None
        if config.sample:
            eps = rng.standard_normal((len(idx), model.config.latent_dim))
        parts, grads = _batch_grads(model, xb, tb, mb, beta, eps,
                                    config.grad_workers)
        if not np.isfinite(parts["total"]):
            raise TrainingDiverged(
                f"non-finite loss at step {step}: {parts}"
            )
        opt.step(model.params, grads, lr=lr)
        epoch_parts.append(parts)
        if cursor >= n:
            history.append({
                k: float(np.mean([p[k] for p in epoch_parts]))
                for k in ("total", "recon", "kl")
            })
            epoch_parts = []
            order = None
            lr *= config.lr_decay
    if epoch_parts:
        history.append({
            k: float(np.mean([p[k] for p in epoch_parts]))
            for k in ("total", "recon", "kl")
        })
    return history


def window_means(curve, key="total", window=10):
    """Means of consecutive windows of the loss curve (trailing partial
    window dropped); the overfit sanity check asserts these decrease."""
    vals = [entry[key] for entry in curve]
    n = len(vals) // window
    return [float(np.mean(vals[i * window : (i + 1) * window])) for i in range(n)]
