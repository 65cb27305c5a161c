"""Dense numeric kernel: activations, binary cross-entropy, dropout, Adam,
and finite-difference gradient checking.

Everything runs in float64. Functions are pure unless the name says
otherwise (`adam_step` updates parameters in place, which is the point).
"""

import numpy as np

from .errors import InvalidArgument, TrainingDivergence

PROB_EPS = 1e-12


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(upstream, preact):
    """Backward of relu; the subgradient at exactly 0 is taken as 0."""
    return np.where(preact > 0.0, upstream, 0.0)


def sigmoid(x):
    """Logistic function, computed from exp(-|x|) so it never overflows."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))


def bce_loss(y_hat, y):
    """Mean binary cross-entropy over the batch.

    Predictions are clamped to [1e-12, 1 - 1e-12]; the loss is undefined at
    exactly 0 or 1.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise InvalidArgument(f"length mismatch: {y_hat.shape} vs {y.shape}")
    p = np.clip(y_hat, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_logit_grad(probs, y):
    """Gradient of mean BCE composed with sigmoid, taken at the logits.

    (p - y) / n is exact for the composite and needs no clamping.
    """
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return (probs - y) / probs.shape[0]


def dropout(x, rate, rng=None, training=False):
    """Inverted dropout. Returns (output, mask); mask is None in eval mode.

    Survivors are scaled by 1/(1-rate) so the expectation is unchanged.
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidArgument(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_grad(upstream, mask, rate):
    if mask is None:
        return upstream
    return upstream * mask / (1.0 - rate)


class AdamState:
    """Per-parameter moment buffers plus the shared step counter."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params, grads, state, lr, weight_decay=0.0):
    """One in-place Adam update with bias correction.

    L2 decay is folded into the gradient (g + wd * p) before the moment
    updates. lr = 0 is allowed and leaves parameters untouched.
    """
    if lr < 0.0:
        raise InvalidArgument(f"learning rate must be >= 0, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidArgument("params, grads, and state must align")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise InvalidArgument(f"shape mismatch: param {p.shape}, grad {g.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence("non-finite gradient in adam_step")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g + weight_decay * p
        m[:] = state.beta1 * m + (1.0 - state.beta1) * g
        v[:] = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def grad_check(f, params, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f(params) -> (scalar, grads)` with grads aligned to `params`. Each
    coordinate is perturbed by +/- h in place and restored. The relative
    error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    _, analytic = f(params)
    worst = 0.0
    for p, g in zip(params, analytic):
        g = np.asarray(g)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            hi = f(params)[0]
            p[idx] = keep - h
            lo = f(params)[0]
            p[idx] = keep
            numeric = (hi - lo) / (2.0 * h)
            denom = max(abs(numeric), abs(g[idx]), 1e-8)
            worst = max(worst, abs(numeric - g[idx]) / denom)
    return worst
