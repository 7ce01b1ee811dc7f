"""Minimal dense-network plumbing shared by the trained denoiser and the toy classifier.

Hand-rolled forward/backward passes for a tanh MLP with a linear head, plus the
pack/unpack helpers used for finite-difference gradient checking.  Kept private:
the public surfaces live in :mod:`lorid.diffusion` and :mod:`lorid.attacks`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Params = list[tuple[np.ndarray, np.ndarray]]  # [(W, b), ...] with W: (fan_in, fan_out)


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> Params:
    """Xavier-scaled Gaussian init for the layer sizes ``[d_in, h1, ..., d_out]``."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    params: Params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        b = np.zeros(fan_out)
        params.append((w, b))
    return params


def forward(params: Params, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the network on a batch ``x`` (n, d_in).

    Hidden layers use tanh, the last layer is linear.  Returns the output and
    the cache of post-activation values needed by :func:`backward`.
    """
    cache = [x]
    h = x
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        z = h @ w + b
        h = z if i == last else np.tanh(z)
        cache.append(h)
    return h, cache


def backward(params: Params, cache: list[np.ndarray], dout: np.ndarray) -> tuple[
    list[tuple[np.ndarray, np.ndarray]], np.ndarray
]:
    """Backpropagate ``dout`` (gradient w.r.t. the network output).

    Returns per-layer ``(dW, db)`` gradients and the gradient w.r.t. the input
    batch.  ``cache`` must come from :func:`forward` on the same batch.
    """
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params)  # type: ignore[list-item]
    delta = dout
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        h_in = cache[i]
        if i != len(params) - 1:
            # undo the tanh: cache[i + 1] holds tanh(z)
            delta = delta * (1.0 - cache[i + 1] ** 2)
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        delta = delta @ w.T
    return grads, delta


def zero_velocity(params: Params) -> Params:
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]


def sgd_momentum_step(
    params: Params,
    grads: Params,
    velocity: Params,
    lr: float,
    momentum: float,
) -> tuple[Params, Params]:
    """One SGD-with-momentum update; returns new (params, velocity)."""
    new_params: Params = []
    new_vel: Params = []
    for (w, b), (dw, db), (vw, vb) in zip(params, grads, velocity):
        vw = momentum * vw - lr * dw
        vb = momentum * vb - lr * db
        new_params.append((w + vw, b + vb))
        new_vel.append((vw, vb))
    return new_params, new_vel


def pack(params: Params) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in params])


def unpack(theta: np.ndarray, like: Params) -> Params:
    out: Params = []
    pos = 0
    for w, b in like:
        nw, nb = w.size, b.size
        out.append((theta[pos : pos + nw].reshape(w.shape), theta[pos + nw : pos + nw + nb].reshape(b.shape)))
        pos += nw + nb
    if pos != theta.size:
        raise ValueError("parameter vector size mismatch")
    return out


def gradient_check(
    loss_fn: Callable[[Params], float],
    params: Params,
    analytic: Params,
    rng: np.random.Generator,
    n_coords: int = 10,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences.

    Probes ``n_coords`` randomly chosen parameter coordinates; the relative
    error for one coordinate is |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-12).
    """
    theta = pack(params)
    grad_flat = pack(analytic)
    idx = rng.choice(theta.size, size=min(n_coords, theta.size), replace=False)
    worst = 0.0
    for i in idx:
        orig = theta[i]
        theta[i] = orig + h
        lp = loss_fn(unpack(theta, params))
        theta[i] = orig - h
        lm = loss_fn(unpack(theta, params))
        theta[i] = orig
        g_fd = (lp - lm) / (2.0 * h)
        g_an = grad_flat[i]
        worst = max(worst, abs(g_an - g_fd) / max(abs(g_an), abs(g_fd), 1e-12))
    return worst
