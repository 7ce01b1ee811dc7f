"""Gaussian diffusion machinery: variance schedule, forward corruption, reverse
samplers, one-shot recovery, and two noise predictors (a closed-form Gaussian
oracle and a small trained MLP).

Conventions
-----------
Steps are 1-indexed: the schedule holds beta_1..beta_T, and ``alpha_bar_at(0)``
is defined as 1 (an uncorrupted signal).  The forward corruption to step t is

    x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps,    eps ~ N(0, I),

which is a Gaussian channel with signal-to-noise ratio abar_t / (1 - abar_t).
All samplers operate elementwise on arrays of any shape; noise predictors see
the trailing axis as the data dimension and broadcast over leading axes.

Every stochastic operation takes an explicit ``numpy.random.Generator``;
identical seeds reproduce runs bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import _nn

__all__ = [
    "Schedule",
    "make_linear_schedule",
    "default_schedule",
    "DEFAULT_T",
    "DEFAULT_BETA_START",
    "DEFAULT_BETA_END",
    "Denoiser",
    "GaussianOracleDenoiser",
    "MlpDenoiser",
    "MlpTrainConfig",
    "TrainReport",
    "diffuse",
    "one_shot_recover",
    "reverse_ancestral",
    "reverse_skip",
    "train_mlp_denoiser",
]

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class Schedule:
    """Variance schedule triple (beta_t, alpha_t, abar_t) for t = 1..T."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        if self.T < 1 or len(self.beta) != self.T:
            raise ValueError("schedule length does not match T")
        if not (np.all(self.beta > 0.0) and np.all(self.beta < 1.0)):
            raise ValueError("beta values must lie in (0, 1)")
        if self.alpha_bar[-1] <= 0.0:
            raise ValueError("alpha_bar underflowed to zero at t = T")
        if self.T > 1 and not np.all(np.diff(self.alpha_bar) < 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")

    def _check_step(self, t: int, low: int) -> int:
        t = int(t)
        if not low <= t <= self.T:
            raise ValueError(f"step {t} outside [{low}, {self.T}]")
        return t

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check_step(t, 1) - 1])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._check_step(t, 1) - 1])

    def alpha_bar_at(self, t: int) -> float:
        """abar_t with the convention abar_0 = 1."""
        t = self._check_step(t, 0)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> Schedule:
    """Schedule with beta linearly interpolated from ``beta_start`` to ``beta_end``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    return Schedule(T=T, beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def default_schedule() -> Schedule:
    """The default schedule: T = 1000, beta linear from 1e-4 to 0.02."""
    return make_linear_schedule(DEFAULT_T, DEFAULT_BETA_START, DEFAULT_BETA_END)


class Denoiser(Protocol):
    """Anything that predicts the injected standard-normal noise from (x_t, t)."""

    def predict_eps(self, x_t: np.ndarray, t: int) -> np.ndarray: ...


def diffuse(
    x0: np.ndarray, t: int, schedule: Schedule, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt ``x0`` to step ``t``; returns ``(x_t, eps0)`` with the drawn noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    ab = schedule.alpha_bar_at(schedule._check_step(t, 1))
    eps0 = rng.standard_normal(x0.shape)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps0, eps0


def one_shot_recover(
    x_t: np.ndarray, t: int, denoiser: Denoiser, schedule: Schedule
) -> np.ndarray:
    """Direct estimate of the clean signal from a single noisy state.

    Inverts the forward corruption using the predicted noise:
    x0_hat = x_t / sqrt(abar_t) - sqrt(1 - abar_t) / sqrt(abar_t) * eps_hat.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    ab = schedule.alpha_bar_at(schedule._check_step(t, 1))
    eps_hat = denoiser.predict_eps(x_t, t)
    return x_t / math.sqrt(ab) - math.sqrt((1.0 - ab) / ab) * eps_hat


def reverse_ancestral(
    x_t: np.ndarray,
    t: int,
    denoiser: Denoiser,
    schedule: Schedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Ancestral reverse chain from step ``t`` down to 0.

    Each step takes the posterior mean implied by the predicted noise and adds
    Gaussian noise with the posterior standard deviation
    sigma_s = sqrt(beta_s * (1 - abar_{s-1}) / (1 - abar_s));
    the final step (s = 1) adds no noise, so t = 1 is deterministic.
    """
    x = np.asarray(x_t, dtype=np.float64)
    schedule._check_step(t, 1)
    for s in range(t, 0, -1):
        beta = schedule.beta_at(s)
        alpha = schedule.alpha_at(s)
        ab_s = schedule.alpha_bar_at(s)
        eps_hat = denoiser.predict_eps(x, s)
        x = (x - beta / math.sqrt(1.0 - ab_s) * eps_hat) / math.sqrt(alpha)
        if s > 1:
            ab_prev = schedule.alpha_bar_at(s - 1)
            sigma = math.sqrt(beta * (1.0 - ab_prev) / (1.0 - ab_s))
            x = x + sigma * rng.standard_normal(x.shape)
    return x


def reverse_skip(
    x_t: np.ndarray, t: int, k: int, denoiser: Denoiser, schedule: Schedule
) -> np.ndarray:
    """Deterministic reverse sampler jumping ``k`` steps per noise prediction.

    Each jump maps the state at step s to the estimated state at step s - k via

        x_{s-k} = sqrt(abar_{s-k}/abar_s) * x_s
                + sqrt(abar_{s-k}) * (sqrt((1-abar_{s-k})/abar_{s-k})
                                      - sqrt((1-abar_s)/abar_s)) * eps_hat(x_s, s),

    with a shorter final jump when k does not divide s.  A single jump with
    k = t reduces to :func:`one_shot_recover` (abar_0 = 1).
    """
    if k < 1:
        raise ValueError("skip size k must be >= 1")
    x = np.asarray(x_t, dtype=np.float64)
    s = schedule._check_step(t, 1)
    while s > 0:
        target = max(s - k, 0)
        ab_s = schedule.alpha_bar_at(s)
        ab_g = schedule.alpha_bar_at(target)
        eps_hat = denoiser.predict_eps(x, s)
        coef = math.sqrt((1.0 - ab_g) / ab_g) - math.sqrt((1.0 - ab_s) / ab_s)
        x = math.sqrt(ab_g / ab_s) * x + math.sqrt(ab_g) * coef * eps_hat
        s = target
    return x


class GaussianOracleDenoiser:
    """Exact conditional-mean noise predictor for Gaussian data N(mu0, Sigma0).

    Derivation (joint Gaussian conditioning): with x_t = sqrt(ab) x0
    + sqrt(1-ab) eps and x0 ~ N(mu0, Sigma0) independent of eps ~ N(0, I),
    the pair (eps, x_t) is jointly Gaussian with Cov(x_t) = ab Sigma0
    + (1-ab) I and Cov(eps, x_t) = sqrt(1-ab) I, so

        E[eps | x_t] = sqrt(1-ab) (ab Sigma0 + (1-ab) I)^{-1} (x_t - sqrt(ab) mu0).

    Plugging this into the one-shot recovery yields exactly E[x0 | x_t], the
    minimum-mean-square-error estimate of the clean signal.  The covariance is
    eigendecomposed once at construction, so each prediction is two small
    matrix products.
    """

    def __init__(self, mean, cov, schedule: Schedule):
        self.schedule = schedule
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        if self.mean.ndim != 1:
            raise ValueError("mean must be a vector")
        d = self.mean.shape[0]
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = np.full(d, float(cov))
        if cov.ndim == 1:
            if cov.shape[0] != d or np.any(cov < 0.0):
                raise ValueError("diagonal covariance must be length-d and nonnegative")
            self._eigvals = cov.copy()
            self._eigvecs = None
        elif cov.ndim == 2:
            if cov.shape != (d, d):
                raise ValueError("covariance must be d x d")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
            vals, vecs = np.linalg.eigh(cov)
            if np.any(vals < -1e-10):
                raise ValueError("covariance must be positive semi-definite")
            self._eigvals = np.clip(vals, 0.0, None)
            self._eigvecs = vecs
        else:
            raise ValueError("covariance must be scalar, diagonal, or a matrix")
        self.dim = d

    def predict_eps(self, x_t: np.ndarray, t: int) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape[-1] != self.dim:
            raise ValueError(f"trailing axis {x_t.shape[-1]} != data dimension {self.dim}")
        ab = self.schedule.alpha_bar_at(t)
        denom = ab * self._eigvals + (1.0 - ab)  # eigenvalues of Cov(x_t), all > 0 for ab < 1
        centered = x_t - math.sqrt(ab) * self.mean
        if self._eigvecs is None:
            solved = centered / denom
        else:
            solved = ((centered @ self._eigvecs) / denom) @ self._eigvecs.T
        return math.sqrt(1.0 - ab) * solved

    def mmse_per_dim(self, t: int) -> float:
        """Analytic per-dimension posterior MSE of the induced clean-signal estimate.

        tr(Cov(x0 | x_t)) / d = (1/d) sum_i lam_i (1-ab) / (ab lam_i + 1-ab);
        equals (1 - ab) = 1/(1 + snr_t) for unit-variance white data.
        """
        ab = self.schedule.alpha_bar_at(t)
        lam = self._eigvals
        return float(np.mean(lam * (1.0 - ab) / (ab * lam + (1.0 - ab))))


_TIME_FREQS = (1.0, 2.0, 4.0, 8.0)


def _time_features(t_frac: np.ndarray) -> np.ndarray:
    """Scalar t/T plus a 4-frequency sinusoidal embedding -> 9 features."""
    cols = [t_frac]
    for f in _TIME_FREQS:
        cols.append(np.sin(2.0 * math.pi * f * t_frac))
        cols.append(np.cos(2.0 * math.pi * f * t_frac))
    return np.stack(cols, axis=-1)


N_TIME_FEATURES = 1 + 2 * len(_TIME_FREQS)


class MlpDenoiser:
    """Small tanh MLP noise predictor over flattened signals.

    The network input is the noisy signal concatenated with time features for
    t/T; the output is the predicted noise of the same dimension.  Parameters
    are immutable after training; prediction is deterministic.
    """

    def __init__(self, dim: int, hidden: Sequence[int], t_total: int, params: _nn.Params):
        self.dim = int(dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.t_total = int(t_total)
        self.params = params
        for w, b in params:
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")

    @classmethod
    def initialize(cls, dim: int, hidden: Sequence[int], t_total: int, rng: np.random.Generator):
        sizes = [dim + N_TIME_FEATURES, *hidden, dim]
        return cls(dim, hidden, t_total, _nn.init_params(sizes, rng))

    def _features(self, x: np.ndarray, t_arr: np.ndarray) -> np.ndarray:
        return np.concatenate([x, _time_features(t_arr / self.t_total)], axis=-1)

    def _forward_batch(self, x: np.ndarray, t_arr: np.ndarray) -> np.ndarray:
        out, _ = _nn.forward(self.params, self._features(x, t_arr))
        return out

    def predict_eps(self, x_t: np.ndarray, t: int) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape[-1] != self.dim:
            raise ValueError(f"trailing axis {x_t.shape[-1]} != model dimension {self.dim}")
        lead = x_t.shape[:-1]
        flat = x_t.reshape(-1, self.dim)
        t_arr = np.full(flat.shape[0], float(t))
        return self._forward_batch(flat, t_arr).reshape(*lead, self.dim)


@dataclass(frozen=True)
class MlpTrainConfig:
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 0.05
    epochs: int = 40
    batch_size: int = 64
    momentum: float = 0.9
    lr_decay: float = 1.0  # multiplicative per-epoch factor


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch mean batch losses, a held-in final loss estimate, and the
    initialization-time gradient-check residual."""

    epoch_losses: list[float] = field(default_factory=list)
    final_loss: float = float("nan")
    grad_check_rel_err: float = float("nan")


def _denoiser_loss_and_grads(
    model: MlpDenoiser, params: _nn.Params, x0: np.ndarray, t_arr: np.ndarray, eps: np.ndarray,
    schedule: Schedule,
) -> tuple[float, _nn.Params]:
    ab = np.where(t_arr == 0, 1.0, schedule.alpha_bar[np.maximum(t_arr, 1).astype(int) - 1])
    x_t = np.sqrt(ab)[:, None] * x0 + np.sqrt(1.0 - ab)[:, None] * eps
    feats = model._features(x_t, t_arr)
    out, cache = _nn.forward(params, feats)
    resid = out - eps
    loss = float(np.mean(resid**2))
    dout = 2.0 * resid / resid.size
    grads, _ = _nn.backward(params, cache, dout)
    return loss, grads


def train_mlp_denoiser(
    dataset: np.ndarray,
    schedule: Schedule,
    hyperparams: MlpTrainConfig,
    rng: np.random.Generator,
) -> tuple[MlpDenoiser, TrainReport]:
    """Fit the noise predictor by minibatch SGD on the denoising regression loss.

    The loss is E || eps - eps_hat(x_t, t) ||^2 with t drawn uniformly from
    1..T per sample and x_t formed by the forward corruption.  Backpropagation
    is implemented by hand; the report carries a central-finite-difference
    gradient check evaluated at initialization (before any update).
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (n, d) array")
    n, d = data.shape

    model = MlpDenoiser.initialize(d, hyperparams.hidden, schedule.T, rng)

    # Gradient check on a small fixed batch at the initial parameters.
    check_n = min(8, n)
    x0_chk = data[:check_n]
    t_chk = rng.integers(1, schedule.T + 1, size=check_n).astype(float)
    eps_chk = rng.standard_normal((check_n, d))

    def chk_loss(p: _nn.Params) -> float:
        loss, _ = _denoiser_loss_and_grads(model, p, x0_chk, t_chk, eps_chk, schedule)
        return loss

    _, chk_grads = _denoiser_loss_and_grads(model, model.params, x0_chk, t_chk, eps_chk, schedule)
    grad_err = _nn.gradient_check(chk_loss, model.params, chk_grads, rng)

    params = model.params
    velocity = _nn.zero_velocity(params)
    lr = hyperparams.lr
    epoch_losses: list[float] = []
    batch = max(1, min(hyperparams.batch_size, n))
    for _ in range(hyperparams.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            x0 = data[idx]
            t_arr = rng.integers(1, schedule.T + 1, size=len(idx)).astype(float)
            eps = rng.standard_normal((len(idx), d))
            loss, grads = _denoiser_loss_and_grads(model, params, x0, t_arr, eps, schedule)
            if not math.isfinite(loss):
                raise RuntimeError("denoiser training diverged: non-finite loss")
            params, velocity = _nn.sgd_momentum_step(params, grads, velocity, lr, hyperparams.momentum)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
        lr *= hyperparams.lr_decay

    trained = MlpDenoiser(d, hyperparams.hidden, schedule.T, params)
    final = epoch_losses[-1] if epoch_losses else _denoiser_loss_and_grads(
        model, params, x0_chk, t_chk, eps_chk, schedule
    )[0]
    report = TrainReport(epoch_losses=epoch_losses, final_loss=final, grad_check_rel_err=grad_err)
    return trained, report
