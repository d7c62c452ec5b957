"""Stochastic variational inference for dyadic-basis models.

The objective per minibatch of size B from a set of N points is

    loss = (1/S) sum_s [ -log p(y_B | f_s) ]  +  beta * (B / N) * KL(q || prior)

so summing over an epoch weights the KL term by beta (linear warm-up to 1
over the first `kl_warmup_frac` of all steps; 0 disables warm-up).  The prior
is N(0, 1) on every weight and bias, giving the closed-form KL

    sum 0.5 * (sigma^2 + mu^2 - 1 - 2 log sigma).

Optimization is Adam with decoupled weight decay on the posterior means only.
All gradients are the analytic ones from `layers.backward`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .layers import Model, sigmoid, softplus, softplus_inv


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 512
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    train_samples: int = 10
    predict_samples: int = 20
    kl_warmup_frac: float = 0.0
    grad_clip: Optional[float] = None
    noise_mode: str = "sample"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> "TrainConfig":
        if self.epochs < 1 or self.batch_size < 1 or self.train_samples < 1:
            raise ValueError("epochs, batch_size and train_samples must be positive")
        if self.predict_samples < 2:
            raise ValueError("predict_samples must be at least 2")
        if not 0.0 <= self.kl_warmup_frac <= 1.0:
            raise ValueError("kl_warmup_frac must lie in [0, 1]")
        if self.noise_mode not in ("sample", "flipout"):
            raise ValueError("noise_mode must be 'sample' or 'flipout'")
        return self


class GaussianLikelihood:
    """Homoskedastic Gaussian observation model with trainable noise.

    The noise variance is softplus(raw_noise), so it stays positive under
    unconstrained updates.
    """

    kind = "gaussian"

    def __init__(self, noise_variance: float = 0.1, trainable: bool = True):
        if noise_variance <= 0:
            raise ValueError("noise_variance must be positive")
        self.raw_noise = np.array([float(softplus_inv(noise_variance))])
        self.trainable = trainable

    @property
    def noise_variance(self) -> float:
        return float(softplus(self.raw_noise[0]))

    def nll_sum(self, y: np.ndarray, f: np.ndarray) -> float:
        v = self.noise_variance
        r = y - f[:, 0]
        return float(np.sum(r * r) / (2.0 * v) + 0.5 * y.size * np.log(2.0 * np.pi * v))

    def grad_f(self, y: np.ndarray, f: np.ndarray) -> np.ndarray:
        return ((f[:, 0] - y) / self.noise_variance)[:, None]

    def grad_raw(self, y: np.ndarray, f: np.ndarray) -> np.ndarray:
        if not self.trainable:
            return np.zeros(1)
        v = self.noise_variance
        r = y - f[:, 0]
        dv = y.size / (2.0 * v) - np.sum(r * r) / (2.0 * v * v)
        return np.array([dv * float(sigmoid(self.raw_noise[0]))])


class CategoricalLikelihood:
    """Softmax observation model over integer class labels."""

    kind = "categorical"

    def __init__(self, n_classes: int, labels: Optional[list] = None):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.n_classes = int(n_classes)
        self.labels = list(labels) if labels is not None else None
        self.trainable = False
        self.raw_noise = np.zeros(0)  # no observation parameters to optimize

    def log_softmax(self, logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))

    def nll_sum(self, y: np.ndarray, f: np.ndarray) -> float:
        lp = self.log_softmax(f)
        return float(-np.sum(lp[np.arange(y.size), y.astype(int)]))

    def grad_f(self, y: np.ndarray, f: np.ndarray) -> np.ndarray:
        p = np.exp(self.log_softmax(f))
        p[np.arange(y.size), y.astype(int)] -= 1.0
        return p

    def grad_raw(self, y, f):
        return np.zeros(0)


def kl_mean_field(model: Model) -> float:
    """KL(q || N(0, I)) over all layer weights and biases."""
    total = 0.0
    for layer in model.layers:
        for mu, rho in (
            (layer.weight_mean, layer.weight_rho),
            (layer.bias_mean, layer.bias_rho),
        ):
            sig = softplus(rho)
            total += 0.5 * float(np.sum(sig * sig + mu * mu - 1.0 - 2.0 * np.log(sig)))
    return total


def _kl_gradients(model: Model) -> dict:
    out = {}
    for i, layer in enumerate(model.layers):
        for name, mu, rho in (
            ("weight", layer.weight_mean, layer.weight_rho),
            ("bias", layer.bias_mean, layer.bias_rho),
        ):
            sig = softplus(rho)
            out[f"layers.{i}.{name}_mean"] = mu.copy()
            out[f"layers.{i}.{name}_rho"] = (sig - 1.0 / sig) * sigmoid(rho)
    return out


@dataclass
class ElboStats:
    loss: float
    nll_sum: float
    kl: float
    beta: float


def elbo_step(model, likelihood, x, y, n_total, beta, config, rng=None, noise=None):
    """One Monte-Carlo ELBO evaluation with gradients.

    Returns (stats, grads) where grads maps parameter names (including
    'likelihood.raw_noise') to arrays.  `noise` fixes the per-sample layer
    noise for deterministic tests: a list of length train_samples, each entry
    a per-layer noise list.
    """
    s_count = config.train_samples
    grads = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    grads["likelihood.raw_noise"] = np.zeros_like(likelihood.raw_noise)
    nll_total = 0.0
    for s in range(s_count):
        sample_noise = noise[s] if noise is not None else None
        f, caches = model.forward(x, mode=config.noise_mode, rng=rng, noise=sample_noise)
        nll_total += likelihood.nll_sum(y, f)
        layer_grads, _ = model.backward(caches, likelihood.grad_f(y, f) / s_count)
        for key, val in model.gradient_dict(layer_grads).items():
            grads[key] += val
        grads["likelihood.raw_noise"] += likelihood.grad_raw(y, f) / s_count
    nll_mean = nll_total / s_count

    kl = kl_mean_field(model)
    scale = beta * (x.shape[0] / n_total)
    if scale != 0.0:
        for key, val in _kl_gradients(model).items():
            grads[key] += scale * val
    loss = nll_mean + scale * kl

    if not np.isfinite(nll_mean):
        raise FloatingPointError(f"ELBO likelihood term is not finite ({nll_mean})")
    if not np.isfinite(kl):
        raise FloatingPointError(f"ELBO KL term is not finite ({kl})")
    return ElboStats(loss=loss, nll_sum=nll_mean, kl=kl, beta=beta), grads


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients to a global L2 norm of at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return float(norm)


class AdamState:
    """Per-parameter first/second moment accumulators with a shared step."""

    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step = 0


def adam_update(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """In-place AdamW step; weight decay hits only *_mean parameters."""
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for key, p in params.items():
        g = grads[key]
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        if config.weight_decay and key.endswith("_mean"):
            update = update + config.weight_decay * p
        p -= config.learning_rate * update


@dataclass
class EpochRow:
    epoch: int
    loss: float
    nll: float
    kl: float
    metric: Optional[float]
    wall_s: float


def train(
    model: Model,
    likelihood,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    holdout: Optional[tuple] = None,
    metric_fn=None,
) -> list[EpochRow]:
    """Minibatch SVI training loop.

    Per-epoch rows report per-datum NLL, the raw KL, loss = nll + beta*KL/N,
    an optional holdout metric (mean-mode predictions through metric_fn), and
    wall seconds.  Shuffling and noise draws come from `rng` alone, so a fixed
    seed fixes the whole trajectory.
    """
    config.validate()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y disagree on the number of rows")
    params = model.parameters()
    params["likelihood.raw_noise"] = likelihood.raw_noise
    state = AdamState(params)
    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size
    warm_steps = int(round(config.kl_warmup_frac * config.epochs * steps_per_epoch))
    history: list[EpochRow] = []
    step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        nll_sum = 0.0
        beta = 1.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            beta = 1.0 if step >= warm_steps else (step + 1) / warm_steps
            try:
                stats, grads = elbo_step(
                    model, likelihood, x[batch], y[batch], n, beta, config, rng=rng
                )
            except FloatingPointError as err:
                raise FloatingPointError(
                    f"training diverged at epoch {epoch}, step {step}: {err}"
                ) from err
            if config.grad_clip is not None:
                clip_gradients(grads, config.grad_clip)
            adam_update(params, grads, state, config)
            nll_sum += stats.nll_sum
            step += 1
        # KL of the parameters as they stand at epoch end, so the last row
        # matches a recomputation from the saved model exactly
        kl = kl_mean_field(model)
        metric = None
        if holdout is not None and metric_fn is not None:
            f, _ = model.forward(holdout[0], mode="mean")
            metric = float(metric_fn(holdout[1], f))
        history.append(
            EpochRow(
                epoch=epoch,
                loss=nll_sum / n + beta * kl / n,
                nll=nll_sum / n,
                kl=kl,
                metric=metric,
                wall_s=time.perf_counter() - t0,
            )
        )
    return history


@dataclass
class RegressionSummary:
    mean: np.ndarray
    variance: np.ndarray  # includes the likelihood noise variance
    noise_variance: float
    samples: np.ndarray = field(repr=False)


@dataclass
class ClassificationSummary:
    probs: np.ndarray  # posterior predictive class probabilities
    entropy: np.ndarray
    mutual_information: np.ndarray
    sample_probs: np.ndarray = field(repr=False)


def predict(model, likelihood, x, n_samples, rng, batch_size: int = 4096):
    """Posterior predictive summary from n_samples forward draws."""
    if n_samples < 2:
        raise ValueError("need at least two predictive samples")
    x = np.asarray(x, dtype=float)
    outs = []
    for start in range(0, x.shape[0], batch_size):
        seg = x[start : start + batch_size]
        draws = np.stack(
            [model.forward(seg, mode="sample", rng=rng)[0] for _ in range(n_samples)]
        )
        outs.append(draws)
    draws = np.concatenate(outs, axis=1)  # (S, N, out)
    if likelihood.kind == "gaussian":
        f = draws[:, :, 0]
        return RegressionSummary(
            mean=f.mean(axis=0),
            variance=f.var(axis=0, ddof=1) + likelihood.noise_variance,
            noise_variance=likelihood.noise_variance,
            samples=f,
        )
    lp = np.stack([likelihood.log_softmax(draws[s]) for s in range(n_samples)])
    probs_t = np.exp(lp)
    mean_probs = probs_t.mean(axis=0)
    from .metrics import mutual_information, predictive_entropy

    return ClassificationSummary(
        probs=mean_probs,
        entropy=predictive_entropy(mean_probs),
        mutual_information=mutual_information(probs_t),
        sample_probs=probs_t,
    )
