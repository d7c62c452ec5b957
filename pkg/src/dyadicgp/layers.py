"""Mean-field variational linear layers over the dyadic basis feature map.

A layer maps x (batch, in_dim) to y (batch, out_dim) through

    y = sum_{d,k} psi_k(x_d) W[d, k, :] + b

with a factorized Gaussian posterior over W and b: W ~ N(mean, softplus(rho)^2)
elementwise.  Weights are stored feature-major, row d * grid.size + slot.

Three forward modes:

    mean     deterministic pass through the posterior means
    sample   per-example reparameterized draw W = mean + sigma * eps
    flipout  one shared weight perturbation decorrelated across the batch by
             per-example Rademacher signs; multiply-adds stay O(L + 2) per
             feature even though the shared draw itself is O(grid.size)

The sparse path touches only the L + 2 active slots per input feature; the
dense path materializes every basis column and exists as the reference and
benchmark baseline.  Under injected noise (dense layout, gathered internally)
both paths compute the same function.

Backward passes are analytic; no autodiff framework is involved.  Multiply-add
counts are recorded on `counters.madds`: the contraction costs B*D*K*out, the
bias add B*out, and sampled modes additionally pay for fusing mean + sigma*eps
(B*D*K*out weights, B*out biases; flipout also pays B*D*K for the signs).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import indexing, kernel
from .counters import madds
from .grid import DyadicGrid, build_grid


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise ValueError("softplus_inv requires positive inputs")
    return y + np.log1p(-np.exp(-y))


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


SQUASHES = {
    # name -> (forward, derivative expressed through the forward output)
    "sigmoid": (sigmoid, lambda s: s * (1.0 - s)),
}


@dataclass
class VariationalLayer:
    in_dim: int
    out_dim: int
    grid: DyadicGrid
    theta: float
    weight_mean: np.ndarray
    weight_rho: np.ndarray
    bias_mean: np.ndarray
    bias_rho: np.ndarray

    @property
    def depth(self) -> int:
        return self.grid.depth

    @property
    def n_weights(self) -> int:
        return self.weight_mean.size + self.bias_mean.size


def init_layer(
    in_dim: int,
    out_dim: int,
    depth: int,
    theta: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    mean_scale: float = 0.1,
    sigma_init: float = 0.1,
) -> VariationalLayer:
    """Fresh layer with N(0, mean_scale^2) means and constant sigma_init."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError("in_dim and out_dim must be positive")
    rng = rng or np.random.default_rng()
    grid = build_grid(depth)
    rho0 = float(softplus_inv(sigma_init))
    return VariationalLayer(
        in_dim=in_dim,
        out_dim=out_dim,
        grid=grid,
        theta=float(theta),
        weight_mean=rng.normal(0.0, mean_scale, (in_dim * grid.size, out_dim)),
        weight_rho=np.full((in_dim * grid.size, out_dim), rho0),
        bias_mean=rng.normal(0.0, mean_scale, out_dim),
        bias_rho=np.full(out_dim, rho0),
    )


@dataclass
class LayerCache:
    mode: str
    x: np.ndarray
    psi: np.ndarray
    positions: Optional[np.ndarray]  # None on the dense path
    ms: Optional[np.ndarray]  # active odd indices per level, sparse path only
    w_eff: np.ndarray  # weights entering the contraction
    eps_w: Optional[np.ndarray]
    eps_b: Optional[np.ndarray]
    sign: Optional[np.ndarray]


@dataclass
class LayerGradients:
    weight_mean: np.ndarray
    weight_rho: np.ndarray
    bias_mean: np.ndarray
    bias_rho: np.ndarray
    x: Optional[np.ndarray]


def _check_input(layer: VariationalLayer, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ValueError(
            f"expected input of shape (batch, {layer.in_dim}), got {x.shape}"
        )
    return x


def _gather_noise(noise_w: np.ndarray, positions: np.ndarray, layer) -> np.ndarray:
    """Accept injected weight noise in dense or pre-gathered layout."""
    b, d, k = positions.shape
    size = layer.grid.size
    if noise_w.shape == (b, d, k, layer.out_dim):
        return noise_w
    if noise_w.shape == (b, d, size, layer.out_dim):
        return np.take_along_axis(noise_w, positions[..., None], axis=2)
    raise ValueError(f"weight noise shape {noise_w.shape} fits neither layout")


def forward_sparse(layer, x, mode="mean", rng=None, noise=None):
    """Sparse forward pass.  Returns (y, cache).

    noise, when given, is a dict with dense-layout arrays: 'weight'
    (B, D, size, out) per-example for sample mode or (D, size, out) shared for
    flipout, 'bias' (B, out), and 'sign' (B, D, size) for flipout.  Gathered
    layouts (size replaced by L + 2) are accepted too.
    """
    x = _check_input(layer, x)
    t = indexing.tsi_indices(x, layer.depth)
    positions = indexing.assemble_global_indices(t)
    ms = 2 * t - 1
    levels = np.arange(1, layer.depth + 1, dtype=np.int64)
    psi = np.empty(positions.shape, dtype=float)
    psi[..., 0], psi[..., 1] = kernel.boundary_basis(x, layer.theta)
    psi[..., 2:] = kernel.interior_basis(levels, ms, x[..., None], layer.theta)

    b, d, k = psi.shape
    out = layer.out_dim
    w_mean = indexing.gather_weights(layer.weight_mean, positions, d)
    eps_w = eps_b = sign = None

    if mode == "mean":
        w_eff = w_mean
        bias = layer.bias_mean
    elif mode == "sample":
        rho = indexing.gather_weights(layer.weight_rho, positions, d)
        if noise is not None:
            eps_w = _gather_noise(np.asarray(noise["weight"]), positions, layer)
            eps_b = np.asarray(noise["bias"])
        else:
            eps_w = rng.standard_normal((b, d, k, out))
            eps_b = rng.standard_normal((b, out))
        w_eff = w_mean + softplus(rho) * eps_w
        bias = layer.bias_mean + softplus(layer.bias_rho) * eps_b
        madds.add(b * d * k * out + b * out)
    elif mode == "flipout":
        rho = indexing.gather_weights(layer.weight_rho, positions, d)
        if noise is not None:
            shared = np.asarray(noise["weight"])
            if shared.shape == (d, layer.grid.size, out):
                eps_w = indexing.gather_weights(shared.reshape(-1, out), positions, d)
            else:
                eps_w = _gather_noise(shared, positions, layer)
            sign_full = np.asarray(noise["sign"])
            if sign_full.shape == (b, d, k):
                sign = sign_full
            else:
                sign = np.take_along_axis(sign_full, positions, axis=2)
            eps_b = np.asarray(noise["bias"])
        else:
            shared = rng.standard_normal((d * layer.grid.size, out))
            eps_w = indexing.gather_weights(shared, positions, d)
            sign = rng.integers(0, 2, (b, d, k)).astype(float) * 2.0 - 1.0
            eps_b = rng.standard_normal((b, out))
        w_eff = w_mean + sign[..., None] * (softplus(rho) * eps_w)
        bias = layer.bias_mean + softplus(layer.bias_rho) * eps_b
        madds.add(2 * b * d * k * out + b * d * k + b * out)
    else:
        raise ValueError(f"unknown forward mode {mode!r}")

    y = np.einsum("bdk,bdko->bo", psi, w_eff, optimize=True) + bias
    madds.add(b * d * k * out + b * out)
    cache = LayerCache(mode, x, psi, positions, ms, w_eff, eps_w, eps_b, sign)
    return y, cache


def forward_dense(layer, x, mode="mean", rng=None, noise=None):
    """Dense reference forward pass over all grid.size basis columns."""
    x = _check_input(layer, x)
    psi = indexing.dense_features(x, layer.grid, layer.theta)
    b, d, k = psi.shape
    out = layer.out_dim
    w_mean = layer.weight_mean.reshape(d, k, out)
    eps_w = eps_b = sign = None

    if mode == "mean":
        w_eff = np.broadcast_to(w_mean, (b, d, k, out))
        bias = layer.bias_mean
    elif mode == "sample":
        if noise is not None:
            eps_w = np.asarray(noise["weight"])
            eps_b = np.asarray(noise["bias"])
        else:
            eps_w = rng.standard_normal((b, d, k, out))
            eps_b = rng.standard_normal((b, out))
        w_eff = w_mean + softplus(layer.weight_rho).reshape(d, k, out) * eps_w
        bias = layer.bias_mean + softplus(layer.bias_rho) * eps_b
        madds.add(b * d * k * out + b * out)
    elif mode == "flipout":
        if noise is not None:
            eps_w = np.asarray(noise["weight"])
            if eps_w.shape != (d, k, out):
                raise ValueError(
                    f"dense flipout expects shared weight noise (D, size, out), got {eps_w.shape}"
                )
            sign = np.asarray(noise["sign"])
            eps_b = np.asarray(noise["bias"])
        else:
            eps_w = rng.standard_normal((d, k, out))
            sign = rng.integers(0, 2, (b, d, k)).astype(float) * 2.0 - 1.0
            eps_b = rng.standard_normal((b, out))
        pert = softplus(layer.weight_rho).reshape(d, k, out) * eps_w
        w_eff = w_mean + sign[..., None] * pert
        bias = layer.bias_mean + softplus(layer.bias_rho) * eps_b
        madds.add(2 * b * d * k * out + b * d * k + b * out)
    else:
        raise ValueError(f"unknown forward mode {mode!r}")

    y = np.einsum("bdk,bdko->bo", psi, w_eff, optimize=True) + bias
    madds.add(b * d * k * out + b * out)
    cache = LayerCache(mode, x, psi, None, None, w_eff, eps_w, eps_b, sign)
    return y, cache


def _scatter_rows(contrib: np.ndarray, positions: np.ndarray, layer) -> np.ndarray:
    """Sum (B, D, K, out) contributions into the (D * size, out) layout."""
    b, d, k, out = contrib.shape
    size = layer.grid.size
    rows = (positions + (np.arange(d, dtype=np.int64) * size)[None, :, None]).ravel()
    flat = contrib.reshape(-1, out)
    dest = np.empty((d * size, out))
    for o in range(out):
        dest[:, o] = np.bincount(rows, weights=flat[:, o], minlength=d * size)
    return dest


def _feature_derivatives(layer, cache: LayerCache) -> np.ndarray:
    """d psi / d x at the cached inputs, matching the cached feature layout."""
    x = cache.x
    theta = layer.theta
    if cache.positions is not None:
        levels = np.arange(1, layer.depth + 1, dtype=np.int64)
        dpsi = np.empty_like(cache.psi)
        dpsi[..., 0], dpsi[..., 1] = kernel.boundary_basis_derivative(x, theta)
        dpsi[..., 2:] = kernel.interior_basis_derivative(
            levels, cache.ms, x[..., None], theta
        )
        return dpsi
    dpsi = np.empty_like(cache.psi)
    dpsi[..., 0], dpsi[..., 1] = kernel.boundary_basis_derivative(x, theta)
    dpsi[..., 2:] = kernel.interior_basis_derivative(
        layer.grid.interior_levels, layer.grid.interior_ms, x[..., None], theta
    )
    return dpsi


def backward(layer, cache: LayerCache, grad_out, need_input_grad=True):
    """Analytic gradients of a cached forward pass.

    grad_out is dL/dy, shape (batch, out_dim).  Returns LayerGradients with
    the same layouts as the parameters; .x is dL/dx or None.
    """
    g = np.asarray(grad_out, dtype=float)
    psi = cache.psi
    b, d, k = psi.shape
    out = layer.out_dim
    sparse = cache.positions is not None

    if sparse:
        contrib = psi[..., None] * g[:, None, None, :]
        d_wmean = _scatter_rows(contrib, cache.positions, layer)
    else:
        d_wmean = np.einsum("bdk,bo->dko", psi, g, optimize=True).reshape(-1, out)

    d_wrho = np.zeros_like(layer.weight_rho)
    d_bmean = g.sum(axis=0)
    d_brho = np.zeros_like(layer.bias_rho)

    if cache.mode == "sample":
        carrier = psi[..., None] * cache.eps_w
        if sparse:
            d_wrho = _scatter_rows(carrier * g[:, None, None, :], cache.positions, layer)
        else:
            d_wrho = np.einsum("bdko,bo->dko", carrier, g, optimize=True).reshape(-1, out)
        d_wrho *= sigmoid(layer.weight_rho)
        d_brho = (g * cache.eps_b).sum(axis=0) * sigmoid(layer.bias_rho)
    elif cache.mode == "flipout":
        signed = (psi * cache.sign)[..., None] * cache.eps_w
        if sparse:
            d_wrho = _scatter_rows(signed * g[:, None, None, :], cache.positions, layer)
        else:
            d_wrho = np.einsum("bdk,dko,bo->dko", psi * cache.sign, cache.eps_w, g, optimize=True).reshape(-1, out)
        d_wrho *= sigmoid(layer.weight_rho)
        d_brho = (g * cache.eps_b).sum(axis=0) * sigmoid(layer.bias_rho)

    dx = None
    if need_input_grad:
        dpsi_coeff = np.einsum("bdko,bo->bdk", cache.w_eff, g, optimize=True)
        dx = np.sum(dpsi_coeff * _feature_derivatives(layer, cache), axis=-1)

    return LayerGradients(d_wmean, d_wrho, d_bmean, d_brho, dx)


class Model:
    """A stack of variational layers with a bounded squash between them.

    The squash keeps hidden activations inside the basis domain [0, 1]; it is
    applied after every layer except the last.
    """

    def __init__(self, layers: list, squash: str = "sigmoid"):
        if not layers:
            raise ValueError("model needs at least one layer")
        if squash not in SQUASHES:
            raise ValueError(f"unknown squash {squash!r}; have {sorted(SQUASHES)}")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer width mismatch: {prev.out_dim} feeds {nxt.in_dim}"
                )
        self.layers = layers
        self.squash = squash

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x, mode="mean", rng=None, noise=None, sparse=True):
        """Run the stack.  noise, when given, is one dict per layer."""
        step = forward_sparse if sparse else forward_dense
        squash_fn, _ = SQUASHES[self.squash]
        caches = []
        h = np.asarray(x, dtype=float)
        for i, layer in enumerate(self.layers):
            layer_noise = noise[i] if noise is not None else None
            y, cache = step(layer, h, mode=mode, rng=rng, noise=layer_noise)
            if i + 1 < len(self.layers):
                h = squash_fn(y)
                caches.append((cache, h))
            else:
                caches.append((cache, None))
        return y, caches

    def backward(self, caches, grad_out, need_input_grad=False):
        """Per-layer gradients for a cached forward; returns (grads, dx)."""
        _, squash_deriv = SQUASHES[self.squash]
        grads = [None] * len(self.layers)
        g = np.asarray(grad_out, dtype=float)
        for i in range(len(self.layers) - 1, -1, -1):
            cache, _ = caches[i]
            want_dx = i > 0 or need_input_grad
            grads[i] = backward(self.layers[i], cache, g, need_input_grad=want_dx)
            if i > 0:
                squashed = caches[i - 1][1]
                g = grads[i].x * squash_deriv(squashed)
        return grads, (grads[0].x if need_input_grad else None)

    def parameters(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layers.{i}.weight_mean"] = layer.weight_mean
            out[f"layers.{i}.weight_rho"] = layer.weight_rho
            out[f"layers.{i}.bias_mean"] = layer.bias_mean
            out[f"layers.{i}.bias_rho"] = layer.bias_rho
        return out

    def gradient_dict(self, grads: list) -> dict:
        out = {}
        for i, gl in enumerate(grads):
            out[f"layers.{i}.weight_mean"] = gl.weight_mean
            out[f"layers.{i}.weight_rho"] = gl.weight_rho
            out[f"layers.{i}.bias_mean"] = gl.bias_mean
            out[f"layers.{i}.bias_rho"] = gl.bias_rho
        return out
