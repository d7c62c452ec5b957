"""Named invariant suites behind the `verify` command.

Each suite re-derives its expectation through an independent route (dense
enumeration, brute-force scans, finite differences, closed-form identities)
and returns a pass/fail verdict with a measured figure.  `fault` exists to
prove the harness can fail: "theta-flip" builds the Gram kernel matrix with
the sign of theta flipped, which must break the orthonormality check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import indexing, kernel, metrics, vi
from .grid import build_grid
from .layers import Model, forward_dense, forward_sparse, init_layer, softplus_inv


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_gram_identity(fault: Optional[str] = None) -> CheckResult:
    worst = 0.0
    for depth in (1, 2, 3, 4):
        grid = build_grid(depth)
        for theta in (0.5, 1.0, 2.0):
            combos = kernel.orthonormal_combinations(grid, theta)
            if fault == "theta-flip":
                k = kernel.GaussMarkovFactorization(
                    p=lambda t, th=theta: np.exp(-th * t),
                    q=lambda t, th=theta: np.exp(th * t),
                )
            else:
                k = kernel.GaussMarkovFactorization.laplace(theta)
            gram = kernel.rkhs_gram(combos, k)
            worst = max(worst, float(np.max(np.abs(gram - np.eye(grid.size)))))
    return CheckResult("gram_identity", worst < 1e-8, f"max |G - I| = {worst:.3e}")


def check_template_oracle(n: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        level = int(rng.integers(1, 9))
        m = int(rng.integers(0, 1 << (level - 1))) * 2 + 1
        theta = float(rng.uniform(0.1, 4.0))
        x = rng.uniform(0.0, 1.0, 16)
        k = kernel.GaussMarkovFactorization.laplace(theta)
        d = 2.0 ** (-level)
        combo = kernel.template_coefficients((m - 1) * d, m * d, (m + 1) * d, k)
        via_template = combo.evaluate(x, k)
        closed = kernel.interior_basis(level, m, x, theta)
        inside = np.abs(x - m * d) <= d
        worst = max(worst, float(np.max(np.abs((via_template - closed) * inside))))
    return CheckResult("template_oracle", worst < 1e-9, f"max |closed - template| = {worst:.3e}")


def check_nystrom(seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_inducing = 0.0
    for depth in (2, 4):
        grid = build_grid(depth)
        for theta in (0.5, 2.0):
            x = rng.uniform(0, 1, 200)
            y = rng.uniform(0, 1, 200)
            ny = kernel.nystrom_kernel(x, y, grid, theta)
            fx = indexing.dense_features(x, grid, theta)
            fy = indexing.dense_features(y, grid, theta)
            worst = max(worst, float(np.max(np.abs(np.sum(fx * fy, axis=-1) - ny))))
            pts = grid.points
            exact = kernel.laplace_kernel(pts, pts[::-1], theta)
            ny_ind = kernel.nystrom_kernel(pts, pts[::-1], grid, theta)
            worst_inducing = max(worst_inducing, float(np.max(np.abs(exact - ny_ind))))
    ok = worst < 1e-8 and worst_inducing < 1e-10
    return CheckResult(
        "nystrom_reconstruction",
        ok,
        f"basis-sum gap {worst:.3e}, inducing-point gap {worst_inducing:.3e}",
    )


def check_index_map(n: int = 10_000, depth: int = 8, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, n)
    t = indexing.tsi_indices(x, depth)
    m_fast = 2 * t - 1
    m_brute = indexing.brute_force_indices(x, depth)
    disagree = m_fast != m_brute
    live_disagreements = 0
    if np.any(disagree):
        levels = np.broadcast_to(np.arange(1, depth + 1), m_fast.shape)
        vals_fast = kernel.interior_basis(
            levels[disagree], m_fast[disagree], x[:, None].repeat(depth, 1)[disagree], 1.0
        )
        vals_brute = kernel.interior_basis(
            levels[disagree], m_brute[disagree], x[:, None].repeat(depth, 1)[disagree], 1.0
        )
        live_disagreements = int(np.sum((vals_fast != 0) | (vals_brute != 0)))
    grid = build_grid(depth)
    vals, pos = indexing.sparse_features(x[:, None], grid, 1.3)
    scattered = indexing.scatter_features(vals, pos, grid.size)
    dense = indexing.dense_features(x[:, None], grid, 1.3)
    bitwise = bool(np.array_equal(scattered, dense))
    ok = live_disagreements == 0 and bitwise
    return CheckResult(
        "tsi_brute_force",
        ok,
        f"{int(disagree.sum())} tie disagreements (all on zeros: {live_disagreements == 0}), "
        f"scatter==dense bitwise: {bitwise}",
    )


def check_sparse_dense_forward(seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    layer = init_layer(4, 3, depth=5, theta=1.7, rng=rng)
    b, d, size, out = 8, 4, layer.grid.size, 3
    x = rng.uniform(0, 1, (b, d))
    worst = 0.0
    noises = {
        "mean": None,
        "sample": {
            "weight": rng.standard_normal((b, d, size, out)),
            "bias": rng.standard_normal((b, out)),
        },
        "flipout": {
            "weight": rng.standard_normal((d, size, out)),
            "sign": (rng.integers(0, 2, (b, d, size)) * 2 - 1).astype(float),
            "bias": rng.standard_normal((b, out)),
        },
    }
    for mode, noise in noises.items():
        ys, _ = forward_sparse(layer, x, mode, noise=noise)
        yd, _ = forward_dense(layer, x, mode, noise=noise)
        worst = max(worst, float(np.max(np.abs(ys - yd))))
    return CheckResult(
        "sparse_dense_forward", worst < 1e-10, f"max |sparse - dense| = {worst:.3e}"
    )


def make_test_model(rng, in_dim=2, hidden=3, out_dim=2, depth=3, theta=1.5) -> Model:
    return Model(
        [
            init_layer(in_dim, hidden, depth, theta, rng),
            init_layer(hidden, out_dim, depth, theta * 0.8, rng),
        ]
    )


def draw_model_noise(model: Model, batch: int, mode: str, rng) -> list:
    """Dense-layout injected noise for every layer, valid for both paths."""
    out = []
    for layer in model.layers:
        d, size, o = layer.in_dim, layer.grid.size, layer.out_dim
        if mode == "sample":
            out.append(
                {
                    "weight": rng.standard_normal((batch, d, size, o)),
                    "bias": rng.standard_normal((batch, o)),
                }
            )
        elif mode == "flipout":
            out.append(
                {
                    "weight": rng.standard_normal((d, size, o)),
                    "sign": (rng.integers(0, 2, (batch, d, size)) * 2 - 1).astype(float),
                    "bias": rng.standard_normal((batch, o)),
                }
            )
        else:
            out.append(None)
    return out


def finite_difference_check(
    model: Model,
    x: np.ndarray,
    mode: str,
    rng,
    h: float = 1e-6,
    n_probes: int = 5,
    check_input: bool = True,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The loss is sum(y * v) for a fixed random v; layer noise is drawn once and
    injected on every evaluation so the function under test is deterministic.
    """
    batch = x.shape[0]
    noise = draw_model_noise(model, batch, mode, rng)
    v = rng.standard_normal((batch, model.out_dim))

    def value() -> float:
        y, _ = model.forward(x, mode=mode, noise=noise)
        return float(np.sum(y * v))

    y, caches = model.forward(x, mode=mode, noise=noise)
    grads, dx = model.backward(caches, v, need_input_grad=True)
    named = {}
    for i, g in enumerate(grads):
        named[f"layers.{i}.weight_mean"] = (model.layers[i].weight_mean, g.weight_mean)
        named[f"layers.{i}.weight_rho"] = (model.layers[i].weight_rho, g.weight_rho)
        named[f"layers.{i}.bias_mean"] = (model.layers[i].bias_mean, g.bias_mean)
        named[f"layers.{i}.bias_rho"] = (model.layers[i].bias_rho, g.bias_rho)
    worst = 0.0
    for _, (arr, analytic) in named.items():
        flat = arr.reshape(-1)
        aflat = analytic.reshape(-1)
        probes = rng.choice(flat.size, size=min(n_probes, flat.size), replace=False)
        for j in probes:
            old = flat[j]
            flat[j] = old + h
            fp = value()
            flat[j] = old - h
            fm = value()
            flat[j] = old
            fd = (fp - fm) / (2.0 * h)
            scale = max(abs(fd), abs(aflat[j]), 1e-6)
            worst = max(worst, abs(fd - aflat[j]) / scale)
    if check_input:
        for _ in range(n_probes):
            b = int(rng.integers(0, batch))
            d = int(rng.integers(0, x.shape[1]))
            old = x[b, d]
            fp_x = min(old + h, 1.0)
            fm_x = max(old - h, 0.0)
            x[b, d] = fp_x
            fp = value()
            x[b, d] = fm_x
            fm = value()
            x[b, d] = old
            fd = (fp - fm) / (fp_x - fm_x)
            scale = max(abs(fd), abs(dx[b, d]), 1e-6)
            worst = max(worst, abs(fd - dx[b, d]) / scale)
    return worst


def check_gradients(seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for mode in ("sample", "flipout"):
        model = make_test_model(rng)
        x = rng.uniform(0.05, 0.95, (6, model.in_dim))
        worst = max(worst, finite_difference_check(model, x, mode, rng))
    return CheckResult("gradient_check", worst < 1e-3, f"max FD relative error = {worst:.3e}")


def check_kl(seed: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    model = make_test_model(rng)
    for layer in model.layers:
        layer.weight_mean[:] = 0.0
        layer.bias_mean[:] = 0.0
        layer.weight_rho[:] = softplus_inv(1.0)
        layer.bias_rho[:] = softplus_inv(1.0)
    at_prior = abs(vi.kl_mean_field(model))
    model.layers[0].weight_mean[0, 0] = 0.3
    perturbed = vi.kl_mean_field(model)
    expected = 0.5 * 0.3 * 0.3
    ok = at_prior < 1e-12 and abs(perturbed - expected) < 1e-12
    return CheckResult(
        "variational_kl",
        ok,
        f"KL at prior = {at_prior:.3e}, single-mean perturbation gap = "
        f"{abs(perturbed - expected):.3e}",
    )


def check_metrics() -> CheckResult:
    probs = np.array([[0.1, 0.9], [0.2, 0.8], [0.4, 0.6], [0.45, 0.55]])
    labels = np.array([1, 1, 0, 1])
    val = metrics.ece(labels, probs, n_bins=2)
    gap = abs(val - 0.0375)
    uniform = np.full((3, 4), 0.25)
    ent_gap = abs(float(metrics.predictive_entropy(uniform)[0]) - np.log(4.0))
    ok = gap < 1e-12 and ent_gap < 1e-12
    return CheckResult(
        "metric_identities", ok, f"ECE hand-example gap {gap:.1e}, entropy gap {ent_gap:.1e}"
    )


ALL_CHECKS = (
    check_gram_identity,
    check_template_oracle,
    check_nystrom,
    check_index_map,
    check_sparse_dense_forward,
    check_gradients,
    check_kl,
    check_metrics,
)


def run_verification(fault: Optional[str] = None) -> list[CheckResult]:
    results = []
    for fn in ALL_CHECKS:
        try:
            if fn is check_gram_identity:
                results.append(fn(fault=fault))
            else:
                results.append(fn())
        except Exception as err:  # a crashed suite is a failed suite
            results.append(CheckResult(fn.__name__, False, f"raised {err!r}"))
    return results
