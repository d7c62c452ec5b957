"""Small 1D regression: fit a GP draw, watch uncertainty grow off the data.

Trains a 1-10-10-1 variational model on a squared-exponential GP sample over
[-3, 3] and predicts across [-5, 5].  In the extrapolation region the weights
that matter carry no data, so they stay near the prior and the predictive
standard deviation rises.  Takes around a minute.
"""

import numpy as np

from dyadicgp import data, metrics, vi
from dyadicgp.layers import Model, init_layer

rng = np.random.default_rng(0)
x_train = np.sort(rng.uniform(-3, 3, 600))
x_test = np.linspace(-5, 5, 200)
ds = data.sample_se_gp(np.concatenate([x_train, x_test]),
                       lengthscale=1.0, noise_std=0.1, rng=rng)
y_train, y_test = ds.y[:600], ds.y[600:]

# normalize with the declared domain [-5, 5] so test points beyond the data
# still land inside the basis domain instead of clamping onto its edge
norm = data.Normalizer(np.array([-5.0]), np.array([5.0]))
xt, xe = norm(x_train[:, None]), norm(x_test[:, None])

model = Model([
    init_layer(1, 10, depth=6, theta=8.0, rng=rng),
    init_layer(10, 10, depth=6, theta=4.0, rng=rng),
    init_layer(10, 1, depth=6, theta=4.0, rng=rng),
])
likelihood = vi.GaussianLikelihood(noise_variance=0.1, trainable=True)
config = vi.TrainConfig(epochs=150, batch_size=128, learning_rate=3e-3)

print(f"training on {len(y_train)} points, {config.epochs} epochs ...")
history = vi.train(model, likelihood, xt, y_train, config, rng)
for row in history[:: len(history) // 6]:
    print(f"  epoch {row.epoch:3d}  loss {row.loss:8.4f}  nll {row.nll:8.4f}  kl {row.kl:10.2f}")

summary = vi.predict(model, likelihood, xe, n_samples=64, rng=rng)
inside = np.abs(x_test) <= 3.0
rmse_in = metrics.rmse(y_test[inside], summary.mean[inside])
nlpd_in = metrics.nlpd(y_test[inside], summary.mean[inside], summary.variance[inside])
std = np.sqrt(summary.variance)
print(f"\ninterpolation [-3, 3]:  rmse {rmse_in:.4f}  nlpd {nlpd_in:.4f}")
print(f"learned noise std: {np.sqrt(likelihood.noise_variance):.4f}")
print(f"mean predictive std inside [-3,3]: {std[inside].mean():.4f}")
print(f"mean predictive std outside:       {std[~inside].mean():.4f}")

# crude text profile of the predictive std across the domain
print("\npredictive std profile over [-5, 5]:")
bins = np.linspace(-5, 5, 21)
for lo, hi in zip(bins[:-1], bins[1:]):
    seg = std[(x_test >= lo) & (x_test < hi)]
    if seg.size == 0:
        continue
    bar = "#" * int(round(40 * seg.mean() / std.max()))
    print(f"  [{lo:+5.1f}, {hi:+5.1f})  {seg.mean():.3f}  {bar}")
