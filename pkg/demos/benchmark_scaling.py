"""Dense vs sparse forward cost as the dyadic depth grows.

Wall-clock medians plus exact multiply-add counts for a one-layer model in
sample mode.  Dense cost scales with 2^L + 1 columns, sparse with L + 2, so
the gap widens by roughly 2x per level.  The CLI command `dyadicgp bench`
does the same with thread pinning and CSV output.
"""

import time

import numpy as np

from dyadicgp.counters import counting
from dyadicgp.layers import forward_dense, forward_sparse, init_layer

B, D, S = 64, 32, 5
REPEATS = 7


def median_ms(fwd, layer, x, seed):
    rng = np.random.default_rng(seed)

    def one_pass():
        for _ in range(S):
            fwd(layer, x, mode="sample", rng=rng)

    one_pass()  # warm-up
    times = []
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        one_pass()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


print(f"batch {B}, dims {D}, {S} samples per pass, median of {REPEATS}")
print(f"{'L':>3} {'M':>6} {'dense ms':>10} {'sparse ms':>10} {'speedup':>8} "
      f"{'dense madds':>12} {'sparse madds':>13}")
for depth in (3, 5, 7, 9, 11):
    rng = np.random.default_rng(0)
    layer = init_layer(D, 1, depth, theta=1.0, rng=rng)
    x = rng.uniform(0, 1, (B, D))
    td = median_ms(forward_dense, layer, x, 1)
    ts = median_ms(forward_sparse, layer, x, 1)
    with counting() as c:
        for _ in range(S):
            forward_dense(layer, x, mode="sample", rng=rng)
    md = c.total
    with counting() as c:
        for _ in range(S):
            forward_sparse(layer, x, mode="sample", rng=rng)
    print(f"{depth:>3} {2**depth + 1:>6} {td:>10.2f} {ts:>10.2f} {td / ts:>7.1f}x "
          f"{md:>12} {c.total:>13}")
