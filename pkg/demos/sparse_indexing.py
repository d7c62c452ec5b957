"""How one input activates only L + 2 of the 2^L + 1 basis functions.

At most one interior bump per level is nonzero at any x, and its index
follows from a two-line floor/ceil formula.  This script traces the formula
for a single point, then checks at scale that scattering the sparse values
into a zero row reproduces the dense feature row bit for bit.
"""

import numpy as np

from dyadicgp import indexing
from dyadicgp.counters import counting
from dyadicgp.grid import build_grid
from dyadicgp.layers import forward_dense, forward_sparse, init_layer

depth = 6
grid = build_grid(depth)
x0 = 0.3

t = indexing.tsi_indices(np.array([x0]), depth)[0]
print(f"x = {x0}, depth {depth}: dense row would have {grid.size} columns")
print(f"{'level':>5} {'t':>4} {'m=2t-1':>7} {'peak':>9} {'slot':>5}")
slots = indexing.assemble_global_indices(t[None, :])[0]
for l in range(1, depth + 1):
    m = 2 * t[l - 1] - 1
    print(f"{l:>5} {t[l - 1]:>4} {m:>7} {m * 2.0 ** (-l):>9.5f} {slots[l + 1]:>5}")
print(f"active slots incl. the two boundary functions: {[int(s) for s in slots]} "
      f"({len(slots)} of {grid.size})")

vals, pos = indexing.sparse_features(np.array([[x0]]), grid, theta=1.0)
nz = vals[0, 0] != 0
print(f"nonzero activations: {nz.sum()} values, " + np.array2string(vals[0, 0][nz], precision=4))

# scatter == dense, bitwise, over many random points
rng = np.random.default_rng(0)
x = rng.uniform(0, 1, (20_000, 1))
vals, pos = indexing.sparse_features(x, grid, theta=1.3)
scattered = indexing.scatter_features(vals, pos, grid.size)
dense = indexing.dense_features(x, grid, theta=1.3)
print(f"\nscatter(sparse) == dense bitwise over {x.shape[0]} points: "
      f"{np.array_equal(scattered, dense)}")

# the same holds through a full layer contraction, and the counter shows why
# the sparse path wins: it touches L+2 weights per feature instead of 2^L+1
layer = init_layer(4, 2, depth, theta=1.0, rng=rng)
xb = rng.uniform(0, 1, (64, 4))
ys, _ = forward_sparse(layer, xb, mode="mean")
yd, _ = forward_dense(layer, xb, mode="mean")
print(f"layer outputs identical: {np.array_equal(ys, yd)}")

with counting() as c:
    forward_sparse(layer, xb, mode="mean")
sparse_madds = c.total
with counting() as c:
    forward_dense(layer, xb, mode="mean")
print(f"multiply-adds dense / sparse: {c.total} / {sparse_madds} "
      f"= {c.total / sparse_madds:.1f}x")
