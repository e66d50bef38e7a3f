"""Show when the swapped loss term stops contributing gradient signal.

For a linear model with raw dot-product scoring and both hinges active, the
gradient of the combined loss with respect to the query tower has the closed
form W_i [di q^T + lambda q di^T], di = i_neg - i_pos. Three regimes make
the swap term redundant: lambda = 0, q parallel to di, and the item tower
mapping q and di to orthogonal directions.
"""

import numpy as np

from sci import training
from sci.core import make_rng

rng = make_rng(0)

print("closed form, worked example:")
print("  W_i = I, q = (1,0), di = (0,1), lambda = 0.5")
grad = training.linear_grad_closed_form(
    np.eye(2), np.eye(2), [1.0, 0.0], [0.0, -1.0], [0.0, 0.0], 0.5)
print(f"  dL/dW_q =\n{grad}")

print("\nsymmetrization operator M(q, di) = (q di^T + di q^T) / 2:")
print(training.symmetrization_operator([1.0, 0.0], [0.0, 1.0]))

print("\ncollapse probes:")
cases = [
    ("lambda = 0", (np.eye(2), np.eye(2), [1.0, 0.0],
                    [0.0, 0.0], [0.0, 1.0], 0.0)),
    ("q parallel to di", (np.eye(2), np.eye(2), [2.0, 0.0],
                          [0.0, 0.0], [1.0, 0.0], 0.3)),
    ("item tower orthogonalizes", (np.eye(2), np.eye(2), [1.0, 0.0],
                                   [0.0, 0.0], [0.0, 1.0], 0.3)),
    ("generic configuration", (rng.normal(size=(3, 3)),
                               rng.normal(size=(3, 3)),
                               rng.normal(size=3), rng.normal(size=3),
                               rng.normal(size=3), 0.3)),
]
for name, args in cases:
    result = training.collapse_probe(*args)
    extra = f" (cosine {result.cosine:.3f})" if result.cosine is not None else ""
    print(f"  {name:28s}-> {result.kind}{extra}")

print("\nin the parallel regime the combined gradient is a positive scalar")
print("multiple of the plain gradient; the swap term changes the step size")
print("but not its direction:")
for lam in (0.0, 0.3, 1.0):
    g = training.linear_grad_closed_form(
        np.eye(2), np.eye(2), [2.0, 0.0], [0.0, 0.0], [1.0, 0.0], lam)
    print(f"  lambda = {lam}: dL/dW_q[0,0] = {g[0, 0]:.2f}")
