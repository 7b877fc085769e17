"""
Reverse-mode autodiff and finite-difference checks
==================================================

A small graph built from the package's Tensor, differentiated by hand-written
backward rules and then checked against central differences.
"""

import numpy as np

from m2rnet import ops
from m2rnet.gradcheck import check_gradients
from m2rnet.tensor import Tensor

rng = np.random.default_rng(0)

# A 3x3 convolution, ReLU and global max pool feeding a scalar.
x = Tensor(rng.standard_normal((2, 3, 6, 6)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 3, 3, 3)) * 0.3, requires_grad=True)


def f():
    y = ops.relu(ops.conv2d(x, w, pad=1))
    pooled = ops.global_max_pool(y)
    return (pooled * pooled).sum()


out = f()
out.backward()
print("value:", round(out.item(), 6))
print("dvalue/dw norm:", round(float(np.linalg.norm(w.grad)), 6))

# Central differences at h = 1e-4.  Coordinates whose +-h stencil flips a
# ReLU or changes a pooling argmax are skipped rather than compared.
errors = check_gradients(f, [x, w])
for name, err in zip(("x", "w"), errors.values()):
    print(f"relative error wrt {name}: {err:.2e}")

# The same check on a softmax attention matrix, which has no kinks.
q = Tensor(rng.standard_normal((5, 5)), requires_grad=True)
errors = check_gradients(lambda: (ops.softmax(q, axis=-1) * Tensor(np.arange(25.0).reshape(5, 5))).sum(), [q])
print("softmax relative error:", f"{max(errors.values()):.2e}")
