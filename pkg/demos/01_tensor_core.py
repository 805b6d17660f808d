"""Autodiff engine: a tiny conv net forward/backward and a finite-difference check."""
import numpy as np

from fmanet.gradsuite import run_layer_checks
from fmanet.tensor import Tensor, conv2d, cross_entropy_with_grad, relu

rng = np.random.default_rng(0)
x = Tensor(rng.standard_normal((2, 3, 8, 8)).astype(np.float32))
w = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32) * 0.2, requires_grad=True)
b = Tensor(np.zeros(4, np.float32), requires_grad=True)

y = relu(conv2d(x, w, b, padding=1))  # 2 x 4 x 8 x 8
print("conv out", y.shape, y.data.dtype)

logits = y.data.mean(axis=(2, 3))  # 2 x 4
loss, dlogits = cross_entropy_with_grad(logits, np.array([1, 3]))
print("cross entropy %.4f" % loss)

# every layer type against central differences (float64, kinks frozen)
for name, report in run_layer_checks(seed=0).items():
    print("%-14s max rel err %.2e  %s" % (name, report.max_error, "PASS" if report.passed else "FAIL"))
