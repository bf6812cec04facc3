"""A tour of the reverse-mode tensor core.

Builds a two-layer computation by hand, runs backward(), and checks one
gradient entry against a central finite difference, then shows that
gradients accumulate across repeated backward calls until zeroed.
"""

import numpy as np

from qreg import tensor as T

rng = np.random.default_rng(0)

x = T.constant(rng.standard_normal((4, 3)), name="x")
w1 = T.parameter(rng.standard_normal((3, 5)) * 0.5, name="w1")
w2 = T.parameter(rng.standard_normal((5, 1)) * 0.5, name="w2")

hidden = T.relu(T.matmul(x, w1))
loss = T.reduce_mean(T.power(T.matmul(hidden, w2), 2.0))
T.backward(loss)
print(f"loss = {loss.value:.6f}")
print(f"w1 gradient shape {w1.grad.shape}, w2 gradient shape {w2.grad.shape}")

# finite-difference probe of a single weight entry
h = 1e-6
saved = w1.value[1, 2]
w1.value[1, 2] = saved + h
up = T.reduce_mean(T.power(T.matmul(T.relu(T.matmul(x, w1)), w2), 2.0)).value
w1.value[1, 2] = saved - h
down = T.reduce_mean(T.power(T.matmul(T.relu(T.matmul(x, w1)), w2), 2.0)).value
w1.value[1, 2] = saved
fd = (up - down) / (2 * h)
print(f"analytic dL/dw1[1,2] = {w1.grad[1, 2]:+.8f}")
print(f"numeric  dL/dw1[1,2] = {fd:+.8f}")

# backward() adds into .grad; a second pass doubles it
first = w2.grad.copy()
T.backward(loss)
assert np.allclose(w2.grad, 2 * first)
print("second backward() accumulated: grad doubled, as an optimizer step loop expects")
