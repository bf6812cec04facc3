"""What fake quantization does to values, and why training can see through it.

Snaps a ramp onto 2/4/8-bit grids, verifies the worst-case round-trip error
bound lambda/(2q), and shows per-output-channel weight scales on a small
matrix. The straight-through wrapper at the end is the piece that makes the
whole thing trainable: the forward is a step function, the gradient is the
identity.
"""

import numpy as np

from qreg import tensor as T
from qreg.quantization import fake_quantize, weight_scales

ramp = np.linspace(-1.0, 1.0, 9)
print("input ramp:   ", np.array2string(ramp, precision=3))
for bits in (2, 4, 8):
    q = 2 ** (bits - 1) - 1
    out = fake_quantize(ramp, bits, 1.0)
    levels = np.unique(out).size
    worst = np.abs(out - ramp).max()
    print(f"{bits}-bit grid:    {np.array2string(out, precision=3)}")
    print(f"  levels used {levels} (max {2 * q + 1}), worst error {worst:.4f} <= bound {1 / (2 * q):.4f}")

w = np.array([[0.1, -2.0, 0.3], [0.5, 0.2, -0.1]])
print("\nper-channel scales of a [2x3] weight:", weight_scales(w), "(abs max of each row)")

# straight-through: forward snaps, backward passes the upstream gradient intact
x = T.parameter(np.array([0.21, -0.47, 0.92]))
qx = T.straight_through(x, lambda v: fake_quantize(v, 4, 1.0))
T.backward(T.reduce_sum(T.mul(qx, T.constant(np.array([1.0, 2.0, 3.0])))))
print("\nquantized forward:", qx.value)
print("gradient at x:    ", x.grad, "(identical to the upstream weights: rounding was invisible)")
