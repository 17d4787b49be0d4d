"""A tour of the tensor core: tape-based gradients, the optimizer, dropout.

Run:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from egcn import tensor as T
from egcn.tensor import Adam, AffineBlock

print("== scalars ==")
x = T.parameter(3.0)
loss = T.mul(x, x)  # x^2
loss.backward()
print(f"d(x^2)/dx at x=3: {x.grad}  (expect 6)")

print("\n== a small affine chain, checked against finite differences ==")
rng = np.random.default_rng(0)
block = AffineBlock.init(4, 3, rng)
v = T.tensor(rng.normal(size=4))
out = T.tanh(T.affine(block, v))
score = T.pick(out, 0)
score.backward()

w = block.weight
h = 1e-5
i, j = 1, 2
orig = w.data[i, j]
w.data[i, j] = orig + h
f_plus = np.tanh(block.weight.data @ v.data + block.bias.data)[0]
w.data[i, j] = orig - h
f_minus = np.tanh(block.weight.data @ v.data + block.bias.data)[0]
w.data[i, j] = orig
numeric = (f_plus - f_minus) / (2 * h)
print(f"analytic dW[{i},{j}] = {w.grad[i, j]:+.8f}")
print(f"numeric  dW[{i},{j}] = {numeric:+.8f}")

print("\n== Adam takes a step of about lr on the very first update ==")
p = T.parameter(np.zeros(3))
opt = Adam({"p": p}, lr=1e-2)
opt.step({"p": np.array([1.0, -1.0, 0.5])})
print(f"after one step with lr=1e-2: {p.data}")

print("\n== inverted dropout keeps evaluation a no-op ==")
vec = T.tensor(np.ones(10))
dropped = T.dropout(vec, 0.3, np.random.default_rng(1), training=True)
same = T.dropout(vec, 0.3, np.random.default_rng(2), training=False)
print(f"training mask (scaled by 1/0.7): {dropped.data}")
print(f"eval mode returns the input unchanged: {same.data}")
