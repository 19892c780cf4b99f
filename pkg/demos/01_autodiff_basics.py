"""Tour of the autodiff engine: tapes, gradients, and finite-difference checks.

Run:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from trackseg import autodiff as ad
from trackseg.autodiff import Adam, Tape, Tensor, gradcheck

print("== tensors and tapes ==")
x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float64), requires_grad=True)
w = Tensor(np.array([[0.5], [-0.25]], dtype=np.float64), requires_grad=True)

with Tape() as tape:
    pred = ad.sigmoid(ad.matmul(x, w))
    loss = ad.mul(pred, pred).mean()
    tape.backward(loss)

print("loss      :", loss.item())
print("dloss/dx  :\n", x.grad)
print("dloss/dw  :\n", w.grad)

print("\n== finite-difference verification ==")
rng = np.random.default_rng(0)
err = gradcheck(lambda a, b: ad.sigmoid(ad.matmul(a, b)).sum(),
                [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))])
print(f"max relative error vs central differences: {err:.2e}")

print("\n== a convolution with gradients ==")
img = Tensor(rng.normal(size=(1, 6, 6)), requires_grad=True)
kern = Tensor(rng.normal(size=(2, 1, 3, 3)), requires_grad=True)
with Tape() as tape:
    feat = ad.conv2d(img, kern, stride=1, padding=1)
    up = ad.bilinear_upsample(feat, 2)
    tape.backward(up.mean())
print("conv output:", feat.shape, "after 2x upsample:", up.shape)
print("kernel grad norm:", float(np.linalg.norm(kern.grad)))

print("\n== three Adam steps on a quadratic ==")
p = Tensor(np.array([4.0, -2.0], dtype=np.float32), requires_grad=True)
opt = Adam({"p": p}, lr=0.5)
for step in range(3):
    with Tape() as tape:
        loss = ad.mul(p, p).sum()
        tape.backward(loss)
    opt.step()
    opt.zero_grad()
    print(f"step {step + 1}: p = {p.values}, loss = {loss.item():.3f}")
