"""The colour-prior branch on its own.

A per-pixel sine network maps each RGB value to a corrected RGB value, and a
small residual-in-residual CNN smooths the result spatially.  Here the branch
is fitted directly to clean targets, which is a quick way to see how much of
the haze is a pure colour-mapping problem.
"""
import numpy as np
import torch

from uwunfold.cpgb import CPGB
from uwunfold.data import synthetic_pairs

torch.manual_seed(0)
pairs = synthetic_pairs(8, size=48)
x = torch.from_numpy(np.stack([p.input for p in pairs]))
y = torch.from_numpy(np.stack([p.target for p in pairs]))

prior = CPGB(inr_widths=(3, 32, 32, 3), rir_width=16)
opt = torch.optim.Adam(prior.parameters(), lr=1e-3)
print(f"parameters: {sum(p.numel() for p in prior.parameters())}")
for step in range(301):
    loss = torch.nn.functional.mse_loss(prior(x), y)
    opt.zero_grad()
    loss.backward()
    opt.step()
    if step % 50 == 0:
        print(f"step {step:3d}  mse {loss.item():.5f}")

with torch.no_grad():
    print("haze mse:", torch.nn.functional.mse_loss(x, y).item())
    print("per-channel mean  input", x.mean((0, 2, 3)).numpy().round(3),
          " prior", prior(x).mean((0, 2, 3)).numpy().round(3),
          " target", y.mean((0, 2, 3)).numpy().round(3))
