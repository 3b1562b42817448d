"""One unfolded gradient step, x - w * A(D(x) - y + p).

D and A are small learned blocks standing in for the degradation operator
and its adjoint.  With the step size at zero the step returns its input
exactly; with both blocks reduced to identities it is an ordinary gradient
step on 0.5 * ||x - (y - p)||^2.
"""
import torch

from uwunfold.layers import zero_branch_terminals
from uwunfold.nagdm import GradientStep

torch.manual_seed(0)
x, y, p = torch.rand(3, 1, 3, 16, 16).unbind(0)

step = GradientStep(step_init=0.0)
print("zero step leaves x unchanged:", torch.equal(step(x, y, p), x))

step = GradientStep(step_init=0.25)
zero_branch_terminals(step)  # both residual blocks become identities
target = y - p
z = x
for i in range(6):
    z = step(z, y, p)
    print(f"iteration {i + 1}: distance to y - p = {(z - target).norm().item():.4f}")
print("each iteration shrinks the distance by 1 - w = 0.75")
