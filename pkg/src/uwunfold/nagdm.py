"""Learned gradient step of the unfolded proximal-gradient iteration.

The degradation operator and its adjoint are replaced by gated residual
blocks (NARB); the data-fidelity step becomes

    x_i = x_{i-1} - step * N_adj(N_deg(x_{i-1}) - y + prior)

The proximal half of the iteration lives in the stage's FeatureNet and
ISF-Former.
"""
import torch
import torch.nn as nn

from .errors import ConfigError
from .layers import LayerNorm2d, check_channels, check_same_spatial, conv, terminal


class SimpleGate(nn.Module):
    def forward(self, x):
        a, b = x.chunk(2, dim=1)
        return a * b


class NARB(nn.Module):
    """Nonlinear-activation-free residual block.

    LN -> 1x1 expand to 2*hidden -> depthwise conv -> split-and-multiply
    gate -> 1x1 back to ``channels`` -> add input.
    """

    def __init__(self, channels=3, expansion=1, kernel_size=3):
        super().__init__()
        if expansion < 1:
            raise ConfigError("narb_expansion", "must be >= 1")
        if kernel_size % 2 == 0:
            raise ConfigError("narb_kernel", "must be odd")
        hidden = channels * expansion
        self.channels = channels
        self.norm = LayerNorm2d(channels)
        self.expand = conv(channels, 2 * hidden, 1)
        self.dwconv = conv(2 * hidden, 2 * hidden, kernel_size, groups=2 * hidden)
        self.gate = SimpleGate()
        self.project = terminal(conv(hidden, channels, 1))

    def forward(self, x):
        check_channels(x, self.channels, "NARB input")
        h = self.gate(self.dwconv(self.expand(self.norm(x))))
        return x + self.project(h)


class GradientStep(nn.Module):
    """One NAGDM stage: its own operator pair and a learnable step size."""

    def __init__(self, expansion=1, kernel_size=3, step_init=0.5, enabled=True):
        super().__init__()
        self.enabled = enabled
        if enabled:
            self.degrade = NARB(3, expansion, kernel_size)
            self.adjoint = NARB(3, expansion, kernel_size)
            self.step = nn.Parameter(torch.tensor(float(step_init)))

    def residual(self, x_prev, y, prior):
        return self.degrade(x_prev) - y + prior

    def forward(self, x_prev, y, prior):
        for name, t in (("x_prev", x_prev), ("y", y), ("prior", prior)):
            check_channels(t, 3, name)
        check_same_spatial(x_prev, y, prior, names=("x_prev", "y", "prior"))
        if not self.enabled:
            return x_prev
        return x_prev - self.step * self.adjoint(self.residual(x_prev, y, prior))
