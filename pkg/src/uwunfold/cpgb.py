"""Color prior guidance: a per-pixel color INR followed by a ResBlock-in-ResBlock refiner."""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError
from .layers import check_channels, check_finite, conv, terminal


class ColorINR(nn.Module):
    """Per-pixel MLP on RGB triplets, realized with 1x1 convolutions.

    ``widths`` lists the layer widths including the 3-channel input and
    output. Hidden layers use ``sin(omega * z)`` (SIREN-style, with the
    matching initialization) or ``tanh`` when ``activation="tanh"``.
    """

    def __init__(self, widths=(3, 64, 64, 3), activation="sine", omega=30.0):
        super().__init__()
        widths = tuple(widths)
        if len(widths) < 2 or widths[0] != 3 or widths[-1] != 3:
            raise ConfigError("inr_widths", f"must start and end with 3, got {widths}")
        if activation not in ("sine", "tanh"):
            raise ConfigError("inr_activation", f"unknown activation {activation!r}")
        self.widths = widths
        self.activation = activation
        self.omega = float(omega)
        self.layers = nn.ModuleList(
            nn.Conv2d(a, b, 1) for a, b in zip(widths[:-1], widths[1:])
        )
        self.reset_parameters()

    @torch.no_grad()
    def reset_parameters(self):
        for i, layer in enumerate(self.layers):
            fan_in = layer.in_channels
            if self.activation == "sine":
                bound = 1.0 / fan_in if i == 0 else math.sqrt(6.0 / fan_in) / self.omega
                layer.weight.uniform_(-bound, bound)
                layer.bias.uniform_(-bound, bound)
            else:
                layer.reset_parameters()

    def _act(self, z):
        if self.activation == "sine":
            return torch.sin(self.omega * z)
        return torch.tanh(z)

    def forward(self, x):
        check_channels(x, 3, "color INR input")
        check_finite(x, "color INR input")
        h = x
        for layer in self.layers[:-1]:
            h = self._act(layer(h))
        return self.layers[-1](h)


class ResBlock(nn.Module):
    def __init__(self, channels, kernel_size=3):
        super().__init__()
        self.conv1 = conv(channels, channels, kernel_size)
        self.conv2 = terminal(conv(channels, channels, kernel_size))

    def forward(self, x):
        return x + self.conv2(F.gelu(self.conv1(x)))


class ResGroup(nn.Module):
    def __init__(self, channels, n_blocks, kernel_size=3):
        super().__init__()
        self.body = nn.Sequential(*[ResBlock(channels, kernel_size) for _ in range(n_blocks)])
        self.tail = terminal(conv(channels, channels, kernel_size))

    def forward(self, x):
        return x + self.tail(self.body(x))


class RIR(nn.Module):
    """ResBlock-in-ResBlock: ``groups`` residual groups of ``blocks`` ResBlocks,
    wrapped in a long skip."""

    def __init__(self, channels=32, groups=2, blocks=2, kernel_size=3):
        super().__init__()
        if groups < 1:
            raise ConfigError("rir_groups", "must be >= 1")
        if blocks < 1:
            raise ConfigError("rir_blocks", "must be >= 1")
        if kernel_size % 2 == 0:
            raise ConfigError("rir_kernel", "must be odd")
        self.channels = channels
        self.body = nn.Sequential(*[ResGroup(channels, blocks, kernel_size) for _ in range(groups)])
        self.tail = terminal(conv(channels, channels, kernel_size))

    def forward(self, f):
        check_channels(f, self.channels, "RIR input")
        return f + self.tail(self.body(f))


class CPGB(nn.Module):
    """prior = Conv(RIR(Conv(inr(x) + x)))."""

    def __init__(self, inr_widths=(3, 64, 64, 3), inr_activation="sine", inr_omega=30.0,
                 rir_width=32, rir_groups=2, rir_blocks=2, rir_kernel=3):
        super().__init__()
        self.inr = ColorINR(inr_widths, inr_activation, inr_omega)
        self.head = conv(3, rir_width, 3)
        self.rir = RIR(rir_width, rir_groups, rir_blocks, rir_kernel)
        self.tail = conv(rir_width, 3, 3)

    def forward(self, x):
        check_channels(x, 3, "CPGB input")
        return self.tail(self.rir(self.head(self.inr(x) + x)))
