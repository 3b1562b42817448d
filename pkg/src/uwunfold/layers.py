import torch
import torch.nn as nn

from .errors import NumericError, ShapeError


class LayerNorm2d(nn.Module):
    """LayerNorm over the channel axis, applied independently at every pixel."""

    def __init__(self, channels, eps=1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(1, keepdim=True)
        var = (x - mu).pow(2).mean(1, keepdim=True)
        y = (x - mu) / torch.sqrt(var + self.eps)
        return y * self.weight.view(1, -1, 1, 1) + self.bias.view(1, -1, 1, 1)


def conv(in_ch, out_ch, kernel_size=3, stride=1, groups=1, bias=True):
    return nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride,
                     padding=kernel_size // 2, groups=groups, bias=bias)


def terminal(module):
    """Tag a conv as the last projection of a residual branch."""
    module.is_branch_terminal = True
    return module


@torch.no_grad()
def zero_branch_terminals(root):
    """Zero every tagged branch-terminal conv under ``root``.

    Each residual block then reduces to its skip path.
    """
    n = 0
    for m in root.modules():
        if getattr(m, "is_branch_terminal", False):
            m.weight.zero_()
            if m.bias is not None:
                m.bias.zero_()
            n += 1
    return n


@torch.no_grad()
def identity_conv_(module):
    """Dirac-initialize a conv (identity on the first min(in, out) channels)."""
    nn.init.dirac_(module.weight, groups=module.groups)
    if module.bias is not None:
        module.bias.zero_()
    return module


def check_channels(x, channels, name="input"):
    if x.dim() != 4:
        raise ShapeError(f"{name}: expected a 4-D (B, C, H, W) tensor, got shape {tuple(x.shape)}")
    if x.shape[1] != channels:
        raise ShapeError(f"{name}: expected {channels} channels, got {x.shape[1]}")


def check_same_spatial(*tensors, names=None):
    sizes = [tuple(t.shape[-2:]) for t in tensors]
    if len(set(sizes)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise ShapeError(f"{label}: spatial sizes differ {sizes}")


def check_finite(x, name="input"):
    if not torch.isfinite(x).all():
        raise NumericError(f"{name} contains non-finite values")

