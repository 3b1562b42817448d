"""Inter-stage feature transformer built on pixel self-attention (PSAT)."""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, NumericError, ShapeError
from .layers import LayerNorm2d, check_channels, check_same_spatial, conv, terminal


def attention_weights(q, k):
    """Row-stochastic (B, heads, C, C) channel-attention matrix.

    Tokens are channels and each token embeds the flattened spatial map,
    so logits are scaled by sqrt(H*W).
    """
    if q.shape != k.shape:
        raise ShapeError(f"query/key shapes differ: {tuple(q.shape)} vs {tuple(k.shape)}")
    s = q.shape[-1]
    logits = q @ k.transpose(-2, -1) / math.sqrt(s)
    if not torch.isfinite(logits).all():
        raise NumericError("non-finite attention logits")
    return logits.softmax(dim=-1)


def pixel_self_attention(q, k, v, heads=1):
    """Softmax(Q K^T / sqrt(S)) applied to V, over (B, C, H, W) tensors."""
    if not (q.shape == k.shape == v.shape):
        raise ShapeError(f"Q, K, V shapes differ: {tuple(q.shape)}, {tuple(k.shape)}, {tuple(v.shape)}")
    b, c, h, w = q.shape
    if c % heads:
        raise ShapeError(f"{c} channels not divisible by {heads} heads")

    def split(t):
        return t.reshape(b, heads, c // heads, h * w)

    attn = attention_weights(split(q), split(k))
    return (attn @ split(v)).reshape(b, c, h, w)


class PSATBlock(nn.Module):
    def __init__(self, channels, heads=1, ffn_expansion=2):
        super().__init__()
        if channels % heads:
            raise ConfigError("attn_heads", f"{channels} channels not divisible by {heads} heads")
        self.channels = channels
        self.heads = heads
        self.norm1 = LayerNorm2d(channels)
        self.qkv_dw = conv(channels, channels, 3, groups=channels)
        self.qkv_pw = conv(channels, 3 * channels, 1)
        self.attn_out = terminal(conv(channels, channels, 1))
        self.norm2 = LayerNorm2d(channels)
        hidden = channels * ffn_expansion
        self.ffn_in = conv(channels, hidden, 1)
        self.ffn_out = terminal(conv(hidden, channels, 1))

    def qkv(self, f):
        check_channels(f, self.channels, "PSAT input")
        return self.qkv_pw(self.qkv_dw(f)).chunk(3, dim=1)

    def attention(self, f):
        q, k, v = self.qkv(f)
        return self.attn_out(pixel_self_attention(q, k, v, self.heads))

    def ffn(self, f):
        return self.ffn_out(F.gelu(self.ffn_in(f)))

    def forward(self, f_de):
        t = self.attention(self.norm1(f_de)) + f_de
        out = self.ffn(self.norm2(t)) + t
        return f_de + out


class ISFFormer(nn.Module):
    """Refines decoder features for the next stage and emits the stage image.

    With ``enabled=False`` the PSAT block is the identity: the decoder
    features are handed over unchanged and feed the image head directly.
    """

    def __init__(self, channels, heads=1, ffn_expansion=2, enabled=True):
        super().__init__()
        self.enabled = enabled
        self.channels = channels
        self.psat = PSATBlock(channels, heads, ffn_expansion) if enabled else None
        self.head = conv(channels, 3, 3)

    def forward(self, dec_feat, x_stage):
        check_channels(dec_feat, self.channels, "decoder feature")
        check_channels(x_stage, 3, "stage image")
        check_same_spatial(dec_feat, x_stage, names=("decoder feature", "stage image"))
        feat = dec_feat if self.psat is None else self.psat(dec_feat)
        return feat, x_stage + self.head(feat)
