"""U-shaped encoder-decoder used as the learned proximal operator."""
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError
from .layers import check_channels, check_same_spatial, conv


class CrossStageFeatures(NamedTuple):
    enc_feats: list
    dec_feat: torch.Tensor


class ConvBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = conv(channels, channels, 3)
        self.conv2 = conv(channels, channels, 3)

    def forward(self, x):
        return x + self.conv2(F.gelu(self.conv1(x)))


def scale_widths(base_width, scales):
    return [base_width * 2 ** i for i in range(scales)]


class Encoder(nn.Module):
    """``scales - 1`` full/strided levels plus a bottleneck.

    With ``cross_stage=True`` each level adds 1x1-projected features of the
    previous stage's encoder (and, at the finest level, its decoder output)
    before downsampling.
    """

    def __init__(self, base_width=32, scales=3, cross_stage=False):
        super().__init__()
        if scales < 2:
            raise ConfigError("scales", "must be >= 2")
        widths = scale_widths(base_width, scales)
        self.widths = widths
        self.scales = scales
        self.blocks = nn.ModuleList(ConvBlock(w) for w in widths[:-1])
        self.downs = nn.ModuleList(conv(a, b, 3, stride=2) for a, b in zip(widths[:-1], widths[1:]))
        self.bottleneck = ConvBlock(widths[-1])
        self.cross_stage = cross_stage
        if cross_stage:
            self.enc_proj = nn.ModuleList(conv(w, w, 1) for w in widths[:-1])
            self.dec_proj = conv(widths[0], widths[0], 1)

    def forward(self, f_in, prev=None):
        check_channels(f_in, self.widths[0], "encoder input")
        h, w = f_in.shape[-2:]
        m = 2 ** (self.scales - 1)
        if h % m or w % m:
            raise ShapeError(f"spatial size {h}x{w} not divisible by {m}")
        if prev is not None and not self.cross_stage:
            raise ShapeError("this encoder has no cross-stage fusion projections")
        feats = []
        x = f_in
        for lvl, (block, down) in enumerate(zip(self.blocks, self.downs)):
            x = block(x)
            if prev is not None:
                p = prev.enc_feats[lvl]
                check_same_spatial(x, p, names=(f"encoder level {lvl}", "previous-stage feature"))
                x = x + self.enc_proj[lvl](p)
                if lvl == 0:
                    x = x + self.dec_proj(prev.dec_feat)
            feats.append(x)
            x = down(x)
        return feats, self.bottleneck(x)


class Decoder(nn.Module):
    def __init__(self, base_width=32, scales=3):
        super().__init__()
        widths = scale_widths(base_width, scales)
        self.widths = widths
        self.ups = nn.ModuleList(
            nn.ConvTranspose2d(b, a, 2, stride=2) for a, b in zip(widths[:-1], widths[1:])
        )
        self.fuse = nn.ModuleList(conv(2 * w, w, 1) for w in widths[:-1])
        self.blocks = nn.ModuleList(ConvBlock(w) for w in widths[:-1])

    def forward(self, bottleneck, enc_feats):
        if len(enc_feats) != len(self.widths) - 1:
            raise ShapeError(f"expected {len(self.widths) - 1} skip features, got {len(enc_feats)}")
        check_channels(bottleneck, self.widths[-1], "bottleneck")
        x = bottleneck
        for lvl in reversed(range(len(enc_feats))):
            x = self.ups[lvl](x)
            skip = enc_feats[lvl]
            if x.shape[-2:] != skip.shape[-2:]:
                raise ShapeError(f"skip {lvl} misaligned: {tuple(skip.shape[-2:])} vs {tuple(x.shape[-2:])}")
            x = self.blocks[lvl](self.fuse[lvl](torch.cat([x, skip], dim=1)))
        return x


class FeatureNet(nn.Module):
    def __init__(self, base_width=32, scales=3, cross_stage=False):
        super().__init__()
        self.encoder = Encoder(base_width, scales, cross_stage)
        self.decoder = Decoder(base_width, scales)

    def encode(self, f_in, prev=None):
        return self.encoder(f_in, prev)

    def decode(self, bottleneck, enc_feats):
        return self.decoder(bottleneck, enc_feats)

    def forward(self, f_in, prev=None):
        feats, bottleneck = self.encode(f_in, prev)
        dec = self.decode(bottleneck, feats)
        return CrossStageFeatures(feats, dec)


class Merge(nn.Module):
    """Concatenate the stage image with the handed-over feature, 1x1 conv to ``out_width``.

    A missing feature (``None``) is treated as zeros.
    """

    def __init__(self, feat_width, out_width):
        super().__init__()
        self.feat_width = feat_width
        self.proj = conv(3 + feat_width, out_width, 1)

    def forward(self, x_stage, cross_feat=None):
        check_channels(x_stage, 3, "stage image")
        if cross_feat is None:
            b, _, h, w = x_stage.shape
            cross_feat = x_stage.new_zeros(b, self.feat_width, h, w)
        check_channels(cross_feat, self.feat_width, "cross-stage feature")
        check_same_spatial(x_stage, cross_feat, names=("stage image", "cross-stage feature"))
        return self.proj(torch.cat([x_stage, cross_feat], dim=1))
