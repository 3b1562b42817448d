"""Three-stage unfolded enhancement network (color prior -> gradient step ->
proximal FeatureNet/ISF-Former per stage)."""
import dataclasses
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .cpgb import CPGB
from .errors import ConfigError
from .feature_net import FeatureNet, Merge
from .isf_former import ISFFormer
from .layers import check_channels, conv
from .nagdm import GradientStep


@dataclass
class ModelConfig:
    stages: int = 3
    base_width: int = 32
    scales: int = 3
    isf_width: int = 32
    inr_widths: tuple = (3, 64, 64, 3)
    inr_activation: str = "sine"
    inr_omega: float = 30.0
    rir_width: int = 32
    rir_groups: int = 2
    rir_blocks: int = 2
    rir_kernel: int = 3
    narb_expansion: int = 1
    narb_kernel: int = 3
    step_init: float = 0.5
    attn_heads: int = 1
    ffn_expansion: int = 2
    use_cpgb: bool = True
    use_nagdm: bool = True
    use_isf_former: bool = True
    toy: bool = False

    @classmethod
    def toy_preset(cls, **overrides):
        cfg = dict(base_width=8, scales=2, isf_width=8, inr_widths=(3, 16, 16, 3),
                   rir_width=8, toy=True)
        cfg.update(overrides)
        return cls(**cfg)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown model config field")
        d = dict(d)
        if "inr_widths" in d:
            d["inr_widths"] = tuple(d["inr_widths"])
        return cls(**d)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["inr_widths"] = list(self.inr_widths)
        return d

    @property
    def size_multiple(self):
        return 2 ** (self.scales - 1)

    def validate(self):
        positive = ["stages", "base_width", "scales", "isf_width", "rir_width",
                    "rir_groups", "rir_blocks", "narb_expansion", "attn_heads", "ffn_expansion"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.scales < 2:
            raise ConfigError("scales", "must be >= 2")
        if self.isf_width != self.base_width:
            raise ConfigError("isf_width", "must equal base_width (decoder output width)")
        if self.isf_width % self.attn_heads:
            raise ConfigError("attn_heads", "must divide isf_width")
        for name in ("rir_kernel", "narb_kernel"):
            if getattr(self, name) % 2 == 0:
                raise ConfigError(name, "must be odd")
        w = tuple(self.inr_widths)
        if len(w) < 2 or w[0] != 3 or w[-1] != 3 or min(w) < 1:
            raise ConfigError("inr_widths", "must start and end with 3")
        if self.inr_activation not in ("sine", "tanh"):
            raise ConfigError("inr_activation", "must be 'sine' or 'tanh'")
        return self

    def check_input_size(self, h, w):
        m = self.size_multiple
        if h % m or w % m:
            raise ConfigError("input_size", f"{h}x{w} is not divisible by {m}")


class UnfoldNet(nn.Module):
    """Forward returns ``[stage_S, ..., stage_1]`` images, each (B, 3, H, W)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        c = config
        self.cpgb = CPGB(c.inr_widths, c.inr_activation, c.inr_omega, c.rir_width,
                         c.rir_groups, c.rir_blocks, c.rir_kernel) if c.use_cpgb else None
        self.steps = nn.ModuleList(
            GradientStep(c.narb_expansion, c.narb_kernel, c.step_init, enabled=c.use_nagdm)
            for _ in range(c.stages)
        )
        n_inner = c.stages - 1
        self.embed = conv(3, c.base_width, 3) if n_inner else None
        # merges[k] feeds stage k + 2; the last one feeds the final stage
        self.merges = nn.ModuleList(Merge(c.isf_width, c.base_width) for _ in range(max(n_inner, 1)))
        self.feature_nets = nn.ModuleList(
            FeatureNet(c.base_width, c.scales, cross_stage=i > 0) for i in range(n_inner)
        )
        self.isf = nn.ModuleList(
            ISFFormer(c.isf_width, c.attn_heads, c.ffn_expansion, enabled=c.use_isf_former)
            for _ in range(n_inner)
        )
        self.final = conv(c.base_width, 3, 3)

    def color_prior(self, img):
        if self.cpgb is None:
            return torch.zeros_like(img)
        return self.cpgb(img)

    def forward(self, img):
        check_channels(img, 3, "image")
        self.config.check_input_size(*img.shape[-2:])
        prior = self.color_prior(img)
        x_prev = img
        handoff = None
        cross = None
        outputs = []
        for i in range(self.config.stages):
            x = self.steps[i](x_prev, img, prior)
            if i == self.config.stages - 1:
                merged = self.merges[-1](x, handoff)
                outputs.append(self.final(merged) + img)
                break
            f_in = self.embed(x) if i == 0 else self.merges[i - 1](x, handoff)
            cross = self.feature_nets[i](f_in, cross)
            handoff, x_prev = self.isf[i](cross.dec_feat, x)
            outputs.append(x_prev)
        return outputs[::-1]


def build_model(config: ModelConfig, seed=0, dtype=torch.float32):
    """Construct and seed-initialize a model; the global RNG state is left untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = UnfoldNet(config)
    return model.to(dtype)


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())
