"""Full-reference quality metrics: PSNR, windowed SSIM, CIEDE2000 color difference,
and the benchmark report table."""
import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, ShapeError

log = logging.getLogger(__name__)

COLUMNS = ("Method", "PSNR ↑", "SSIM ↑", "ΔE ↓")
LPIPS_COLUMN = "LPIPS ↓"


@dataclass
class LossConfig:
    lam: float = 0.4
    window: int = 11
    sigma: float = 1.5
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2
    stage_weights: tuple = None

    def validate(self):
        if self.lam < 0:
            raise ConfigError("lam", "must be >= 0")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigError("c1/c2", "must be > 0")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError("window", "must be a positive odd integer")
        if self.sigma <= 0:
            raise ConfigError("sigma", "must be > 0")
        return self


def _as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _same_shape(a, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def gaussian_window(size, sigma, dtype=torch.float64, device=None):
    r = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2
    g = torch.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _blur(x, g):
    # separable 'valid' Gaussian filter over (N, C, H, W)
    c = x.shape[1]
    kh = g.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    kw = g.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    return F.conv2d(F.conv2d(x, kh, groups=c), kw, groups=c)


def ssim_map(a, b, cfg=None):
    cfg = (cfg or LossConfig()).validate()
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b)
    if a.dim() == 3:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < cfg.window:
        raise ShapeError(f"image {tuple(a.shape[-2:])} smaller than the {cfg.window}x{cfg.window} SSIM window")
    g = gaussian_window(cfg.window, cfg.sigma, a.dtype, a.device)
    mu_a, mu_b = _blur(a, g), _blur(b, g)
    var_a = _blur(a * a, g) - mu_a ** 2
    var_b = _blur(b * b, g) - mu_b ** 2
    cov = _blur(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + cfg.c1) * (2 * cov + cfg.c2)
    den = (mu_a ** 2 + mu_b ** 2 + cfg.c1) * (var_a + var_b + cfg.c2)
    return num / den


def ssim_global(a, b, cfg=None):
    """SSIM from whole-image statistics per channel (no window), averaged over channels."""
    cfg = (cfg or LossConfig()).validate()
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b)
    a = a.flatten(-2)
    b = b.flatten(-2)
    mu_a, mu_b = a.mean(-1), b.mean(-1)
    var_a = ((a - mu_a[..., None]) ** 2).mean(-1)
    var_b = ((b - mu_b[..., None]) ** 2).mean(-1)
    cov = ((a - mu_a[..., None]) * (b - mu_b[..., None])).mean(-1)
    num = (2 * mu_a * mu_b + cfg.c1) * (2 * cov + cfg.c2)
    den = (mu_a ** 2 + mu_b ** 2 + cfg.c1) * (var_a + var_b + cfg.c2)
    return (num / den).mean()


def ssim(a, b, cfg=None):
    """Mean SSIM over 'valid' Gaussian windows and channels (and batch, if any)."""
    return ssim_map(a, b, cfg).mean()


def psnr(a, b, max_value=1.0):
    """PSNR in dB over all channels jointly; ``inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10 * np.log10(max_value ** 2 / mse))


# sRGB (D65) -> XYZ
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

clamp_events = {"count": 0}


def srgb_to_lab(rgb):
    """Convert sRGB values in [0, 1] (channel-last) to CIELab under D65."""
    rgb = np.asarray(rgb, dtype=np.float64)
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB2XYZ.T / _WHITE_D65
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def ciede2000(lab1, lab2, kL=1.0, kC=1.0, kH=1.0):
    """CIEDE2000 color difference between Lab arrays (channel-last), elementwise."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = np.moveaxis(lab1, -1, 0)
    L2, a2, b2 = np.moveaxis(lab2, -1, 0)

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    Cbar7 = ((C1 + C2) / 2) ** 7
    G = 0.5 * (1 - np.sqrt(Cbar7 / (Cbar7 + 25.0 ** 7)))
    a1p = (1 + G) * a1
    a2p = (1 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360
    # hue is undefined for achromatic colors
    h1p = np.where(C1p == 0, 0.0, h1p)
    h2p = np.where(C2p == 0, 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p
    zero_c = C1p * C2p == 0
    dh = h2p - h1p
    dh = np.where(dh > 180, dh - 360, dh)
    dh = np.where(dh < -180, dh + 360, dh)
    dh = np.where(zero_c, 0.0, dh)
    dHp = 2 * np.sqrt(C1p * C2p) * np.sin(np.radians(dh) / 2)

    Lbarp = (L1 + L2) / 2
    Cbarp = (C1p + C2p) / 2
    hsum = h1p + h2p
    hbarp = np.where(
        np.abs(h1p - h2p) <= 180, hsum / 2,
        np.where(hsum < 360, (hsum + 360) / 2, (hsum - 360) / 2),
    )
    hbarp = np.where(zero_c, hsum, hbarp)

    T = (1 - 0.17 * np.cos(np.radians(hbarp - 30))
         + 0.24 * np.cos(np.radians(2 * hbarp))
         + 0.32 * np.cos(np.radians(3 * hbarp + 6))
         - 0.20 * np.cos(np.radians(4 * hbarp - 63)))
    dtheta = 30 * np.exp(-(((hbarp - 275) / 25) ** 2))
    Cbarp7 = Cbarp ** 7
    RC = 2 * np.sqrt(Cbarp7 / (Cbarp7 + 25.0 ** 7))
    SL = 1 + 0.015 * (Lbarp - 50) ** 2 / np.sqrt(20 + (Lbarp - 50) ** 2)
    SC = 1 + 0.045 * Cbarp
    SH = 1 + 0.015 * Cbarp * T
    RT = -np.sin(np.radians(2 * dtheta)) * RC

    tl = dLp / (kL * SL)
    tc = dCp / (kC * SC)
    th = dHp / (kH * SH)
    return np.sqrt(tl ** 2 + tc ** 2 + th ** 2 + RT * tc * th)


def _to_hwc_unit(img, name):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"{name}: expected a 3xHxW image, got {img.shape}")
    if img.min() < 0 or img.max() > 1:
        clamp_events["count"] += 1
        log.warning("%s: values outside [0, 1] clamped before Lab conversion", name)
        img = np.clip(img, 0, 1)
    return np.moveaxis(img, 0, -1)


def delta_e(a, b):
    """Mean per-pixel CIEDE2000 difference between two 3xHxW sRGB images in [0, 1]."""
    _same_shape(np.asarray(a), np.asarray(b))
    la = srgb_to_lab(_to_hwc_unit(a, "a"))
    lb = srgb_to_lab(_to_hwc_unit(b, "b"))
    return float(ciede2000(la, lb).mean())


def _fmt(v):
    if v is None:
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.3f}"


def _json_num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class MetricReport:
    method: str
    per_image: list = field(default_factory=list)
    has_lpips: bool = False

    def add(self, ident, pred, target, lpips_fn=None):
        row = {
            "id": ident,
            "psnr": psnr(pred, target),
            "ssim": float(ssim(pred, target)),
            "delta_e": delta_e(pred, target),
        }
        if lpips_fn is not None:
            row["lpips"] = float(lpips_fn(pred, target))
            self.has_lpips = True
        self.per_image.append(row)
        return row

    def mean(self, key):
        vals = [r[key] for r in self.per_image]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def means(self):
        keys = ["psnr", "ssim", "delta_e"] + (["lpips"] if self.has_lpips else [])
        return {k: self.mean(k) for k in keys}

    def columns(self):
        return COLUMNS + ((LPIPS_COLUMN,) if self.has_lpips else ())

    def row(self):
        m = self.means
        vals = [self.method, _fmt(m["psnr"]), _fmt(m["ssim"]), _fmt(m["delta_e"])]
        if self.has_lpips:
            vals.append(_fmt(m["lpips"]))
        return vals

    def to_csv(self):
        return format_table([self])

    def to_json(self):
        doc = {
            "method": self.method,
            "columns": list(self.columns()),
            "mean": {k: _json_num(v) for k, v in self.means.items()},
            "per_image": [{k: _json_num(v) for k, v in r.items()} for r in self.per_image],
        }
        return json.dumps(doc, indent=2, ensure_ascii=False)


def format_table(reports, delimiter=","):
    """One row of means per method, under the benchmark column header."""
    lpips = any(r.has_lpips for r in reports)
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(COLUMNS + ((LPIPS_COLUMN,) if lpips else ()))
    for r in reports:
        row = r.row()
        if lpips and not r.has_lpips:
            row.append("")
        w.writerow(row)
    return buf.getvalue()


def evaluate_pairs(preds, targets, method="Ours", ids=None, lpips_fn=None):
    report = MetricReport(method)
    ids = ids or [str(i) for i in range(len(preds))]
    if not (len(preds) == len(targets) == len(ids)):
        raise ShapeError("preds, targets and ids must have equal length")
    for ident, p, t in zip(ids, preds, targets):
        report.add(ident, p, t, lpips_fn)
    return report
