"""Paired dataset loading, augmentation, and synthetic underwater degradation.

Images are float32 numpy arrays shaped (3, H, W) with values in [0, 1].
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ConfigError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass
class PairedSample:
    input: np.ndarray
    target: np.ndarray
    ident: str


class DatasetError(RuntimeError):
    pass


def read_image(path):
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def to_uint8(img):
    img = np.asarray(img, dtype=np.float64)
    return np.round(255 * np.clip(img, 0, 1)).astype(np.uint8)


def write_png(path, img):
    Image.fromarray(to_uint8(img).transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def resize(img, size):
    """Bilinear resize of a (C, H, W) array to ``size = (H, W)``."""
    if tuple(img.shape[-2:]) == tuple(size):
        return img
    t = torch.from_numpy(np.ascontiguousarray(img))[None]
    out = F.interpolate(t, size=tuple(size), mode="bilinear", align_corners=False, antialias=True)
    return out[0].numpy()


def list_images(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def read_manifest(path):
    return [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]


def load_paired_dataset(input_dir, target_dir, resize_to=(256, 256), manifest=None):
    """Load ``input/`` and ``target/`` images matched by basename (stem).

    Samples are sorted by identifier. ``manifest`` restricts the set to
    the identifiers listed one per line.
    """
    inputs = {p.stem: p for p in list_images(input_dir)}
    targets = {p.stem: p for p in list_images(target_dir)}
    orphans = sorted(set(inputs) ^ set(targets))
    if orphans:
        lines = [f"{k}: no {'target' if k in inputs else 'input'} for {(inputs.get(k) or targets[k])}"
                 for k in orphans]
        raise DatasetError("unmatched files:\n  " + "\n  ".join(lines))
    idents = sorted(inputs)
    if manifest is not None:
        wanted = read_manifest(manifest)
        missing = [w for w in wanted if w not in inputs]
        if missing:
            raise DatasetError(f"manifest lists unknown identifiers: {missing}")
        idents = sorted(wanted)
    samples = []
    for ident in idents:
        x = read_image(inputs[ident])
        y = read_image(targets[ident])
        if resize_to is not None:
            x, y = resize(x, resize_to), resize(y, resize_to)
        elif x.shape != y.shape:
            raise DatasetError(f"{ident}: input {x.shape} and target {y.shape} differ")
        samples.append(PairedSample(x, y, ident))
    return samples


@dataclass
class AugmentConfig:
    hflip: float = 0.5
    vflip: float = 0.5
    rot90: float = 0.5
    transpose: float = 0.5
    mixup: float = 0.0
    mixup_alpha: float = 0.2
    crop: float = 0.0
    crop_fraction: float = 0.75

    @classmethod
    def off(cls):
        return cls(0, 0, 0, 0, 0, 0.2, 0, 0.75)


def _geometric(img, ops):
    for op, k in ops:
        if op == "hflip":
            img = img[:, :, ::-1]
        elif op == "vflip":
            img = img[:, ::-1, :]
        elif op == "rot90":
            img = np.rot90(img, k, axes=(1, 2))
        elif op == "transpose":
            img = img.transpose(0, 2, 1)
        elif op == "crop":
            top, left, ch, cw = k
            h, w = img.shape[-2:]
            img = resize(np.ascontiguousarray(img[:, top:top + ch, left:left + cw]), (h, w))
    return np.ascontiguousarray(img)


def draw_geometric(rng, shape, cfg):
    """Draw the list of geometric ops to apply; the same list is applied to input and target."""
    ops = []
    if rng.random() < cfg.hflip:
        ops.append(("hflip", None))
    if rng.random() < cfg.vflip:
        ops.append(("vflip", None))
    if rng.random() < cfg.rot90:
        ops.append(("rot90", int(rng.integers(1, 4))))
    if rng.random() < cfg.transpose:
        ops.append(("transpose", None))
    if rng.random() < cfg.crop:
        h, w = shape[-2:]
        ch, cw = max(1, int(round(h * cfg.crop_fraction))), max(1, int(round(w * cfg.crop_fraction)))
        ops.append(("crop", (int(rng.integers(0, h - ch + 1)), int(rng.integers(0, w - cw + 1)), ch, cw)))
    return ops


def mixup(sample, partner, coef):
    return PairedSample(
        (coef * sample.input + (1 - coef) * partner.input).astype(sample.input.dtype),
        (coef * sample.target + (1 - coef) * partner.target).astype(sample.target.dtype),
        sample.ident,
    )


def augment(sample, rng, cfg=None, partner=None):
    """Apply paired random flips, right-angle rotation, transposition, crop and mixup.

    Every geometric draw is applied identically to input and target. Mixup
    needs ``partner`` and uses one Beta(alpha, alpha) coefficient for both.
    Rotations and transposes change H/W only for non-square images.
    """
    cfg = cfg or AugmentConfig()
    ops = draw_geometric(rng, sample.input.shape, cfg)
    out = PairedSample(_geometric(sample.input, ops), _geometric(sample.target, ops), sample.ident)
    if partner is not None and rng.random() < cfg.mixup:
        coef = float(rng.beta(cfg.mixup_alpha, cfg.mixup_alpha))
        if partner.input.shape != out.input.shape:
            return out
        out = mixup(out, partner, coef)
    return out


def worker_rng(seed, worker_id, sample_id):
    return np.random.default_rng([seed, worker_id, sample_id])


@dataclass
class DegradeParams:
    transmission: tuple = (0.4, 0.7, 0.8)
    background: tuple = (0.1, 0.5, 0.6)
    noise_std: float = 0.01
    seed: int = 0

    def validate(self):
        t = np.asarray(self.transmission, dtype=np.float64)
        a = np.asarray(self.background, dtype=np.float64)
        if t.shape != (3,) or np.any(t < 0) or np.any(t > 1):
            raise ConfigError("transmission", "need three values in [0, 1]")
        if a.shape != (3,) or np.any(a < 0) or np.any(a > 1):
            raise ConfigError("background", "need three values in [0, 1]")
        if not self.noise_std >= 0:
            raise ConfigError("noise_std", "must be >= 0")
        return self


def synth_degrade(clean, params=None):
    """y_c = t_c * x_c + (1 - t_c) * A_c + n, clamped to [0, 1]."""
    p = (params or DegradeParams()).validate()
    clean = np.asarray(clean, dtype=np.float64)
    t = np.asarray(p.transmission, dtype=np.float64)[:, None, None]
    a = np.asarray(p.background, dtype=np.float64)[:, None, None]
    y = t * clean + (1 - t) * a
    if p.noise_std > 0:
        y = y + np.random.default_rng(p.seed).normal(0.0, p.noise_std, size=y.shape)
    return np.clip(y, 0, 1).astype(np.float32)


def natural_patches(n, size=64, seed=0):
    """Deterministic RGB crops from scikit-image's bundled sample photos."""
    from skimage import data as skdata

    sources = [skdata.astronaut(), skdata.chelsea(), skdata.coffee(), skdata.rocket()]
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        src = sources[i % len(sources)]
        h, w = src.shape[:2]
        side = int(rng.integers(size, min(h, w) // 2 + 1))
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        crop = src[top:top + side, left:left + side].astype(np.float32).transpose(2, 0, 1) / 255.0
        out.append(resize(np.ascontiguousarray(crop), (size, size)))
    return out


def synthetic_pairs(n, size=64, seed=0, params=None):
    """Clean photo patches paired with their synthetic degradations (input=degraded)."""
    params = params or DegradeParams()
    samples = []
    for i, clean in enumerate(natural_patches(n, size, seed)):
        p = DegradeParams(params.transmission, params.background, params.noise_std, seed * 100003 + i)
        samples.append(PairedSample(synth_degrade(clean, p), clean.astype(np.float32), f"synth_{i:04d}"))
    return samples
