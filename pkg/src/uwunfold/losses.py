"""Training objective: MSE plus a weighted SSIM dissimilarity, summed over stage outputs."""
import torch

from .errors import ShapeError
from .metrics import LossConfig, ssim


def mse_loss(pred, target):
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def loss_terms(outputs, target, cfg=None):
    """Return ``(total, mse_part, ssim_part)`` with total = mse_part + lam * ssim_part.

    ``ssim_part`` is the stage-weighted sum of ``1 - SSIM``.
    """
    cfg = (cfg or LossConfig()).validate()
    if not outputs:
        raise ShapeError("no stage outputs given")
    weights = cfg.stage_weights or (1.0,) * len(outputs)
    if len(weights) != len(outputs):
        raise ShapeError(f"{len(weights)} stage weights for {len(outputs)} outputs")
    mse_part = 0.0
    ssim_part = 0.0
    for w, out in zip(weights, outputs):
        mse_part = mse_part + w * mse_loss(out, target)
        ssim_part = ssim_part + w * (1 - ssim(out, target, cfg))
    return mse_part + cfg.lam * ssim_part, mse_part, ssim_part


def total_loss(outputs, target, cfg=None):
    return loss_terms(outputs, target, cfg)[0]
