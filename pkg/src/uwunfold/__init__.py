"""Deep-unfolding underwater image enhancement."""
from .data import DegradeParams, PairedSample, load_paired_dataset, synth_degrade
from .losses import total_loss
from .metrics import LossConfig, MetricReport, delta_e, psnr, ssim
from .model import ModelConfig, UnfoldNet, build_model
from .train import TrainConfig, ablate, enhance, evaluate, train

__version__ = "0.1.0"
