"""Training, evaluation, enhancement and ablation harness."""
import dataclasses
import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint as ckpt_io
from .data import AugmentConfig, augment, load_paired_dataset, read_image, write_png
from .errors import ConfigError, NumericError
from .losses import loss_terms
from .metrics import LossConfig, MetricReport, psnr
from .model import ModelConfig, build_model

log = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    epochs: int = 300
    batch_size: int = 4
    max_steps: int = None
    lr: float = 2e-4
    lr_min: float = 1e-6
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 1e-4
    restart_period: int = None
    grad_clip: float = None
    seed: int = 0
    precision: str = "float32"
    resize: tuple = (256, 256)
    train_input: str = None
    train_target: str = None
    train_manifest: str = None
    val_input: str = None
    val_target: str = None
    val_every: int = 1
    checkpoint_every: int = 1000
    out_dir: str = "runs/default"
    log_wall_time: bool = True

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps", "must be >= 1")
        if not 0 < self.lr_min < self.lr:
            raise ConfigError("lr_min", "must satisfy 0 < lr_min < lr")
        if self.precision not in DTYPES:
            raise ConfigError("precision", f"one of {sorted(DTYPES)}")
        if self.restart_period is not None and self.restart_period < 1:
            raise ConfigError("restart_period", "must be >= 1")
        self.model.validate()
        self.loss.validate()
        return self

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sub = {
            "model": ModelConfig.from_dict(d.pop("model", {})),
            "loss": _section(LossConfig, "loss", d.pop("loss", {})),
            "augment": _section(AugmentConfig, "augment", d.pop("augment", {})),
        }
        known = {f.name for f in dataclasses.fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown training config field")
        for k in ("betas", "resize"):
            if k in d and d[k] is not None:
                d[k] = tuple(d[k])
        return cls(**sub, **d)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d


def _section(cls, name, d):
    known = {f.name for f in dataclasses.fields(cls)}
    for k in d:
        if k not in known:
            raise ConfigError(f"{name}.{k}", "unknown config field")
    return cls(**d)


def cosine_lr(step, total_steps, lr_max=2e-4, lr_min=1e-6, period=None):
    """Cosine annealing from ``lr_max`` at step 0 to ``lr_min`` at the last step.

    With ``period`` the cycle restarts every ``period`` steps.
    """
    span = period or total_steps
    t = step % span
    if span <= 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * t / (span - 1)))


def batch_indices(step, n, batch_size, seed):
    per_epoch = math.ceil(n / batch_size)
    epoch, j = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return epoch, perm[j * batch_size:(j + 1) * batch_size]


def make_batch(samples, idx, step, cfg, dtype):
    xs, ys = [], []
    n = len(samples)
    for k, i in enumerate(idx):
        rng = np.random.default_rng([cfg.seed, step, k])
        partner = samples[int(rng.integers(n))] if cfg.augment.mixup > 0 else None
        s = augment(samples[i], rng, cfg.augment, partner)
        xs.append(s.input)
        ys.append(s.target)
    x = torch.from_numpy(np.stack(xs)).to(dtype)
    y = torch.from_numpy(np.stack(ys)).to(dtype)
    return x, y


@dataclass
class TrainResult:
    checkpoint: Path
    records: list
    best_checkpoint: Path = None


class RunLog:
    """Append-only JSON-lines record of per-step losses and per-epoch validation."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.records = []

    def append(self, rec):
        self.records.append(rec)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _make_optimizer(model, cfg):
    return torch.optim.AdamW(model.parameters(), lr=cfg.lr, betas=tuple(cfg.betas),
                             weight_decay=cfg.weight_decay)


def _save(path, model, optimizer, cfg, step, extra=None):
    ck = ckpt_io.Checkpoint(
        cfg.model, dict(model.state_dict()), cfg.seed, step,
        ckpt_io.optimizer_state(model, optimizer), dict(extra or {}),
    )
    return ckpt_io.save_checkpoint(path, ck)


def train(cfg, samples=None, val_samples=None, resume=None, stop_at=None):
    """Run the training loop; returns the final checkpoint path and the step records.

    ``samples`` overrides the configured training directories. ``resume``
    continues from a checkpoint (model and optimizer state). ``stop_at``
    ends the run early at that step, keeping the schedule of the full run.
    """
    cfg.validate()
    dtype = DTYPES[cfg.precision]
    if samples is None:
        if not (cfg.train_input and cfg.train_target):
            raise ConfigError("train_input", "no training data given")
        samples = load_paired_dataset(cfg.train_input, cfg.train_target, cfg.resize, cfg.train_manifest)
    if val_samples is None and cfg.val_input and cfg.val_target:
        val_samples = load_paired_dataset(cfg.val_input, cfg.val_target, cfg.resize)
    cfg.model.check_input_size(*samples[0].input.shape[-2:])

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runlog = RunLog(out / "run.jsonl")

    per_epoch = math.ceil(len(samples) / cfg.batch_size)
    total = cfg.max_steps or cfg.epochs * per_epoch
    end = total if stop_at is None else min(stop_at, total)

    model = build_model(cfg.model, cfg.seed, dtype)
    optimizer = _make_optimizer(model, cfg)
    start = 0
    best = {"psnr": -math.inf, "step": None}
    if resume is not None:
        ck = ckpt_io.load_checkpoint(resume)
        if ck.config != cfg.model:
            raise ConfigError("model", "checkpoint model config differs from the run config")
        model.load_state_dict({k: v.to(dtype) for k, v in ck.params.items()})
        ckpt_io.load_optimizer_state(model, optimizer, ck.optim)
        start = ck.step
        best = ck.extra.get("best", best)

    last_good = out / "last.ckpt"
    best_path = out / "best.ckpt"
    t0 = time.perf_counter()
    model.train()
    for step in range(start, end):
        lr = cosine_lr(step, total, cfg.lr, cfg.lr_min, cfg.restart_period)
        for g in optimizer.param_groups:
            g["lr"] = lr
        epoch, idx = batch_indices(step, len(samples), cfg.batch_size, cfg.seed)
        x, y = make_batch(samples, idx, step, cfg, dtype)
        try:
            outputs = model(x)
            total_l, mse_part, ssim_part = loss_terms(outputs, y, cfg.loss)
            if not torch.isfinite(total_l):
                raise NumericError("non-finite loss")
        except NumericError as exc:
            raise NumericError(f"{exc} at step {step}; last good checkpoint: {last_good}") from exc
        optimizer.zero_grad(set_to_none=True)
        total_l.backward()
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()

        rec = {"step": step, "epoch": epoch, "lr": lr, "mse": mse_part.item(),
               "ssim": ssim_part.item(), "total": total_l.item()}
        if cfg.log_wall_time:
            rec["elapsed"] = round(time.perf_counter() - t0, 4)
        runlog.append(rec)

        done = step + 1
        epoch_end = done % per_epoch == 0
        if val_samples and epoch_end and ((done // per_epoch) % cfg.val_every == 0):
            model.eval()
            vpsnr = float(np.mean([psnr(enhance_array(model, s.input), s.target) for s in val_samples]))
            model.train()
            runlog.append({"step": step, "epoch": epoch, "val_psnr": vpsnr})
            if vpsnr > best["psnr"]:
                best = {"psnr": vpsnr, "step": done}
                _save(best_path, model, optimizer, cfg, done, {"best": best})
        if done % cfg.checkpoint_every == 0 or done == end:
            _save(last_good, model, optimizer, cfg, done, {"best": best})

    if start >= end and not last_good.exists():
        _save(last_good, model, optimizer, cfg, start, {"best": best})
    return TrainResult(last_good, runlog.records, best_path if best_path.exists() else None)


def pad_to_multiple(x, multiple):
    """Reflection-pad a (B, C, H, W) tensor on the bottom/right to a multiple of ``multiple``."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="reflect")
    return x, (h, w)


@torch.no_grad()
def enhance_array(model, img, pad_multiple=None):
    """Final-stage output for one (3, H, W) image, padded for the model and clamped to [0, 1]."""
    model.eval()
    dtype = next(model.parameters()).dtype
    m = model.config.size_multiple
    pad_multiple = math.lcm(pad_multiple or m, m)
    x = torch.as_tensor(np.asarray(img)).to(dtype)[None]
    x, (h, w) = pad_to_multiple(x, pad_multiple)
    out = model(x)[0][..., :h, :w]
    return out.clamp(0, 1)[0].cpu().numpy()


def load_model(checkpoint, dtype=None):
    ck = ckpt_io.load_checkpoint(checkpoint)
    return ckpt_io.model_from_checkpoint(ck, dtype)


def evaluate(checkpoint, samples, method="Ours", lpips_fn=None):
    """Metric report of the final-stage output against the targets."""
    model = load_model(checkpoint) if not isinstance(checkpoint, torch.nn.Module) else checkpoint
    report = MetricReport(method)
    for s in samples:
        report.add(s.ident, enhance_array(model, s.input), s.target, lpips_fn)
    return report


def input_report(samples, method="Input"):
    """Metrics of the unprocessed inputs against the targets."""
    report = MetricReport(method)
    for s in samples:
        report.add(s.ident, s.input, s.target)
    return report


def enhance(checkpoint, paths, out_dir, pad_multiple=16):
    """Enhance image files into ``out_dir`` as PNGs; returns (written, failures)."""
    model = load_model(checkpoint)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written, failures = [], []
    for p in map(Path, paths):
        try:
            img = read_image(p)
            target = out_dir / (p.stem + ".png")
            write_png(target, enhance_array(model, img, pad_multiple))
            written.append(target)
        except Exception as exc:
            log.error("enhance failed for %s: %s", p, exc)
            failures.append((p, str(exc)))
    return written, failures


# row order of the module ablation table; the full model comes last
ABLATION_FLAGS = [
    (False, True, True),
    (True, False, True),
    (True, True, False),
    (False, True, False),
    (False, False, True),
    (True, False, False),
    (True, True, True),
]
FULL = (True, True, True)


@dataclass
class AblationReport:
    rows: list  # [(flags, MetricReport)]

    def report(self, flags):
        return dict(self.rows)[tuple(flags)]

    def to_csv(self, delimiter=","):
        mark = {True: "✓", False: "✗"}
        lines = [delimiter.join(["CPGB", "NAGDM", "ISF-Former", "PSNR ↑", "SSIM ↑", "ΔE ↓", "Reference"])]
        for flags, rep in self.rows:
            vals = [mark[f] for f in flags] + rep.row()[1:4] + ["yes" if flags == FULL else ""]
            lines.append(delimiter.join(vals))
        return "\n".join(lines) + "\n"

    def soft_ordering(self, margin=0.5):
        """Per single-module ablation: full-model PSNR >= ablated PSNR - margin."""
        full = self.report(FULL).mean("psnr")
        single = [f for f, _ in self.rows if sum(f) == 2]
        return {f: full >= self.report(f).mean("psnr") - margin for f in single}


def ablate(cfg, samples, eval_samples=None, flags_list=None, max_steps=None):
    """Train and evaluate each module combination with otherwise identical settings."""
    eval_samples = eval_samples if eval_samples is not None else samples
    rows = []
    for flags in flags_list or ABLATION_FLAGS:
        c, n, i = flags
        sub = dataclasses.replace(
            cfg,
            model=dataclasses.replace(cfg.model, use_cpgb=c, use_nagdm=n, use_isf_former=i),
            max_steps=max_steps or cfg.max_steps,
            out_dir=str(Path(cfg.out_dir) / f"cpgb{int(c)}_nagdm{int(n)}_isf{int(i)}"),
        )
        result = train(sub, samples)
        name = "+".join(k for k, on in zip(("CPGB", "NAGDM", "ISF-Former"), flags) if on) or "none"
        rows.append((tuple(flags), evaluate(result.checkpoint, eval_samples, method=name)))
    return AblationReport(rows)
