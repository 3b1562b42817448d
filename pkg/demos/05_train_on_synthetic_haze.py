"""Train the small model on synthetic haze and look at the stage outputs.

Takes a minute or two on one CPU core.  Every stage emits an image and the
loss supervises all of them equally, so each one is a usable enhancement on
its own.  At this tiny scale the later stages do not necessarily beat the
earlier ones; the per-stage scores at the end show how they compare.
"""
import tempfile

import numpy as np
import torch

from uwunfold.data import synthetic_pairs
from uwunfold.metrics import format_table, psnr
from uwunfold.model import ModelConfig
from uwunfold.train import TrainConfig, evaluate, input_report, load_model, train

train_pairs = synthetic_pairs(16, size=48, seed=0)
test_pairs = synthetic_pairs(6, size=48, seed=7)

with tempfile.TemporaryDirectory() as out:
    cfg = TrainConfig(model=ModelConfig.toy_preset(), max_steps=600, batch_size=4, out_dir=out)
    result = train(cfg, train_pairs)
    for rec in result.records[::100]:
        print(f"step {rec['step']:4d}  lr {rec['lr']:.2e}  loss {rec['total']:.4f}")

    print(format_table([input_report(test_pairs, method="hazy input"),
                        evaluate(result.checkpoint, test_pairs, method="enhanced")]))

    model = load_model(result.checkpoint)
    x = torch.from_numpy(np.stack([p.input for p in test_pairs]))
    with torch.no_grad():
        stages = model(x)[::-1]
    for i, s in enumerate(stages, 1):
        scores = [psnr(s[j].numpy(), p.target) for j, p in enumerate(test_pairs)]
        print(f"stage {i}: mean PSNR {np.mean(scores):.2f} dB")
