"""Acceptance criteria, one test (or group) per criterion.

The long training runs (C7, C8, C9) take several minutes on a CPU.
"""
import math
import time

import numpy as np
import pytest
import torch

from uwunfold import checkpoint as ckpt_io
from uwunfold.cpgb import CPGB, RIR
from uwunfold.data import AugmentConfig, DegradeParams, PairedSample, synthetic_pairs
from uwunfold.feature_net import CrossStageFeatures, FeatureNet, Merge
from uwunfold.isf_former import ISFFormer, PSATBlock, attention_weights
from uwunfold.layers import zero_branch_terminals
from uwunfold.losses import total_loss
from uwunfold.metrics import ciede2000, evaluate_pairs, psnr, ssim
from uwunfold.model import ModelConfig, build_model
from uwunfold.nagdm import NARB, GradientStep
from uwunfold.train import (
    ABLATION_FLAGS, FULL, TrainConfig, ablate, cosine_lr, enhance, evaluate, input_report, train,
)

from ciede2000_pairs import PAIRS
from conftest import fd_check
from test_metrics import brute_force_ssim


def run_cfg(tmp_path, **kw):
    base = dict(model=ModelConfig.toy_preset(), out_dir=str(tmp_path), checkpoint_every=10**9,
                log_wall_time=False)
    base.update(kw)
    return TrainConfig(**base)


# C1 ---------------------------------------------------------------------------

@pytest.mark.criterion(1, "evaluate report header lists the standard comparison columns (PSNR ↑, SSIM ↑, ΔE ↓, LPIPS ↓)")
def test_c1_report_header(tmp_path):
    pairs = synthetic_pairs(2, 16)
    model = build_model(ModelConfig.toy_preset())
    ck = ckpt_io.save_checkpoint(tmp_path / "m.ckpt", ckpt_io.Checkpoint(model.config, dict(model.state_dict())))
    rep = evaluate(ck, pairs)
    assert rep.to_csv().splitlines()[0].split(",") == ["Method", "PSNR ↑", "SSIM ↑", "ΔE ↓"]
    rep = evaluate(ck, pairs, lpips_fn=lambda a, b: 0.0)
    assert rep.to_csv().splitlines()[0].split(",") == ["Method", "PSNR ↑", "SSIM ↑", "ΔE ↓", "LPIPS ↓"]


# C2 ---------------------------------------------------------------------------

def _gradient_cases():
    g = torch.Generator().manual_seed(0)

    def img(h=8):
        return torch.rand(1, 3, h, h, generator=g)

    cases = []
    m = CPGB(inr_widths=(3, 16, 16, 3), rir_width=8)
    x = img()
    cases.append(("cpgb", m, lambda m=m, x=x: m(x)))
    m = GradientStep()
    a, b, c = img(), img(), img()
    cases.append(("nagdm", m, lambda m=m, a=a, b=b, c=c: m(a, b, c)))
    m = ISFFormer(8)
    d, x = torch.randn(1, 8, 8, 8, generator=g), img()
    cases.append(("isf_former", m, lambda m=m, d=d, x=x: torch.cat(m(d, x), 1)))
    m = FeatureNet(4, 2, cross_stage=True)
    f = torch.randn(1, 4, 16, 16, generator=g)
    prev = CrossStageFeatures([torch.randn(1, 4, 16, 16, generator=g)], torch.randn(1, 4, 16, 16, generator=g))
    cases.append(("feature_net", m, lambda m=m, f=f, p=prev: m(f, p).dec_feat))
    m = Merge(4, 4)
    x, f = img(), torch.randn(1, 4, 8, 8, generator=g)
    cases.append(("merge", m, lambda m=m, x=x, f=f: m(x, f)))
    cfg = ModelConfig.toy_preset(base_width=4, isf_width=4, rir_width=4, inr_widths=(3, 8, 3))
    m = build_model(cfg, seed=0, dtype=torch.float64)
    x = img()
    cases.append(("unfold_pipeline", m, lambda m=m, x=x: torch.cat(m(x), 1)))
    p = torch.nn.Parameter(torch.rand(1, 3, 16, 16, generator=g))
    holder = torch.nn.Module()
    holder.pred = p
    t = img(16)
    cases.append(("losses", holder, lambda p=p, t=t: total_loss([p], t).reshape(1)))
    return cases


@pytest.mark.criterion(2, "finite-difference gradients on every module, rel. err < 1e-3, < 5 min")
def test_c2_gradient_integrity(double):
    start = time.perf_counter()
    worst = {}
    for name, module, fn in _gradient_cases():
        module.double()
        errs = fd_check(fn, module, eps=1e-4)
        worst[name] = max(errs.values())
        print(f"  {name:16s} params={len(errs):3d} worst rel. err={worst[name]:.2e}")
    elapsed = time.perf_counter() - start
    assert all(v < 1e-3 for v in worst.values()), worst
    assert elapsed < 300


# C3 ---------------------------------------------------------------------------

@pytest.mark.criterion(3, "residual/identity suite exact in working precision")
def test_c3_zero_final_conv():
    model = build_model(ModelConfig.toy_preset())
    with torch.no_grad():
        model.final.weight.zero_()
        model.final.bias.zero_()
    img = torch.rand(2, 3, 32, 32)
    assert torch.equal(model(img)[0], img)


@pytest.mark.criterion(3, "residual/identity suite exact in working precision")
def test_c3_zero_step():
    torch.manual_seed(0)
    step = GradientStep(step_init=0.0)
    x, y, p = torch.rand(3, 1, 3, 16, 16).unbind(0)
    assert torch.equal(step(x, y, p), x)


@pytest.mark.criterion(3, "residual/identity suite exact in working precision")
def test_c3_zero_branches():
    narb, rir, psat = NARB(), RIR(8), PSATBlock(8)
    for m in (narb, rir, psat):
        zero_branch_terminals(m)
    x = torch.rand(1, 3, 16, 16)
    f = torch.randn(1, 8, 16, 16)
    assert torch.equal(narb(x), x)
    assert torch.equal(rir(f), f)
    assert torch.equal(psat(f), 2 * f)


# C4 ---------------------------------------------------------------------------

@pytest.mark.criterion(4, "softmax rows sum to 1 ± 1e-5 (100 inputs); Q=0 gives uniform 1/C")
def test_c4_attention_normalization():
    g = torch.Generator().manual_seed(0)
    worst = 0.0
    for i in range(100):
        c = 1 + i % 16
        q = torch.randn(1, 1, c, 64, generator=g) * 4
        k = torch.randn(1, 1, c, 64, generator=g) * 4
        w = attention_weights(q, k)
        worst = max(worst, (w.sum(-1) - 1).abs().max().item())
    assert worst <= 1e-5
    for c in (1, 2, 4, 8, 16):
        k = torch.randn(1, 1, c, 16, generator=g)
        w = attention_weights(torch.zeros_like(k), k)
        assert torch.equal(w, torch.full_like(w, 1.0 / c))


# C5 ---------------------------------------------------------------------------

@pytest.mark.criterion(5, "SSIM vs brute force (50 pairs, 1e-6); CIEDE2000 34 pairs (1e-4); PSNR cases (1e-6)")
def test_c5_ssim_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        a, b = rng.random((2, 3, 32, 32))
        worst = max(worst, abs(ssim(a, b).item() - brute_force_ssim(a, b)))
    assert worst < 1e-6


@pytest.mark.criterion(5, "SSIM vs brute force (50 pairs, 1e-6); CIEDE2000 34 pairs (1e-4); PSNR cases (1e-6)")
def test_c5_ciede2000_reference_pairs():
    p = np.array(PAIRS)
    assert len(p) == 34
    assert np.abs(ciede2000(p[:, :3], p[:, 3:6]) - p[:, 6]).max() < 1e-4


@pytest.mark.criterion(5, "SSIM vs brute force (50 pairs, 1e-6); CIEDE2000 34 pairs (1e-4); PSNR cases (1e-6)")
def test_c5_psnr_closed_forms():
    z = np.zeros((3, 8, 8))
    assert abs(psnr(z, np.ones_like(z)) - 0.0) < 1e-6
    assert abs(psnr(np.full_like(z, 0.5), np.full_like(z, 0.75)) - 12.0412) < 1e-4
    assert abs(psnr(np.full_like(z, 0.5), np.full_like(z, 0.75)) - 10 * math.log10(16)) < 1e-6


# C6 ---------------------------------------------------------------------------

@pytest.mark.criterion(6, "total_loss(target, target) = 0; logged total = MSE + 0.4·(1−SSIM) every step ± 1e-7")
def test_c6_loss_contract(tmp_path):
    t = torch.rand(2, 3, 32, 32)
    assert total_loss([t, t, t], t).item() == 0.0
    res = train(run_cfg(tmp_path, max_steps=40), synthetic_pairs(8, 32))
    assert len(res.records) == 40
    worst = max(abs(r["total"] - (r["mse"] + 0.4 * r["ssim"])) for r in res.records)
    assert worst <= 1e-7


# C7 ---------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(7, "overfit one batch: 500 AdamW steps, final loss <= 10% of initial, < 10 min")
def test_c7_overfit_one_batch(tmp_path):
    pairs = synthetic_pairs(4, 64, seed=1)
    cfg = run_cfg(tmp_path, augment=AugmentConfig.off(), batch_size=4, max_steps=500)
    start = time.perf_counter()
    res = train(cfg, pairs)
    elapsed = time.perf_counter() - start
    first, last = res.records[0]["total"], res.records[-1]["total"]
    print(f"  initial={first:.4f} final={last:.4f} ratio={last / first:.3f} time={elapsed:.0f}s")
    assert last <= 0.10 * first
    assert elapsed < 600


# C8 ---------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(8, "synthetic recovery: +3 dB PSNR and -30% ΔE after 2000 steps, < 30 min")
def test_c8_synthetic_recovery(tmp_path):
    pairs = synthetic_pairs(20, 64, seed=0, params=DegradeParams((0.4, 0.7, 0.8), (0.1, 0.5, 0.6), 0.01))
    cfg = run_cfg(tmp_path, max_steps=2000)
    start = time.perf_counter()
    res = train(cfg, pairs)
    before = input_report(pairs).means
    after = evaluate(res.checkpoint, pairs).means
    elapsed = time.perf_counter() - start
    print(f"  degraded: PSNR={before['psnr']:.2f} ΔE={before['delta_e']:.2f}; "
          f"enhanced: PSNR={after['psnr']:.2f} ΔE={after['delta_e']:.2f}; time={elapsed:.0f}s")
    assert after["psnr"] - before["psnr"] >= 3.0
    assert after["delta_e"] <= 0.7 * before["delta_e"]
    assert elapsed < 1800


# C9 ---------------------------------------------------------------------------

@pytest.mark.criterion(9, "all 7 ablation rows build, train 10 steps and evaluate")
def test_c9_switchboard_constructible(tmp_path):
    pairs = synthetic_pairs(4, 16)
    report = ablate(run_cfg(tmp_path, batch_size=2), pairs, max_steps=10)
    assert [f for f, _ in report.rows] == ABLATION_FLAGS
    assert report.to_csv().splitlines()[-1].endswith(",yes")
    assert all(np.isfinite(r.means["psnr"]) for _, r in report.rows)


@pytest.mark.slow
@pytest.mark.criterion(9, "full model PSNR >= each single-module ablation - 0.5 dB (desk scale)")
def test_c9_soft_ordering(tmp_path):
    # same scale as the synthetic-recovery run; scored on 20 held-out crops
    train_pairs = synthetic_pairs(20, 64, seed=0)
    held_out = synthetic_pairs(20, 64, seed=1)
    flags = [f for f in ABLATION_FLAGS if sum(f) >= 2]
    report = ablate(run_cfg(tmp_path, max_steps=2000), train_pairs, held_out, flags_list=flags)
    print(report.to_csv())
    assert all(report.soft_ordering(0.5).values())


# C10 --------------------------------------------------------------------------

@pytest.mark.criterion(10, "byte-identical checkpoints, resume equivalence, byte-identical enhance output")
def test_c10_determinism_and_resume(tmp_path):
    pairs = synthetic_pairs(6, 32)
    cfg = lambda d: run_cfg(tmp_path / d, max_steps=12, batch_size=2)
    a = train(cfg("a"), pairs)
    b = train(cfg("b"), pairs)
    assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()
    assert a.records == b.records

    part = train(cfg("c"), pairs, stop_at=5)
    rest = train(cfg("c"), pairs, resume=part.checkpoint)
    assert [r["total"] for r in part.records + rest.records] == [r["total"] for r in a.records]

    again = tmp_path / "again.ckpt"
    ckpt_io.save_checkpoint(again, ckpt_io.load_checkpoint(a.checkpoint))
    assert again.read_bytes() == a.checkpoint.read_bytes()

    from uwunfold.data import write_png
    src = tmp_path / "in.png"
    write_png(src, pairs[0].input)
    o1, _ = enhance(a.checkpoint, [src], tmp_path / "e1")
    o2, _ = enhance(a.checkpoint, [src], tmp_path / "e2")
    assert o1[0].read_bytes() == o2[0].read_bytes()


# C11 --------------------------------------------------------------------------

@pytest.mark.criterion(11, "cosine schedule: lr(0) = 2e-4 and lr(final) = 1e-6 within 1e-9")
def test_c11_schedule(tmp_path):
    cfg = TrainConfig()
    total = cfg.epochs * math.ceil(800 / cfg.batch_size)
    assert abs(cosine_lr(0, total, cfg.lr, cfg.lr_min) - 2e-4) <= 1e-9
    assert abs(cosine_lr(total - 1, total, cfg.lr, cfg.lr_min) - 1e-6) <= 1e-9
    res = train(run_cfg(tmp_path, max_steps=7, batch_size=2), synthetic_pairs(4, 16))
    assert abs(res.records[0]["lr"] - 2e-4) <= 1e-9
    assert abs(res.records[-1]["lr"] - 1e-6) <= 1e-9
