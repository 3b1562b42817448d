"""Command-line entry point: ``uwunfold {train,eval,enhance,ablate,degrade}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or numeric error.
"""
import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from .data import DatasetError, DegradeParams, list_images, load_paired_dataset, read_image, \
    synth_degrade, synthetic_pairs, write_png
from .errors import CheckpointError, ConfigError, NumericError
from .metrics import format_table
from .model import ModelConfig
from .train import TrainConfig, ablate, enhance, evaluate, input_report, train

log = logging.getLogger("uwunfold")

FLAG_NAMES = {"cpgb": "use_cpgb", "nagdm": "use_nagdm", "isf": "use_isf_former"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config(args):
    data = {}
    if args.config:
        try:
            data = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError("config", str(exc)) from exc
    model = data.get("model", {})
    if getattr(args, "toy", False):
        model = {**ModelConfig.toy_preset().to_dict(), **model}
    for name in getattr(args, "disable", None) or []:
        model[FLAG_NAMES[name]] = False
    data["model"] = model
    cfg = TrainConfig.from_dict(data)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "steps", None):
        cfg.max_steps = args.steps
    return cfg.validate()


def training_samples(args, cfg):
    if args.synthetic:
        return synthetic_pairs(args.synthetic, args.size, seed=cfg.seed)
    return None


def cmd_train(args):
    cfg = load_config(args)
    result = train(cfg, training_samples(args, cfg), resume=args.checkpoint)
    last = result.records[-1] if result.records else {}
    print(json.dumps({"checkpoint": str(result.checkpoint), "steps": len(result.records),
                      "final_total": last.get("total")}))


def cmd_eval(args):
    resize = None if args.no_resize else tuple(args.resize)
    samples = load_paired_dataset(args.input, args.target, resize)
    reports = []
    if args.with_input:
        reports.append(input_report(samples))
    rep = evaluate(args.checkpoint, samples, method=args.method)
    reports.append(rep)
    table = format_table(reports)
    print(table, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(table)
        (out / "metrics.json").write_text(rep.to_json())


def cmd_enhance(args):
    written, failures = enhance(args.checkpoint, args.images, args.out, args.pad_multiple)
    for p in written:
        print(p)
    for p, msg in failures:
        print(f"error: {p}: {msg}", file=sys.stderr)
    return 2 if failures else 0


def cmd_ablate(args):
    cfg = load_config(args)
    samples = training_samples(args, cfg)
    if samples is None:
        samples = load_paired_dataset(cfg.train_input, cfg.train_target, cfg.resize)
    report = ablate(cfg, samples)
    text = report.to_csv()
    print(text, end="")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "ablation.csv").write_text(text)


def cmd_degrade(args):
    out = Path(args.out)
    (out / "input").mkdir(parents=True, exist_ok=True)
    (out / "target").mkdir(parents=True, exist_ok=True)
    for i, path in enumerate(list_images(args.input)):
        clean = read_image(path)
        p = DegradeParams(tuple(args.transmission), tuple(args.background), args.noise, args.seed * 100003 + i)
        write_png(out / "input" / f"{path.stem}.png", synth_degrade(clean, p))
        write_png(out / "target" / f"{path.stem}.png", clean)
        print(out / "input" / f"{path.stem}.png")


def build_parser():
    p = Parser(prog="uwunfold", description="Deep-unfolding underwater image enhancement.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp):
        sp.add_argument("--config", help="YAML config with model/loss/augment sections")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--toy", action="store_true", help="small desk-scale model preset")
        sp.add_argument("--disable", action="append", choices=sorted(FLAG_NAMES))
        sp.add_argument("--steps", type=int, help="override the total number of optimizer steps")
        sp.add_argument("--synthetic", type=int, metavar="N",
                        help="train on N synthetic degraded/clean pairs instead of a dataset")
        sp.add_argument("--size", type=int, default=64, help="side length of synthetic pairs")

    sp = sub.add_parser("train")
    common(sp)
    sp.add_argument("--checkpoint", help="resume from this checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--out")
    sp.add_argument("--method", default="Ours")
    sp.add_argument("--resize", type=int, nargs=2, default=(256, 256))
    sp.add_argument("--no-resize", action="store_true")
    sp.add_argument("--with-input", action="store_true", help="also report the raw inputs")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("enhance")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pad-multiple", type=int, default=16)
    sp.add_argument("images", nargs="+")
    sp.set_defaults(func=cmd_enhance)

    sp = sub.add_parser("ablate")
    common(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("degrade")
    sp.add_argument("--input", required=True, help="directory of clean images")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    d = DegradeParams()
    sp.add_argument("--transmission", type=float, nargs=3, default=d.transmission)
    sp.add_argument("--background", type=float, nargs=3, default=d.background)
    sp.add_argument("--noise", type=float, default=d.noise_std)
    sp.set_defaults(func=cmd_degrade)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (ConfigError, DatasetError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, CheckpointError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
