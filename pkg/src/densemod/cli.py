"""Command-line entry points.

Subcommands: ``train``, ``infer``, ``degrade``, ``eval``, ``features``.
Every command exits 0 on success; failures print one ``error: ...`` line to
stderr and exit 1.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import nn
from . import tensor as dt
from .config import load_config
from .degrade import DegradationSpec, make_pair
from .metrics import MetricReport
from .pngio import load_image, save_image
from .tensor import Tensor
from .train import load_model, run_training

CLI_MODES = {"sr": "super_resolution", "enhance": "detail_enhance"}


def cmd_train(args):
    cfg = load_config(args.config)
    if not os.path.isdir(cfg.data_dir):
        raise FileNotFoundError(f"data_dir {cfg.data_dir!r} does not exist")
    result = run_training(cfg, resume_from=args.resume, log=print)
    print(f"final weights: {result['weights']}")
    return 0


def cmd_infer(args):
    spec, params = load_model(args.weights)
    if CLI_MODES[args.mode] != spec.mode:
        raise ValueError(
            f"weights are for mode {spec.mode!r}, requested {args.mode!r}")
    img = Tensor(load_image(args.input))
    out = nn.generator_forward(img, params, spec, train=False)
    save_image(args.output, out.data)
    print(f"wrote {args.output} ({out.shape[3]}x{out.shape[2]})")
    return 0


def cmd_degrade(args):
    spec = DegradationSpec(mode=args.mode, seed=args.seed)
    img = Tensor(load_image(args.input))
    rng = np.random.default_rng(args.seed)
    degraded, _ = make_pair(img, spec, rng)
    save_image(args.output, degraded.data)
    print(f"wrote {args.output} ({degraded.shape[3]}x{degraded.shape[2]})")
    return 0


def cmd_eval(args):
    input_names = {n for n in os.listdir(args.inputs)}
    ref_names = {n for n in os.listdir(args.refs)}
    paired = sorted(input_names & ref_names)
    for name in sorted(input_names ^ ref_names):
        print(f"warning: unpaired file skipped: {name}", file=sys.stderr)
    if not paired:
        raise ValueError("no filename-paired images between the two directories")
    pairs = [(name,
              load_image(os.path.join(args.inputs, name)),
              load_image(os.path.join(args.refs, name)))
             for name in paired]
    report = MetricReport.from_pairs(pairs)
    print(report.format_table())
    return 0


def cmd_features(args):
    spec, params = load_model(args.weights)
    img = Tensor(load_image(args.input))
    feats = nn.sfe_forward(img, params, spec)
    os.makedirs(args.out_dir, exist_ok=True)
    n, c, h, w = feats.shape
    for ch in range(c):
        fmap = feats.data[0, ch]
        lo, hi = fmap.min(), fmap.max()
        norm = (fmap - lo) / (hi - lo) if hi > lo else np.zeros_like(fmap)
        save_image(os.path.join(args.out_dir, f"feature_ch{ch:02d}.png"),
                   norm[None])
    print(f"wrote {c} feature maps ({w}x{h}) to {args.out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="densemod",
        description="Train and run lightweight dense-modulation image "
                    "enhancement networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the training loop from a config file")
    p.add_argument("--config", required=True, help="key=value config path")
    p.add_argument("--resume", default=None, help="checkpoint .dmw to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="run a generator on one image")
    p.add_argument("--mode", required=True, choices=sorted(CLI_MODES))
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("degrade", help="apply a degradation pipeline to an image")
    p.add_argument("--mode", required=True, choices=["sr", "enhance", "oldphoto"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("eval", help="mean PSNR/SSIM over filename-paired images")
    p.add_argument("--inputs", required=True)
    p.add_argument("--refs", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("features", help="dump the self-extracted feature channels")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_features)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single-line error contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
