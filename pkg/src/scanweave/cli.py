"""Command-line interface.

Verbs: ``phantom``, ``scan``, ``mask``, ``inpaint``, ``train-netm``,
``metrics``, ``experiment``. Exit code 0 on success, 2 when the experiment
invariant suite fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as exp
from .core import SpectralCube
from .errors import ParameterError, ScanweaveError
from .formats import load_cube, load_mask, load_rgb_image, save_cube, save_mask, save_rgb_image
from .fusion import FusionConfig, fuse_inpaint, write_trace_csv
from .harmonic import harmonic_inpaint_cube
from .mask import binarize_bernoulli, binarize_topk, gradient_adaptive_mask, random_mask
from .masknet import (
    MaskNetConfig,
    MaskNetParams,
    TrainConfig,
    load_params,
    netm_forward,
    save_params,
    train_netm,
)
from .metrics import psnr, rmse, sam_details
from .phantom import phantom_by_name, phantom_gen, scan_simulate

log = logging.getLogger("scanweave")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="seed for all stochastic choices")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for grid cells")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def _cmd_mask(args) -> int:
    guide = load_rgb_image(args.inp)
    if args.method == "random":
        mask = random_mask(guide.width, guide.height, args.rate, args.seed)
    elif args.method == "gradient":
        mask = gradient_adaptive_mask(guide, args.rate, args.seed, mode=args.binarize)
    else:
        if not args.params:
            raise ParameterError("--params is required for the netm mask method")
        params = load_params(args.params)
        prob = netm_forward(params, guide, args.rate)
        mask = binarize_topk(prob) if args.binarize == "topk" else binarize_bernoulli(prob, args.seed)
    save_mask(args.out, mask, fmt=args.mask_format)
    log.info("mask %s: %d of %d pixels", args.out, mask.selected_count, mask.bits.size)
    return 0


def _cmd_phantom(args) -> int:
    spec = phantom_by_name(args.name)
    phantom = phantom_gen(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_cube(out / "gt.spcb", phantom.truth)
    save_rgb_image(out / "rgb.ppm", phantom.rgb)
    save_cube(out / "visible.spcb", SpectralCube.from_matrix(
        phantom.visible_truth, phantom.truth.width, phantom.truth.height, clamp=True))
    save_cube(out / "hidden.spcb", SpectralCube.from_matrix(
        phantom.hidden_truth, phantom.truth.width, phantom.truth.height, clamp=True))
    (out / "manifest.json").write_text(json.dumps(phantom.manifest, indent=2) + "\n", encoding="utf-8")
    log.info("phantom %s written to %s", args.name, out)
    return 0


def _cmd_scan(args) -> int:
    truth = load_cube(args.cube)
    mask = load_mask(args.mask)
    result = scan_simulate(truth, mask, sigma=args.sigma, seed=args.seed)
    embedded = result.selection.embed(result.scan)
    save_cube(args.out, SpectralCube.from_matrix(embedded, truth.width, truth.height, clamp=True))
    print(f"speedup {result.speedup:g}x ({result.selection.selected_count} of {truth.pixels} pixels)")
    return 0


def _cmd_inpaint(args) -> int:
    scan_cube = load_cube(args.cube)
    mask = load_mask(args.mask)
    if args.method == "harmonic":
        result = harmonic_inpaint_cube(scan_cube, mask)
        save_cube(args.out, result.cube)
        if not result.converged:
            log.warning("harmonic solve did not reach tolerance on every band")
        return 0
    if not args.rgb:
        raise ParameterError("--rgb is required for the fusion method")
    guide = load_rgb_image(args.rgb)
    cfg = FusionConfig.from_file(args.config) if args.config else FusionConfig(atoms=12, init_epochs=20, max_outer=60)
    selection = mask.to_selection()
    scan = selection.take(scan_cube.matrix)
    truth = load_cube(args.truth) if args.truth else None
    result = fuse_inpaint(scan, selection, guide, cfg, truth=truth)
    save_cube(args.out, result.cube(scan_cube.width, scan_cube.height))
    if args.trace:
        write_trace_csv(result.trace, args.trace)
    return 0


def _cmd_train_netm(args) -> int:
    corpus_dir = Path(args.corpus)
    images = []
    for path in sorted(corpus_dir.glob("*.ppm")):
        images.append(load_rgb_image(path).data)
    if not images:
        raise ParameterError(f"no .ppm images found in {corpus_dir}")
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise ParameterError(f"corpus images must share one size, found {sorted(shapes)}")
    params = MaskNetParams.initialize(
        MaskNetConfig(in_channels=3, features=args.features, blocks=args.blocks), seed=args.seed)
    cfg = TrainConfig(rate=args.rate, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    result = train_netm(params, images, cfg)
    save_params(args.out, result.params)
    if result.diverged:
        log.warning("training diverged; saved the last good checkpoint")
    for epoch, loss in enumerate(result.epoch_losses):
        log.info("epoch %d loss %.6g", epoch, loss)
    print(f"trained {result.params.parameter_count()} parameters "
          f"({len(result.epoch_losses)} epochs) -> {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    a = load_cube(args.a)
    b = load_cube(args.b)
    sam_value, skipped = sam_details(a, b)
    p = psnr(a, b)
    print("rmse,psnr_db,sam_deg,skipped_pixels")
    print(f"{rmse(a, b):.6f},{'inf' if p == float('inf') else f'{p:.3f}'},{sam_value:.4f},{skipped}")
    return 0


def _cmd_experiment(args) -> int:
    phantoms = ()
    if args.phantoms:
        phantoms = tuple(phantom_by_name(name) for name in args.phantoms.split(","))
    cfg = exp.ExperimentConfig(
        phantoms=phantoms,
        mask_methods=tuple(args.mask_methods.split(",")),
        recon_methods=tuple(args.recon_methods.split(",")),
        rates=tuple(float(r) for r in args.rates.split(",")),
        binarizer=args.binarize,
        seed=args.seed,
        netm_params_path=args.netm_params,
        figures=not args.no_figures,
        timing=not args.no_timing,
        threads=args.threads,
    )
    report = exp.run_experiment(cfg, outdir=args.out)
    print(exp.format_report_rows(report.rows), end="")
    for failure in report.failures:
        print(f"FAILED {failure['cell']}: {failure['error']}", file=sys.stderr)
    for violation in report.invariant_violations:
        print(f"INVARIANT {violation}", file=sys.stderr)
    return 2 if report.invariant_violations else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scanweave",
                                     description="Adaptive sampling masks and guided spectral scan reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="generate a sampling mask from a guide image")
    p.add_argument("--method", choices=("random", "gradient", "netm"), required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--in", dest="inp", required=True, help="guide RGB image (P6 PPM)")
    p.add_argument("--out", required=True, help="output mask (PBM)")
    p.add_argument("--binarize", choices=("bernoulli", "topk"), default="bernoulli")
    p.add_argument("--params", help="SNWT parameter file (netm method)")
    p.add_argument("--mask-format", choices=("p1", "p4"), default="p4")
    _common(p)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("phantom", help="write a named synthetic phantom")
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _common(p)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("scan", help="simulate a masked raster scan of a cube")
    p.add_argument("--cube", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=0.0, help="gaussian noise level")
    _common(p)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("inpaint", help="reconstruct a full cube from a masked scan")
    p.add_argument("--method", choices=("harmonic", "fusion"), required=True)
    p.add_argument("--cube", required=True, help="subsampled cube (zeros at unsampled pixels)")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rgb", help="guide RGB image (fusion)")
    p.add_argument("--config", help="fusion config file (key = value lines)")
    p.add_argument("--trace", help="write the objective trace CSV here")
    p.add_argument("--truth", help="ground-truth cube for trace error tracking")
    _common(p)
    p.set_defaults(func=_cmd_inpaint)

    p = sub.add_parser("train-netm", help="train the mask network on a PPM corpus")
    p.add_argument("--corpus", required=True, help="directory of same-size .ppm images")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--out", required=True, help="output SNWT parameter file")
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--blocks", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=16)
    _common(p)
    p.set_defaults(func=_cmd_train_netm)

    p = sub.add_parser("metrics", help="compare two cubes")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    _common(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("experiment", help="run the full phantom/mask/reconstruction grid")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--phantoms", help="comma-separated phantom names (default: shipped suite)")
    p.add_argument("--mask-methods", default=",".join(exp.MASK_METHODS))
    p.add_argument("--recon-methods", default=",".join(exp.RECON_METHODS))
    p.add_argument("--rates", default="0.05,0.1,0.2")
    p.add_argument("--binarize", choices=("bernoulli", "topk"), default="bernoulli")
    p.add_argument("--netm-params", help="SNWT parameters for the netm mask method")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--no-timing", action="store_true", help="write 0.000 in the seconds column")
    _common(p)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScanweaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
