"""Command-line front end.

Subcommands: ``fuse``, ``substitute``, ``pd-curve``, ``ablate``,
``lse-train`` and ``swt-dump``.  Exit status is 0 on success, 1 on a usage,
contract or configuration error and 2 on an I/O error.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError, ImageIOError, WdstError
from .imgcore import load_image, save_image
from .lse import lse_train, ll_training_pairs, make_lse_network, save_lse
from .metrics import metric_planes
from .pipeline import (
    FusionConfig,
    FusionReport,
    fuse,
    load_config,
    pd_curve,
    resolve_threads,
    substitution_experiment,
    write_pd_csv,
)
from .wavelet import SUPPORTED_FILTERS, dump_pyramid, swt2

log = logging.getLogger("wdstfuse")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p, gt_required=False, out_help="output path"):
    p.add_argument("--content", required=True, help="distortion-oriented image A_o")
    p.add_argument("--style", required=True, help="perception-oriented image A_p")
    p.add_argument("--gt", required=gt_required, help="ground-truth image")
    p.add_argument("--out", required=True, help=out_help)
    _config_flags(p)


def _config_flags(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--filter", choices=SUPPORTED_FILTERS, help="wavelet filter family")
    p.add_argument("--levels", type=int, help="decomposition levels")
    p.add_argument("--threads", type=int, help="worker threads (WDST_THREADS overrides)")
    p.add_argument("--seed", type=int, help="seed for the random feature network / training")


def _fuse_flags(p):
    p.add_argument("--trace", action="store_true", help="stream per-iteration optimiser records to stderr")
    p.add_argument("--max-iters", type=int, help="override the per-level iteration caps")
    p.add_argument("--scores", help="JSON file of external perceptual scores keyed by image label")
    p.add_argument("--no-figures", action="store_true", help="skip rendering PNG figures")


def build_parser():
    parser = _Parser(prog="wdstfuse", description="Wavelet-domain fusion of super-resolved images.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fuse", help="fuse A_o and A_p")
    _common(p, out_help="output image (.png); the report goes to <stem>.report.jsonl")
    _fuse_flags(p)

    p = sub.add_parser("ablate", help="fuse with some orientations bypassing WDST")
    _common(p, out_help="output image (.png)")
    _fuse_flags(p)
    p.add_argument("--skip", required=True, help="comma-separated orientations to bypass: lh,hl,hh")

    p = sub.add_parser("substitute", help="LL substitution experiment")
    _common(p, gt_required=True, out_help="output prefix for images, report and figures")
    p.add_argument("--scores", help="JSON file of external perceptual scores keyed by image label")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("pd-curve", help="pixel interpolation perception-distortion curve")
    _common(p, gt_required=True, out_help="output CSV path")
    p.add_argument("--mu", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
                   help="comma-separated interpolation weights in [0, 1]")
    p.add_argument("--fused", help="fused image to mark on the figure")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("lse-train", help="train the low-frequency enhancement network")
    p.add_argument("--gt", required=True, help="glob or directory of clean images")
    p.add_argument("--content", help="glob or directory of matching A_o images (default: bicubic x2 degradation)")
    p.add_argument("--out", required=True, help="output weight file")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--patch", type=int, default=32, help="patch size")
    p.add_argument("--no-figures", action="store_true")
    _config_flags(p)

    p = sub.add_parser("swt-dump", help="write SWT sub-bands as PGM images")
    p.add_argument("--in", dest="input", required=True, help="input image")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--filter", choices=SUPPORTED_FILTERS, default="bior2.2")
    p.add_argument("--levels", type=int, default=2)
    return parser


def _config(args) -> FusionConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else FusionConfig()
    if getattr(args, "filter", None):
        cfg = replace(cfg, wavelet_name=args.filter)
    if getattr(args, "levels", None) is not None:
        cfg = replace(cfg, levels=args.levels)
    if getattr(args, "seed", None) is not None:
        if cfg.feature_weights.startswith("random:"):
            cfg = replace(cfg, feature_weights=f"random:{args.seed}")
        cfg = replace(cfg, lse_train=replace(cfg.lse_train, seed=args.seed))
    if getattr(args, "threads", None) is not None:
        cfg = replace(cfg, threads=args.threads, parallel_subbands=args.threads > 1)
    threads = resolve_threads(cfg.threads)
    if threads != cfg.threads:
        cfg = replace(cfg, threads=threads, parallel_subbands=threads > 1)
    return cfg


def _scores(path):
    if not path:
        return None
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scores must be a JSON object")
    return {str(k): float(v) for k, v in data.items()}


def _with_suffix(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _cmd_fuse(args, skip=()):
    cfg = _config(args)
    a_o, a_p = load_image(args.content), load_image(args.style)
    a_gt = load_image(args.gt) if args.gt else None
    on_iter = None
    if args.trace:
        def on_iter(rec):
            print(json.dumps(rec), file=sys.stderr, flush=True)
    out, report = fuse(a_o, a_p, cfg, skip=skip, a_gt=a_gt, scores=_scores(args.scores),
                       max_iters=args.max_iters, on_iteration=on_iter)
    out_path = Path(args.out)
    save_image(out, out_path)
    report.write(_with_suffix(out_path, ".report.jsonl"))
    if not args.no_figures:
        from . import plotting
        from .wavelet import make_filter_pair

        filt = make_filter_pair(cfg.wavelet_name)
        pyrs = {"A_p": swt2(metric_planes(a_p)[0], filt, cfg.levels),
                "A_o": swt2(metric_planes(a_o)[0], filt, cfg.levels),
                "A_r": swt2(metric_planes(out)[0], filt, cfg.levels)}
        if a_gt is not None:
            pyrs = {"A_gt": swt2(metric_planes(a_gt)[0], filt, cfg.levels), **pyrs}
        plotting.plot_subband_histograms(pyrs, _with_suffix(out_path, ".hist.png"), cfg.hist_bins)
        if report.subband_traces:
            plotting.plot_traces(report, _with_suffix(out_path, ".traces.png"))
    return 0


def _cmd_ablate(args):
    skip = [s.strip().upper() for s in args.skip.split(",") if s.strip()]
    return _cmd_fuse(args, skip=skip)


def _cmd_substitute(args):
    cfg = _config(args)
    a_o, a_p, a_gt = load_image(args.content), load_image(args.style), load_image(args.gt)
    images, report = substitution_experiment(a_o, a_p, a_gt, cfg, scores=_scores(args.scores))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_image(images["~A_p"], prefix.with_name(prefix.name + "_tilde_p.png"))
    save_image(images["~A_o"], prefix.with_name(prefix.name + "_tilde_o.png"))
    report.write(prefix.with_name(prefix.name + ".report.jsonl"))
    if not args.no_figures:
        from . import plotting

        plotting.plot_substitution(report.stages("substitution")[0]["rows"],
                                   prefix.with_name(prefix.name + ".substitution.png"))
    return 0


def _cmd_pd_curve(args):
    cfg = _config(args)
    try:
        mus = [float(m) for m in args.mu.split(",") if m.strip()]
    except ValueError:
        raise ConfigError(f"--mu must be a comma-separated list of numbers, got {args.mu!r}") from None
    a_o, a_p, a_gt = load_image(args.content), load_image(args.style), load_image(args.gt)
    rows = pd_curve(a_o, a_p, a_gt, mus, cfg)
    out = Path(args.out)
    write_pd_csv(rows, out)
    report = FusionReport()
    report.add("config", config=cfg.to_dict())
    report.add("pd_curve", reference="A_gt", rows=rows)
    fused_point = None
    if args.fused:
        from .pipeline import _metric_row

        r = _metric_row("A_r", load_image(args.fused), a_gt, cfg)
        report.add("metrics", reference="A_gt", rows=[r])
        fused_point = (r["psnr"], r["hist_distance"])
    report.write(_with_suffix(out, ".report.jsonl"))
    if not args.no_figures:
        from . import plotting

        plotting.plot_pd_curve(rows, _with_suffix(out, ".png"), fused_point)
    return 0


def _expand(pattern):
    p = Path(pattern)
    if p.is_dir():
        files = sorted(str(f) for f in p.iterdir() if f.suffix.lower() in (".png", ".pgm", ".ppm", ".pnm"))
    else:
        files = sorted(glob.glob(pattern))
    if not files:
        raise ImageIOError(pattern, "no images matched")
    return files


def _cmd_lse_train(args):
    cfg = _config(args)
    train_cfg = cfg.lse_train
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    clean = [metric_planes(load_image(f))[0] for f in _expand(args.gt)]
    degraded = None
    if args.content:
        files = _expand(args.content)
        if len(files) != len(clean):
            raise ConfigError(f"{len(files)} content images for {len(clean)} ground-truth images")
        degraded = [metric_planes(load_image(f))[0] for f in files]
    pairs = ll_training_pairs(clean, cfg.wavelet_name, cfg.levels, patch=args.patch, stride=args.patch,
                              degraded_planes=degraded)
    if not pairs:
        raise ConfigError(f"images are smaller than the {args.patch}px patch size")
    net = make_lse_network(seed=train_cfg.seed)
    result = lse_train(net, pairs, train_cfg, log_every=1)
    out = Path(args.out)
    save_lse(result.net, out)
    lines = ["# epoch mean_loss"] + [f"{k} {v!r}" for k, v in enumerate(result.history)]
    _with_suffix(out, ".loss.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if not args.no_figures:
        from . import plotting

        plotting.plot_loss_history(result.history, _with_suffix(out, ".loss.png"))
    return 0


def _cmd_swt_dump(args):
    image = load_image(args.input)
    pyr = swt2(metric_planes(image)[0], args.filter, args.levels)
    dump_pyramid(pyr, args.out)
    return 0


COMMANDS = {
    "fuse": _cmd_fuse,
    "ablate": _cmd_ablate,
    "substitute": _cmd_substitute,
    "pd-curve": _cmd_pd_curve,
    "lse-train": _cmd_lse_train,
    "swt-dump": _cmd_swt_dump,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ImageIOError, OSError) as exc:
        print(f"wdstfuse: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, ConfigError, FormatError, WdstError) as exc:
        print(f"wdstfuse: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
