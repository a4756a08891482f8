"""Command-line entry point: ``msfuse <subcommand> ...``.

Exit codes: 0 success, 1 validation/contract error, 2 I/O or format error,
3 usage error. Stdout carries one ``key=value`` line; details go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

from msfuse import __version__, jsonio
from msfuse.detections import (
    DetectionSet,
    ValidationError,
    detection_sets_to_doc,
    load_detections,
    load_ground_truth,
)
from msfuse.ensemble import ContractError, FusionConfig, ensemble_fuse_with_provenance
from msfuse.geometry import InvalidBoxError
from msfuse.metrics import EvalConfig, EvalError, evaluate
from msfuse.raster import RasterFormatError, read_pnm, write_pnm
from msfuse.registration import (
    COLORMAPS,
    CorrespondenceFormatError,
    RansacParams,
    RegistrationError,
    estimate_homography,
    fuse_images,
    load_homography,
    read_correspondences,
    save_homography,
    warp,
)
from msfuse.synth import SynthConfig, SynthConfigError, run_experiment

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_USAGE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _unit(name, lo_open=False):
    def parse(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {s!r}") from None
        ok = (0.0 < v <= 1.0) if lo_open else (0.0 <= v <= 1.0)
        if not ok:
            rng = "(0, 1]" if lo_open else "[0, 1]"
            raise argparse.ArgumentTypeError(f"{name} must be in {rng}, got {v}")
        return v

    return parse


def _positive_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _pmap(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# -- subcommands ------------------------------------------------------------

def cmd_fuse_dets(args) -> int:
    cfg = FusionConfig(args.gamma, args.iou, args.nms, args.class_agnostic_nms)
    base = load_detections(args.baseline, normalized_center=args.from_normalized_center)
    therm = load_detections(args.thermal, normalized_center=args.from_normalized_center)
    base_by_id = {s.image_id: s for s in base}
    therm_by_id = {s.image_id: s for s in therm}
    if len(base_by_id) != len(base) or len(therm_by_id) != len(therm):
        raise ValidationError("duplicate image id in an input file")
    ids = [s.image_id for s in base] + [s.image_id for s in therm if s.image_id not in base_by_id]
    pairs = []
    for i in ids:
        b, t = base_by_id.get(i), therm_by_id.get(i)
        if b is not None and t is not None and (b.image_w, b.image_h) != (t.image_w, t.image_h):
            raise ValidationError(f"image {i!r}: size differs between baseline and thermal")
        ref = b if b is not None else t
        empty = DetectionSet(ref.image_id, ref.image_w, ref.image_h, ())
        pairs.append((b if b is not None else empty, t if t is not None else empty))
    results = _pmap(lambda p: ensemble_fuse_with_provenance(p[0], p[1], cfg), pairs, args.threads)
    out_sets = [b.with_detections(f.detection for f in r) for (b, _), r in zip(pairs, results)]
    if args.audit:
        audit = {
            "config": cfg.to_dict(),
            "images": [
                {"id": s.image_id, "provenance": [f.audit_record() for f in r]}
                for s, r in zip(out_sets, results)
            ],
        }
        jsonio.write_json(args.audit, audit)
    jsonio.write_json(args.output, detection_sets_to_doc(out_sets))
    n = sum(len(s) for s in out_sets)
    print(f"images={len(out_sets)} detections={n}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = EvalConfig(f1_threshold=args.f1_threshold)
    preds = load_detections(args.pred, normalized_center=args.from_normalized_center)
    gts = load_ground_truth(args.gt, normalized_center=args.from_normalized_center)
    report = evaluate(preds, gts, cfg, threads=args.threads)
    jsonio.write_json(args.output, report.to_dict())
    print(report.summary_line())
    return EXIT_OK


def cmd_register(args) -> int:
    corrs = read_correspondences(args.points)
    robust = RansacParams(args.iters, args.thresh, args.seed) if args.ransac else None
    h = estimate_homography(corrs, robust)
    save_homography(h, args.output)
    print("h=" + ",".join(repr(float(v)) for v in h.matrix.ravel()))
    return EXIT_OK


def cmd_warp(args) -> int:
    src = read_pnm(args.input)
    h = load_homography(args.h)
    if args.invert:
        h = h.inverse()
    out = warp(src, h, args.width, args.height, args.fill, threads=args.threads)
    write_pnm(out, args.output)
    print(f"width={out.width} height={out.height} channels={out.channels} depth={out.depth}")
    return EXIT_OK


def cmd_fuse_img(args) -> int:
    rgb = read_pnm(args.rgb)
    ir = read_pnm(args.ir)
    ir_range = tuple(args.ir_range) if args.ir_range else None
    out = fuse_images(rgb, ir, args.weight, args.colormap, ir_range)
    write_pnm(out, args.output)
    print(f"width={out.width} height={out.height}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig.load(args.config)
    result = run_experiment(cfg, args.output, threads=args.threads)
    print(result.summary_line())
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msfuse", description="Multispectral detection ensembling toolkit.")
    p.add_argument("--version", action="version", version=f"msfuse {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, formatter_class=fmt)
        sp.set_defaults(func=fn)
        sp.add_argument("--threads", type=_positive_int, default=1, help="per-image worker threads")
        return sp

    sp = add("fuse-dets", cmd_fuse_dets, "ensemble baseline and thermal detections")
    sp.add_argument("--baseline", required=True, help="baseline detections JSON")
    sp.add_argument("--thermal", required=True, help="thermal detections JSON")
    sp.add_argument("--gamma", type=_unit("gamma"), default=0.5, help="thermal fusion weight")
    sp.add_argument("--iou", type=_unit("iou", lo_open=True), default=0.5, help="pairing IoU threshold")
    sp.add_argument("--nms", type=_unit("nms", lo_open=True), default=0.5, help="NMS IoU threshold")
    sp.add_argument("--class-agnostic-nms", action="store_true", help="suppress across classes")
    sp.add_argument("--from-normalized-center", action="store_true",
                    help="input boxes are (cx, cy, w, h) image fractions")
    sp.add_argument("--audit", help="write per-detection provenance JSON here")
    sp.add_argument("-o", "--output", required=True)

    sp = add("eval", cmd_eval, "evaluate predictions against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--f1-threshold", type=_unit("f1-threshold"), default=None,
                    help="fixed confidence threshold for P/R/F1 (default: F1-maximizing)")
    sp.add_argument("--from-normalized-center", action="store_true")
    sp.add_argument("-o", "--output", required=True)

    sp = add("register", cmd_register, "estimate an IR->RGB homography from point pairs")
    sp.add_argument("--points", required=True, help="CSV with src_x,src_y,dst_x,dst_y")
    sp.add_argument("--ransac", action="store_true")
    sp.add_argument("--iters", type=_positive_int, default=1000)
    sp.add_argument("--thresh", type=float, default=3.0, help="inlier reprojection distance, px")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True)

    sp = add("warp", cmd_warp, "resample a PGM/PPM through a homography")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--h", required=True, help="homography JSON (output -> source coordinates)")
    sp.add_argument("--width", type=_positive_int, required=True)
    sp.add_argument("--height", type=_positive_int, required=True)
    sp.add_argument("--invert", action="store_true",
                    help="treat --h as source -> output (e.g. the IR->RGB map from 'register')")
    sp.add_argument("--fill", type=float, default=0)
    sp.add_argument("-o", "--output", required=True)

    sp = add("fuse-img", cmd_fuse_img, "blend an RGB PPM with an aligned IR PGM")
    sp.add_argument("--rgb", required=True)
    sp.add_argument("--ir", required=True)
    sp.add_argument("--weight", type=_unit("weight"), default=0.5, help="RGB weight")
    sp.add_argument("--colormap", choices=COLORMAPS, default="gray")
    sp.add_argument("--ir-range", type=float, nargs=2, metavar=("LO", "HI"),
                    help="fixed IR normalization range instead of per-image min/max")
    sp.add_argument("-o", "--output", required=True)

    sp = add("synth", cmd_synth, "run a synthetic baseline/thermal/ensemble experiment")
    sp.add_argument("--config", required=True, help="SynthConfig JSON")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    try:
        return args.func(args)
    except (RasterFormatError, CorrespondenceFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ContractError, EvalError, RegistrationError, SynthConfigError,
            InvalidBoxError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
