"""
Command-line driver: segment a manifest, evaluate predictions, generate phantoms.

Exit codes: 0 ok, 1 input or case errors, 2 usage errors.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import DEFAULT, CoarseMethod, PipelineConfig, load_config
from .core import SegmentationRun
from .exceptions import NodulemorphError
from .phantom import generate_suite
from .strategies import CoarseToFine, PlainDeformable, PlainThresholding

logger = logging.getLogger("nodulemorph.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

_METHODS = {"plain": CoarseMethod.PLAIN_THRESHOLD, "deformable": CoarseMethod.DEFORMABLE}


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return number


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """CLI flags over the config file over the defaults."""
    config = load_config(args.config) if args.config else DEFAULT
    return config.with_overrides(
        alpha=args.alpha,
        s_m=args.s_m,
        epsilon=args.epsilon,
        rho=args.rho,
        tau=args.tau,
        margin=args.margin,
        se_radius=args.se_radius,
        smoothing_sigma=args.smoothing_sigma,
        coarse_method=_METHODS[args.method] if args.method else None,
        ggo_stop=False if args.no_ggo_stop else None,
    )


def cmd_segment(args: argparse.Namespace) -> int:
    """Runs the pipeline over every case and writes masks and traces."""
    try:
        config = build_config(args)
        run = SegmentationRun(args.manifest, config)
    except (NodulemorphError, IOError) as e:
        logger.error("%s", e)
        return EXIT_ERROR

    strategies = [CoarseToFine(use_3d=not args.no_3d)]
    if args.baselines:
        strategies += [PlainThresholding(), PlainDeformable()]

    for strategy in strategies:
        logger.info("Running %s on %d cases", strategy.label, len(run.cases))
        run.process(strategy, jobs=args.jobs, keep_stages=args.dump_stages)

    try:
        Path(args.output).mkdir(parents=True, exist_ok=True)
        run.save_predictions(args.output, dump_stages=args.dump_stages, plots=args.plots)
    except OSError as e:
        logger.error("%s", e)
        return EXIT_ERROR

    if not run.alerts.empty:
        logger.warning("%d cases or slices failed; see traces.json", len(run.alerts))
    return EXIT_OK


def _method_dirs(pred_dir: Path, run: SegmentationRun) -> List[Path]:
    case_ids = {c.case_id for c in run.cases}
    if any((pred_dir / case_id).is_dir() for case_id in case_ids):
        return [pred_dir]
    # An empty directory is read as a single method with every prediction missing
    return sorted(p for p in pred_dir.iterdir() if p.is_dir()) or [pred_dir]


def cmd_eval(args: argparse.Namespace) -> int:
    """Scores predictions against ground truth and prints the stratified table."""
    pred_dir = Path(args.pred_dir)
    if not pred_dir.is_dir():
        logger.error("Prediction directory %s does not exist", pred_dir)
        return EXIT_ERROR
    try:
        run = SegmentationRun(args.manifest)
    except (NodulemorphError, IOError) as e:
        logger.error("%s", e)
        return EXIT_ERROR

    if not any(c.labeled_indices for c in run.cases):
        logger.error("Manifest %s has no labelled slices", args.manifest)
        return EXIT_ERROR

    missing = []
    for method_dir in _method_dirs(pred_dir, run):
        missing += run.load_predictions(method_dir)
    if missing:
        logger.error("%d predictions missing:\n  %s", len(missing), "\n  ".join(str(p) for p in missing))
        return EXIT_ERROR

    report = run.report
    print(report.to_text())

    try:
        run.save_report_json(args.report or pred_dir / "report.json")
        if args.excel:
            run.save_report(args.excel)
        if args.html:
            run.save_html_report(args.html)
    except OSError as e:
        logger.error("%s", e)
        return EXIT_ERROR
    return EXIT_OK


def cmd_phantom(args: argparse.Namespace) -> int:
    """Writes a deterministic phantom suite."""
    try:
        manifest = generate_suite(
            args.seed,
            args.n,
            args.output,
            box_size=args.box_size,
            n_slices=args.slices,
            roi_mode=args.roi_mode,
            spacing_mm=args.spacing,
        )
    except (ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_ERROR
    logger.info("Manifest written to %s", manifest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nodulemorph", description="Coarse-to-fine lung nodule segmentation")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log pipeline stages at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="Segment every case of a manifest")
    seg.add_argument("manifest", help="Case manifest (JSON)")
    seg.add_argument("-o", "--output", required=True, help="Output directory for masks and traces")
    seg.add_argument("--config", help="Pipeline config (JSON) mirroring PipelineConfig")
    seg.add_argument("--method", choices=sorted(_METHODS), help="Coarse segmentation method")
    seg.add_argument("--no-3d", action="store_true", help="Disable slice-to-slice box propagation")
    seg.add_argument("--dump-stages", action="store_true", help="Write per-stage masks and traces")
    seg.add_argument("--plots", action="store_true", help="With --dump-stages, also write stages.png")
    seg.add_argument("--baselines", action="store_true", help="Also run the plain thresholding and deformable methods")
    seg.add_argument("--jobs", type=_positive_int, default=1, help="Worker processes")
    seg.add_argument("--alpha", type=float, help="Maximum dividing-line length (px)")
    seg.add_argument("--s-m", dest="s_m", type=int, help="Smallest nodule area (px)")
    seg.add_argument("--epsilon", type=float, help="Box shrink factor")
    seg.add_argument("--rho", type=float, help="Nodule proportion at which a box is close enough")
    seg.add_argument("--tau", type=float, help="Evenness coefficient-of-variation ceiling")
    seg.add_argument("--margin", type=int, help="Padding of inherited boxes (px)")
    seg.add_argument("--se-radius", dest="se_radius", type=int, help="Disk radius for closing/opening")
    seg.add_argument("--smoothing-sigma", dest="smoothing_sigma", type=float, help="Gaussian pre-filter sigma")
    seg.add_argument("--no-ggo-stop", action="store_true", help="Disable the ground-glass evenness stop")
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("eval", help="Score predictions against ground truth")
    ev.add_argument("pred_dir", help="Prediction directory (one sub-directory per method, or per case)")
    ev.add_argument("manifest", help="Case manifest (JSON)")
    ev.add_argument("--report", help="Report JSON path (default: <pred_dir>/report.json)")
    ev.add_argument("--excel", help="Also write an Excel workbook")
    ev.add_argument("--html", help="Also write a standalone HTML report")
    ev.set_defaults(func=cmd_eval)

    ph = sub.add_parser("phantom", help="Generate a synthetic phantom suite")
    ph.add_argument("--seed", type=int, default=42, help="Suite seed")
    ph.add_argument("-n", type=_positive_int, default=100, help="Number of cases")
    ph.add_argument("-o", "--output", required=True, help="Output directory")
    ph.add_argument("--box-size", dest="box_size", type=_positive_int, default=64, help="ROI crop size (px)")
    ph.add_argument("--slices", type=_positive_int, default=3, help="Slices per case")
    ph.add_argument("--roi-mode", dest="roi_mode", choices=["predefined", "detected"], default="predefined")
    ph.add_argument("--spacing", type=float, default=0.7, help="Pixel size (mm) for diameter labels")
    ph.set_defaults(func=cmd_phantom)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    logging.captureWarnings(True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
