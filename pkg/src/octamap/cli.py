"""Command-line pipeline: phantom generation, reconstruction, en-face
projection, metric comparison, and the median-filter baseline.

Every command writes a JSON manifest alongside its outputs that records the
command line, the fully resolved configuration, all input/output paths, the
seed where one applies, the tool version, and the wall-clock duration.
Exit codes: 0 success, 2 usage error, 3 data/format error, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .metrics import (
    SlabSpec,
    background_threshold,
    enface_percentile,
    export_png,
    load_png_image,
    median_filter_3d,
    psnr,
    reference_data_range,
    ssim,
)
from .models import AngioModel, initial_octa
from .phantom import make_vessel_scene, simulate_repeats
from .plots import compare_figure, trace_figure
from .recon import (
    DivergenceError,
    IterationTrace,
    ReconConfig,
    config_from_settings,
    read_config_file,
    reconstruct,
)
from .regularizers import TotalVariation, WaveletShrinkage
from .volume import (
    AngioVolume,
    FormatError,
    RepeatScanVolume,
    load_volume,
    save_volume,
    subsample_repeats,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


class UsageError(Exception):
    """Raised by command handlers for argument combinations argparse cannot
    check itself; mapped to the usage exit code."""


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(
    path: Path,
    command: str,
    argv: list[str],
    config: dict,
    inputs: list[str],
    outputs: list[str],
    seed: int | None,
    duration: float,
) -> None:
    manifest = {
        "command": command,
        "argv": argv,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "version": __version__,
        "duration_seconds": duration,
        "timestamp": _utc_now(),
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _config_as_dict(cfg: ReconConfig) -> dict:
    if isinstance(cfg.regularizer, WaveletShrinkage):
        reg = {
            "kind": "wavelet",
            "threshold": cfg.regularizer.threshold,
            "levels": cfg.regularizer.levels,
            "soft": cfg.regularizer.soft,
        }
    elif isinstance(cfg.regularizer, TotalVariation):
        reg = {
            "kind": "tv",
            "weight": cfg.regularizer.weight,
            "inner_iterations": cfg.regularizer.inner_iterations,
        }
    else:
        reg = {"kind": "none"}
    return {
        "model": cfg.model.value,
        "step_size": cfg.step_size,
        "n_iter": cfg.n_iter,
        "n_reg": cfg.n_reg,
        "regularizer": reg,
        "stop_tol": cfg.stop_tol,
        "floor": "auto" if cfg.floor is None else cfg.floor,
    }


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return repr(float(value))


def write_trace_csv(trace: IterationTrace, path: str | Path) -> None:
    """Trace CSV: schema comment, header, one row per recorded iteration."""
    lines = ["# octamap trace-csv v1"]
    if trace.has_reference:
        lines.append("iteration,mse_vs_initial,psnr_db,ssim")
        rows = zip(trace.iterations, trace.mse_vs_initial, trace.psnr_db, trace.ssim)
        for it, mse, p, s in rows:
            lines.append(f"{it},{_fmt(mse)},{_fmt(p)},{_fmt(s)}")
    else:
        lines.append("iteration,mse_vs_initial")
        for it, mse in zip(trace.iterations, trace.mse_vs_initial):
            lines.append(f"{it},{_fmt(mse)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _load_repeats(path: str) -> RepeatScanVolume:
    vol = load_volume(path)
    if not isinstance(vol, RepeatScanVolume):
        raise ValueError(f"{path}: expected a 4D repeat-scan volume")
    return vol


def _load_angio(path: str) -> AngioVolume:
    vol = load_volume(path)
    if not isinstance(vol, AngioVolume):
        raise ValueError(f"{path}: expected a 3D angiography volume")
    return vol


def cmd_phantom(args: argparse.Namespace) -> int:
    if args.n_r < 2:
        raise UsageError("--n-r must be at least 2")
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = make_vessel_scene(
        tuple(args.dims),
        n_vessels=args.n_vessels,
        vessel_variance=args.vessel_variance,
        background_variance=args.background_variance,
        seed=args.seed,
    )
    repeats = simulate_repeats(scene, args.n_r, seed=args.seed + 1)
    x_true_path = out_dir / "x_true.octv"
    repeats_path = out_dir / "repeats.octv"
    save_volume(scene.x_true, x_true_path)
    save_volume(repeats, repeats_path)
    scene_txt = out_dir / "scene.txt"
    scene_txt.write_text(
        "".join(f"{key}={value}\n" for key, value in scene.params.items())
        + f"n_r={args.n_r}\nnoise_seed={args.seed + 1}\n"
    )
    config = dict(scene.params, n_r=args.n_r)
    _write_manifest(
        out_dir / "manifest.json",
        "phantom",
        args._argv,
        config,
        [],
        [str(x_true_path), str(repeats_path), str(scene_txt)],
        args.seed,
        time.perf_counter() - t0,
    )
    print(f"wrote {x_true_path} and {repeats_path}")
    return EXIT_OK


def cmd_octa(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    repeats = _load_repeats(args.input)
    if args.subsample is not None:
        k = "all" if args.subsample == "all" else int(args.subsample)
        repeats = subsample_repeats(repeats, k)
    vol = initial_octa(repeats, AngioModel(args.model))
    save_volume(vol, args.output)
    _write_manifest(
        Path(f"{args.output}.manifest.json"),
        "octa",
        args._argv,
        {"model": args.model, "subsample": args.subsample},
        [args.input],
        [args.output],
        None,
        time.perf_counter() - t0,
    )
    print(f"wrote {args.output}")
    return EXIT_OK


_RECON_OVERRIDES = (
    ("model", "model"),
    ("reg", "regularizer"),
    ("step_size", "step_size"),
    ("n_iter", "n_iter"),
    ("n_reg", "n_reg"),
    ("stop_tol", "stop_tol"),
    ("floor", "floor"),
    ("tv_weight", "tv_weight"),
    ("tv_inner_iterations", "tv_inner_iterations"),
    ("wavelet_threshold", "wavelet_threshold"),
    ("wavelet_levels", "wavelet_levels"),
    ("wavelet_soft", "wavelet_soft"),
)


def cmd_recon(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    settings: dict[str, str] = {}
    if args.config:
        settings.update(read_config_file(args.config))
    for attr, key in _RECON_OVERRIDES:
        value = getattr(args, attr)
        if value is not None:
            settings[key] = str(value)
    cfg = config_from_settings(settings)

    repeats = _load_repeats(args.input)
    if args.subsample is not None:
        k = "all" if args.subsample == "all" else int(args.subsample)
        repeats = subsample_repeats(repeats, k)
    reference = _load_angio(args.reference) if args.reference else None

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final, trace = reconstruct(repeats, cfg, reference=reference)

    recon_path = out_dir / "recon.octv"
    trace_csv = out_dir / "trace.csv"
    trace_png = out_dir / "trace.png"
    save_volume(final, recon_path)
    write_trace_csv(trace, trace_csv)
    trace_figure(trace, trace_png)
    inputs = [args.input] + ([args.reference] if args.reference else [])
    _write_manifest(
        out_dir / "manifest.json",
        "recon",
        args._argv,
        _config_as_dict(cfg),
        inputs,
        [str(recon_path), str(trace_csv), str(trace_png)],
        None,
        time.perf_counter() - t0,
    )
    print(f"wrote {recon_path} ({len(trace.iterations) - 1} iterations)")
    return EXIT_OK


def cmd_enface(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    vol = _load_angio(args.input)
    n_s = vol.dims_3d[2]
    top = args.slab_top if args.slab_top is not None else 0
    bottom = args.slab_bottom if args.slab_bottom is not None else n_s
    slab = SlabSpec(top, bottom)
    raw = enface_percentile(vol, slab, percentile=args.percentile)

    outputs = []
    out = Path(args.output)
    if args.background_threshold is not None:
        cut = background_threshold(raw, args.background_threshold)
        export_png(cut, out, bit_depth=args.bit_depth)
        raw_path = out.with_name(f"{out.stem}_raw{out.suffix}")
        export_png(raw, raw_path, bit_depth=args.bit_depth)
        outputs = [str(out), f"{out}.bounds.txt", str(raw_path), f"{raw_path}.bounds.txt"]
    else:
        export_png(raw, out, bit_depth=args.bit_depth)
        outputs = [str(out), f"{out}.bounds.txt"]
    config = {
        "slab_top": top,
        "slab_bottom": bottom,
        "percentile": args.percentile,
        "background_threshold": args.background_threshold,
        "bit_depth": args.bit_depth,
    }
    _write_manifest(
        Path(f"{out}.manifest.json"),
        "enface",
        args._argv,
        config,
        [args.input],
        outputs,
        None,
        time.perf_counter() - t0,
    )
    print(f"wrote {out}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    a_path, b_path = Path(args.a), Path(args.b)
    kinds = {p.suffix.lower() for p in (a_path, b_path)}
    if kinds == {".octv"}:
        a_vol = _load_angio(args.a)
        b_vol = _load_angio(args.b)
        rng = reference_data_range(b_vol)
        value = psnr(a_vol, b_vol, rng)
        header, row = "psnr_db", _fmt(value)
        full = SlabSpec(0, b_vol.dims_3d[2])
        img_a = enface_percentile(a_vol, full)
        img_b = enface_percentile(b_vol, full)
    elif kinds == {".png"}:
        img_a = load_png_image(args.a)
        img_b = load_png_image(args.b)
        rng = reference_data_range(img_b)
        p = psnr(img_a, img_b, rng)
        s = ssim(img_a, img_b, rng)
        header, row = "psnr_db,ssim", f"{_fmt(p)},{_fmt(s)}"
    else:
        raise ValueError(
            f"inputs must both be .octv or both .png, got {args.a} and {args.b}"
        )

    out = Path(args.output)
    out.write_text(f"# octamap compare-csv v1\n{header}\n{row}\n")
    outputs = [str(out)]
    if not args.no_figure:
        fig_path = out.with_suffix(".png") if out.suffix != ".png" else Path(f"{out}.png")
        compare_figure(img_a, img_b, fig_path, labels=(a_path.stem, b_path.stem))
        outputs.append(str(fig_path))
    _write_manifest(
        Path(f"{out}.manifest.json"),
        "compare",
        args._argv,
        {"data_range": rng},
        [args.a, args.b],
        outputs,
        None,
        time.perf_counter() - t0,
    )
    print(row)
    return EXIT_OK


def cmd_median(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    vol = _load_angio(args.input)
    save_volume(median_filter_3d(vol), args.output)
    _write_manifest(
        Path(f"{args.output}.manifest.json"),
        "median",
        args._argv,
        {"kernel": [3, 3, 3], "edges": "replicate"},
        [args.input],
        [args.output],
        None,
        time.perf_counter() - t0,
    )
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="octamap",
        description="MAP reconstruction toolkit for repeated-scan OCT angiography",
    )
    parser.add_argument("--version", action="version", version=f"octamap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic vessel scene")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dims", type=int, nargs=3, default=[64, 64, 64],
                   metavar=("NB", "NA", "NS"))
    p.add_argument("--n-vessels", type=int, default=3)
    p.add_argument("--vessel-variance", type=float, default=0.03)
    p.add_argument("--background-variance", type=float, default=5e-3)
    p.add_argument("--n-r", type=int, default=10, help="repeats per B-scan")
    p.add_argument("--seed", type=int, default=1234)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("octa", help="closed-form initial OCTA volume")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", choices=[m.value for m in AngioModel], default="ifv")
    p.add_argument("--subsample", choices=["3", "5", "all"], default=None)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_octa)

    p = sub.add_parser("recon", help="MAP reconstruction")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model", choices=[m.value for m in AngioModel], default=None)
    p.add_argument("--reg", choices=["wavelet", "tv", "none"], default=None)
    p.add_argument("--subsample", choices=["3", "5", "all"], default=None)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--n-iter", type=int, default=None)
    p.add_argument("--n-reg", type=int, default=None)
    p.add_argument("--stop-tol", type=float, default=None)
    p.add_argument("--floor", default=None, help="positivity floor, number or 'auto'")
    p.add_argument("--tv-weight", type=float, default=None)
    p.add_argument("--tv-inner-iterations", type=int, default=None)
    p.add_argument("--wavelet-threshold", type=float, default=None)
    p.add_argument("--wavelet-levels", type=int, default=None)
    p.add_argument("--wavelet-soft", action="store_const", const="true", default=None)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--reference", default=None, help="ground-truth volume for the trace")
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("enface", help="depth-slab percentile projection to PNG")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--slab-top", type=int, default=None)
    p.add_argument("--slab-bottom", type=int, default=None)
    p.add_argument("--percentile", type=float, default=98.0)
    p.add_argument("--background-threshold", type=float, nargs="?", const=0.1,
                   default=None,
                   help="zero pixels below REL x the 99.9th percentile; "
                        "also writes the unthresholded image alongside")
    p.add_argument("--bit-depth", type=int, choices=[8, 16], default=8)
    p.set_defaults(func=cmd_enface)

    p = sub.add_parser("compare", help="PSNR/SSIM between two volumes or images")
    p.add_argument("--a", required=True, help="volume/image under test")
    p.add_argument("--b", required=True, help="reference volume/image")
    p.add_argument("--out", dest="output", required=True, help="CSV output path")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("median", help="3x3x3 median-filter baseline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_median)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv_list = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv_list)
    args._argv = argv_list
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"octamap: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"octamap: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, ValueError, OSError) as exc:
        print(f"octamap: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
