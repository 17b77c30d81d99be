"""Command-line interface.

Every option can also come from a ``key=value`` file given with
``--config``; keys are option names without the leading dashes (dashes or
underscores both work) and flags on the command line win over the file.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import hashlib
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, forward
from .checkpoint import file_sha256, read_checkpoint, write_checkpoint
from .checks import run_all
from .datasets import SyntheticSpec, extract_patches, generate
from .io import read_png, read_png_dir, write_manifest, write_png, write_tensor
from .metrics import MetricReport
from .sampler import DC_SCHEDULES, SamplerConfig, colorize, colorize_divided, default_sampler_schedule, sample_prior
from .schedule import NoiseSchedule
from .tensors import N_JOINT
from .training import DsmConfig, train

logger = logging.getLogger("jgm")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
TIMING_KEY = "wall_clock_s"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _on_off(text):
    value = str(text).strip().lower()
    if value in ("1", "on", "true", "yes"):
        return True
    if value in ("0", "off", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _operator(text):
    if text not in forward.OPERATORS:
        raise argparse.ArgumentTypeError(f"unknown operator {text!r} (choose {sorted(forward.OPERATORS)})")
    return text


def read_config_file(path):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    pairs = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{n}: empty key")
        pairs.append((key.replace("_", "-"), value))
    return pairs


# ---------------------------------------------------------------- options


def _add_schedule_options(p, for_training):
    g = p.add_argument_group("noise schedule")
    default = None if not for_training else 1.0
    g.add_argument("--sigma-max", type=float, default=default)
    g.add_argument("--sigma-min", type=float, default=None if not for_training else 0.01)
    g.add_argument("--n-levels", type=int, default=None if not for_training else 10)


def _add_sampler_options(p):
    d = SamplerConfig()
    sched = default_sampler_schedule()
    _add_schedule_options(p, for_training=False)
    g = p.add_argument_group("sampler")
    g.add_argument("--step-scale", type=float, default=sched.step_scale)
    g.add_argument("--n-steps", type=int, default=sched.n_steps)
    g.add_argument("--dc-weight", type=float, default=d.dc_weight)
    g.add_argument("--dc-schedule", default=d.dc_schedule, choices=DC_SCHEDULES)
    g.add_argument("--merge-weight", type=float, default=d.merge_weight)
    g.add_argument("--merge-tol", type=float, default=d.merge_tol)
    g.add_argument("--intensity-dc", type=_on_off, default=True)
    g.add_argument("--gradient-dc", type=_on_off, default=True)
    g.add_argument("--recouple-every-step", type=_on_off, default=False)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--snapshot-every", type=int, default=None)
    g.add_argument("--save-tensors", type=_on_off, default=False,
                   help="also write the final 9-channel state as raw tensors")


def _add_colorize_io(p):
    p.add_argument("--input", required=True, help="gray PNG or a directory of them")
    p.add_argument("--output", required=True, help="output PNG, or a directory for directory input")
    p.add_argument("--operator", default="average", help="average, luma or blind (runs both)")
    p.add_argument("--from-color", type=_operator, default=None,
                   help="inputs are color; gray them with this operator first")
    p.add_argument("--reference", default=None, help="color ground truth (file or directory)")
    p.add_argument("--manifest", default=None, help="manifest path (default: next to the output)")


def build_parser():
    parser = _Parser(prog="jgm", description="Joint intensity-gradient score-based colorization.")
    parser.add_argument("--version", action="version", version=f"jgm {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="fit a score network and write a checkpoint")
    p.add_argument("--config", default=None)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--data-dir", default=None, help="directory of color PNGs (default: synthetic)")
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--family", default="piecewise", choices=["piecewise", "smooth"])
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--export-holdout", default=None,
                   help="write held-out synthetic color/ and gray/ PNGs here")
    p.add_argument("--holdout", type=int, default=100)
    p.add_argument("--holdout-operator", type=_operator, default="average")
    _add_schedule_options(p, for_training=True)
    t = DsmConfig()
    g = p.add_argument_group("training")
    g.add_argument("--n-iter", type=int, default=t.n_iter)
    g.add_argument("--batch-size", type=int, default=t.batch_size)
    g.add_argument("--learning-rate", type=float, default=t.learning_rate)
    g.add_argument("--lr-halving", type=int, default=t.lr_halving)
    g.add_argument("--optimizer", default=t.optimizer, choices=["adam", "sgd"])
    g.add_argument("--net-width", type=int, default=t.width)
    g.add_argument("--net-depth", type=int, default=t.depth)
    g.add_argument("--dtype", default=t.dtype, choices=["float32", "float64"])
    g.add_argument("--domain", default=t.domain, choices=["joint", "image", "gradient"])
    g.add_argument("--seed", type=int, default=t.seed)
    g.add_argument("--log-every", type=int, default=t.log_every)

    p = sub.add_parser("colorize", help="colorize gray images with a joint model")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", required=True)
    _add_colorize_io(p)
    _add_sampler_options(p)

    p = sub.add_parser("colorize-divided", help="colorize with separate image and gradient models")
    p.add_argument("--config", default=None)
    p.add_argument("--image-checkpoint", required=True)
    p.add_argument("--gradient-checkpoint", required=True)
    p.add_argument("--dc-weight-image", type=float, default=None)
    p.add_argument("--dc-weight-gradient", type=float, default=None)
    _add_colorize_io(p)
    _add_sampler_options(p)

    p = sub.add_parser("sample", help="unconditional samples from the joint prior")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    _add_sampler_options(p)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of a colorized set against references")
    p.add_argument("--config", default=None)
    p.add_argument("--pred", required=True, help="directory of colorized PNGs")
    p.add_argument("--ref", required=True, help="directory of reference PNGs")
    p.add_argument("--output", default=None, help="CSV path (default: print only)")

    p = sub.add_parser("oracle-check", help="run the analytic-Gaussian oracle suite")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", action="append", default=None, help="run only the named check")
    return parser


def _find_config(argv):
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    """Parse ``argv``, splicing a ``--config`` file in before the explicit flags.

    argparse keeps the last occurrence of an option, so anything given on
    the command line overrides the file.
    """
    parser = build_parser()
    path = _find_config(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if path and command:
        spliced = []
        for key, value in read_config_file(path):
            if key in ("config", "command"):
                raise UsageError(f"{path}: key {key!r} is not allowed in a config file")
            spliced += [f"--{key}", value]
        k = argv.index(command)
        argv = argv[: k + 1] + spliced + argv[k + 1 :]
    return parser.parse_args(argv)


# ---------------------------------------------------------------- helpers


def _schedule_from(args, model_sigmas):
    if args.sigma_max is None and args.sigma_min is None and args.n_levels is None:
        sigmas = tuple(model_sigmas)
    else:
        n = args.n_levels or len(model_sigmas)
        sigmas = NoiseSchedule.geometric(
            args.sigma_max if args.sigma_max is not None else model_sigmas[0],
            args.sigma_min if args.sigma_min is not None else model_sigmas[-1],
            n,
        ).sigmas
    return NoiseSchedule(sigmas, step_scale=args.step_scale, n_steps=args.n_steps)


def _sampler_config(args, schedule, dc_weights=None):
    return SamplerConfig(
        schedule=schedule,
        dc_weight=args.dc_weight,
        dc_weights=dc_weights,
        dc_schedule=args.dc_schedule,
        intensity_on=args.intensity_dc,
        gradient_on=args.gradient_dc,
        merge_weight=args.merge_weight,
        merge_tol=args.merge_tol,
        seed=args.seed,
        snapshot_every=args.snapshot_every,
        recouple_every_step=args.recouple_every_step,
    )


def _load_inputs(args):
    src = Path(args.input)
    items = read_png_dir(src) if src.is_dir() else [(src.stem, read_png(src))]
    names, grays = [], []
    for name, img in items:
        if args.from_color:
            if img.ndim != 3:
                raise ValueError(f"{name}: --from-color needs a color input")
            img = forward.apply(forward.get_operator(args.from_color), img)
        elif img.ndim != 2:
            raise ValueError(
                f"{name}: input is a color image; pass --from-color <operator> to gray it explicitly"
            )
        names.append(name)
        grays.append(img)
    if len({g.shape for g in grays}) != 1:
        raise ValueError("all inputs of one run must share a size")
    refs = None
    if args.reference:
        ref = Path(args.reference)
        table = dict(read_png_dir(ref)) if ref.is_dir() else {src.stem: read_png(ref)}
        missing = [n for n in names if n not in table]
        if missing:
            raise ValueError(f"no reference for {missing}")
        refs = np.stack([table[n] for n in names])
    return names, np.stack(grays), refs, src.is_dir()


def _output_paths(args, names, is_dir, suffix=""):
    out = Path(args.output)
    if is_dir:
        out.mkdir(parents=True, exist_ok=True)
        return [out / f"{n}{suffix}.png" for n in names]
    out.parent.mkdir(parents=True, exist_ok=True)
    return [out.with_name(f"{out.stem}{suffix}{out.suffix or '.png'}")]


def _residual_log(trace):
    return [dict(r) for r in trace.residuals]


def _write_run(args, names, y, refs, trace, paths, op_name):
    """Write images, snapshots, tensors; return the per-run manifest block."""
    report = MetricReport() if refs is not None else None
    y_final = np.asarray(y)
    image = trace.image.reshape(y_final.shape + (3,))
    for k, (name, path) in enumerate(zip(names, paths)):
        write_png(path, image[k])
        if args.save_tensors:
            write_tensor(path.with_suffix(".jgt"), trace.state.reshape(y_final.shape + (N_JOINT,))[k])
        for snap in trace.snapshots:
            snap_img = snap.image.reshape(y_final.shape + (3,))[k]
            write_png(path.with_name(f"{path.stem}_level{snap.level + 1:02d}.png"), snap_img)
        if report is not None:
            report.add(name, np.clip(image[k], 0, 1), refs[k])
    op = forward.get_operator(op_name)
    resid = np.max(np.abs(forward.apply(op, image) - y_final).reshape(len(names), -1), axis=1)
    block = {
        "operator": op_name,
        "outputs": [str(p) for p in paths],
        "residuals": _residual_log(trace),
        "final_max_residual": {n: float(r) for n, r in zip(names, resid)},
        "output_sha256": {str(p): file_sha256(p) for p in paths},
    }
    if report is not None:
        block["metrics"] = {
            "psnr_db": dict(zip(report.ids, report.psnr)),
            "ssim": dict(zip(report.ids, report.ssim)),
            "mean_psnr_db": report.mean_psnr,
            "mean_ssim": report.mean_ssim,
        }
    return block


def _input_digest(y):
    return hashlib.sha256(np.ascontiguousarray(y, dtype="<f8").tobytes()).hexdigest()


def _manifest_path(args, is_dir):
    if args.manifest:
        return Path(args.manifest)
    out = Path(args.output)
    return out / "manifest.json" if is_dir else out.with_suffix(".json")


def _operators(args):
    if args.operator == "blind":
        return ["average", "luma"]
    if args.operator not in forward.OPERATORS:
        raise UsageError(f"unknown operator {args.operator!r} (choose average, luma or blind)")
    return [args.operator]


def _config_echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


# ---------------------------------------------------------------- commands


def cmd_train(args):
    t0 = time.perf_counter()
    if args.data_dir:
        images = [img for _, img in read_png_dir(args.data_dir)]
        bad = [i for i, img in enumerate(images) if img.ndim != 3]
        if bad:
            raise ValueError(f"training images must be RGB; {len(bad)} gray files found")
        if args.patch:
            images = list(extract_patches(images, args.patch, args.stride, seed=args.data_seed))
        source = {"data_dir": args.data_dir, "patch": args.patch, "stride": args.stride}
    else:
        spec = SyntheticSpec(args.family, args.height, args.width, args.count, args.data_seed)
        images = list(generate(spec))
        source = {"family": args.family, "count": args.count, "height": args.height,
                  "width": args.width, "data_seed": args.data_seed}
    config = DsmConfig(
        schedule=NoiseSchedule.geometric(args.sigma_max, args.sigma_min, args.n_levels),
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        n_iter=args.n_iter,
        seed=args.seed,
        width=args.net_width,
        depth=args.net_depth,
        optimizer=args.optimizer,
        lr_halving=args.lr_halving,
        dtype=args.dtype,
        domain=args.domain,
        log_every=args.log_every if args.verbose else 0,
    )
    model = train(config, images)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_checkpoint(out, model)

    holdout = None
    if args.export_holdout and not args.data_dir:
        root = Path(args.export_holdout)
        (root / "color").mkdir(parents=True, exist_ok=True)
        (root / "gray").mkdir(parents=True, exist_ok=True)
        hold = SyntheticSpec(args.family, args.height, args.width, args.holdout, args.data_seed + 1)
        op = forward.get_operator(args.holdout_operator)
        for k, img in enumerate(generate(hold)):
            write_png(root / "color" / f"img{k:04d}.png", img)
            write_png(root / "gray" / f"img{k:04d}.png", forward.apply(op, img))
        holdout = {"dir": str(root), "count": args.holdout, "seed": args.data_seed + 1,
                   "operator": args.holdout_operator}

    h = model.history
    manifest = {
        "command": "train",
        "config": _config_echo(args),
        "data": source,
        "holdout": holdout,
        "checkpoint": str(out),
        "checkpoint_sha256": file_sha256(out),
        "loss_first": h[0] if h else None,
        "loss_last_100_mean": float(np.mean(h[-100:])) if h else None,
        "version": __version__,
        TIMING_KEY: time.perf_counter() - t0,
    }
    write_manifest(out.with_suffix(".json"), manifest)
    print(f"wrote {out} ({model.net.n_params()} parameters)")
    return EXIT_OK


def _colorize_common(args, run):
    t0 = time.perf_counter()
    ops = _operators(args)
    names, y, refs, is_dir = _load_inputs(args)
    runs = {}
    for op_name in ops:
        suffix = f"_{op_name}" if len(ops) > 1 else ""
        trace, ckpt_info = run(y, op_name, refs)
        paths = _output_paths(args, names, is_dir, suffix)
        runs[op_name] = _write_run(args, names, y, refs, trace, paths, op_name)
        for name, r in runs[op_name]["final_max_residual"].items():
            print(f"{name} [{op_name}] max |F x - y| = {r:.4f}")
    manifest = {
        "command": args.command,
        "config": _config_echo(args),
        "sampler": trace.config,
        "inputs": names,
        "input_sha256": _input_digest(y),
        "checkpoints": ckpt_info,
        "runs": runs,
        "version": __version__,
        TIMING_KEY: time.perf_counter() - t0,
    }
    write_manifest(_manifest_path(args, is_dir), manifest)
    return EXIT_OK


def cmd_colorize(args):
    model = read_checkpoint(args.checkpoint)
    info = {"joint": {"path": args.checkpoint, "sha256": file_sha256(args.checkpoint)}}
    config = _sampler_config(args, _schedule_from(args, model.schedule.sigmas))

    def run(y, op_name, refs):
        return colorize(y, model, op_name, config, reference=refs), info

    return _colorize_common(args, run)


def cmd_colorize_divided(args):
    img_model = read_checkpoint(args.image_checkpoint, expected_channels=3)
    grad_model = read_checkpoint(args.gradient_checkpoint, expected_channels=N_JOINT - 3)
    if img_model.schedule.sigmas != grad_model.schedule.sigmas:
        logger.warning("image and gradient checkpoints carry different noise ladders; using the image one")
    weights = (
        args.dc_weight if args.dc_weight_image is None else args.dc_weight_image,
        args.dc_weight if args.dc_weight_gradient is None else args.dc_weight_gradient,
    )
    config = _sampler_config(args, _schedule_from(args, img_model.schedule.sigmas), dc_weights=weights)
    info = {
        "image": {"path": args.image_checkpoint, "sha256": file_sha256(args.image_checkpoint)},
        "gradient": {"path": args.gradient_checkpoint, "sha256": file_sha256(args.gradient_checkpoint)},
    }

    def run(y, op_name, refs):
        return colorize_divided(y, img_model, grad_model, op_name, config, reference=refs), info

    return _colorize_common(args, run)


def cmd_sample(args):
    t0 = time.perf_counter()
    model = read_checkpoint(args.checkpoint)
    config = _sampler_config(args, _schedule_from(args, model.schedule.sigmas))
    trace = sample_prior(model, config, (args.count, args.height, args.width, N_JOINT))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(args.count):
        path = out / f"sample{k:03d}.png"
        write_png(path, trace.image[k])
        if args.save_tensors:
            write_tensor(path.with_suffix(".jgt"), trace.state[k])
        for snap in trace.snapshots:
            write_png(out / f"sample{k:03d}_level{snap.level + 1:02d}.png", snap.image[k])
        paths.append(path)
    manifest = {
        "command": "sample",
        "config": _config_echo(args),
        "sampler": trace.config,
        "checkpoints": {"joint": {"path": args.checkpoint, "sha256": file_sha256(args.checkpoint)}},
        "output_sha256": {str(p): file_sha256(p) for p in paths},
        "version": __version__,
        TIMING_KEY: time.perf_counter() - t0,
    }
    write_manifest(out / "manifest.json", manifest)
    print(f"wrote {args.count} samples to {out}")
    return EXIT_OK


def cmd_evaluate(args):
    preds = dict(read_png_dir(args.pred))
    refs = dict(read_png_dir(args.ref))
    missing = sorted(set(preds) - set(refs))
    if missing:
        raise ValueError(f"no reference image for {missing}")
    report = MetricReport()
    for name in sorted(preds):
        if preds[name].ndim != 3 or refs[name].ndim != 3:
            raise ValueError(f"{name}: evaluate compares color images")
        report.add(name, preds[name], refs[name])
    print(f"{'image':<24}{'psnr_db':>10}{'ssim':>10}")
    for name, p, s in zip(report.ids, report.psnr, report.ssim):
        print(f"{name:<24}{p:>10.3f}{s:>10.4f}")
    print(f"{'mean':<24}{report.mean_psnr:>10.3f}{report.mean_ssim:>10.4f}")
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        report.write_csv(args.output)
    return EXIT_OK


def cmd_oracle_check(args):
    results = run_all(args.only, seed=args.seed)
    if args.only and len(results) != len(args.only):
        raise UsageError(f"unknown check name in {args.only}")
    for r in results:
        print(r.line(), flush=True)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_RUNTIME if failed else EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "colorize": cmd_colorize,
    "colorize-divided": cmd_colorize_divided,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "operator"):
            _operators(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
