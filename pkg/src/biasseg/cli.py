"""Command-line frontend: segment, synth, eval.

Settings resolve in three layers: built-in defaults, then a ``key=value``
config file (``--config``), then explicit flags.  Exit codes: 0 success
(segment: converged), 2 segment hit the iteration cap without
converging, 1 any error (including bad flags).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import metrics, solver, synth
from .imagegrid import (
    RasterImage,
    load_image,
    load_labels,
    quantize,
    save_field,
    save_image,
    save_labels,
)
from .model import DEFAULT_NU, ModelParams

_SEGMENT_DEFAULTS = {
    "phases": 2,
    "basis": 10,
    "mode": "full",
    "init": "threshold",
    "lambda": None,
    "gamma": None,
    "mu": 1.0,
    "nu": DEFAULT_NU,
    "dt": 0.1,
    "eps": 1.0,
    "a": 2.0,
    "seed": 42,
    "max_iters": 200,
    "tol": 1e-3,
    "w_init": "random",
    "threads": None,
}

_INT_KEYS = {"phases", "basis", "seed", "max_iters", "threads"}
_FLOAT_KEYS = {"mu", "nu", "dt", "eps", "a", "tol"}
_LIST_KEYS = {"lambda", "gamma"}


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _read_config(path) -> dict:
    settings = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _SEGMENT_DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown setting '{key}'")
            if key in _INT_KEYS:
                settings[key] = int(value)
            elif key in _FLOAT_KEYS:
                settings[key] = float(value)
            elif key in _LIST_KEYS:
                settings[key] = _parse_float_list(value)
            else:
                settings[key] = value
    return settings


def _merge_settings(args: argparse.Namespace) -> dict:
    settings = dict(_SEGMENT_DEFAULTS)
    if args.config:
        settings.update(_read_config(args.config))
    for key in _SEGMENT_DEFAULTS:
        flag_value = getattr(args, key.replace("-", "_"), None)
        if flag_value is not None:
            settings[key] = flag_value
    return settings


def _build_parser() -> _Parser:
    parser = _Parser(prog="biasseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment an image and estimate its bias")
    seg.add_argument("input", help="PGM (P5) or PPM (P6) image, maxval 255")
    seg.add_argument("--out-dir", default=".", help="output directory")
    seg.add_argument("--config", help="key=value settings file")
    seg.add_argument("--phases", type=int, help="number of regions N (default 2)")
    seg.add_argument("--basis", type=int, help="basis function count M, 1..10")
    seg.add_argument("--mode", choices=["full", "cv"], help="full model or the piecewise-constant reduction")
    seg.add_argument("--init", choices=["threshold", "disk", "mask"], help="level set initialization")
    seg.add_argument("--mask", action="append", default=None, help="mask PGM for init=mask (repeat per level set)")
    seg.add_argument("--lambda", dest="lambda_", type=_parse_float_list, help="region weights, comma separated")
    seg.add_argument("--gamma", type=_parse_float_list, help="channel weights, comma separated")
    seg.add_argument("--mu", type=float, help="distance regularizer weight")
    seg.add_argument("--nu", type=float, help="arc length weight")
    seg.add_argument("--dt", type=float, help="time step of the level set flow")
    seg.add_argument("--eps", type=float, help="step smoothing width")
    seg.add_argument("--a", type=float, help="binary step magnitude of the initialization")
    seg.add_argument("--seed", type=int, help="seed for the random weight init")
    seg.add_argument("--max-iters", type=int, help="iteration cap")
    seg.add_argument("--tol", type=float, help="cluster movement convergence threshold")
    seg.add_argument("--w-init", choices=["random", "constant"], help="weight initialization")
    seg.add_argument("--threads", type=int, help="BLAS thread cap (never changes results)")

    syn = sub.add_parser("synth", help="generate a phantom with known truth")
    syn.add_argument("--spec", required=True, help="phantom spec file (key=value)")
    syn.add_argument("--out-dir", default=".", help="output directory")

    ev = sub.add_parser("eval", help="score a predicted label map against truth")
    ev.add_argument("--pred", required=True, help="predicted label PGM")
    ev.add_argument("--truth", required=True, help="ground truth label PGM")
    ev.add_argument("--out", help="write per-region metrics CSV here")
    return parser


def cmd_segment(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    if getattr(args, "lambda_", None) is not None:
        settings["lambda"] = args.lambda_
    if args.mask is not None:
        settings["mask"] = args.mask

    image = load_image(args.input)
    phases = settings["phases"]
    if phases < 2:
        raise ValueError("--phases must be at least 2")
    lambdas = settings["lambda"] or [1.0] * phases
    gammas = settings["gamma"] or [1.0] * image.channels
    if len(lambdas) != phases:
        raise ValueError(f"--lambda needs {phases} values, got {len(lambdas)}")
    if len(gammas) != image.channels:
        raise ValueError(f"--gamma needs {image.channels} values, got {len(gammas)}")
    params = ModelParams(
        lambdas=np.asarray(lambdas),
        gammas=np.asarray(gammas),
        mu=settings["mu"],
        nu=settings["nu"],
        epsilon=settings["eps"],
        dt=settings["dt"],
        a=settings["a"],
        basis_count=settings["basis"],
        max_iters=settings["max_iters"],
        tol=settings["tol"],
    )
    config = solver.SolveConfig(
        mode="bias_frozen" if settings["mode"] == "cv" else "full",
        init=settings["init"],
        mask_paths=tuple(settings.get("mask") or ()),
        seed=settings["seed"],
        w_init=settings["w_init"],
    )
    if settings["mode"] == "cv" and image.channels != 1:
        raise ValueError("mode 'cv' needs a single-channel image")
    if settings["mode"] == "cv" and phases != 2:
        raise ValueError("mode 'cv' is two-phase")

    def _solve():
        if settings["mode"] == "cv":
            return solver.run_chan_vese(image, config, params)
        return solver.run(image, config, params)

    if settings["threads"]:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=settings["threads"]):
            result = _solve()
    else:
        result = _solve()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_labels(result.labels, out / "labels.pgm")
    for j in range(image.channels):
        save_field(result.biases[j], out / f"bias_{j + 1}.f64f")
        save_field(result.corrected.channel(j), out / f"corrected_{j + 1}.f64f")
        clamped = quantize(RasterImage(result.corrected.channel(j)[:, :, None]))
        save_image(clamped, out / f"corrected_{j + 1}.pgm")
    if image.channels == 3:
        save_image(quantize(result.corrected), out / "corrected.ppm")
    for q in range(result.stack.count):
        save_field(result.stack.phis[q], out / f"phi_{q + 1}.f64f")
    result.trace.write_csv(out / "trace.csv")

    status = "converged" if result.trace.converged else "hit the iteration cap"
    print(
        f"{status} after {result.trace.iterations_run} iterations, "
        f"energy {result.trace.energies[-1]:.6g}"
    )
    return 0 if result.trace.converged else 2


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.load_spec(args.spec)
    phantom = synth.make_phantom(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    observed = quantize(phantom.image)
    save_image(observed, out / ("image.ppm" if spec.n_channels == 3 else "image.pgm"))
    save_labels(phantom.truth, out / "truth.pgm")
    for j in range(spec.n_channels):
        save_field(phantom.biases[j], out / f"bias_{j + 1}.f64f")
        save_field(phantom.clean.channel(j), out / f"clean_{j + 1}.f64f")
    print(f"phantom written to {out} ({spec.width}x{spec.height}, N={spec.n_phases})")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    pred = load_labels(args.pred)
    truth = load_labels(args.truth)
    if pred.labels.shape != truth.labels.shape:
        raise ValueError("prediction and truth grids differ")
    n_regions = max(pred.n_regions, truth.n_regions)
    mapping = metrics.match_labels(pred, truth, n_regions)
    aligned = metrics.relabel(pred, mapping)
    reports = metrics.region_report(aligned, truth, n_regions)
    for r in reports:
        print(
            f"region {r.region}: FPR={r.fpr:.4f} FNR={r.fnr:.4f} DSC={r.dsc:.4f}"
        )
    if args.out:
        metrics.write_report_csv(reports, args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"segment": cmd_segment, "synth": cmd_synth, "eval": cmd_eval}
    try:
        return handlers[args.command](args)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
