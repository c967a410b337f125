"""Command-line front end: sweep, landscape, train, specificity.

Every command writes its data files plus ``manifest.json`` into ``--out``.
Angles on the command line and in files are degrees.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import svg
from .circuit import run_exact
from .gearbox import GearboxParams, build_gearbox, conditional_tomography
from .noise import DeviceNoiseModel, NoiseModelError, resolve_model
from .qnn import (
    FUNCTION_ORDER,
    PARAM_NAMES,
    ActivationVariant,
    Mode,
    default_workers,
    get_function,
    landscape_slice,
    specificity_matrix,
)
from .training import TRACE_HEADER, OptimizerConfig, train_all

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4

# fixed color ranges keep figures comparable across runs
COST_RANGE = (0.0, 1.0)
NRTS_RANGE = (1.0, 2.0)


class UsageError(Exception):
    pass


def version() -> str:
    try:
        return metadata.version("rusqnn")
    except metadata.PackageNotFoundError:
        return "unknown"


def _num(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _manifest(args, model: DeviceNoiseModel, started: float, **extra) -> dict:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    return {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": config,
        "model_sha256": model.digest(),
        "model": model.to_json(),
        "seed": getattr(args, "seed", None),
        "version": version(),
        "wall_clock_s": round(time.perf_counter() - started, 3),
        **extra,
    }


def _mode(args) -> Mode:
    return Mode(args.mode, args.shots, args.seed)


def _variant(name: str) -> ActivationVariant:
    try:
        return ActivationVariant.parse(name)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _function(name: str) -> str:
    try:
        return get_function(name).name
    except KeyError as e:
        raise UsageError(e.args[0]) from None


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def _range(text: str) -> tuple[float, float]:
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP in degrees, got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected START:STOP in degrees, got {text!r}")
    return parts[0], parts[1]


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


# --- sweep -------------------------------------------------------------------


SWEEP_HEADER = ["w_deg", "b_deg", "p_success", "n_rts", "branch", "X", "Y", "Z", "purity"]


def _sampled_bloch(rng: np.random.Generator, shots: int, x: float, y: float, z: float):
    """Estimate a Bloch vector from ``shots`` projective samples per axis."""
    if shots == 0:
        return (math.nan,) * 4
    est = [2 * rng.binomial(shots, (1 + c) / 2) / shots - 1 for c in (x, y, z)]
    return (*est, min(1.0, (1 + sum(e * e for e in est)) / 2))


def cmd_sweep(args, model: DeviceNoiseModel) -> dict:
    ws = np.linspace(*np.radians(args.w_range), args.points)
    bs = np.linspace(*np.radians(args.b_range), args.b_points)
    mode = _mode(args)
    rng = np.random.default_rng(args.seed)
    branches = ("success", "failure") if args.branch == "both" else (args.branch,)
    rows = []
    for b in bs:
        for w in ws:
            params = GearboxParams((w,), b)
            tomo = conditional_tomography(params, args.input, model, allow_empty=True)
            prog = build_gearbox(("I1",), "A", "O", params, input_prep={"I1": args.input})
            n_rts = run_exact(prog, model, truncation_threshold=1.0).n_rts_mean
            p_s = tomo["success"].probability
            if not mode.exact:
                k = rng.binomial(args.shots, min(max(p_s, 0.0), 1.0))
                counts = {"success": k, "failure": args.shots - k}
                p_s = k / args.shots
            for br in branches:
                t = tomo[br]
                vals = (t.x, t.y, t.z, t.purity)
                if not mode.exact:
                    vals = _sampled_bloch(rng, counts[br], t.x, t.y, t.z)
                rows.append([_num(math.degrees(w)), _num(math.degrees(b)), _num(p_s), _num(n_rts), br,
                             *(_num(v) for v in vals)])
    _write_csv(args.out / "sweep.csv", SWEEP_HEADER, rows)
    return {"files": ["sweep.csv"]}


# --- landscape ---------------------------------------------------------------


def _parse_slice(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    name = name.strip()
    if not sep or name not in PARAM_NAMES:
        raise UsageError(f"--slice must look like b=K, w1=K or w2=K (degrees), got {text!r}")
    try:
        return name, math.radians(float(value))
    except ValueError:
        raise UsageError(f"--slice value must be a number of degrees, got {value!r}") from None


def _grid_rows(land, grid):
    return [[_num(math.degrees(land.y[r])), *(_num(v) for v in grid[r])] for r in range(len(land.y))]


def cmd_landscape(args, model: DeviceNoiseModel) -> dict:
    f = _function(args.function)
    fixed = _parse_slice(args.slice)
    variant = _variant(args.variant)
    land = landscape_slice(f, fixed, args.res, variant=variant, model=model, mode=_mode(args),
                           workers=_workers(args))
    xa, ya = land.axes
    rows = []
    for r in range(args.res):
        for c in range(args.res):
            p = dict(zip(PARAM_NAMES, land.params_at(r, c)))
            rows.append([_num(math.degrees(p[k])) for k in PARAM_NAMES]
                        + [_num(land.cost[r, c]), _num(land.n_rts[r, c])])
    _write_csv(args.out / "landscape.csv", [f"{k}_deg" for k in PARAM_NAMES] + ["C", "n_rts"], rows)
    corner = f"{ya}_deg\\{xa}_deg"
    header = [corner, *(_num(math.degrees(v)) for v in land.x)]
    _write_csv(args.out / "cost_grid.csv", header, _grid_rows(land, land.cost))
    _write_csv(args.out / "n_rts_grid.csv", header, _grid_rows(land, land.n_rts))
    i = int(np.argmin(land.cost))
    mr, mc = divmod(i, args.res)
    labels_x = [f"{math.degrees(v):.0f}" for v in land.x]
    labels_y = [f"{math.degrees(v):.0f}" for v in land.y]
    title = f"{f}, {fixed[0]} = {math.degrees(fixed[1]):g} deg"
    (args.out / "cost.svg").write_text(svg.heatmap(
        land.cost, vmin=COST_RANGE[0], vmax=COST_RANGE[1], title=f"<C>  {title}", x_labels=labels_x,
        y_labels=labels_y, x_title=f"{xa} (deg)", y_title=f"{ya} (deg)", marker=(mr, mc)))
    (args.out / "n_rts.svg").write_text(svg.heatmap(
        land.n_rts, vmin=NRTS_RANGE[0], vmax=NRTS_RANGE[1], title=f"<N_RTS>  {title}", x_labels=labels_x,
        y_labels=labels_y, x_title=f"{xa} (deg)", y_title=f"{ya} (deg)", marker=(mr, mc)))
    x, y, cmin = land.minimum
    return {
        "files": ["landscape.csv", "cost_grid.csv", "n_rts_grid.csv", "cost.svg", "n_rts.svg"],
        "minimum": {f"{xa}_deg": math.degrees(x), f"{ya}_deg": math.degrees(y), "C": cmin,
                    "n_rts": float(land.n_rts[mr, mc]), "row": mr, "col": mc},
        "grid": {"axes": [xa, ya], "fixed": {fixed[0] + "_deg": math.degrees(fixed[1])},
                 "resolution": args.res, "span_deg": [0.0, 360.0]},
    }


# --- train -------------------------------------------------------------------


def _config(args) -> OptimizerConfig:
    kw = {}
    if args.config is not None:
        try:
            kw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"config file is not valid JSON: {e}") from None
        if not isinstance(kw, dict):
            raise UsageError("config file must hold a JSON object")
    for key in ("budget", "restarts", "seed"):
        if getattr(args, key, None) is not None:
            kw[key] = getattr(args, key)
    if kw.get("start") is not None:
        kw["start"] = tuple(math.radians(v) for v in kw["start"])
    try:
        return OptimizerConfig(**kw)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid optimizer config: {e}") from None


def _train(args, model: DeviceNoiseModel, functions) -> dict:
    variant = _variant(args.variant)
    cfg = _config(args)
    return train_all(variant, model, _mode(args), cfg, functions, workers=_workers(args)), cfg


def _best_doc(results) -> dict:
    return {name: {"w1_deg": math.degrees(r.params[0]), "w2_deg": math.degrees(r.params[1]),
                   "b_deg": math.degrees(r.params[2]), "C": r.cost, "n_rts": r.trace.best.n_rts}
            for name, r in results.items()}


def cmd_train(args, model: DeviceNoiseModel) -> dict:
    functions = FUNCTION_ORDER if args.function == "all" else (_function(args.function),)
    results, cfg = _train(args, model, functions)
    files = []
    for name, r in results.items():
        fn = f"trace_{name}.csv"
        _write_csv(args.out / fn, TRACE_HEADER, r.trace.rows())
        files.append(fn)
    _write_json(args.out / "best_params.json", _best_doc(results))
    return {"files": files + ["best_params.json"], "optimizer": cfg.to_json()}


# --- specificity -------------------------------------------------------------


def read_params(path: Path) -> dict[str, tuple[float, float, float]]:
    """Trained triples in degrees, as ``{name: [w1, w2, b]}`` or the train output format."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"params file is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise UsageError("params file must hold a JSON object keyed by function name")
    out = {}
    for name, v in doc.items():
        key = _function(name)
        try:
            triple = [v[f"{k}_deg"] for k in PARAM_NAMES] if isinstance(v, dict) else list(v)
            triple = [float(x) for x in triple]
        except (KeyError, TypeError, ValueError):
            raise UsageError(f"params for {name} must be [w1, w2, b] in degrees") from None
        if len(triple) != 3 or not all(math.isfinite(x) for x in triple):
            raise UsageError(f"params for {name} must be three finite angles")
        out[key] = tuple(math.radians(x) for x in triple)
    missing = [n for n in FUNCTION_ORDER if n not in out]
    if missing:
        raise UsageError(f"params file is missing: {', '.join(missing)}")
    return out


def cmd_specificity(args, model: DeviceNoiseModel) -> dict:
    variant = _variant(args.variant)
    extra = {}
    if args.params is not None:
        trained = read_params(args.params)
    else:
        results, cfg = _train(args, model, FUNCTION_ORDER)
        trained = {n: r.params for n, r in results.items()}
        extra["optimizer"] = cfg.to_json()
        _write_json(args.out / "best_params.json", _best_doc(results))
    mat = specificity_matrix(trained, variant, model, _mode(args), workers=_workers(args))
    rows = [[g, *(_num(v) for v in mat[i])] for i, g in enumerate(FUNCTION_ORDER)]
    _write_csv(args.out / "specificity.csv", ["oracle\\trained", *FUNCTION_ORDER], rows)
    (args.out / "specificity.svg").write_text(svg.heatmap(
        mat[::-1], vmin=COST_RANGE[0], vmax=COST_RANGE[1], title="<C>: trained parameters vs oracle",
        x_labels=list(FUNCTION_ORDER), y_labels=list(FUNCTION_ORDER[::-1]), x_title="trained for",
        y_title="oracle", cell=24, label_every=1))
    files = ["specificity.csv", "specificity.svg"] + (["best_params.json"] if args.params is None else [])
    return {"files": files, "order": list(FUNCTION_ORDER), **extra}


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rusqnn", description="Simulate repeat-until-success quantum neurons.")
    p.add_argument("--version", action="version", version=f"%(prog)s {version()}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--model", default="ideal",
                        help="noise model: ideal, a shipped profile (plausible_device, moderate) or a JSON path")
        sp.add_argument("--mode", choices=("exact", "sampled"), default="exact")
        sp.add_argument("--shots", type=_positive_int, default=10_000)
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--workers", type=_positive_int, default=None,
                        help="parallel worker processes (default: QNN_SIM_THREADS or all cores)")
        sp.add_argument("--out", type=Path, required=True, help="output directory")

    def variant(sp):
        sp.add_argument("--variant", default="rus", help="rus, no-correction or rabi")

    def training(sp):
        sp.add_argument("--budget", type=int, default=None, help="cost evaluations per function (default 500)")
        sp.add_argument("--restarts", type=int, default=None, help="Nelder-Mead starting points (default 8)")
        sp.add_argument("--config", default=None, help="optimizer config JSON; flags override its fields")

    sp = sub.add_parser("sweep", help="first-attempt gearbox tomography over (w, b)")
    sp.add_argument("--w-range", type=_range, default=(0.0, 360.0), help="START:STOP in degrees")
    sp.add_argument("--b-range", type=_range, default=(0.0, 0.0), help="START:STOP in degrees")
    sp.add_argument("--points", type=_positive_int, default=91, help="points along w")
    sp.add_argument("--b-points", type=_positive_int, default=1, help="points along b")
    sp.add_argument("--input", choices=("0", "1", "plus"), default="1")
    sp.add_argument("--branch", choices=("success", "failure", "both"), default="success")
    common(sp)

    sp = sub.add_parser("landscape", help="2-D slice of <C> and <N_RTS>")
    sp.add_argument("--function", required=True)
    sp.add_argument("--slice", default="b=0", help="fixed parameter, e.g. b=0 or w1=90 (degrees)")
    sp.add_argument("--res", type=int, default=41)
    variant(sp)
    common(sp)

    sp = sub.add_parser("train", help="train one or all Boolean functions")
    sp.add_argument("--function", required=True, help="function name or 'all'")
    variant(sp)
    training(sp)
    common(sp)

    sp = sub.add_parser("specificity", help="16x16 cost matrix of trained parameters against every oracle")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--params", type=Path, help="JSON of trained triples in degrees")
    src.add_argument("--train-first", action="store_true")
    variant(sp)
    training(sp)
    common(sp)
    return p


COMMANDS = {"sweep": cmd_sweep, "landscape": cmd_landscape, "train": cmd_train, "specificity": cmd_specificity}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    started = time.perf_counter()
    try:
        if getattr(args, "res", 2) < 2:
            raise UsageError("--res must be >= 2")
        model = resolve_model(args.model)
        args.out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, model)
        _write_json(args.out / "manifest.json", _manifest(args, model, started, **extra))
    except (UsageError, NoiseModelError, json.JSONDecodeError) as e:
        print(f"rusqnn: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"rusqnn: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # invariant violations inside the simulator
        print(f"rusqnn: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
