"""Command-line entry point: ``simulate``, ``fit``, ``asymptotics`` and ``study``.

Result files are deterministic: JSON keys are sorted and floats use the
shortest round-trip repr. Anything that varies between runs (wall time,
backend) goes into a ``<out>.manifest.json`` sidecar, or to stderr when the
result is written to stdout.

Exit codes: 0 success, 2 bad input or violated model condition, 3 numeric
non-convergence (the best available result is still written).
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import asymptotics as asy
from ._accel import backend_name
from .core.data import Dataset, ParamBox
from .core.measurement import ErrorModel
from .errors import CorrcoxError, DataError, NumericError, UsageError
from .estimator import Estimate, FitConfig, fit_stage1, fit_stage2
from .simulation import StudyConfig, run_consistency_study, run_normality_study, sample_dataset
from .truth import Truth, default_truth


def _plain(obj):
    """Convert numpy scalars/arrays to builtins; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


class _Run:
    """Collects the manifest and writes outputs."""

    def __init__(self, args):
        self.args = args
        self.start = time.perf_counter()
        self.inputs = {}
        self.config = {}

    def input(self, path):
        if path and path != "default" and os.path.exists(path):
            self.inputs[path] = _digest(path)
        return path

    def write_text(self, text, path=None):
        path = path if path is not None else self.args.out
        if path is None:
            sys.stdout.write(text)
        else:
            with open(path, "w", newline="") as fh:
                fh.write(text)

    def manifest(self):
        return {
            "subcommand": self.args.command,
            "config": self.config,
            "seed": self.args.seed,
            "threads": self.args.threads,
            "version": __version__,
            "backend": backend_name(),
            "wall_time_s": time.perf_counter() - self.start,
            "inputs": self.inputs,
        }

    def finish(self):
        text = dumps(self.manifest())
        if self.args.out is None:
            sys.stderr.write(text)
        else:
            with open(self.args.out + ".manifest.json", "w") as fh:
                fh.write(text)


def _load_truth(spec):
    if spec is None or spec == "default":
        return default_truth()
    return Truth.from_dict(_read_json(spec))


def _cmd_simulate(args, run):
    truth = _load_truth(run.input(args.truth))
    truth.check_conditions()
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    run.config = {"truth": truth.to_dict(), "n": args.n}
    data = sample_dataset(truth, args.n, args.seed)
    run.write_text(data.to_csv())
    return 0


def _fit_setup(obj, seed):
    """Split a fit config JSON into (FitConfig, ErrorModel)."""
    obj = dict(obj)
    if "L" in obj:
        obj["lipschitz_L"] = obj.pop("L")
    em = obj.pop("error_model", None)
    if "param_box" not in obj or "tau" not in obj or "lipschitz_L" not in obj:
        raise UsageError("fit config needs 'param_box', 'tau' and 'L'")
    if seed is not None:
        obj["seed"] = seed
    box = ParamBox.from_dict(obj["param_box"])
    error = ErrorModel.none(box.dim) if em is None else ErrorModel.from_dict(em)
    try:
        cfg = FitConfig.from_dict(obj)
    except TypeError as exc:
        raise UsageError(f"bad fit config: {exc}") from None
    return cfg, error


def _cmd_fit(args, run):
    cfg, error = _fit_setup(_read_json(run.input(args.config)), args.seed)
    data = Dataset.from_csv(run.input(args.data), cfg.tau)
    run.config = {"fit": cfg.to_dict(), "error_model": error.to_dict(), "stage": args.stage}
    out = {}
    if args.stage1_result:
        if args.stage != 2:
            raise UsageError("--stage1-result only makes sense with --stage 2")
        prev = _read_json(run.input(args.stage1_result))
        s1 = Estimate.from_dict(prev.get("stage1", prev))
    else:
        s1 = fit_stage1(data, error, cfg)
    out["stage1"] = s1.to_dict()
    ests = [s1]
    if args.stage == 2:
        s2 = fit_stage2(data, error, s1, cfg)
        out["stage2"] = s2.to_dict()
        ests.append(s2)
    out["epsilon_n"] = cfg.epsilon_n(data.n)
    run.write_text(dumps(out))
    return 0 if all(e.converged for e in ests) else 3


def _weight_from_arg(spec, grid, run):
    if spec in ("one", "t"):
        return asy.named_weight(spec, grid)
    path = run.input(spec)
    try:
        vals = np.loadtxt(path, delimiter=",", ndmin=1)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read weight function from {spec}: {exc}") from None
    if vals.size != grid.size:
        raise DataError(f"weight function has {vals.size} values, grid has {grid.size} nodes")
    return vals


def _cmd_asymptotics(args, run):
    truth = _load_truth(run.input(args.truth))
    truth.check_conditions()
    run.config = {"truth": truth.to_dict(), "f": args.f, "grid_nodes": args.grid_nodes,
                  "reps": args.reps}
    tables = asy.build_tables(truth, args.grid_nodes, args.reps, args.seed)
    f = _weight_from_arg(args.f, tables.grid, run)
    sol = asy.solve_fredholm(f, tables, truth, args.reps, args.seed + 1)
    out = tables.to_dict()
    out["fredholm"] = sol.to_dict()
    run.write_text(dumps(out))
    return 0


def _cmd_study(args, run):
    cfg = StudyConfig.from_dict(_read_json(run.input(args.config)), seed=args.seed,
                                threads=args.threads)
    run.config = cfg.to_dict()
    runner = run_consistency_study if args.kind == "consistency" else run_normality_study
    code = 0
    try:
        report = runner(cfg)
    except NumericError as exc:
        report = getattr(exc, "report", None)
        if report is None:
            raise
        sys.stderr.write(f"error: {exc}\n")
        code = exc.exit_code
    for w in report.warnings:
        sys.stderr.write(f"warning: {w}\n")
    run.write_text(dumps(report.to_dict()))
    if args.csv:
        os.makedirs(args.csv, exist_ok=True)
        run.write_text(report.replicate_csv(), os.path.join(args.csv, f"{args.kind}_replicates.csv"))
    return code


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")

    p = argparse.ArgumentParser(prog="corrcox", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="draw a dataset from a truth")
    s.add_argument("--truth", default="default", help="truth JSON or 'default'")
    s.add_argument("--n", type=int, required=True)

    s = sub.add_parser("fit", parents=[common], help="fit the two-stage estimator")
    s.add_argument("--data", required=True, help="CSV with header y,delta,w1..wm")
    s.add_argument("--config", required=True, help="fit config JSON")
    s.add_argument("--stage", type=int, choices=(1, 2), default=2)
    s.add_argument("--stage1-result", default=None, help="reuse a saved stage-1 result")

    s = sub.add_parser("asymptotics", parents=[common], help="population tables and variances")
    s.add_argument("--truth", default="default")
    s.add_argument("--f", default="one", help="'one', 't' or a CSV of grid values")
    s.add_argument("--grid-nodes", type=int, default=asy.DEFAULT_NODES)
    s.add_argument("--reps", type=int, default=asy.DEFAULT_REPS)

    s = sub.add_parser("study", parents=[common], help="Monte Carlo study")
    s.add_argument("--config", required=True, help="study config JSON")
    s.add_argument("--kind", choices=("consistency", "normality"), required=True)
    s.add_argument("--csv", default=None, help="directory for per-replicate CSV")
    return p


COMMANDS = {"simulate": _cmd_simulate, "fit": _cmd_fit,
            "asymptotics": _cmd_asymptotics, "study": _cmd_study}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return 2
    run = _Run(args)
    try:
        code = COMMANDS[args.command](args, run)
    except CorrcoxError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
