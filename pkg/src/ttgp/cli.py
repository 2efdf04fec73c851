"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 unreadable or malformed input,
4 numerical/stage failure, 5 unexpected error. Failures print one JSON
object on stderr.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .completion import CompletionOptions, complete
from .cross import BlackBox, tt_cross, tt_cross_adaptive
from .errors import ParseError, TTGPError
from .gp import load_model, save_model
from .gpinit import InitOptions, gp_blackbox, gp_tt_init, random_init, uniform_ranks
from .harness import load_config, reports_to_csv, run_sweep
from .observations import load_observations, rescale_indices
from .serialize import load_tt, save_tt
from .tt import tt_eval_batch

EXIT_USAGE, EXIT_INPUT, EXIT_STAGE, EXIT_INTERNAL = 2, 3, 4, 5
KERNELS = ("exp", "matern32", "matern52", "rbf")


def _sum(x):
    return x.sum(axis=1)


FUNCTIONS = {
    "sum": _sum,
    "prod_sin": lambda x: np.prod(np.sin(np.pi * x), axis=1),
    "exp_neg_sum": lambda x: np.exp(-_sum(x)),
    "inv_sum": lambda x: 1.0 / (1.0 + _sum(x)),
    "gauss": lambda x: np.exp(-np.sum((x - 0.5) ** 2, axis=1)),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class InputError(Exception):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


def _modes(text):
    try:
        modes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid mode sizes {text!r}") from None
    if not modes or min(modes) < 1:
        raise argparse.ArgumentTypeError("mode sizes must be positive")
    return modes


def build_parser():
    p = _Parser(
        prog="ttgp",
        description="Tensor-train completion with GP-based initialization.",
        epilog="exit codes: 0 ok, 2 usage, 3 bad input file, 4 numerical/stage failure, "
               "5 internal error; errors are reported as JSON on stderr",
    )
    p.add_argument("--version", action="version", version=f"ttgp {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common_cross(sp):
        sp.add_argument("--r0", type=int, default=2)
        sp.add_argument("--rmax", type=int, default=64)
        sp.add_argument("--round-tol", type=float, default=1e-6)
        sp.add_argument("--sweeps", type=int, default=2)

    sp = sub.add_parser("init", help="observations -> GP-initialized TT")
    sp.add_argument("--obs", required=True)
    sp.add_argument("--modes", type=_modes)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.add_argument("--gp-out")
    sp.add_argument("--kernel", choices=KERNELS, default="rbf")
    sp.add_argument("--gp-starts", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    common_cross(sp)

    sp = sub.add_parser("complete", help="refine an initial TT on observations")
    sp.add_argument("--obs", required=True)
    sp.add_argument("--modes", type=_modes)
    sp.add_argument("--out", required=True)
    sp.add_argument("--init", choices=("random", "gp", "file"), default="gp")
    sp.add_argument("--tt", help="initial TT file for --init file")
    sp.add_argument("--method", choices=("als", "sgd"), default="als")
    sp.add_argument("--iters", type=int, default=100)
    sp.add_argument("--rank", type=int, default=2, help="uniform rank for --init random")
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch", type=int, default=64)
    sp.add_argument("--ridge", type=float)
    sp.add_argument("--kernel", choices=KERNELS, default="rbf")
    sp.add_argument("--gp-starts", type=int, default=4)
    sp.add_argument("--trace", help="trace CSV path (default: OUT.trace.csv)")
    sp.add_argument("--timing", action="store_true", help="record wall-clock seconds in the trace")
    sp.add_argument("--report")
    sp.add_argument("--seed", type=int, default=0)
    common_cross(sp)

    sp = sub.add_parser("cross", help="TT-cross of a built-in function or a saved GP model")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--function", choices=sorted(FUNCTIONS))
    src.add_argument("--gp", help="GP model JSON written by 'init --gp-out'")
    sp.add_argument("--modes", type=_modes, required=True)
    sp.add_argument("--rank", type=int, help="fixed uniform rank (disables adaptation)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.add_argument("--seed", type=int, default=0)
    common_cross(sp)

    sp = sub.add_parser("experiment", help="random vs GP initialization sweep")
    sp.add_argument("--config", required=True)
    sp.add_argument("--report", required=True, help="output CSV")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--timing", action="store_true")
    sp.add_argument("--seed", type=int, help="override the config seed(s)")

    sp = sub.add_parser("eval", help="evaluate a TT at multi-indices")
    sp.add_argument("--tt", required=True)
    sp.add_argument("--index", action="append", default=[], help="1-based, comma separated")
    sp.add_argument("--indices", help="CSV of indices (header i_1,...,i_d[,y])")
    sp.add_argument("--out")
    return p


def _read_obs(args):
    path = Path(args.obs)
    if not path.exists():
        raise InputError(f"observations file not found: {path}", str(path))
    try:
        return load_observations(path, args.modes)
    except FileNotFoundError as exc:
        raise InputError(str(exc), str(path)) from None
    except (ParseError, ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}", str(path)) from None


def _read_tt(path):
    if not Path(path).exists():
        raise InputError(f"TT file not found: {path}", str(path))
    try:
        return load_tt(path)
    except ParseError as exc:
        raise InputError(f"{path}: {exc}", str(path)) from None


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config(args):
    return {k: v for k, v in sorted(vars(args).items())}


def _init_options(args):
    return InitOptions(
        family=args.kernel, n_starts=getattr(args, "gp_starts", 4), r0=args.r0, r_max=args.rmax,
        round_tol=args.round_tol, sweeps=args.sweeps, seed=args.seed,
    )


def cmd_init(args):
    obs = _read_obs(args)
    rep = gp_tt_init(obs, _init_options(args))
    save_tt(rep.tt0, args.out)
    if args.gp_out:
        save_model(rep.gp, args.gp_out)
    _write_json(args.report or f"{args.out}.report.json", {
        "command": "init",
        "config": _config(args),
        "init_options": _init_options(args).to_dict(),
        "gp": rep.gp_summary,
        "cross": {
            "evals": rep.cross.evals,
            "final_ranks": list(rep.cross.final_ranks),
            "sweeps_used": rep.cross.sweeps_used,
            "adapted": rep.cross.adapted,
            "saturated": rep.cross.saturated,
            "working_ranks": [list(r) for r in rep.cross.working_ranks],
        },
        "train_error": rep.train_error,
    })


def cmd_complete(args):
    obs = _read_obs(args)
    info = {}
    if args.init == "file":
        if not args.tt:
            raise UsageError("--init file requires --tt PATH")
        tt0 = _read_tt(args.tt)
    elif args.init == "random":
        tt0 = random_init(obs, uniform_ranks(obs.mode_sizes, args.rank), seed=args.seed)
    else:
        rep = gp_tt_init(obs, _init_options(args))
        tt0 = rep.tt0
        info = {"gp": rep.gp_summary, "cross_evals": rep.cross.evals}
    opts = CompletionOptions(
        method=args.method, n_iters=args.iters, als_ridge=args.ridge, sgd_lr=args.lr,
        sgd_batch=args.batch, seed=args.seed,
    )
    trace = complete(tt0, obs, opts)
    save_tt(trace.tt, args.out)
    with open(args.trace or f"{args.out}.trace.csv", "w") as fh:
        fh.write(trace.to_csv(timing=args.timing))
    _write_json(args.report or f"{args.out}.report.json", {
        "command": "complete",
        "config": _config(args),
        "options": asdict(opts),
        "init": info,
        "ranks": list(trace.tt.ranks),
        "final_objective": trace.objective[-1],
        "train_mse": trace.objective[-1] / max(len(obs), 1),
    })


def cmd_cross(args):
    modes = args.modes
    if args.function:
        fn = FUNCTIONS[args.function]
        box = BlackBox(lambda idx: fn(rescale_indices(idx, modes)))
    else:
        if not Path(args.gp).exists():
            raise InputError(f"GP model file not found: {args.gp}", args.gp)
        try:
            model = load_model(args.gp)
        except (ValueError, KeyError) as exc:
            raise InputError(f"{args.gp}: {exc}", args.gp) from None
        if model.x.shape[1] != len(modes):
            raise InputError(f"GP model has dimension {model.x.shape[1]}, modes have {len(modes)}",
                             args.gp)
        box = gp_blackbox(model, modes)
    if args.rank:
        rep = tt_cross(box, modes, uniform_ranks(modes, args.rank), sweeps=args.sweeps,
                       seed=args.seed)
    else:
        rep = tt_cross_adaptive(box, modes, r0=args.r0, r_max=args.rmax,
                                round_tol=args.round_tol, sweeps=args.sweeps, seed=args.seed)
    save_tt(rep.tt, args.out)
    _write_json(args.report or f"{args.out}.report.json", {
        "command": "cross",
        "config": _config(args),
        "evals": rep.evals,
        "final_ranks": list(rep.final_ranks),
        "adapted": rep.adapted,
        "saturated": rep.saturated,
    })


def cmd_experiment(args):
    path = Path(args.config)
    if not path.exists():
        raise InputError(f"config file not found: {path}", str(path))
    try:
        doc = load_config(path)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}", str(path)) from None
    if args.seed is not None:
        doc.pop("seeds", None)
        doc["seed"] = args.seed
    try:
        reports = run_sweep(doc, jobs=args.jobs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}", str(path)) from None
    with open(args.report, "w") as fh:
        fh.write(reports_to_csv(reports, timing=args.timing))
    _write_json(f"{args.report}.config.json", {"command": "experiment", "config": _config(args),
                                                "document": doc})


def cmd_eval(args):
    tt = _read_tt(args.tt)
    rows = []
    for text in args.index:
        try:
            rows.append([int(v) for v in text.split(",")])
        except ValueError:
            raise UsageError(f"invalid index {text!r}") from None
    if args.indices:
        if not Path(args.indices).exists():
            raise InputError(f"index file not found: {args.indices}", args.indices)
        data = np.loadtxt(args.indices, delimiter=",", skiprows=1, ndmin=2)
        rows.extend(data[:, :tt.d].astype(np.int64).tolist())
    idx = np.array(rows, dtype=np.int64).reshape(-1, tt.d)
    vals = tt_eval_batch(tt, idx)
    lines = [",".join([f"i_{k + 1}" for k in range(tt.d)] + ["value"])]
    lines += [",".join(map(str, r)) + f",{v!r}" for r, v in zip(idx.tolist(), vals.tolist())]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


COMMANDS = {
    "init": cmd_init,
    "complete": cmd_complete,
    "cross": cmd_cross,
    "experiment": cmd_experiment,
    "eval": cmd_eval,
}


def _fail(code, kind, message, **extra):
    doc = {"error": kind, "message": message, "exit_code": code, **extra}
    sys.stderr.write(json.dumps(doc) + "\n")
    return code


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except InputError as exc:
        return _fail(EXIT_INPUT, "input", str(exc), path=exc.path)
    except TTGPError as exc:
        return _fail(EXIT_STAGE, type(exc).__name__, str(exc),
                     stage=getattr(exc, "stage", None))
    except OSError as exc:
        return _fail(EXIT_INPUT, "input", str(exc), path=getattr(exc, "filename", None))
    except Exception as exc:  # pragma: no cover - last-resort channel
        return _fail(EXIT_INTERNAL, type(exc).__name__, str(exc))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
