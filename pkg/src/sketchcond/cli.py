"""Command-line front end.

Subcommands:
    gen      synthetic dataset with controlled spectral decay -> CSV
    sketch   dataset -> serialized low-rank conditioner + JSON report
    train    dataset + conditioner -> trace CSV (+ optional figure)
    bounds   spectrum or dataset -> bound report JSON
    compare  JSON config -> per-arm traces, summary JSON, figures

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure (divergence or rank deficiency).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from .conditioner import load_conditioner, save_conditioner
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv, save_csv
from .errors import (ConfigError, DataError, DivergenceError, LinalgError, SketchcondError)
from .harness import ArmSpec, build_arm_conditioner, compare
from .linalg import second_moment, sym_eig
from .optimizer import TrainConfig, train, write_trace_csv
from .sketch import SketchConfig, sketched_preprocessing

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--step-mode", choices=("fixed", "theory", "schedule"), default="fixed")
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--eta0", type=float, default=0.01)
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--power", type=float, default=0.75)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=100)
    p.add_argument("--refresh-every", type=int, default=0)
    p.add_argument("--ema-nu", type=float, default=0.01)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        iterations=args.iterations, step_size_mode=args.step_mode, eta=args.eta,
        sigma=args.sigma, eta0=args.eta0, gamma=args.gamma, power=args.power,
        batch_size=args.batch_size, momentum=args.momentum, seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        conditioner_refresh_every=args.refresh_every, ema_nu=args.ema_nu,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchcond",
        description="Conditioned SGD with full and sketched low-rank preconditioners.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--decay-power", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--planted-out", help="also save the planted weights (one row per class)")

    p = sub.add_parser("sketch", help="build a sketched low-rank conditioner")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--r", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distribution", choices=("gaussian", "rademacher"), default="gaussian")
    p.add_argument("--out", required=True, help="conditioner file")
    p.add_argument("--report", help="JSON sketch report path")

    p = sub.add_parser("train", help="train a conditioned linear model")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data")
    p.add_argument("--conditioner", help="conditioner file from 'sketch'")
    p.add_argument("--arm", choices=("identity", "full", "exact_lowrank", "sketched"),
                   default="identity", help="build the conditioner in-process instead")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--r", type=int)
    _add_train_flags(p)
    p.add_argument("--trace", required=True, help="output trace CSV")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                   help="render a loss figure next to the trace")

    p = sub.add_parser("bounds", help="evaluate the theoretical bounds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spectrum", help="file with one eigenvalue per line")
    src.add_argument("--data", help="dataset CSV; the spectrum of its second moment is used")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=float(np.sqrt(2.0)))
    p.add_argument("--iterations", type=int, default=10000)
    p.add_argument("--k", type=int)
    p.add_argument("--delta-trace-norm", type=float)
    p.add_argument("--delta-spectral-norm", type=float)
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("compare", help="run a multi-arm benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)

    return parser


def _cmd_gen(args) -> int:
    spec = SyntheticSpec(n=args.n, m=args.m, p=args.p, decay_power=args.decay_power,
                         noise=args.noise, seed=args.seed)
    dataset, planted = generate_synthetic(spec)
    save_csv(dataset, args.out)
    if args.planted_out:
        np.savetxt(args.planted_out, planted, fmt="%.17g", delimiter=",")
    print(f"wrote {dataset.m} examples (n={dataset.n}, p={dataset.num_classes}) to {args.out}")
    return 0


def _cmd_sketch(args) -> int:
    dataset = load_csv(args.data)
    cfg = SketchConfig(k=args.k, r=args.r, seed=args.seed, distribution=args.distribution)
    cond, report = sketched_preprocessing(dataset.x, cfg)
    save_conditioner(cond, args.out)
    payload = report.to_json_dict()
    if args.report:
        with open(args.report, "w", encoding="ascii") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        json.dump(payload, sys.stdout, indent=2)
        print()
    print(f"wrote conditioner (k={cond.rank}) to {args.out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    dataset = load_csv(args.data)
    eval_data: Dataset | None = load_csv(args.eval_data) if args.eval_data else None
    if args.conditioner:
        cond = load_conditioner(args.conditioner)
    else:
        spec = ArmSpec(name=args.arm, kind=args.arm, k=args.k, r=args.r, seed=args.seed)
        cond = build_arm_conditioner(spec, dataset)
    cfg = _train_config(args)
    state, trace = train(dataset, cond, cfg, eval_data=eval_data)
    write_trace_csv(trace, args.trace)
    if args.plot:
        from .figures import render_traces

        figure_path = str(Path(args.trace).with_suffix(".png"))
        render_traces({args.arm if not args.conditioner else "run": trace}, figure_path)
        print(f"wrote {args.trace} and {figure_path}")
    else:
        print(f"wrote {args.trace}")
    last = trace.checkpoints[-1]
    print(f"final train loss {last.train_loss:.6g}, error {last.train_error01:.4f}")
    return 0


def _load_spectrum(path: str) -> np.ndarray:
    values = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric eigenvalue {line!r}") from None
    if not values:
        raise DataError(f"{path}: no eigenvalues")
    return np.sort(np.asarray(values))[::-1]


def _cmd_bounds(args) -> int:
    if args.spectrum:
        spectrum = _load_spectrum(args.spectrum)
    else:
        dataset = load_csv(args.data)
        spectrum = sym_eig(second_moment(dataset.x)).values
    inputs = bounds_mod.BoundInputs(sigma=args.sigma, rho=args.rho,
                                    iterations=args.iterations,
                                    spectrum=spectrum, k=args.k)
    report = bounds_mod.bound_report(inputs, args.delta_trace_norm, args.delta_spectral_norm)
    payload = report.to_json_dict()
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        json.dump(payload, sys.stdout, indent=2)
        print()
    return 0


def _cmd_compare(args) -> int:
    with open(args.config, "r", encoding="ascii") as fh:
        cfg_json = json.load(fh)

    data_field = cfg_json.get("data")
    if isinstance(data_field, dict) and "synthetic" in data_field:
        dataset, _ = generate_synthetic(SyntheticSpec(**data_field["synthetic"]))
    elif isinstance(data_field, str):
        dataset = load_csv(data_field)
    else:
        raise ConfigError("config needs 'data': path or {'synthetic': {...}}")

    eval_data = None
    if "eval_data" in cfg_json:
        ev = cfg_json["eval_data"]
        if isinstance(ev, dict) and "synthetic" in ev:
            eval_data, _ = generate_synthetic(SyntheticSpec(**ev["synthetic"]))
        else:
            eval_data = load_csv(ev)

    train_cfg = TrainConfig(**cfg_json.get("train", {}))
    arms = [ArmSpec.from_dict(d) for d in cfg_json.get("arms", [])]
    report = compare(dataset, arms, train_cfg, target_loss=cfg_json.get("target_loss"),
                     eval_data=eval_data, outdir=args.outdir, plot=args.plot)
    print(json.dumps(report.summary_dict(), indent=2))
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "sketch": _cmd_sketch,
    "train": _cmd_train,
    "bounds": _cmd_bounds,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, LinalgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except SketchcondError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
