"""Command-line entry point: ``hampinn <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import dataio, experiments, sim
from .pauli import Preset
from .trainer import TrainConfig, fit


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _train_overrides(args) -> dict:
    out = {}
    if getattr(args, "iterations", None) is not None:
        out["iterations"] = args.iterations
    if getattr(args, "restarts", None) is not None:
        out["restarts"] = args.restarts
    return out


def cmd_gen_data(args):
    preset = Preset.parse(args.preset)
    if args.couplings:
        J0, file_preset = dataio.read_couplings(args.couplings)
        if file_preset is not preset:
            sim.validate_couplings(J0, preset)
    else:
        J0 = sim.sample_couplings(experiments.derive_seed(args.seed, 0), args.t_final, preset,
                                  sim.MIN_ABS_FRACTION)
    J = sim.perturb_couplings(J0, args.sigma, experiments.derive_seed(args.seed, 1),
                              args.t_final, preset)
    ds = sim.generate_dataset(J, N=args.n, T=args.t_final, true_couplings=J0,
                              sigma=args.sigma, preset=preset, seed=args.seed)
    dataio.write_dataset(ds, args.out)
    if args.save_couplings:
        dataio.write_couplings(J0, args.save_couplings, preset)


def cmd_fit(args):
    ds = dataio.read_dataset(args.data)
    preset = Preset.parse(args.preset) if args.preset else (ds.preset or Preset.GENERAL)
    if args.truth:
        J, _ = dataio.read_couplings(args.truth)
        ds.true_couplings = sim.validate_couplings(J, preset)
    config = TrainConfig(preset=preset, seed=args.seed, **_train_overrides(args))
    result = fit(ds, config)
    doc = json.dumps(result.to_dict(), indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(doc)
    else:
        sys.stdout.write(doc)
    if result.mae is not None:
        logging.getLogger(__name__).info("MAE %.6g", result.mae)


def _sweep(args, kind, values):
    config = experiments.SweepConfig(
        preset=args.preset, kind=kind, values=values, trials=args.trials,
        n_points=getattr(args, "n", 5), sigma=getattr(args, "sigma", 0.0),
        t_final=args.t_final, seed=args.seed, out=args.out, workers=args.workers,
        train=_train_overrides(args),
    )
    report = experiments.run_sweep(config)
    for point in report["points"]:
        stats = point["stats"]
        median = "n/a" if stats is None else f"{stats['median']:.4g}"
        print(f"{kind} value={point['value']} median_mae={median} failed={point['failed']}")


def cmd_sweep_collocation(args):
    _sweep(args, "collocation", _ints(args.n_list))


def cmd_sweep_noise(args):
    _sweep(args, "noise", _floats(args.sigma_list))


def cmd_stats(args):
    print(json.dumps(experiments.stats_from_raw_csv(args.input), indent=1))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hampinn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def train_flags(p):
        p.add_argument("--iterations", type=int, help="optimizer steps per restart")
        p.add_argument("--restarts", type=int, help="independent restarts per fit")

    p = sub.add_parser("gen-data", help="simulate a tomography dataset")
    p.add_argument("--preset", default="general", choices=["z", "xyz", "general"])
    p.add_argument("--n", type=int, default=5, help="collocation points")
    p.add_argument("--t-final", type=float, default=sim.DEFAULT_T)
    p.add_argument("--sigma", type=float, default=0.0, help="noise, fraction of omega_0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--couplings", help="couplings JSON to use instead of sampling")
    p.add_argument("--save-couplings", help="also write the true couplings JSON here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit", help="fit couplings to a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--preset", choices=["z", "xyz", "general"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", help="couplings JSON for error metrics")
    p.add_argument("--out")
    train_flags(p)
    p.set_defaults(func=cmd_fit)

    for name, func in (("sweep-collocation", cmd_sweep_collocation),
                       ("sweep-noise", cmd_sweep_noise)):
        p = sub.add_parser(name)
        p.add_argument("--preset", default="z", choices=["z", "xyz", "general"])
        if name == "sweep-collocation":
            p.add_argument("--n-list", default="2,5,10,20,50")
            p.add_argument("--sigma", type=float, default=0.0)
        else:
            p.add_argument("--n", type=int, default=20)
            p.add_argument("--sigma-list", default="0.001,0.01,0.05,0.1")
        p.add_argument("--trials", type=int, default=50)
        p.add_argument("--t-final", type=float, default=sim.DEFAULT_T)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", required=True, help="output directory")
        train_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("stats", help="boxplot statistics from a raw sweep CSV")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"hampinn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
