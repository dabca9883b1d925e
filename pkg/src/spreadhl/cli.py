"""Command-line entry point: ``spreadhl <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import MeasurementDataset, atomic_write_text, generate_dataset
from .fisher_schedule import Schedule, ensemble_cfi_curve, loglog_slope_fit
from .harness import PRESETS, ExperimentConfig, derive_seed, predict, sweep_alpha, sweep_spread
from .pauli_model import ParameterSpec, build_model
from .recovery import RecoveryConfig, RecoveryDivergence, run_recovery

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("spreadhl")


class ConfigError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _echo(command: str, settings: dict) -> None:
    print(json.dumps({"command": command, **settings}, sort_keys=True, default=str))


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def cmd_generate(args) -> int:
    model = build_model(ParameterSpec(args.family, args.n, seed=derive_seed(args.seed, 3, 0)))
    schedule = Schedule(args.dt, args.alpha, args.mt)
    _echo("generate", {"family": args.family, "n": args.n, "alpha": args.alpha, "dt": args.dt,
                       "mt": args.mt, "spreads": args.spreads, "bases": args.bases,
                       "shots": args.shots, "seed": args.seed, "exact": args.exact})
    ds = generate_dataset(model, args.spreads, args.bases, args.shots, schedule, args.seed,
                          exact=args.exact)
    ds.save(args.out)
    print(f"wrote {len(ds)} records to {args.out}")
    return EXIT_OK


def cmd_recover(args) -> int:
    try:
        ds = MeasurementDataset.load(args.dataset)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load dataset {args.dataset}: {exc}") from exc
    cfg = RecoveryConfig.from_dict(_read_json(args.config)) if args.config else RecoveryConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    _echo("recover", {"dataset": args.dataset, "config": cfg.to_dict()})
    res = run_recovery(ds, cfg)
    print(f"iterations={res.iterations} converged={res.converged} "
          f"loss={res.loss_trace[-1]:.6g} epsilon={res.epsilon}")
    if args.out:
        atomic_write_text(args.out, res.to_json())
    return EXIT_OK


def cmd_fisher_scan(args) -> int:
    model = build_model(ParameterSpec(args.family, args.n, seed=derive_seed(args.seed, 3, 0)))
    times = np.geomspace(args.tmin, args.tmax, args.points)
    _echo("fisher-scan", {"family": args.family, "n": args.n, "tmin": args.tmin,
                          "tmax": args.tmax, "points": args.points, "spreads": args.spreads,
                          "bases": args.bases, "seed": args.seed})
    report = ensemble_cfi_curve(model, None, times, args.spreads, args.bases, args.seed,
                                keep_matrices=args.matrix_out is not None)
    if args.out:
        report.write_csv(args.out)
    if args.matrix_out:
        report.write_matrix_csv(args.matrix_out)
    slope, err, _ = loglog_slope_fit(times, report.cfi_values)
    print(f"log-log slope of mean CFI: {slope:.4f} +- {err:.4f}")
    if not args.out:
        print("t,mean_cfi,stderr_cfi")
        for t, m, s in zip(times, report.cfi_values, report.cfi_stderr):
            print(f"{t!r},{m!r},{s!r}")
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    base = PRESETS[args.preset]
    overrides = {k: getattr(args, k) for k in
                 ("family", "n", "alpha", "dt", "m_t", "spreads", "bases", "shots",
                  "realizations", "seed", "jobs") if getattr(args, k, None) is not None}
    if args.exact:
        overrides["exact"] = True
    if args.independent:
        overrides["independent"] = True
    if args.recovery_config:
        overrides["recovery"] = RecoveryConfig.from_dict(_read_json(args.recovery_config))
    return replace(base, **overrides)


def cmd_sweep(args, axis: str) -> int:
    cfg = _experiment_config(args)
    values = args.alphas if axis == "alpha" else args.spreads_list
    _echo(f"sweep-{axis}", {"values": values, "config": cfg.to_dict()})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = (sweep_alpha(cfg, values, out) if axis == "alpha"
              else sweep_spread(cfg, values, out))
    sys.stdout.write(result.summary_csv())
    return EXIT_OK


def cmd_predict(args) -> int:
    if not args.alpha > -1:
        raise ConfigError("alpha must exceed -1")
    print(predict(args.alpha, args.gamma0))
    return EXIT_OK


def _add_experiment_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--family", choices=["XYZ", "XYZ2", "XYZ3", "XXZ"])
    p.add_argument("--n", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--mt", dest="m_t", type=int)
    p.add_argument("--bases", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="parallel realizations")
    p.add_argument("--exact", action="store_true", help="infinite-shot data")
    p.add_argument("--independent", action="store_true",
                   help="fresh experiment per prefix instead of prefixes of one dataset")
    p.add_argument("--recovery-config", help="JSON file with optimiser settings")
    p.add_argument("--out", required=True, help="output directory for CSV files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spreadhl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a measurement dataset")
    p.add_argument("--family", choices=["XYZ", "XYZ2", "XYZ3", "XXZ"], default="XYZ")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--mt", type=int, default=8)
    p.add_argument("--spreads", type=int, default=32)
    p.add_argument("--bases", type=int, default=25)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("recover", help="maximum-likelihood recovery from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="JSON file with optimiser settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("fisher-scan", help="ensemble classical Fisher information vs time")
    p.add_argument("--family", choices=["XYZ", "XYZ2", "XYZ3", "XXZ"], default="XYZ")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--tmin", type=float, default=1e-3)
    p.add_argument("--tmax", type=float, default=3e-2)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--spreads", type=int, default=64)
    p.add_argument("--bases", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV for the curve")
    p.add_argument("--matrix-out", help="long-format CSV of ensemble Fisher matrices")
    p.set_defaults(func=cmd_fisher_scan)

    p = sub.add_parser("sweep-alpha", help="fit beta for each scheduling exponent")
    p.add_argument("--alphas", type=_floats, default=[0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    p.add_argument("--spreads", type=int)
    _add_experiment_flags(p)
    p.set_defaults(func=lambda a: cmd_sweep(a, "alpha"))

    p = sub.add_parser("sweep-spread", help="fit beta for each spread-ensemble size")
    p.add_argument("--spreads-list", type=_ints, default=[1, 2, 4, 8, 16, 32])
    p.add_argument("--alpha", type=float)
    _add_experiment_flags(p)
    p.set_defaults(func=lambda a: cmd_sweep(a, "spreads"))

    p = sub.add_parser("predict", help="closed-form scaling exponents")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--gamma0", type=float, default=2.0)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RecoveryDivergence, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
