"""Command line entry point ``qsmooth``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import sys

from .errors import ConfigError, NumericalError, PreconditionError, ValidationError
from .pre_solver import multistart_solve
from .scenarios import PRESETS, ScenarioConfig, pre_solve_dataset, run_scenario, write_datasets
from .validation import run_invariant_suite

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _build_config(args, preset):
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig(preset=preset)
    overrides = _parse_params(args.param)
    overrides["preset"] = preset
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    return cfg.with_overrides(overrides)


def _cmd_run(args):
    cfg = _build_config(args, args.preset)
    for path in write_datasets(run_scenario(cfg), cfg.out):
        print(path)
    return EXIT_OK


def _cmd_pre_solve(args):
    cfg = _build_config(args, "pre-solve")
    params = cfg.params()
    if args.starts > 0:
        sols = multistart_solve(params, n_starts=args.starts, seed=cfg.seed)
        dataset = pre_solve_dataset(params, [(s.angles, s.wlos) for s in sols])
    else:
        dataset = pre_solve_dataset(params)
    for row in dataset.rows:
        print("solution {} {:>5}: theta={:.8f} occupation={:.8f} mu-={:+.6f} mu+={:+.6f}".format(*row[:6]))
    for path in write_datasets([dataset], cfg.out):
        print(path)
    return EXIT_OK


def _cmd_validate(args):
    results = run_invariant_suite(seed=args.seed or 0)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsmooth", description="Quantum state smoothing for a monitored qubit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--param", action="append", metavar="KEY=VALUE", help="override one configuration key")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    run = sub.add_parser("run", help="run a preset and write its CSV files")
    run.add_argument("preset", choices=sorted(PRESETS))
    common(run)
    run.set_defaults(func=_cmd_run)

    pre = sub.add_parser("pre-solve", help="solve for the cyclic PRE and its WLO amplitudes")
    common(pre)
    pre.add_argument("--starts", type=int, default=0, help="random restarts (0: published seed only)")
    pre.set_defaults(func=_cmd_pre_solve)

    val = sub.add_parser("validate", help="run the invariant suite")
    val.add_argument("--seed", type=int)
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValidationError, PreconditionError) as exc:
        print(f"qsmooth: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"qsmooth: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
