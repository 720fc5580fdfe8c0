"""Command line: ``fedaq run|compare|trace``.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import runner
from .config import ExperimentConfig, load_config
from .errors import ConfigError, FedAQError

log = logging.getLogger("fedaq")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _load(path: str, args) -> ExperimentConfig:
    cfg = load_config(path)
    return cfg.with_overrides(seed=args.seed)


def _out_dir(cfg: ExperimentConfig, args, default: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.experiment.output_dir:
        return Path(cfg.experiment.output_dir)
    return Path("runs") / default


def cmd_run(args) -> int:
    cfg = _load(args.config, args)
    out = _out_dir(cfg, args, cfg.experiment.name)
    exp = runner.run_experiment(cfg)
    runner.write_run_outputs(exp, out)
    s = runner.summary(exp)
    print(f"{cfg.experiment.name}: {s['rounds']} rounds, final test accuracy "
          f"{s['final_test_accuracy']}, total energy {s['energy_total_pj']:.6g} pJ -> {out}")
    return EXIT_OK


def _unique_names(cfgs: list[ExperimentConfig]) -> list[ExperimentConfig]:
    seen: dict[str, int] = {}
    out = []
    for cfg in cfgs:
        name = cfg.experiment.name
        if name in seen:
            seen[name] += 1
            name = f"{name}-{seen[name]}"
        else:
            seen[name] = 0
        out.append(dataclasses.replace(cfg, experiment=dataclasses.replace(cfg.experiment, name=name)))
    return out


def cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two configs")
    cfgs = _unique_names([_load(p, args) for p in args.configs])
    base = cfgs[0]
    for path, cfg in zip(args.configs[1:], cfgs[1:]):
        for section in ("model", "data"):
            if getattr(cfg, section) != getattr(base, section):
                raise ConfigError(f"[{section}] differs from {args.configs[0]}", path=path)
        if cfg.experiment.seed != base.experiment.seed:
            raise ConfigError(f"seed differs from {args.configs[0]}", path=path)
    out = Path(args.out) if args.out else Path("runs") / "compare"
    experiments = []
    for cfg in cfgs:
        exp = runner.run_experiment(cfg)
        runner.write_run_outputs(exp, out / cfg.experiment.name)
        experiments.append(exp)
    rows = runner.compare(experiments, args.threshold_acc, args.threshold_loss)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(runner.comparison_csv(rows))
    print(runner.comparison_table(rows))
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _load(args.config, args)
    out = _out_dir(cfg, args, f"{cfg.experiment.name}-trace")
    exp = runner.run_experiment(runner.lossless_variant(cfg))
    out.mkdir(parents=True, exist_ok=True)
    (out / "ranges.csv").write_text(runner.ranges_csv(exp.history))
    up, dn = runner.range_trends(exp.history, args.skip)
    print(f"uplink range slope {up.slope:+.6g} (spearman {up.spearman:+.3f}), "
          f"downlink range slope {dn.slope:+.6g} (spearman {dn.spearman:+.3f})")
    if cfg.energy.budget > 0 and exp.history:
        alpha = runner.oracle_constant(cfg)
        print(f"oracle constant for budget {cfg.energy.budget:.6g} pJ ({cfg.policy.kind}): {alpha:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=_seed, help="override the run seed")

    ap = argparse.ArgumentParser(prog="fedaq", description="Quantized federated learning experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one experiment")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="compare energy to reach a threshold")
    p.add_argument("configs", nargs="+")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold-acc", type=float, help="test accuracy to reach")
    g.add_argument("--threshold-loss", type=float, help="training loss to reach")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trace", parents=[common], help="record ranges over a lossless run")
    p.add_argument("config")
    p.add_argument("--skip", type=int, default=0, help="leading rounds excluded from trend fits")
    p.set_defaults(func=cmd_trace)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FedAQError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
