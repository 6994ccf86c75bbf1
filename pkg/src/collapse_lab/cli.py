"""Command line entry point: ``collapse-lab fig3|fig4|mediate|verify``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CollapseLabError, ConfigError
from .experiments import (COMMANDS, ScenarioConfig, apply_seed_env, default_config, run_fig3,
                          run_fig4, run_mediate, run_verify)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="collapse-lab",
        description="Contrastive-loss collapse experiments on stochastic block models.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path,
                   help="JSON scenario file; missing keys take the command's defaults")
    p.add_argument("--out", type=Path, help="override the output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for cells and seeds")
    p.add_argument("--plot-data", action="store_true", help="also write long-form tidy CSV")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective config and exit")
    return p


def load_config(args) -> ScenarioConfig:
    if args.config is not None:
        cfg = ScenarioConfig.load(args.config, command=args.command)
    else:
        cfg = default_config(args.command)
    cfg = apply_seed_env(cfg)
    if args.out is not None:
        cfg = ScenarioConfig.from_dict({**json.loads(cfg.to_json()), "out_dir": str(args.out)})
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args)
        if args.print_config:
            sys.stdout.write(cfg.to_json())
            return 0
        if cfg.command == "fig3":
            run_fig3(cfg, args.jobs, args.plot_data)
        elif cfg.command == "fig4":
            res = run_fig4(cfg, args.jobs, args.plot_data)
            for cell in res.skipped:
                print(f"skipped pi1={cell['pi1']} alpha={cell['alpha']}: {cell['skipped']}",
                      file=sys.stderr)
        elif cfg.command == "mediate":
            run_mediate(cfg, args.jobs, args.plot_data)
        else:
            report = run_verify(cfg)
            for name, check in report["checks"].items():
                print(f"{'PASS' if check['passed'] else 'FAIL'} {name}")
            if not report["passed"]:
                return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CollapseLabError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"results written to {cfg.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
