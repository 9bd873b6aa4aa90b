"""Command line entry point: ``fdmgdl run|certify|preset``.

Thread count: set ``FDMGDL_THREADS``; it is copied to the BLAS/OpenMP variables
before numpy is imported.  ``--deterministic`` forces a single thread.
"""
from __future__ import annotations

import argparse
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _set_threads(n: str | None) -> None:
    if n:
        for var in THREAD_VARS:
            os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdmgdl", description="FD-MGDL Helmholtz experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--deterministic", action="store_true")
    cert = sub.add_parser("certify", help="duality-gap certificates on random instances")
    cert.add_argument("--config", required=True)
    cert.add_argument("--out")
    pre = sub.add_parser("preset", help="inspect presets")
    pre.add_argument("action", choices=["list", "show"])
    pre.add_argument("name", nargs="?")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    deterministic = getattr(args, "deterministic", False)
    _set_threads("1" if deterministic else os.environ.get("FDMGDL_THREADS"))

    import dataclasses
    import json

    from .experiment import ConfigError, ExperimentConfig, parse_config_text, run_experiment, write_outputs
    from .presets import get_preset, list_presets

    if args.command == "preset":
        if args.action == "list":
            print("\n".join(list_presets()))
            return 0
        if not args.name:
            print("preset show needs a name", file=sys.stderr)
            return 2
        try:
            print(json.dumps(dataclasses.asdict(get_preset(args.name)), indent=2))
        except KeyError as exc:
            print(exc.args[0], file=sys.stderr)
            return 2
        return 0

    try:
        with open(args.config) as fh:
            items = parse_config_text(fh.read())
        if args.command == "certify":
            items["method"] = "certify"
        cfg = ExperimentConfig.from_mapping(items)
        if getattr(args, "seed", None) is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out:
            cfg = dataclasses.replace(cfg, out=args.out)
        if deterministic:
            cfg = dataclasses.replace(cfg, deterministic=True)
    except (OSError, ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    artifacts = None
    try:
        artifacts = run_experiment(cfg)
    finally:
        if artifacts is not None:
            files = write_outputs(artifacts, cfg.out, deterministic=cfg.deterministic,
                                  residual=cfg.get("output.residual", "true").lower() != "false")
            for f in files:
                print(f)
    report = artifacts.report
    summary = {k: v for k, v in report.metrics.items() if isinstance(v, (int, float, str)) or v is None}
    print(json.dumps({"status": report.status, **summary}, default=str))
    return 0 if report.status == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
