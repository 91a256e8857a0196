"""Command-line entry point: ``regenlab <kind> --config cfg.yaml --out DIR``."""

import argparse
import dataclasses
import json
import logging
import os
import sys

from .errors import ConfigError, CouplingError
from .harness import KINDS, load_config, run_experiment
from .plots import PLOT_KINDS, emit_plots

log = logging.getLogger("regenlab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="regenlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run a {kind} experiment")
        s.add_argument("--config", required=True, help="YAML experiment file")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--threads", type=int, help="worker threads (also REGENLAB_THREADS)")
        s.add_argument("--plots", default="", help=f"comma-separated subset of {','.join(PLOT_KINDS)}")
        s.add_argument("--dump-trajectories", action="store_true", help="write one CSV per path")
    r = sub.add_parser("report", help="re-emit plots from an existing output directory")
    r.add_argument("--out", required=True)
    r.add_argument("--plots", default=",".join(PLOT_KINDS))
    r.add_argument("--config", help=argparse.SUPPRESS)
    return p


def _plot_list(text):
    return [k for k in (t.strip() for t in text.split(",")) if k]


def _run(args):
    cfg = load_config(args.config)
    over = {"kind": args.command}
    if args.out:
        over["out"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    threads = args.threads or os.environ.get("REGENLAB_THREADS")
    if threads:
        try:
            over["threads"] = int(threads)
        except ValueError as exc:
            raise ConfigError("thread count must be an integer", "threads") from exc
    if args.dump_trajectories:
        over["dump_trajectories"] = True
    plots = _plot_list(args.plots)
    if plots:
        over["plots"] = tuple(plots)
    cfg = dataclasses.replace(cfg, **over).validate()
    out = cfg.out or "results"
    env = run_experiment(cfg)
    env.write(out)
    written = emit_plots(env.summary, list(cfg.plots), out)
    print(json.dumps({"out": out, "config_hash": env.config_hash, "plots": written}))
    return EXIT_OK


def _report(args):
    path = os.path.join(args.out, "summary.json")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}", "out") from exc
    written = emit_plots(doc.get("summary", {}), _plot_list(args.plots), args.out)
    print(json.dumps({"out": args.out, "plots": written}))
    return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return _report(args)
        return _run(args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CouplingError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
