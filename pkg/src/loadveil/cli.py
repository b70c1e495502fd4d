"""Command line entry point: ``loadveil run|sweep|grid|validate``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .harness import (
    ConfigError,
    emit_results,
    grid_configs,
    load_config,
    parse_config,
    run_configs,
    run_sweep,
)


def _parse_axis(text):
    name, sep, values = text.partition("=")
    if not sep or not name or not values:
        raise argparse.ArgumentTypeError(f"axis must look like name=v1,v2,...; got {text!r}")
    parsed = []
    for v in values.split(","):
        try:
            parsed.append(json.loads(v))
        except json.JSONDecodeError:
            parsed.append(v)
    return name, parsed


def _out_dir(args, doc):
    return args.out or doc.get("outputs", {}).get("dir") or "results"


def _report(results, out):
    paths = emit_results(results, out)
    failed = [r for r in results if not r.ok]
    for r in sorted(results, key=lambda r: r.scenario_id):
        if r.ok:
            print(f"{r.scenario_id}: rmse {r.rmse_w:.2f} W, turnover {r.turnover_kwh:.3f} kWh, "
                  f"ACC {r.accuracy.total:.3f} (all-off {r.reference.total:.3f})")
        else:
            print(f"{r.scenario_id}: FAILED: {r.error}", file=sys.stderr)
    print(f"wrote {len(paths)} files to {out}")
    return 1 if failed else 0


def cmd_run(args):
    doc = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    parse_config(doc, base, args.seed)
    return _report(run_configs([doc], 1, base, args.seed), _out_dir(args, doc))


def cmd_sweep(args):
    doc = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    parse_config(doc, base, args.seed)
    axis, values = args.axis
    results = run_sweep(doc, axis, values, jobs=args.jobs, base_dir=base, seed=args.seed)
    return _report(results, _out_dir(args, doc))


def cmd_grid(args):
    doc = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    docs = grid_configs(doc)
    for d in docs:
        parse_config(d, base, args.seed)
    return _report(run_configs(docs, args.jobs, base, args.seed), _out_dir(args, doc))


def cmd_validate(args):
    doc = load_config(args.config)
    cfg = parse_config(doc, os.path.dirname(os.path.abspath(args.config)), args.seed)
    print(f"ok: scenario {cfg.scenario_id!r}, technique {cfg.technique}, "
          f"{cfg.n_samples} samples, {len(cfg.models)} appliances, seed {cfg.seed}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="loadveil", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=True):
        sp.add_argument("--config", required=True, help="scenario JSON document")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        if jobs:
            sp.add_argument("--out", default=None, help="output directory")
            sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("run", help="run one scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run one scenario per value of a config field")
    common(sp)
    sp.add_argument("--axis", required=True, type=_parse_axis,
                    help="dotted config path and values, e.g. blh.capacity_ah=10,100,600")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("grid", help="original trace plus every battery and boiler case")
    common(sp)
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("validate", help="check a config without running it")
    common(sp, jobs=False)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
