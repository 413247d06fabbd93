"""``persistence-lab`` command line.

    persistence-lab run <config|builtin> [--seed N] [--workers N] [--replicas N] [--out DIR]
    persistence-lab theory <family> key=value ...
    persistence-lab validate <config|builtin>

Exit status: 0 ok, 1 statistical target missed, 3 truncation budget
exceeded, 2 usage or config error.  ``run`` prints the machine-readable
report as JSON on stdout.
"""
from __future__ import annotations

import argparse
import json
import sys

from .runner import (
    OUT_ENV,
    STATUS_FAILED,
    STATUS_OK,
    ExperimentConfig,
    builtin_names,
    load_experiment,
    output_root,
    run_experiment,
)
from .theory import family_exponents

EXIT = {STATUS_OK: 0, STATUS_FAILED: 3}


def _parse_value(v: str):
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v


def _config(ref, args=None) -> ExperimentConfig:
    doc = load_experiment(ref)
    if args is not None:
        doc = dict(doc.get("config", doc)) if "files" in doc else dict(doc)
        for key in ("seed", "workers", "replicas"):
            if getattr(args, key) is not None:
                doc[key] = getattr(args, key)
    return ExperimentConfig.from_dict(doc)


def cmd_run(args) -> int:
    cfg = _config(args.config, args)
    res = run_experiment(cfg, output_root(args.out, cfg))
    json.dump({"outdir": str(res.outdir), **res.report}, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")
    return EXIT.get(res.status, 1)


def cmd_theory(args) -> int:
    params = {}
    for item in args.params:
        if "=" not in item:
            raise SystemExit(f"parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        params[k] = _parse_value(v)
    json.dump(family_exponents(args.family, **params).to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args.config)
    chain = cfg.chain()
    json.dump({"name": cfg.name, "kind": cfg.kind, "config_hash": cfg.hash(), "sites": chain.n_sites,
               "local_time_mass": chain.local_time_mass, "valid": True}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="persistence-lab", description=__doc__.split("\n\n")[0],
                                 epilog=f"builtin experiments: {', '.join(builtin_names())}; "
                                        f"output root: --out, else ${OUT_ENV}, else ./runs")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--replicas", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)
    t = sub.add_parser("theory", help="closed-form exponents of a model family")
    t.add_argument("family")
    t.add_argument("params", nargs="*", help="key=value")
    t.set_defaults(func=cmd_theory)
    v = sub.add_parser("validate", help="check a config without simulating")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as err:
        print(f"persistence-lab: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
