"""Command-line interface: ``circmode {test,study,pipeline,patches,fixture}``.

Settings come from, in increasing priority: built-in defaults, the
``CIRCMODE_SEED`` environment variable (seed only), a JSON ``--config``
file, and command-line flags.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .exceptions import CircModeError

SEED_ENV = "CIRCMODE_SEED"


def _env_seed():
    value = os.environ.get(SEED_ENV)
    return int(value) if value not in (None, "") else None


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _merge(config, args, keys, defaults):
    """Flag value if given, else config value, else default."""
    out = {}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in config:
            out[key] = config[key]
        elif key == "seed" and _env_seed() is not None:
            out[key] = _env_seed()
        elif key in defaults:
            out[key] = defaults[key]
    return out


def read_angles(path, column=None, degrees=False):
    """Angles from a text file (one per line) or a CSV column."""
    with open(path, newline="") as fh:
        text = fh.read()
    if column is not None:
        rows = list(csv.DictReader(text.splitlines()))
        values = [float(r[column]) for r in rows]
    else:
        values = [float(tok) for tok in text.replace(",", " ").split()]
    arr = np.asarray(values, float)
    return np.deg2rad(arr) if degrees else arr


def cmd_test(args):
    from .modetest import excess_mass_test, watson_test

    cfg = _load_config(args.config)
    opts = _merge(cfg, args, ["k", "B", "seed", "method"],
                  {"k": 1, "B": 200, "seed": 0, "method": "excess-mass"})
    angles = read_angles(args.sample, args.column, args.degrees)
    fn = excess_mass_test if opts["method"] == "excess-mass" else watson_test
    res = fn(angles, opts["k"], B=opts["B"], random_state=opts["seed"])
    json.dump(res.to_dict(), sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_study(args):
    from .study import run_study

    cfg = _load_config(args.config)
    opts = _merge(cfg, args, ["models", "k", "n", "reps", "B", "alphas", "seed", "workers",
                              "tests"],
                  {"models": ["M1"], "k": 1, "n": [200], "reps": 500, "B": 500,
                   "alphas": [0.01, 0.05, 0.10], "seed": 0, "workers": 1,
                   "tests": ["excess-mass"]})
    table = run_study(**opts)
    if args.csv:
        table.to_csv(args.csv)
    text = table.to_text()
    if args.text:
        with open(args.text, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


_PIPELINE_FLAGS = ["events", "labels", "output", "cell_size", "k", "B", "alpha_c", "alpha_r",
                   "seed", "workers", "year_span", "scale_span", "min_count", "max_low_years"]


def cmd_pipeline(args):
    from .pipeline import PATH_KEYS, PipelineConfig, run_pipeline

    cfg = _load_config(args.config)
    # paths inside a config file are relative to the file
    base = os.path.dirname(args.config) if args.config else ""
    for key in PATH_KEYS:
        if cfg.get(key):
            cfg[key] = os.path.join(base, cfg[key])
    opts = _merge(cfg, args, _PIPELINE_FLAGS, {})
    for key in ("origin",):
        if key in cfg:
            opts[key] = cfg[key]
    config = PipelineConfig.from_dict(opts)
    res = run_pipeline(config)
    summary = {"output": config.output, "cells": len(res.cells), "patches": len(res.patches),
               "rejected_patches": list(res.outcome.rejected_patches),
               "rejected_cells": len(res.outcome.rejected_cells), "failed": len(res.failed)}
    json.dump(summary, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_patches(args):
    from .pipeline import patches_from_labels, read_label_raster, read_labels, write_patches_csv

    labels = read_label_raster(args.raster) if args.raster else read_labels(args.labels)
    patches = patches_from_labels(labels)
    write_patches_csv(args.output, patches)
    sys.stdout.write(f"{len(patches)} patches written to {args.output}\n")
    return 0


def cmd_fixture(args):
    from .pipeline import make_fixture

    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    d = make_fixture(args.directory, seed=seed, n_per_cell=args.n)
    sys.stdout.write(f"fixture written to {d}\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="circmode", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test one sample for k modes; prints JSON")
    t.add_argument("sample", help="file of angles (one per line) or CSV with --column")
    t.add_argument("--column")
    t.add_argument("--degrees", action="store_true", help="angles are in degrees")
    t.add_argument("--method", choices=["excess-mass", "watson"])
    t.add_argument("--k", type=int)
    t.add_argument("--B", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--config")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("study", help="rejection rates over built-in models")
    s.add_argument("--models", nargs="+")
    s.add_argument("--k", type=int)
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--reps", type=int)
    s.add_argument("--B", type=int)
    s.add_argument("--alphas", type=float, nargs="+")
    s.add_argument("--tests", nargs="+", choices=["excess-mass", "watson"])
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--csv", help="write the table as CSV")
    s.add_argument("--text", help="write the aligned table")
    s.add_argument("--config")
    s.set_defaults(func=cmd_study)

    r = sub.add_parser("pipeline", help="events to cell decisions and maps")
    r.add_argument("--config")
    r.add_argument("--events")
    r.add_argument("--labels")
    r.add_argument("--output")
    r.add_argument("--cell-size", dest="cell_size", type=float)
    r.add_argument("--k", type=int)
    r.add_argument("--B", type=int)
    r.add_argument("--alpha-c", dest="alpha_c", type=float)
    r.add_argument("--alpha-r", dest="alpha_r", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--year-span", dest="year_span", type=int)
    r.add_argument("--min-count", dest="min_count", type=int)
    r.add_argument("--max-low-years", dest="max_low_years", type=int)
    r.add_argument("--scale-span", dest="scale_span", action="store_true", default=None)
    r.set_defaults(func=cmd_pipeline)

    q = sub.add_parser("patches", help="labels to 8-connected patches (CSV)")
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--labels", help="CSV with row, col, label")
    src.add_argument("--raster", help="whitespace raster of labels, '.' for no data")
    q.add_argument("--output", required=True)
    q.set_defaults(func=cmd_patches)

    f = sub.add_parser("fixture", help="write the synthetic planted-patch fixture")
    f.add_argument("directory")
    f.add_argument("--seed", type=int)
    f.add_argument("--n", type=int, default=200, help="events per cell")
    f.set_defaults(func=cmd_fixture)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CircModeError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
