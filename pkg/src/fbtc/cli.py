"""Command-line entry point: ``fbtc {measures,cluster,synth,eval}``.

Settings come from, in increasing priority: built-in defaults, a JSON config
file (``--config`` or the ``FBTC_CONFIG`` environment variable), and flags
given on the command line. Failures print one JSON object to stderr and exit
with status 1.
"""

import argparse
import csv
import json
import os
import sys

from fbtc.errors import FBTCError, ParseError
from fbtc.harness import GeneratorConfig, evaluate, generate_three_group
from fbtc.io import write_long_csv, write_text_atomic
from fbtc.pipeline import RunConfig, run, run_measures

CONFIG_ENV = "FBTC_CONFIG"


def _add_measure_args(p):
    p.add_argument("input", nargs="?", help="long or wide CSV of trajectories")
    p.add_argument("--config", help=f"JSON file of settings (default: ${CONFIG_ENV})")
    p.add_argument("--measures", help='"all", "shape-only", or ids like m3,m6,m10')
    p.add_argument("--center-vertical", action="store_true", default=None, help="subtract each trajectory's mean")
    p.add_argument("--shift-horizontal", action="store_true", default=None, help="start every trajectory at time 0")
    p.add_argument("--midpoint", type=float, help="time used by m11 (default: middle of each trajectory)")
    p.add_argument("--weighting", choices=("proximity", "literal"), help="interior derivative weighting")
    p.add_argument("--endpoints", choices=("one-sided", "quadratic"), help="derivative rule at the first and last times")
    p.add_argument("--threads", type=int, help="worker threads; does not change results")
    p.add_argument("-o", "--output-dir", help="directory for output files")


def build_parser():
    parser = argparse.ArgumentParser(prog="fbtc", description="Feature-based trajectory clustering.")
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measures", help="compute the measure table only")
    _add_measure_args(m)
    m.add_argument("--output", help="measures CSV path (default: OUTPUT_DIR/measures.csv)")

    c = sub.add_parser("cluster", help="measure, embed and partition")
    _add_measure_args(c)
    c.add_argument("-K", "--K", dest="K", type=int, help="number of clusters (>= 2)")
    c.add_argument("--winsorize", type=float, metavar="SDS", help="cap measures at mean +/- SDS standard deviations")
    c.add_argument("-p", "--p", dest="p", type=int, help="override the neighbour count")
    c.add_argument("--partitioner", choices=("hard", "fuzzy"))
    c.add_argument("--restarts", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--flag-outliers", action="store_true", default=None, help="report probable outliers")
    c.add_argument("--remove-outliers", action="store_true", default=None, help="drop flagged outliers before clustering")
    c.add_argument("--outlier-k", type=int, help="cluster count of the outlier probe")
    c.add_argument("--embedding", action="store_true", default=None, help="also write embedding.csv")
    c.add_argument("--dump-similarity", action="store_true", default=None, help="also write similarity.txt")
    c.add_argument("--timings", action="store_true", default=None, help="add stage timings to report.json")

    s = sub.add_parser("synth", help="write the three-group synthetic dataset")
    s.add_argument("-o", "--output", required=True, help="long CSV path (includes a label column)")
    s.add_argument("--n-per-group", type=int, default=15)
    s.add_argument("--n-obs", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-sd", type=float, default=0.0)
    s.add_argument("--separation", type=float, default=1.0)

    e = sub.add_parser("eval", help="compare cluster assignments with reference labels")
    e.add_argument("assignments", help="CSV with columns id and cluster")
    e.add_argument("reference", help="CSV with columns id and label (long data files work)")
    e.add_argument("-o", "--output", help="write the report JSON here as well")
    return parser


def _config(args) -> RunConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    base = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                base = json.load(fh)
        except OSError as exc:
            raise ParseError(f"{path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", row=exc.lineno) from None
        if not isinstance(base, dict):
            raise ParseError(f"{path}: config must be a JSON object")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config", "output")}
    cfg = RunConfig.from_dict({**base, **flags})
    if not cfg.input:
        raise ValueError("no input file given")
    return cfg


def _read_labels(path, column):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "id" not in reader.fieldnames or column not in reader.fieldnames:
                raise ParseError(f"{path}: needs columns id and {column}", row=1)
            out = {}
            for r, row in enumerate(reader, start=2):
                tid, lab = row["id"].strip(), row[column].strip()
                if out.setdefault(tid, lab) != lab:
                    raise ParseError(f"id {tid!r} has more than one {column}", row=r, column=column)
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return out


def _eval(args):
    found = _read_labels(args.assignments, "cluster")
    ref = _read_labels(args.reference, "label")
    common = [i for i in found if i in ref]
    if not common:
        raise ParseError("assignments and reference share no ids")
    report = evaluate([found[i] for i in common], [ref[i] for i in common])
    out = report.to_dict()
    out["unmatched_ids"] = sorted((set(found) | set(ref)) - set(common))
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        write_text_atomic(args.output, text)
    print(report.format_table())
    print(f"accuracy {report.matched}/{report.n} = {report.accuracy:.4f}  ARI = {report.ari:.4f}")


def _dispatch(args):
    if args.command == "synth":
        ds = generate_three_group(
            n_per_group=args.n_per_group,
            n_obs=args.n_obs,
            seed=args.seed,
            noise_sd=args.noise_sd,
            separation=args.separation,
            config=GeneratorConfig(),
        )
        write_long_csv(args.output, ds.trajectories, ds.labels)
        print(f"wrote {len(ds)} trajectories to {args.output}")
    elif args.command == "eval":
        _eval(args)
    elif args.command == "measures":
        print(run_measures(_config(args), args.output))
    else:
        for path in run(_config(args)):
            print(path)


def _error_json(exc):
    if isinstance(exc, FBTCError):
        return exc.to_dict()
    return {"error": "InvalidConfig" if isinstance(exc, (ValueError, TypeError)) else type(exc).__name__, "message": str(exc)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except (FBTCError, ValueError, TypeError, OSError) as exc:
        print(json.dumps(_error_json(exc), sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
