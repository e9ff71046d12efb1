"""Command line interface: ``srwcap <subcommand> [options]``.

Exit status is 0 on success, 2 on invalid parameters and 3 when a solver
fails to reach its tolerance.
"""
import argparse
import json
import logging
import sys

import numpy as np

from .continuum_capacity import capacity_bm, occupation_cloud, sphere_cloud
from .exceptions import NumericalError
from .green_kernel import FAR_FIELD_FORMS, default_kernel, green_asymptotic, green_exact
from .harness import experiments
from .harness.report import format_number
from .lattice_walk import RangeSet, build_range, derive_stream, simulate_bm, simulate_srw
from .potential import capacity_exact, capacity_far_point, capacity_mc

EXIT_USAGE, EXIT_NUMERIC = 2, 3


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _int_list(text):
    return [int(v, 0) for v in text.replace(",", " ").split()]


def _float_list(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _common(p):
    p.add_argument("--seed", type=_u64, default=0, help="master seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for replicas")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="json")


def build_parser():
    parser = argparse.ArgumentParser(prog="srwcap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a walk and print its range")
    _common(p)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--stream", type=_u64, default=0, help="stream id under the master seed")

    p = sub.add_parser("green", help="lattice Green function G(0, x)")
    _common(p)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--x", type=_int_list, action="append", required=True,
                   help="comma separated coordinates; repeat for several points")
    p.add_argument("--method", choices=("exact", "kernel") + FAR_FIELD_FORMS, default="exact")

    p = sub.add_parser("capacity", help="capacity of a site list or a simulated range")
    _common(p)
    p.add_argument("--sites", help="text file with one integer tuple per line")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, help="simulate X[0, n] instead of reading --sites")
    p.add_argument("--method", default="auto",
                   choices=("auto", "exact-cholesky", "exact-cg", "mc", "far-point"))
    p.add_argument("--tol", type=float)
    p.add_argument("--rstop", type=float)
    p.add_argument("--subset", type=int)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--K", type=float, default=16)

    p = sub.add_parser("capbm", help="Brownian capacity of a sphere fixture or a Brownian path")
    _common(p)
    p.add_argument("--fixture", choices=("sphere",))
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2000, help="points on the sphere fixture")
    p.add_argument("--bm-steps", type=int, default=4096)
    p.add_argument("--tol", type=float, default=1e-4)

    for name, help_ in (("exp-d4-mean", "(log n / n) E Cap in Z^4"),
                        ("exp-d4-wlln", "Var / mean^2 of Cap in Z^4"),
                        ("exp-d3-limit", "law of Cap / sqrt(n) in Z^3 vs Brownian capacity"),
                        ("exp-d3-m2", "E[Cap^2] / n in Z^3"),
                        ("exp-tau", "k(sn) / k(n) in Z^4")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.set_defaults(format="csv")
        if name == "exp-tau":
            p.add_argument("--n", type=int, default=2 ** 14)
            p.add_argument("--fractions", type=_float_list, default=[0.25, 0.5, 0.75])
            p.add_argument("--replicas", type=int, default=100)
            p.add_argument("--rare-event", action="store_true")
            p.add_argument("--rare-n", type=int, default=2 ** 8)
            p.add_argument("--K", type=float, default=8)
        else:
            p.add_argument("--ns", type=_int_list, default=list(experiments.DEFAULT_NS))
            if name.startswith("exp-d4"):
                p.add_argument("--replicas", type=int, default=100)
            else:
                p.add_argument("--samples", type=int, default=300)
        if name == "exp-d3-limit":
            p.add_argument("--bm-steps", type=int, default=4096)
            p.add_argument("--bm-samples", type=int, default=300)
    return parser


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _emit_record(args, record):
    if args.format == "json":
        text = json.dumps(record, indent=2, default=float) + "\n"
    else:
        keys = [k for k, v in record.items() if not isinstance(v, (dict, list))]
        text = ",".join(keys) + "\n" + ",".join(format_number(record[k]) for k in keys) + "\n"
    _emit(args, text)


def _read_sites(path):
    rows = []
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip().strip("()[]")
            if line:
                rows.append([int(v) for v in line.replace(",", " ").split()])
    return np.array(rows, dtype=np.int64)


def cmd_simulate(args):
    walk = simulate_srw(args.d, args.n, derive_stream(args.seed, args.stream))
    rng = build_range(walk)
    if args.format == "csv":
        header = ",".join(f"x{i + 1}" for i in range(args.d))
        body = "".join(",".join(map(str, s)) + "\n" for s in rng.sites.tolist())
        _emit(args, header + "\n" + body)
    else:
        _emit_record(args, {"d": args.d, "n": args.n, "range_size": rng.count,
                            "endpoint": walk.points[-1].tolist(), "sites": rng.sites.tolist()})


def cmd_green(args):
    rows = []
    for x in args.x:
        if args.method == "exact":
            value = green_exact(args.d, x)
        elif args.method == "kernel":
            value = default_kernel(args.d)(np.array(x))
        else:
            value = float(green_asymptotic(args.d, np.array(x), form=args.method))
        rows.append({"x": list(x), "value": value})
    if args.format == "json":
        _emit(args, json.dumps({"d": args.d, "method": args.method, "values": rows}, indent=2) + "\n")
    else:
        header = ",".join(f"x{i + 1}" for i in range(args.d)) + ",value\n"
        _emit(args, header + "".join(
            ",".join(map(str, r["x"])) + "," + format_number(r["value"]) + "\n" for r in rows))


def cmd_capacity(args):
    if args.sites:
        F = RangeSet.from_sites(_read_sites(args.sites))
    elif args.n is not None:
        F = build_range(simulate_srw(args.d, args.n, derive_stream(args.seed, 0)))
    else:
        raise ValueError("give either --sites or --n")
    if args.method == "mc":
        est = capacity_mc(F, subset_size=args.subset or min(F.count, 256),
                          trials_per_site=args.trials, R_stop=args.rstop,
                          stream=derive_stream(args.seed, 1))
    elif args.method == "far-point":
        est = capacity_far_point(F, K=args.K, trials=args.trials, stream=derive_stream(args.seed, 2))
    else:
        est = capacity_exact(F, method=args.method, tol=args.tol)
    _emit_record(args, est.to_dict())


def cmd_capbm(args):
    if args.fixture == "sphere":
        cloud = sphere_cloud(args.r, args.n)
    else:
        path = simulate_bm(args.bm_steps, derive_stream(args.seed, 0))
        cloud = occupation_cloud(path, args.bm_steps)
    est = capacity_bm(cloud, tol=args.tol)
    p = est.params
    _emit_record(args, {"capacity": est.value, "energy": p["energy"], "gap": p["gap"],
                        "iterations": p["iterations"], "converged": p["converged"]})


def cmd_experiment(args):
    common = {"master": args.seed, "threads": args.threads, "cache": False}
    if args.command == "exp-d4-mean":
        report = experiments.exp_d4_mean_curve(args.ns, args.replicas, **common)
    elif args.command == "exp-d4-wlln":
        report = experiments.exp_d4_wlln(args.ns, args.replicas, **common)
    elif args.command == "exp-d3-limit":
        report = experiments.exp_d3_limit(args.ns, args.samples, args.bm_steps, args.bm_samples,
                                          **common)
    elif args.command == "exp-d3-m2":
        report = experiments.exp_d3_second_moment(args.ns, args.samples, **common)
    else:
        report = experiments.exp_tau_mechanism(args.n, args.fractions, args.replicas,
                                               rare_event=args.rare_event, rare_n=args.rare_n,
                                               K=args.K, **common)
    logging.getLogger(__name__).info("%s took %.1f s", report.experiment, report.runtime)
    _emit(args, report.to_csv() if args.format == "csv" else report.to_json())


COMMANDS = {"simulate": cmd_simulate, "green": cmd_green, "capacity": cmd_capacity,
            "capbm": cmd_capbm}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ValueError("--threads must be positive")
        COMMANDS.get(args.command, cmd_experiment)(args)
    except NumericalError as exc:
        print(f"srwcap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"srwcap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
