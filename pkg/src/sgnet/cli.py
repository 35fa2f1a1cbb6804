"""Command line entry point (``sgnet``).

Exit codes: 0 success, 2 property violation, 3 invalid input.  Errors are
written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex
from .domains import load_domain
from .estimator import estimate_report, load_integrand
from .nets import faure_net, format_net, read_net, verify_net
from .scramble import ScrambleKey, scramble_net

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_INVALID = 3
SCHEMA_VERSION = 1


def _m_range(text: str) -> list[int]:
    if ":" in text:
        lo, hi = text.split(":")
        vals = list(range(int(lo), int(hi) + 1))
    else:
        vals = [int(v) for v in text.split(",") if v]
    if not vals:
        raise argparse.ArgumentTypeError("m-range is empty")
    return vals


def _emit(args, payload: dict, table: ex.Table | None = None) -> None:
    if args.format == "csv" and table is not None:
        lines = [",".join(table.columns)]
        lines.extend(",".join(_cell(v) for v in row) for row in table.rows)
        text = "\n".join(lines) + "\n"
    elif args.format == "csv" and "csv" in payload:
        text = payload["csv"]
    else:
        body = dict(payload)
        body.pop("csv", None)
        if table is not None:
            body["columns"] = table.columns
            body["rows"] = table.rows
            body["summary"] = table.summary
        body["schema_version"] = SCHEMA_VERSION
        text = json.dumps(body, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _summary_line(summary: dict) -> None:
    sys.stderr.write(json.dumps(summary, sort_keys=True) + "\n")


def cmd_net_verify(args) -> int:
    if args.net:
        net = read_net(args.net)
        rep = verify_net(net, args.t)
        result = {"b": net.b, "s": net.s, "m": net.m, "t": args.t, "ok": rep.ok,
                  "shapes_checked": rep.shapes_checked, "violation": rep.violation}
    else:
        result = ex.run_net_verify(args.b, args.s, args.m, args.t)
    table = ex.Table(list(result), [list(result.values())])
    table.rows = [[json.dumps(v) if isinstance(v, (dict, list)) else v for v in table.rows[0]]]
    _emit(args, result, table)
    return EXIT_OK if result["ok"] else EXIT_VIOLATION


def cmd_scramble(args) -> int:
    net = read_net(args.net) if args.net else faure_net(args.b, args.s, args.m)
    key = ScrambleKey(args.seed, args.replication)
    out = scramble_net(net, key)
    text = format_net(out, key.describe())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _setup(args):
    dom = load_domain(args.domain, args.b)
    f = load_integrand(args.integrand, dom)
    return f, dom


def cmd_estimate(args) -> int:
    f, dom = _setup(args)
    report = estimate_report(f, faure_net(dom.b, dom.s, args.m), dom, args.reps, args.seed, args.alpha, args.threads)
    text = report.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_variance_decay(args) -> int:
    f, dom = _setup(args)
    table = ex.run_variance_decay(f, dom, args.m_range, args.reps, args.seed, args.threads)
    table.summary["rate_constancy"] = ex.rate_constancy(table)
    _summary_line(table.summary)
    _emit(args, {"experiment": "variance-decay", "integrand": f.name}, table)
    return EXIT_OK


def cmd_normality(args) -> int:
    f, dom = _setup(args)
    table = ex.run_normality(f, dom, args.m, args.reps, args.seed, args.threads)
    _summary_line(table.summary)
    _emit(args, {"experiment": "normality", "integrand": f.name}, table)
    return EXIT_OK


def cmd_ci_coverage(args) -> int:
    f, dom = _setup(args)
    table = ex.run_ci_coverage(f, dom, args.m, args.intervals, args.reps, args.seed, args.alpha, args.inflate, args.threads)
    _summary_line(table.summary)
    _emit(args, {"experiment": "ci-coverage", "integrand": f.name}, table)
    return EXIT_OK


def cmd_mc_compare(args) -> int:
    f, dom = _setup(args)
    payload = {"experiment": "mc-compare", "integrand": f.name}
    mu = f.mu
    if f.name == "example2" and mu is not None:
        ref = ex.example2_mu()
        payload["mu_reference"] = ref
        mu = ref["value"]
    table = ex.run_mc_compare(f, dom, args.m, args.pairs, args.reps, args.seed, args.alpha, args.threads, mu)
    _summary_line(table.summary)
    _emit(args, payload, table)
    return EXIT_OK


def cmd_gain_table(args) -> int:
    table = ex.run_gain_table(args.b, args.m, args.s, args.k_max)
    rows = table.rows
    csv = table.to_csv()
    payload = {
        "b": args.b,
        "m": args.m,
        "s": args.s,
        "csv": csv,
        "rows": [
            {"u": r.u, "k": r.k, "gamma_closed": float(r.gamma_closed),
             "gamma_empirical": None if r.gamma_empirical is None else float(r.gamma_empirical),
             "c_g": None if r.c_g is None else float(r.c_g)}
            for r in rows
        ],
    }
    _emit(args, payload)
    return EXIT_VIOLATION if table.mismatches() else EXIT_OK


def cmd_variance_identity(args) -> int:
    f, dom = _setup(args)
    res = ex.run_variance_identity(f, dom, args.m, args.k_max, args.reps, args.seed)
    args.format = "json"
    _emit(args, res.to_dict())
    return EXIT_OK if res.holds() else EXIT_VIOLATION


def _est_parent(integrand: str = "example1", domain: str = "T2^2") -> argparse.ArgumentParser:
    # a fresh parent per subcommand: argparse shares parent actions, so
    # set_defaults on one subcommand would leak into the others
    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--integrand", default=integrand)
    est.add_argument("--domain", default=domain)
    est.add_argument("--b", type=int, default=None)
    est.add_argument("--alpha", type=float, default=0.05)
    return est


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--out", default=None)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=1)


    p = argparse.ArgumentParser(prog="sgnet", description="Scrambled geometric nets on split domains.")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("net-verify", parents=[common], help="build a Faure net and check the net property")
    q.add_argument("--b", type=int, default=4)
    q.add_argument("--s", type=int, default=2)
    q.add_argument("--m", type=int, default=3)
    q.add_argument("--t", type=int, default=0)
    q.add_argument("--net", default=None, help="verify a net file instead")
    q.set_defaults(func=cmd_net_verify)

    q = sub.add_parser("scramble", parents=[common], help="write a scrambled net in the digit format")
    q.add_argument("--b", type=int, default=4)
    q.add_argument("--s", type=int, default=2)
    q.add_argument("--m", type=int, default=3)
    q.add_argument("--replication", type=int, default=1)
    q.add_argument("--net", default=None)
    q.set_defaults(func=cmd_scramble)

    q = sub.add_parser("estimate", parents=[common, _est_parent()], help="replicated estimate with JSON report")
    q.add_argument("--m", type=int, default=6)
    q.add_argument("--reps", type=int, default=30)
    q.set_defaults(func=cmd_estimate)

    q = sub.add_parser("variance-decay", parents=[common, _est_parent()], help="variance against n for both samplers")
    q.add_argument("--m-range", type=_m_range, default=_m_range("3:7"))
    q.add_argument("--reps", type=int, default=300)
    q.set_defaults(func=cmd_variance_decay)

    q = sub.add_parser("normality", parents=[common, _est_parent()], help="W samples and KS test")
    q.add_argument("--m", type=int, default=6)
    q.add_argument("--reps", type=int, default=300)
    q.set_defaults(func=cmd_normality)

    q = sub.add_parser("ci-coverage", parents=[common, _est_parent()], help="coverage of independent intervals")
    q.add_argument("--m", type=int, default=6)
    q.add_argument("--intervals", type=int, default=100)
    q.add_argument("--reps", type=int, default=300, help="replications behind each sigma_hat")
    q.add_argument("--inflate", type=float, default=1.0)
    q.set_defaults(func=cmd_ci_coverage)

    q = sub.add_parser("mc-compare", parents=[common, _est_parent("example2")], help="paired net and Monte Carlo intervals")
    q.add_argument("--m", type=int, default=6)
    q.add_argument("--pairs", type=int, default=100)
    q.add_argument("--reps", type=int, default=300, help="replications behind each sigma_hat")
    q.set_defaults(func=cmd_mc_compare)

    q = sub.add_parser("gain-table", parents=[common], help="closed-form and empirical gain coefficients")
    q.add_argument("--b", type=int, default=4)
    q.add_argument("--m", type=int, default=2)
    q.add_argument("--s", type=int, default=2)
    q.add_argument("--k-max", type=int, default=None)
    q.set_defaults(func=cmd_gain_table)

    q = sub.add_parser("variance-identity", parents=[common, _est_parent("x1", "T2")], help="replication variance vs gain-weighted sum")
    q.add_argument("--m", type=int, default=2)
    q.add_argument("--k-max", type=int, default=4)
    q.add_argument("--reps", type=int, default=5000)
    q.set_defaults(func=cmd_variance_identity)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        sys.stderr.write(json.dumps({"error": "invalid-arguments", "message": "could not parse arguments"}) + "\n")
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": "invalid-spec", "message": str(exc)}) + "\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
