"""Command-line front end.

Subcommands: divergence, min-output, chain-check, adversary, accumulate,
reproduce. Outputs are deterministic given the seed (byte-identical files),
carry the schema version in a header, and format every numeric cell with 10
significant digits; infinities serialize as the string "inf". Exit codes:
0 success, 2 validation error, 3 solver non-convergence, 4 resource cap.
See docs/output_schema.md for the frozen column sets.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import divergences as dv
from . import linalg as la
from .accumulation import dilation_step, memoryless_step, reat_bound
from .adversary import beta_game, exponent_trend
from .channel_div import min_output, min_output_measured, min_output_same_input, \
    dmax_min_output, fidelity_min_output, regularization_bracket
from .errors import ResourceCapError, SolverError, ValidationError
from .experiments import chain_rule_sweep, default_gad_pair, subadditivity_scan
from .qobjects import load_channel, load_state

SCHEMA_VERSION = "divlab-output-v1"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_RESOURCE = 4


def fmt(x) -> str:
    """Locale-independent cell formatting: 10 significant digits, 'inf' sentinel."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.10g}"
    return str(x)


def _json_cell(x):
    if isinstance(x, float) and not math.isfinite(x):
        return fmt(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return _json_cell(float(x))
    return x


def write_rows(path, command: str, params: dict, columns: list[str], rows: list[dict],
               fmt_name: str) -> None:
    if fmt_name == "csv":
        lines = [f"# {SCHEMA_VERSION} command={command} "
                 + " ".join(f"{k}={fmt(v)}" for k, v in sorted(params.items()))]
        lines.append(",".join(columns))
        for r in rows:
            lines.append(",".join(fmt(r[c]) for c in columns))
        text = "\n".join(lines) + "\n"
    else:
        payload = {
            "schema": SCHEMA_VERSION,
            "command": command,
            "params": {k: _json_cell(v) for k, v in params.items()},
            "columns": columns,
            "rows": [{c: _json_cell(r[c]) for c in columns} for r in rows],
        }
        text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_pair(args):
    if args.channel_a and args.channel_b:
        return load_channel(args.channel_a), load_channel(args.channel_b)
    return default_gad_pair()


def cmd_divergence(args) -> int:
    path_a = args.state_a or args.channel_a
    path_b = args.state_b or args.channel_b
    if not path_a or not path_b:
        raise ValidationError("divergence needs --state-a and --state-b (JSON matrix files)")
    rho = load_state(path_a)
    sigma = load_state(path_b)
    spec = dv.DivergenceSpec(args.family, alpha=args.alpha, epsilon=args.eps)
    cert = dv.evaluate(spec, rho, sigma, seed=args.seed)
    print(f"value = {cert.value:.5f}" if math.isfinite(cert.value) else "value = inf")
    if cert.gap is not None:
        print(f"gap = {fmt(cert.gap)}")
    wit = cert.witness or {}
    if "threshold" in wit:
        print(f"witness: Neyman-Pearson threshold {fmt(wit['threshold'])}, "
              f"kernel weight {fmt(wit.get('kernel_weight', 0.0))}, beta {fmt(wit['beta'])}")
    if "basis" in wit and wit["basis"] is not None:
        print("witness: measurement basis (columns)")
        for row in np.round(wit["basis"], 6).tolist():
            print("  " + " ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in row))
    rows = [{"family": args.family, "alpha": args.alpha, "eps": args.eps,
             "value": cert.value, "gap": cert.gap if cert.gap is not None else math.nan}]
    if args.out:
        write_rows(args.out, "divergence", {"seed": args.seed}, list(rows[0]), rows, args.format)
    if not cert.converged and cert.gap is not None:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_min_output(args) -> int:
    n_ch, m_ch = _load_pair(args)
    rows = []
    solver_trouble = False
    for n in range(1, args.copies + 1):
        if args.family == "measured":
            res = min_output_measured(n_ch, m_ch, alpha=args.alpha or 1.0, n=n, seed=args.seed)
            gap = res.extras.get("certified_lower", math.nan)
        elif args.family == "max":
            res = dmax_min_output(n_ch, m_ch, n=n, seed=args.seed)
            gap = res.fw_gap
        elif args.family == "fidelity":
            res = fidelity_min_output(n_ch, m_ch, n=n, seed=args.seed)
            gap = res.fw_gap
        elif args.same_input:
            res = min_output_same_input(n_ch, m_ch, family=args.family,
                                        alpha=args.alpha or 1.0, n=n, seed=args.seed, tol=args.tol)
            gap = res.fw_gap
        else:
            res = min_output(n_ch, m_ch, family=args.family, alpha=args.alpha, n=n,
                             tol=args.tol, seed=args.seed)
            gap = res.fw_gap
        solver_trouble |= not res.converged
        rows.append({"n": n, "family": args.family, "alpha": args.alpha or math.nan,
                     "seed": args.seed, "value": res.value, "per_copy": res.value / n,
                     "gap": gap, "converged": res.converged})
    write_rows(args.out, "min-output", {"seed": args.seed, "tol": args.tol},
               list(rows[0]), rows, args.format)
    return EXIT_SOLVER if solver_trouble else EXIT_OK


def cmd_chain_check(args) -> int:
    n_ch, m_ch = _load_pair(args)
    sweep = chain_rule_sweep(n_ch, m_ch, trials=args.trials, seed=args.seed)
    cols = ["trial", "y", "x1", "x2", "margin"]
    write_rows(args.out, "chain-check",
               {"seed": args.seed, "trials": args.trials,
                "bound_inf": sweep["bound_inf"], "bound_inf_prime": sweep["bound_inf_prime"]},
               cols, sweep["rows"], args.format)
    print(f"min_margin = {fmt(sweep['min_margin'])}")
    print(f"count(y < x1 - 1e-6) = {sweep['count_below_x1']}")
    print(f"count(y < x2 - 1e-4) = {sweep['count_below_x2']}")
    return EXIT_OK


def cmd_adversary(args) -> int:
    n_ch, m_ch = _load_pair(args)
    rows = []
    for n in range(1, args.n + 1):
        game = beta_game(n_ch, m_ch, n, args.eps, model=args.model,
                         mem_cap=args.mem_cap, seed=args.seed)
        rows.append({"n": n, "model": args.model, "eps": args.eps, "seed": args.seed,
                     "beta_lower": game.lower, "beta_upper": game.upper,
                     "exp_lower": -math.log2(game.upper) / n if game.upper > 0 else math.inf,
                     "exp_upper": -math.log2(game.lower) / n if game.lower > 0 else math.inf,
                     "restricted": game.restricted})
    write_rows(args.out, "adversary", {"seed": args.seed, "eps": args.eps,
                                       "mem_cap": args.mem_cap}, list(rows[0]), rows, args.format)
    return EXIT_OK


def cmd_accumulate(args) -> int:
    n_ch, m_ch = _load_pair(args)
    step_n = dilation_step(n_ch) if _chains(n_ch) else memoryless_step(n_ch)
    step_m = dilation_step(m_ch) if _chains(m_ch) else memoryless_step(m_ch)
    rng = np.random.default_rng(args.seed)
    rho0 = la.random_density(n_ch.in_dim, int(rng.integers(2**31)))
    sigma0 = la.random_density(m_ch.in_dim, int(rng.integers(2**31)))
    rep = reat_bound([step_n] * args.n, [step_m] * args.n, rho0, sigma0,
                     eps=args.eps, C=args.c_const, seed=args.seed)
    row = {"n": rep.n, "eps": args.eps, "C": rep.C, "lhs": rep.lhs if rep.lhs is not None else math.nan,
           "rhs_sum": rep.rhs_sum, "correction": rep.correction, "m": rep.m_choice,
           "alpha": rep.alpha_choice, "holds": bool(rep.holds),
           "cprime": rep.cprime if rep.cprime is not None else math.nan}
    write_rows(args.out, "accumulate", {"seed": args.seed}, list(row), [row], args.format)
    print(f"holds = {fmt(bool(rep.holds))}")
    return EXIT_OK


def _chains(ch) -> bool:
    from .qobjects import stinespring
    return stinespring(ch, minimal=True).env_dim == ch.in_dim


def cmd_reproduce(args) -> int:
    if args.figure == "sm-a":
        scan = subadditivity_scan(seed=args.seed)
        cols = ["p", "single_copy_sum", "two_copy", "gap"]
        write_rows(args.out, "reproduce-sm-a", {"seed": args.seed}, cols, scan["rows"], args.format)
        print(f"count(two_copy < sum - 1e-4) = {scan['count_strict']}")
        print(f"min_gap = {fmt(scan['min_gap'])}")
        return EXIT_OK
    if args.figure == "sm-b":
        sweep = chain_rule_sweep(trials=args.trials, seed=args.seed)
        cols = ["trial", "y", "x1", "x2"]
        write_rows(args.out, "reproduce-sm-b",
                   {"seed": args.seed, "trials": args.trials}, cols, sweep["rows"], args.format)
        print(f"count(y < x1 - 1e-6) = {sweep['count_below_x1']}")
        print(f"count(y < x2 - 1e-4) = {sweep['count_below_x2']}")
        return EXIT_OK
    raise ValidationError(f"unknown figure {args.figure!r}: choose sm-a or sm-b")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divlab",
                                description="Worst-case quantum channel discrimination laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, channels=True):
        sp.add_argument("--channel-a", help="channel spec JSON file")
        sp.add_argument("--channel-b", help="channel spec JSON file")
        sp.add_argument("--family", default="umegaki")
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--eps", type=float, default=0.1)
        sp.add_argument("--n", type=int, default=1)
        sp.add_argument("--copies", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trials", type=int, default=500)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--tol", type=float, default=1e-6)
        sp.add_argument("--mem-cap", type=int, default=4)

    sp = sub.add_parser("divergence", help="state divergence with witness")
    common(sp)
    sp.add_argument("--state-a", help="JSON matrix file")
    sp.add_argument("--state-b", help="JSON matrix file")
    sp.set_defaults(func=cmd_divergence)

    sp = sub.add_parser("min-output", help="minimum output channel divergence")
    common(sp)
    sp.add_argument("--same-input", action="store_true")
    sp.set_defaults(func=cmd_min_output)

    sp = sub.add_parser("chain-check", help="random chain-rule margin sweep")
    common(sp)
    sp.set_defaults(func=cmd_chain_check)

    sp = sub.add_parser("adversary", help="adversarial discrimination game brackets")
    common(sp)
    sp.add_argument("--model", choices=("nonadaptive", "adaptive"), default="nonadaptive")
    sp.set_defaults(func=cmd_adversary)

    sp = sub.add_parser("accumulate", help="divergence accumulation bound")
    common(sp)
    sp.add_argument("--c-const", type=float, default=8.0)
    sp.set_defaults(func=cmd_accumulate)

    sp = sub.add_parser("reproduce", help="figure-data reproduction (sm-a | sm-b)")
    common(sp)
    sp.add_argument("figure", choices=("sm-a", "sm-b"))
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"validation error: missing file {exc.filename}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
