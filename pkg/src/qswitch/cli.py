"""Command-line front end.

Exit codes: 0 success, 1 validation or parse error, 2 verification
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .experiments import ExperimentConfig, load_mdp, verify_all
from .io import ParseError, read_column, read_config, write_error_csv, write_trajectory_csv
from .mdp import MdpValidationError, build_matrices, greedy_policy, solve_qstar, unflatten
from .switching import co_simulate

EXIT_OK, EXIT_INVALID, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3

EXAMPLE_ALPHAS = (0.002, 0.9)
EXAMPLE_STEPS = 100_000
EXAMPLE_STRIDE = 100
EXAMPLE_OFFSET = 1.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which is reserved here
    def error(self, message):
        raise UsageError(message)


def _unit_interval(name):
    def parse(text):
        val = float(text)
        if not 0.0 < val < 1.0:
            raise argparse.ArgumentTypeError(f"{name} must lie in (0, 1), got {text}")
        return val
    return parse


def _positive_int(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return val


def _positive_float(text):
    val = float(text)
    if val <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return val


def _fmt_pair_table(q, num_states, num_actions):
    table = unflatten(q, num_states)
    head = "       " + "".join(f"a={a + 1:<22d}" for a in range(num_actions))
    rows = [head]
    for s in range(num_states):
        rows.append(f"s={s + 1:<4d} " + "".join(f"{x:<24.17g}" for x in table[s]))
    return "\n".join(rows)


def cmd_solve(args, out):
    mdp = load_mdp(args.mdp, args.seed)
    q_star = solve_qstar(mdp, tol=args.tol)
    m = build_matrices(mdp)
    pol = greedy_policy(q_star, mdp.num_states)
    print(f"states={mdp.num_states} actions={mdp.num_actions} discount={mdp.discount:g} "
          f"r_max={mdp.r_max:g} d_min={m.d_min:.17g} d_max={m.d_max:.17g}", file=out)
    print("Q*:", file=out)
    print(_fmt_pair_table(q_star, mdp.num_states, mdp.num_actions), file=out)
    print("pi*: " + " ".join(f"s={s + 1}->a={a + 1}" for s, a in enumerate(pol)), file=out)
    if args.out:
        table = unflatten(q_star, mdp.num_states)
        lines = ["s,a,q"] + [f"{s + 1},{a + 1},{table[s, a]:.17g}"
                             for s in range(mdp.num_states) for a in range(mdp.num_actions)]
        Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _simulate_config(args):
    if args.config:
        cfg = read_config(args.config)
    else:
        cfg = ExperimentConfig(mdp_source=args.mdp, num_trials=1)
    overrides = {"alpha": args.alpha, "num_steps": args.steps, "base_seed": args.seed,
                 "record_stride": args.stride}
    if args.mdp is not None and args.config:
        overrides["mdp_source"] = args.mdp
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    cfg.__post_init__()
    return cfg


def cmd_simulate(args, out):
    if not args.out:
        raise UsageError("simulate needs --out")
    cfg = _simulate_config(args)
    mdp = load_mdp(cfg.mdp_source, cfg.base_seed)
    q_star = solve_qstar(mdp)
    q0 = np.asarray(cfg.q0, dtype=float) if cfg.q0_mode == "fixed" else None
    center = q_star if cfg.q0_mode == "centered" else None
    traj = co_simulate(mdp, cfg.alpha, cfg.num_steps, cfg.base_seed, q0, q_star=q_star,
                       stride=cfg.record_stride, center=center, offset=cfg.comparison_offset)
    write_trajectory_csv(traj, args.out)
    s = traj.summary
    print(f"wrote {len(traj.steps)} rows to {args.out}; "
          f"sandwich violations {int(s.sandwich_violations.sum())}", file=out)
    return EXIT_OK if s.sandwich_violations.sum() == 0 else EXIT_VERIFY


def cmd_analyze(args, out):
    if args.alpha is None:
        raise UsageError("analyze needs --alpha")
    mdp = load_mdp(args.mdp, args.seed)
    m = build_matrices(mdp)
    rep = bounds.bound_report(mdp, args.alpha)
    cert = rep.certificate
    n = args.steps or 10_000
    print(f"rho = {rep.rho:.17g}", file=out)
    print(f"reward_scale = {rep.reward_scale:g}", file=out)
    print(f"q_max = {rep.qmax:.6g}", file=out)
    print(f"noise_infnorm_bound = {rep.noise_infnorm_bound:.6g}", file=out)
    print(f"noise_var_bound = {rep.noise_var_bound:.6g}", file=out)
    print(f"lyapunov.epsilon = {cert.epsilon:.6g}", file=out)
    print(f"lyapunov.lambda_min = {cert.lambda_min:.10g}", file=out)
    print(f"lyapunov.lambda_max = {cert.lambda_max:.10g} (bound {cert.lambda_max_bound:.10g})",
          file=out)
    print(f"lyapunov.residual = {cert.residual:.3e} ({cert.method})", file=out)
    if mdp.size == 1:
        print(f"lyapunov.M = {cert.M[0, 0]:.10g}", file=out)
    print(f"lower_average_rhs(N={n}) = {rep.lower_average_rhs(n):.6g}", file=out)
    print(f"averaged_rhs(N={n}) = {rep.averaged_rhs(n):.6g}", file=out)
    budget = bounds.sample_complexity(m.num_states, m.num_actions, m.d_min, m.d_max,
                                      m.discount, args.eps, args.delta)
    print(f"complexity.eps = {budget.eps_tgt:g} delta = {budget.delta:g}", file=out)
    print(f"complexity.alpha_star = {budget.alpha_star:.6e}", file=out)
    print(f"complexity.n_star = {budget.n_star}", file=out)
    print(f"complexity.phi1 = {budget.phi1:.6g} phi2 = {budget.phi2:.6g} "
          f"binding = {budget.binding}", file=out)
    return EXIT_OK


def cmd_verify(args, out):
    report = verify_all(args.mdp, args.alpha or 0.01, args.probes, args.seed,
                        num_trials=args.trials or 200, num_steps=args.steps or 2000)
    for line in report.lines():
        print(line, file=out)
    print(f"summary\t{'PASS' if report.passed else 'FAIL'}\t"
          f"{sum(c.passed for c in report.checks)}/{len(report.checks)}", file=out)
    if report.checks and report.checks[0].name == "validation" and not report.checks[0].passed:
        return EXIT_INVALID
    return EXIT_OK if report.passed else EXIT_VERIFY


def paper_example(out_dir, seed: int = 0, num_steps: int = EXAMPLE_STEPS,
                  stride: int = EXAMPLE_STRIDE):
    """Write trajectory and error-channel CSVs for both step sizes.

    The comparison systems start one unit below and above Q_0, so the error
    channel starts at 2 and its decay is visible. Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mdp = load_mdp("paper2state")
    q_star = solve_qstar(mdp)
    paths = []
    for alpha in EXAMPLE_ALPHAS:
        traj = co_simulate(mdp, alpha, num_steps, seed, q_star=q_star, stride=stride,
                           offset=EXAMPLE_OFFSET)
        tpath = out_dir / f"trajectory_alpha{alpha:g}.csv"
        epath = out_dir / f"error_alpha{alpha:g}.csv"
        write_trajectory_csv(traj, tpath)
        write_error_csv(traj, epath)
        paths += [tpath, epath]
    return paths


def last_decile_variance(values) -> float:
    values = np.asarray(values)
    return float(values[len(values) - len(values) // 10:].var())


def cmd_paper_example(args, out):
    if not args.out:
        raise UsageError("paper-example needs --out")
    paths = paper_example(args.out, args.seed)
    for p in paths:
        print(f"wrote {p}", file=out)
    ok = True
    variances = {}
    for alpha in EXAMPLE_ALPHAS:
        e = read_column(Path(args.out) / f"error_alpha{alpha:g}.csv", "e_inf")
        variances[alpha] = last_decile_variance(e)
        print(f"alpha={alpha:g}: error initial {e[0]:.6g} final {e[-1]:.6g} "
              f"last-decile variance {variances[alpha]:.6g}", file=out)
    small, large = EXAMPLE_ALPHAS
    e = read_column(Path(args.out) / f"error_alpha{small:g}.csv", "e_inf")
    ok &= bool(e[-1] < e[0])
    ratio = variances[large] / variances[small]
    ok &= bool(ratio >= 10.0)
    print(f"variance ratio {ratio:.6g}", file=out)
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser():
    parser = _Parser(prog="qswitch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, mdp_default="paper2state"):
        p.add_argument("--mdp", default=mdp_default,
                       help="builtin name (example1, example3, paper2state, random[:S:A]) or file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        return p

    p = common(sub.add_parser("solve", help="solve for Q* and print the model summary"))
    p.add_argument("--tol", type=_positive_float, default=1e-12)

    p = common(sub.add_parser("simulate", help="co-simulate one trial and write a CSV"), None)
    p.add_argument("--config")
    p.add_argument("--alpha", type=_unit_interval("alpha"))
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--stride", type=_positive_int)

    p = common(sub.add_parser("analyze", help="print bounds and the sample-complexity budget"))
    p.add_argument("--alpha", type=_unit_interval("alpha"))
    p.add_argument("--steps", type=_positive_int, help="horizon N for the bounds")
    p.add_argument("--eps", type=_positive_float, default=0.1)
    p.add_argument("--delta", type=_unit_interval("delta"), default=0.1)

    p = common(sub.add_parser("verify", help="run the invariant checklist"))
    p.add_argument("--alpha", type=_unit_interval("alpha"))
    p.add_argument("--trials", type=_positive_int)
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--probes", type=_positive_int, default=200)

    p = common(sub.add_parser("paper-example", help="write the step-size comparison datasets"))
    return parser


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "paper-example": cmd_paper_example,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.command == "simulate" and args.mdp is None and not args.config:
            args.mdp = "paper2state"
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MdpValidationError, ParseError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
