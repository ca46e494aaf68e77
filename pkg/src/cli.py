"""
vbcert command line.

Usage:
    python scripts/vbcert.py analyze-vc --mdp F --policy F [--k 200] [--j0 F] --out F
    python scripts/vbcert.py analyze-vi --mdp F [--k INT] [--tol 1e-8] [--j0 F] --out F
    python scripts/vbcert.py analyze-td --mdp F --policy F --features F [--alpha auto]
                                        [--alpha-frac 0.99] [--runs 0] [--k 5000]
                                        [--seed 0] --out F
    python scripts/vbcert.py validate --mdp F [--policy F] [--features F]
    python scripts/vbcert.py make-demo --out-dir D

Exit codes: 0 when the analysis ran (whatever the verdict), 2 on invalid
input or a failed assumption.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from config.settings import config
from src.algorithms.value_methods import (
    run_td0,
    run_vc,
    run_vi,
    run_vi_until,
    sandwich_from_trace,
    sandwich_violation,
    write_trace_csv,
)
from src.certificates.mjls import (
    build_augmented_chain,
    build_mjls,
    build_mss_certificate,
    estimate_mse_curve,
    fit_decay_factor,
    mss_certificate_to_dict,
    mss_spectral_oracle,
    plateau_variation,
    verify_mss_sdp,
)
from src.certificates.positive import (
    LyapunovKind,
    VcCertificate,
    certificate_to_dict,
    construct_vc_certificate,
    copositive_split_bound,
    lyapunov_trace,
    verify_common_g,
    verify_common_nu,
    verify_lp_left,
    verify_lp_right,
    verify_positive,
    verify_sdp,
    verify_switched_linf,
)
from src.data.storage import (
    input_digest,
    load_features,
    load_mdp,
    load_policy,
    load_vector,
    write_input,
)
from src.mdp.bellman import deterministic_policy_values, optimal_value, selected_kernel
from src.mdp.chain import chain_structure, stationary_distribution
from src.mdp.instances import (
    scalar_features,
    single_action_mdp,
    three_state_demo,
    three_state_demo_features,
    three_state_demo_policy,
    two_state_demo,
)
from src.mdp.model import Policy, induce_policy
from src.numerics.linalg import inf_norm
from src.reporting.report import AnalysisReport, write_report
from src.utils.errors import KindUnavailable, MalformedInput, TooLarge, UnboundedStepsize, VbcertError

logger = logging.getLogger(__name__)


def _banner(title: str) -> None:
    print("=" * 70)
    print(f"VBCERT - {title}")
    print("=" * 70)
    print()


def _trace_path(out: Path, name: str) -> Path:
    return out.with_name(f"{out.stem}_{name}.csv")


def _verdict(flag: bool) -> str:
    return "OK" if flag else "FAILED"


def cmd_analyze_vc(args: argparse.Namespace) -> AnalysisReport:
    """Value computation: explicit certificate, its verifiers and the three Lyapunov traces."""
    _banner("VALUE COMPUTATION ANALYSIS")
    inputs = [args.mdp, args.policy] + ([args.j0] if args.j0 else [])
    report = AnalysisReport(mode="vc", input_digest=input_digest(inputs))

    with report.phase("load"):
        mdp = load_mdp(args.mdp)
        policy = load_policy(args.policy, mdp.n, mdp.l)
        j0 = load_vector(args.j0, mdp.n) if args.j0 else np.zeros(mdp.n)
        pi_ind = induce_policy(mdp, policy)
    print(f"OK: Loaded MDP with {mdp.n} states, {mdp.l} actions, gamma={mdp.gamma}")
    print(f"   Chain: {pi_ind.structure.to_dict()}")

    report.parameters = {"k": args.k, "gamma": mdp.gamma, "j0_given": bool(args.j0)}

    with report.phase("certificate"):
        cert = construct_vc_certificate(pi_ind)
        a_pi = pi_ind.a_pi()
        report.add_condition(verify_positive(a_pi))
        report.add_condition(verify_lp_right(a_pi, cert.xi, mdp.gamma))
        if cert.restricted:
            missing = KindUnavailable("nu and G need a stationary distribution (reducible chain)")
            report.add_unavailable("LP_LEFT", missing)
            report.add_unavailable("SDP", missing)
        else:
            report.add_condition(verify_lp_left(a_pi, cert.nu, mdp.gamma))
            report.add_condition(verify_sdp(a_pi, cert.g, mdp.gamma))
    report.sections["certificate"] = certificate_to_dict(cert)

    with report.phase("iterate"):
        trace = run_vc(pi_ind, j0, args.k)

    with report.phase("lyapunov"):
        for kind in LyapunovKind:
            try:
                report.add_lyapunov(lyapunov_trace(trace, pi_ind.j_pi, cert, kind))
            except KindUnavailable as e:
                report.add_unavailable(kind.value, e)

        vc_section = {
            "j_pi": pi_ind.j_pi,
            "structure": pi_ind.structure.to_dict(),
            "final_error": inf_norm(trace.iterates[-1] - pi_ind.j_pi),
        }
        if not cert.restricted:
            holds, worst = copositive_split_bound(pi_ind, j0 - pi_ind.j_pi, args.k, cert)
            vc_section["split_bound"] = {"holds": holds, "worst_ratio": worst}
    report.sections["vc"] = vc_section

    for c in report.condition_reports:
        print(f"{_verdict(c['satisfied'])}: {c['kind']:<12} margin {c['margin']:+.3e}")
    for t in report.lyapunov_traces:
        if t["available"]:
            print(f"{_verdict(t['rate_ok'])}: {t['kind']} worst ratio {t['worst_ratio']:.12f}")
        else:
            print(f"WARNING:  {t['kind']} unavailable ({t['error']})")

    if args.dump_traces:
        write_trace_csv(trace, _trace_path(Path(args.out), "vc_trace"))
    return report


def cmd_analyze_vi(args: argparse.Namespace) -> AnalysisReport:
    """Value iteration: switched ℓ∞ certificate, V1 decrease and the sandwich envelope."""
    _banner("VALUE ITERATION ANALYSIS")
    inputs = [args.mdp] + ([args.j0] if args.j0 else [])
    report = AnalysisReport(mode="vi", input_digest=input_digest(inputs))

    with report.phase("load"):
        mdp = load_mdp(args.mdp)
        j0 = load_vector(args.j0, mdp.n) if args.j0 else np.zeros(mdp.n)
    print(f"OK: Loaded MDP with {mdp.n} states, {mdp.l} actions, gamma={mdp.gamma}")

    report.parameters = {
        "k": args.k,
        "tol": None if args.k is not None else args.tol,
        "gamma": mdp.gamma,
        "j0_given": bool(args.j0),
    }

    with report.phase("optimal_value"):
        j_star, pi_star = optimal_value(mdp)
        star_selector = np.argmax(pi_star.pi, axis=1)
        vi_section = {"j_star": j_star, "pi_star": star_selector + 1}
        try:
            values = deterministic_policy_values(mdp)
            best = np.max(np.stack([j for _, j in values]), axis=0)
            vi_section["enumeration_gap"] = inf_norm(best - j_star)
        except TooLarge as e:
            logger.info("Skipping exhaustive J* check: %s", e.message)

    with report.phase("iterate"):
        trace = run_vi(mdp, j0, args.k) if args.k is not None else run_vi_until(mdp, j0, args.tol)
        sandwich = sandwich_from_trace(mdp, trace, j_star, star_selector)
        violation = sandwich_violation(sandwich)
    vi_section.update(
        {
            "steps": trace.steps,
            "final_step_change": inf_norm(trace.iterates[-1] - trace.iterates[-2]) if trace.steps else 0.0,
            "sandwich_violation": violation,
            "sandwich_holds": violation <= config.MARGIN_TOL,
        }
    )

    with report.phase("certificate"):
        report.add_condition(verify_switched_linf(mdp))
        linf_cert = VcCertificate(xi=np.ones(mdp.n), nu=None, g=None, gamma=mdp.gamma)
        report.add_lyapunov(lyapunov_trace(trace, j_star, linf_cert, LyapunovKind.V1))

        # candidate common ν and G taken from the optimal chain P*
        p_star, _ = selected_kernel(mdp, star_selector)
        if chain_structure(p_star).irreducible:
            omega_star = stationary_distribution(p_star)
            report.add_condition(verify_common_nu(mdp, omega_star))
            try:
                report.add_condition(verify_common_g(mdp, np.diag(omega_star)))
            except TooLarge as e:
                report.add_unavailable("COMMON_G", e)
        else:
            report.add_unavailable(
                "COMMON_NU", KindUnavailable("optimal chain is reducible; no candidate nu")
            )
    report.sections["vi"] = vi_section
    # common ν / G candidates are informative only; the verdict rests on the ℓ∞ certificate
    report.satisfied = bool(
        report.condition_reports[0]["satisfied"]
        and report.lyapunov_traces[0]["rate_ok"]
        and vi_section["sandwich_holds"]
    )

    print(f"OK: J* computed, pi* = {(star_selector + 1).tolist()}")
    print(f"   VI steps: {trace.steps}")
    for c in report.condition_reports:
        print(f"{_verdict(c['satisfied'])}: {c['kind']:<12} margin {c['margin']:+.3e}")
    v1 = report.lyapunov_traces[0]
    print(f"{_verdict(v1['rate_ok'])}: V1 worst ratio {v1['worst_ratio']:.12f}")
    print(f"{_verdict(vi_section['sandwich_holds'])}: sandwich violation {violation:+.3e}")

    if args.dump_traces:
        write_trace_csv(trace, _trace_path(Path(args.out), "vi_trace"))
    return report


def _parse_alpha(raw: str, alpha_max: float, fraction: float) -> float:
    if not 0 < fraction < 1:
        raise MalformedInput(f"--alpha-frac must lie in (0, 1), got {fraction}")
    if raw == "auto":
        if not math.isfinite(alpha_max):
            raise UnboundedStepsize(
                "alpha=auto needs a finite alpha_max; pass --alpha explicitly"
            )
        return fraction * alpha_max
    try:
        alpha = float(raw)
    except ValueError as e:
        raise MalformedInput(f"--alpha must be a number or 'auto', got {raw!r}") from e
    if not (alpha > 0 and math.isfinite(alpha)):
        raise MalformedInput(f"--alpha must be positive and finite, got {raw!r}")
    return alpha


def cmd_analyze_td(args: argparse.Namespace) -> AnalysisReport:
    """TD(0): pair chain, MJLS certificate, stepsize bound, SDP test, oracle and MSE curve."""
    _banner("TD(0) MEAN-SQUARE STABILITY ANALYSIS")
    report = AnalysisReport(
        mode="td", input_digest=input_digest([args.mdp, args.policy, args.features])
    )

    with report.phase("load"):
        mdp = load_mdp(args.mdp)
        policy = load_policy(args.policy, mdp.n, mdp.l)
        features = load_features(args.features, mdp.n)
        pi_ind = induce_policy(mdp, policy)
    print(f"OK: Loaded MDP with {mdp.n} states, {features.d} features, gamma={mdp.gamma}")

    with report.phase("certificate"):
        chain = build_augmented_chain(pi_ind)
        model = build_mjls(chain, pi_ind, features)
        cert = build_mss_certificate(model, chain)
    print(f"OK: Certificate built over N={chain.n_pairs} modes, alpha_max = {cert.alpha_max:.10g}")

    alpha = _parse_alpha(args.alpha, cert.alpha_max, args.alpha_frac)
    report.parameters = {
        "alpha": alpha,
        "alpha_arg": args.alpha,
        "alpha_frac": args.alpha_frac,
        "runs": args.runs,
        "k": args.k,
        "seed": args.seed,
        "gamma": mdp.gamma,
    }

    with report.phase("verify"):
        mss = verify_mss_sdp(model, cert, chain, alpha)
        try:
            mss.oracle_rho = mss_spectral_oracle(model, chain, alpha)
        except TooLarge as e:
            report.add_unavailable("oracle", e)
        if not mss.oracle_consistent:
            logger.warning(
                "Certificate feasible at alpha=%.6g but oracle rho=%.10g", alpha, mss.oracle_rho
            )

    mjls_section = {}
    if args.runs > 0:
        with report.phase("monte_carlo"):
            theta0 = np.zeros(features.d)
            mss.mse_curve = estimate_mse_curve(
                model, pi_ind, features, alpha, args.runs, args.k, args.seed, theta0, args.workers
            )
        finite = bool(np.all(np.isfinite(mss.mse_curve)))
        mjls_section["mse_summary"] = {
            "final": mss.mse_curve[-1],
            "plateau_variation": plateau_variation(mss.mse_curve) if finite else math.inf,
            "decay_factor": fit_decay_factor(mss.mse_curve) if finite else math.inf,
        }

    mjls_section.update(mss_certificate_to_dict(cert, chain, model, mss))
    report.sections["mjls"] = mjls_section
    report.satisfied = mss.feasible

    print(f"   alpha = {alpha:.10g}")
    print(f"{_verdict(mss.feasible)}: coupled SDP worst margin {mss.sdp_margins.min():+.3e}")
    if mss.oracle_rho is not None:
        print(f"   Oracle spectral radius: {mss.oracle_rho:.10g} (MSS: {mss.oracle_rho < 1})")
    if mss.mse_curve is not None:
        print(f"   MSE after {args.k} steps: {mss.mse_curve[-1]:.6g} over {args.runs} runs")

    if args.dump_traces:
        theta0 = np.zeros(features.d)
        write_trace_csv(
            run_td0(pi_ind, features, alpha, theta0, args.k, args.seed),
            _trace_path(Path(args.out), "td_trace"),
        )
    return report


def cmd_validate(args: argparse.Namespace) -> int:
    """Validate input files and print what was found."""
    _banner("INPUT VALIDATION")
    mdp = load_mdp(args.mdp)
    print(f"OK: MDP valid ({mdp.n} states, {mdp.l} actions, gamma={mdp.gamma})")

    if args.policy:
        policy = load_policy(args.policy, mdp.n, mdp.l)
        structure = chain_structure(np.einsum("sa,sat->st", policy.pi, mdp.p))
        print(f"OK: Policy valid; induced chain {structure.to_dict()}")
    if args.features:
        features = load_features(args.features, mdp.n)
        print(f"OK: Features valid (d={features.d}, full column rank)")
    return 0


def cmd_make_demo(args: argparse.Namespace) -> int:
    """Write the demo inputs used throughout the documentation and tests."""
    _banner("DEMO INPUTS")
    out_dir = Path(args.out_dir)

    files = {
        "two_state_mdp.json": two_state_demo(0.9).to_dict(),
        "two_state_policy.json": {"deterministic": [1, 1]},
        "scalar_features.json": {"phi": scalar_features(2).tolist()},
        "three_state_mdp.json": three_state_demo(0.9).to_dict(),
        "three_state_policy.json": three_state_demo_policy().to_dict(),
        "three_state_features.json": {"phi": three_state_demo_features().tolist()},
        "reducible_mdp.json": single_action_mdp(np.eye(2), [1.0, 0.0], 0.9).to_dict(),
        "reducible_policy.json": Policy.deterministic([0, 0], 1).to_dict(),
    }
    for name, content in files.items():
        write_input(content, out_dir / name)
        print(f"OK: {out_dir / name}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="logging level on stderr")
    parser.add_argument("--dump-traces", action="store_true", help="write trace CSVs next to --out")
    parser.add_argument("--timings", action="store_true", help="include wall times in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vbcert",
        description="Lyapunov certificates for value computation, value iteration and TD(0).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    vc = sub.add_parser("analyze-vc", help="value computation for a fixed policy")
    vc.add_argument("--mdp", required=True)
    vc.add_argument("--policy", required=True)
    vc.add_argument("--k", type=int, default=config.VC_STEPS)
    vc.add_argument("--j0")
    vc.add_argument("--out", required=True)
    _add_common(vc)

    vi = sub.add_parser("analyze-vi", help="value iteration")
    vi.add_argument("--mdp", required=True)
    vi.add_argument("--k", type=int, default=None, help="fixed step count (overrides --tol)")
    vi.add_argument("--tol", type=float, default=config.VI_TOL)
    vi.add_argument("--j0")
    vi.add_argument("--out", required=True)
    _add_common(vi)

    td = sub.add_parser("analyze-td", help="TD(0) with linear function approximation")
    td.add_argument("--mdp", required=True)
    td.add_argument("--policy", required=True)
    td.add_argument("--features", required=True)
    td.add_argument("--alpha", default="auto")
    td.add_argument("--alpha-frac", type=float, default=config.ALPHA_FRACTION)
    td.add_argument("--runs", type=int, default=0)
    td.add_argument("--k", type=int, default=config.TD_STEPS)
    td.add_argument("--seed", type=int, default=0)
    td.add_argument("--workers", type=int, default=config.MC_WORKERS)
    td.add_argument("--out", required=True)
    _add_common(td)

    val = sub.add_parser("validate", help="validate input files")
    val.add_argument("--mdp", required=True)
    val.add_argument("--policy")
    val.add_argument("--features")
    _add_common(val)

    demo = sub.add_parser("make-demo", help="write demo input files")
    demo.add_argument("--out-dir", default=config.DEMO_DIR)
    _add_common(demo)

    return parser


ANALYSES = {
    "analyze-vc": cmd_analyze_vc,
    "analyze-vi": cmd_analyze_vi,
    "analyze-td": cmd_analyze_td,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )

    is_valid, errors = config.validate()
    if not is_valid:
        print("ERROR: Configuration errors:", file=sys.stderr)
        for error in errors:
            print(f"   - {error}", file=sys.stderr)
        return 2

    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "make-demo":
            return cmd_make_demo(args)

        if getattr(args, "k", None) is not None and args.k < 0:
            raise MalformedInput(f"--k must be non-negative, got {args.k}")
        if args.command == "analyze-td" and args.runs < 0:
            raise MalformedInput(f"--runs must be non-negative, got {args.runs}")

        report = ANALYSES[args.command](args)
        payload = write_report(report, args.out, include_timings=args.timings)
    except VbcertError as e:
        print(f"ERROR: {e.format()}", file=sys.stderr)
        return 2

    print()
    print("=" * 70)
    print(f"Report written to: {args.out}")
    print(f"Satisfied: {payload['satisfied']}")
    print("=" * 70)
    return 0
