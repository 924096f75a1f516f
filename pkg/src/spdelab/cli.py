"""Command-line front end.

Exit codes: 0 success, 1 configuration or usage problem, 2 numerical
failure (blow-up, quadrature non-convergence, factorization failure, or a
failed potential-mapping check).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .constants import (QuadratureError, alpha_constant, poly_constant,
                        riemann_gap, truncation_matched_constant,
                        white_noise_constant)
from .integrate import IntegrationError, Variant, run_mild
from .linops import OperatorSpec
from .models import (CallbackError, PolynomialPotential,
                     check_effective_drift_identity, from_potential,
                     model_from_config, potential_spec, validate_model)
from .noise import NoiseStream, sample_stationary
from .spectral import sobolev_norm, sup_norm
from .studies import (RunConfig, initial_field, report_json_text,
                      run_averaging_study, run_convergence_study,
                      run_psi_coupling_study, run_theorem15_study,
                      write_report, _atomic_write, _fmt)


class _UsageError(Exception):
    pass


def _resolve_output(path: str | None) -> str | None:
    """Relative output paths land in $SPDELAB_OUTPUT_DIR when it is set."""
    if not path:
        return path
    base = os.environ.get("SPDELAB_OUTPUT_DIR")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message: str):
        raise _UsageError(f"{self.prog}: {message}")


def _load_json(path: str) -> dict:
    with open(path) as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _add_study_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--model", help="inline JSON model config")
    p.add_argument("--eps-grid", type=_floats)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--modes-over-eps", type=float)
    p.add_argument("--fixed-modes", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--correction")
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--u0-decay", type=float)
    p.add_argument("--u0-modes", type=int)
    p.add_argument("--output-csv")
    p.add_argument("--output-json")


_FLAG_FIELDS = ("eps_grid", "replicas", "seed", "workers", "modes_over_eps",
                "fixed_modes", "dt", "t_final", "correction", "beta", "gamma",
                "alpha", "u0_decay", "u0_modes")


def _study_config(args: argparse.Namespace, study: str) -> RunConfig:
    data: dict = {"study": study}
    if args.config:
        data.update(_load_json(args.config))
    data["study"] = study
    if args.model:
        data["model"] = json.loads(args.model)
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    return RunConfig.from_dict(data)


def _emit_convergence(report, args: argparse.Namespace) -> int:
    write_report(report, _resolve_output(args.output_csv),
                 _resolve_output(args.output_json))
    for row in report.per_eps:
        mean = row["mean_error"]
        mean_txt = "censored" if mean is None else f"{mean:.6g}"
        print(f"eps={row['eps']:<12g} modes={row['n_modes']:<6d} "
              f"mean={mean_txt} censored={row['n_censored']}/"
              f"{row['n_replicas']}")
    if report.slope is None:
        print("slope: not fit (need 4 uncensored eps levels)")
    else:
        lo, hi = report.ci95
        print(f"slope={report.slope:.4f}  ci95=[{lo:.4f}, {hi:.4f}]  "
              f"r2={report.r2:.4f}")
    if report.naive_over_corrected is not None:
        print(f"naive/corrected at smallest eps: "
              f"{report.naive_over_corrected:.3f}")
    return 0


def _cmd_converge(args: argparse.Namespace) -> int:
    return _emit_convergence(run_convergence_study(
        _study_config(args, "converge")), args)


def _cmd_theorem15(args: argparse.Namespace) -> int:
    return _emit_convergence(run_theorem15_study(
        _study_config(args, "theorem15")), args)


def _cmd_psi(args: argparse.Namespace) -> int:
    return _emit_convergence(run_psi_coupling_study(
        _study_config(args, "psi-coupling")), args)


def _cmd_averaging(args: argparse.Namespace) -> int:
    report = run_averaging_study(_study_config(args, "averaging"))
    write_report(report, _resolve_output(args.output_csv),
                 _resolve_output(args.output_json))
    for i, eps in enumerate(report.eps):
        print(f"eps={eps:<12g} modes={report.max_modes[i]:<6d} "
              f"median|phi|={report.median_phi[i]:.6g} "
              f"median|phi~|={report.median_phi_tilde[i]:.6g}")
    print(f"slope(eps*|phi|)={report.slope_phi.slope:.4f}  "
          f"slope(eps*|phi~|)={report.slope_phi_tilde.slope:.4f}")
    return 0


def _cmd_constants(args: argparse.Namespace) -> int:
    out: dict = {"white_noise_constant": white_noise_constant(args.nu)}
    if args.alpha is not None:
        out["alpha_constant"] = alpha_constant(args.nu, args.alpha)
    if args.q is not None:
        out["poly_constant"] = poly_constant(args.nu, args.q)
    if args.eps is not None:
        if args.max_mode is not None:
            out["truncation_matched_constant"] = truncation_matched_constant(
                args.nu, args.eps, args.max_mode)
        out["riemann_gap"] = riemann_gap(args.nu, args.eps)
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    data: dict = {}
    if args.config:
        data.update(_load_json(args.config))
    if args.model:
        data["model"] = json.loads(args.model)
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None and name != "eps_grid":
            data[name] = value
    data.setdefault("eps_grid", (args.eps,))
    cfg = RunConfig.from_dict(data)
    spec, _ = model_from_config(cfg.model)
    variant = Variant(args.variant)
    sim = cfg.simulation_config(args.eps)

    stream = NoiseStream(cfg.seed)
    u0 = initial_field(spec.n, cfg.u0_modes, cfg.u0_decay, cfg.u0_amplitude,
                       stream)
    if variant is Variant.V_LIMIT:
        noise = None
    else:
        want = args.eps if variant in (Variant.PHI_EPS, Variant.V_EPS) else 0.0
        noise = sample_stationary([OperatorSpec(spec.nu, want)], spec.n,
                                  sim.max_mode, stream)
    const = None
    if variant in (Variant.PHI_BAR, Variant.V_LIMIT):
        if cfg.correction == "truncation-matched":
            const = truncation_matched_constant(spec.nu, args.eps,
                                                sim.max_mode)
        elif cfg.correction != "asymptotic":
            const = float(cfg.correction)
    eq_eps = args.eps if variant in (Variant.PHI_EPS, Variant.V_EPS) else 0.0
    traj = run_mild(spec, variant, eq_eps, u0, noise, sim,
                    correction_constant=const)

    lines = ["time,sup_norm,sobolev_norm"]
    for t, field in zip(traj.times, traj.fields):
        lines.append(f"{_fmt(t)},{_fmt(sup_norm(field))},"
                     f"{_fmt(sobolev_norm(field, cfg.beta, spec.nu))}")
    text = "\n".join(lines) + "\n"
    if args.output_csv:
        _atomic_write(_resolve_output(args.output_csv), text)
    else:
        sys.stdout.write(text)
    if traj.censored:
        print(f"censored at t={traj.censoring_time:g}", file=sys.stderr)
    return 0


def _cmd_path_sampling(args: argparse.Namespace) -> int:
    coeffs = list(args.potential)
    potential = PolynomialPotential.from_univariate(coeffs)
    p = potential_spec(potential, args.temperature, args.mass)
    model, eps = from_potential(p)
    rng = np.random.default_rng(args.seed)
    probes = rng.uniform(-args.box, args.box, size=(p.n, args.probes))

    summary = {
        "n": p.n,
        "temperature": args.temperature,
        "mass": args.mass,
        "eps": eps,
        "nu": model.nu,
        "potential_coeffs": coeffs,
    }
    status = 0
    if args.check:
        deviation = check_effective_drift_identity(p, probes)
        fd_gap = validate_model(model)
        summary["drift_identity_deviation"] = deviation
        summary["g_derivative_fd_gap"] = fd_gap
        scale = 1.0 + max(abs(c) for c in coeffs)
        if deviation > 1e-8 * scale:
            print(f"corrected-drift identity failed: deviation={deviation:g}",
                  file=sys.stderr)
            status = 2
    if args.output_json:
        _atomic_write(_resolve_output(args.output_json),
                      json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"eps={eps!r} nu={model.nu!r}")
    if "drift_identity_deviation" in summary:
        print(f"drift identity deviation: "
              f"{summary['drift_identity_deviation']:.3g}")
    return status


def build_parser() -> _Parser:
    parser = _Parser(prog="spdelab", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("constants",
                       help="print correction constants for given parameters")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--max-mode", type=int)
    p.add_argument("--alpha", type=float,
                   help="singular spectral exponent in (0, 1/2)")
    p.add_argument("--q", type=_floats,
                   help="ascending coefficients of the symbol polynomial")
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("simulate", help="integrate one variant, dump norms")
    p.add_argument("--variant", required=True,
                   choices=[v.value for v in Variant])
    p.add_argument("--eps", type=float, required=True,
                   help="perturbation size (sets modes and constants even "
                        "for limit variants)")
    _add_study_flags(p)
    p.set_defaults(func=_cmd_simulate)

    for name, fn, blurb in (
            ("converge", _cmd_converge,
             "rate of convergence to the corrected limit"),
            ("theorem15", _cmd_theorem15,
             "small-noise rate against the deterministic limits"),
            ("psi-coupling", _cmd_psi,
             "sup-distance scaling of the coupled noise pair"),
            ("averaging", _cmd_averaging,
             "single-time fluctuation-norm scaling")):
        p = sub.add_parser(name, help=blurb)
        _add_study_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("path-sampling",
                       help="map a sampling potential onto the model family")
    p.add_argument("--potential", type=_floats, required=True,
                   help="ascending polynomial coefficients c0,c1,...")
    p.add_argument("--T", "-T", "--temperature", dest="temperature",
                   type=float, required=True)
    p.add_argument("--mass", type=float, default=0.1,
                   help="eps = mass/sqrt(2T); only scales eps, not the "
                        "identity check")
    p.add_argument("--check", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="verify the corrected-drift identity (exit 2 on "
                        "failure)")
    p.add_argument("--probes", type=int, default=64)
    p.add_argument("--box", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-json")
    p.set_defaults(func=_cmd_path_sampling)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except (IntegrationError, QuadratureError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (_UsageError, CallbackError, ValueError, KeyError, TypeError,
            OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
