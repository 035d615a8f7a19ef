"""Command-line entry point: ``antbif <command> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .model import ModelParams, NumericalError, ValidationError, load_config, rescale

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

# desk-scale defaults for the 32x32x64 simulations (see README)
DESK_PRESETS = {
    "lane": {"sigma_x": "0.12", "sigma_theta": "0.03"},
    "uniform": {"sigma_x": "0.12", "sigma_theta": "0.03"},
    "spot": {"sigma_x": "0.04", "sigma_theta": "0.03"},
}


@dataclass
class RunManifest:
    command: str
    params: dict
    grid: list | None = None
    seed: int | None = None
    versions: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def write(self, path: Path) -> Path:
        data = {
            "command": self.command, "params": self.params, "grid": self.grid, "seed": self.seed,
            "versions": self.versions, "outputs": self.outputs, "wall_time": self.wall_time,
        }
        data.update(self.extra)
        path.write_text(json.dumps(data, indent=2, allow_nan=True) + "\n")
        return path


def _versions() -> dict:
    return {"antbif": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


# argument helpers ---------------------------------------------------------------

def _resolve_params(args, preset: str | None = None) -> ModelParams:
    data = {}
    if preset and getattr(args, "preset", "desk") == "desk":
        data.update(DESK_PRESETS[preset])
    data.update(load_config(args.config, args.param or ()))
    if getattr(args, "tau", None) is not None:
        data["tau"] = args.tau
    if getattr(args, "sigma_theta", None) is not None:
        data["sigma_theta"] = args.sigma_theta
    params = ModelParams.from_mapping(data)
    if getattr(args, "sigma_k", None) is not None:
        if args.sigma_k <= 0:
            raise ValidationError("--sigma-k must be positive")
        params = params.with_(sigma_x=args.sigma_k * params.lam / (2 * math.pi * args.k))
    return params


def parse_chi(text: str | None, chi_1: float, default: float | None = None) -> float:
    """Absolute value or a multiple of ``chi^1`` written ``1.05x``."""
    if text is None:
        if default is None:
            raise ValidationError("--chi is required")
        return default
    t = str(text).strip()
    try:
        if t.endswith("x"):
            return float(t[:-1]) * chi_1
        return float(t)
    except ValueError:
        raise ValidationError(f"cannot parse chi value {text!r} (use a number or e.g. 1.05x)") from None


def _parse_grid(text: str):
    from .dynamics import Grid

    try:
        parts = [int(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"--grid expects N,Ntheta (e.g. 32,64), got {text!r}") from None
    if len(parts) != 2:
        raise ValidationError("--grid expects two integers N,Ntheta")
    return Grid(parts[0], parts[0], parts[1])


def _out(args, name: str) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{args.prefix}{name}"


def _say(args, text: str):
    if not args.quiet:
        print(text, flush=True)


# commands -------------------------------------------------------------------------

def cmd_coeffs(args) -> int:
    from .coefficients import compute_report
    from .model import check_smallness
    from .spectrum import is_non_pythagorean, kernel_report

    params = _resolve_params(args)
    t0 = time.perf_counter()
    k = args.k
    outputs = []
    if not is_non_pythagorean(k):
        if not args.allow_pythagorean:
            raise ValidationError(f"k={k} is Pythagorean (k^2 = l^2 + m^2 has positive solutions); "
                                  "coefficients need a non-Pythagorean wave number")
        rep = kernel_report(params, k, params.sigma_theta)
        path = _out(args, f"kernel_k{k}.json")
        path.write_text(json.dumps({"k": k, "chi": rep.chi, "dimension": rep.dimension,
                                    "modes": [list(m) for m in rep.modes]}, indent=2) + "\n")
        _say(args, f"k={k}: Pythagorean, kernel dimension {rep.dimension} at chi={rep.chi:.6g}")
        outputs.append(str(path))
    else:
        rep = compute_report(params, k, params.sigma_theta)
        warn = check_smallness(params, k)
        rep.notes.extend(f"smallness: {w}" for w in warn)
        path = _out(args, f"coeffs_k{k}.json")
        path.write_text(rep.to_json() + "\n")
        outputs.append(str(path))
        rc = rescale(params, k)
        _say(args, f"k={k} sigma_k={rc.sigma_k:.4g} tau_k={rc.tau_k:.4g} sigma_theta={params.sigma_theta:g}")
        _say(args, f"  chi^k = {rep.chi_k:.8g}   a = {rep.a:.6g}   b = {rep.b:.6g}   c = {rep.c:.6g}")
        if rep.tau_Lambda is not None:
            _say(args, f"  tau_Lambda = {rep.tau_Lambda:.6g}   tau_Xi = {rep.tau_Xi:.6g}")
        _say(args, f"  lanes: {rep.lane_criticality}   spots: {rep.spot_criticality}")
        for note in rep.notes:
            _say(args, f"  note: {note}")
    _manifest(args, "coeffs", params, outputs, t0)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .spectrum import chi_critical_truncated, full_spectrum_scan

    params = _resolve_params(args)
    t0 = time.perf_counter()
    chi_1 = chi_critical_truncated(args.k, params.sigma_theta, params, args.n_c)
    chi = parse_chi(args.chi, chi_1, chi_1)
    rep = full_spectrum_scan(params, chi, params.sigma_theta, args.k_max, args.n_c)
    path = _out(args, "spectrum.json")
    data = rep.to_json_dict()
    data["chi_1"] = chi_1
    path.write_text(json.dumps(data, indent=2, allow_nan=True) + "\n")
    outputs = [str(path)]
    if args.figure:
        from .plotting import eigenvalue_figure

        eigs = np.concatenate(list(rep.eigenvalues.values()))
        outputs.append(str(eigenvalue_figure(eigs, _out(args, "spectrum.png"), f"chi = {chi:.5g}")))
    _say(args, f"chi={chi:.8g} (chi^{args.k}={chi_1:.8g}): max Re = {rep.max_re:.3e} at mode "
               f"{rep.max_mode}, gap = {rep.gap:.4g}")
    _manifest(args, "spectrum", params, outputs, t0)
    return EXIT_OK


def cmd_dispersion(args) -> int:
    from .integrals import dispersion_J_inviscid
    from .spectrum import chi_critical_truncated, dispersion_roots

    params = _resolve_params(args)
    t0 = time.perf_counter()
    chi_1 = chi_critical_truncated(args.k, params.sigma_theta, params, args.n_c)
    chi = parse_chi(args.chi, chi_1, chi_1)
    roots = dispersion_roots(params, args.k, chi, params.sigma_theta, args.n_c)
    roots = roots[np.lexsort((roots.imag, -roots.real))][: args.n_roots]
    path = _out(args, "dispersion.csv")
    lines = ["mu_re,mu_im"] + [f"{float(r.real)!r},{float(r.imag)!r}" for r in roots]
    path.write_text("\n".join(lines) + "\n")
    outputs = [str(path)]
    if args.scan:
        rc = rescale(params, args.k)
        mus = np.linspace(0.0, args.scan * rc.lambda_k, 101)
        scan = _out(args, "dispersion_scan.csv")
        rows = ["mu,J_re,J_im"]
        for mu in mus:
            j = dispersion_J_inviscid(rc, mu)
            rows.append(f"{float(mu)!r},{j.real!r},{j.imag!r}")
        scan.write_text("\n".join(rows) + "\n")
        outputs.append(str(scan))
    if args.figure:
        from .plotting import eigenvalue_figure

        outputs.append(str(eigenvalue_figure(roots, _out(args, "dispersion.png"), f"k = {args.k}")))
    _say(args, f"leading root: {roots[0]:.6e} at chi={chi:.8g}")
    _manifest(args, "dispersion", params, outputs, t0)
    return EXIT_OK


def cmd_evolve(args) -> int:
    from .continuation import AmplitudeProbe, chi_1_on_grid
    from .dynamics import SolverConfig, evolve_to_stationary, seed_initial
    from .fields import kernel_basis, write_snapshot

    preset = args.init if args.init in ("lane", "spot") else "uniform"
    params = _resolve_params(args, preset)
    grid = _parse_grid(args.grid)
    t0 = time.perf_counter()
    chi_1 = chi_1_on_grid(params, args.k, grid)
    chi = parse_chi(args.chi, chi_1)
    basis = kernel_basis(args.k, params.sigma_theta, params) if args.init in ("lane", "spot") else None
    if args.init == "file" and not args.snapshot_in:
        raise ValidationError("--init file needs --snapshot-in")
    f0 = seed_initial(args.init, grid, args.k, args.eps, basis, args.snapshot_in)
    sym = args.symmetry
    if sym == "auto":
        sym = args.init if args.init in ("lane", "spot") else "rpi"
    cfg = SolverConfig(dt=args.dt, t_max=args.t_max, residual_tol=args.tol, grid=grid, symmetry=sym,
                       newton=not args.no_newton, newton_switch=max(args.tol, 1e-4))
    probe = AmplitudeProbe(basis or kernel_basis(args.k, params.sigma_theta, params), grid)
    res = evolve_to_stationary(f0, chi, params, cfg, amplitude=probe.mode)
    snap = _out(args, "final.bin")
    write_snapshot(snap, res.final)
    diag = _out(args, "diagnostics.csv")
    diag.write_text(res.diagnostics_csv())
    outputs = [str(snap), str(diag)]
    if args.figure:
        from .plotting import trajectory_figure

        outputs.append(str(trajectory_figure(res.times, res.residuals, res.amplitudes, _out(args, "trajectory.png"))))
    summary = {"chi": chi, "chi_1": chi_1, "converged": res.converged, "residual": res.residual,
               "amplitude_mode": probe.mode(res.final), "amplitude_l2": probe.l2(res.final),
               "mass": res.final.mass(), "min_f": float(res.final.values.min()), "steps": res.steps,
               "newton": res.newton_used, "message": res.message}
    _say(args, json.dumps(summary, indent=2))
    _manifest(args, "evolve", params, outputs, t0, grid=list(grid.shape), extra={"summary": summary})
    if not res.converged:
        print(f"error: no stationary state (residual {res.residual:.3e}; {res.message})", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_bifdiag(args) -> int:
    from .continuation import SweepConfig, chi_1_on_grid, continuation_sweep, detect_fold
    from .dynamics import SolverConfig

    params = _resolve_params(args, args.branch)
    grid = _parse_grid(args.grid)
    t0 = time.perf_counter()
    chi_1 = chi_1_on_grid(params, args.k, grid)
    chi_a = parse_chi(args.chi_start, chi_1)
    chi_b = parse_chi(args.chi_end, chi_1)
    solver = SolverConfig(dt=args.dt, t_max=args.t_max, residual_tol=args.tol, newton_switch=1e-4)
    cfg = SweepConfig(k=args.k, grid=grid, solver=solver, eigenvalues=not args.no_eigs)

    def progress(pt, chi, message):
        if pt is None:
            _say(args, f"  chi={chi:.6g} ({chi / chi_1:.4f} chi^1) failed: {message}")
            return
        _say(args, f"  chi={pt.chi:.6g} ({pt.chi / chi_1:.4f} chi^1) {pt.branch_label:7s} "
                   f"amp={pt.amplitude_mode:.4g} res={pt.residual:.1e} max_re={pt.max_re_eig:.3g}")

    diagrams = [continuation_sweep(params, args.branch, chi_a, chi_b, args.steps, cfg, progress)]
    if args.branch != "uniform" and not args.no_uniform:
        diagrams.append(continuation_sweep(params, "uniform", chi_a, chi_b, args.steps, cfg))
    outputs = []
    for d in diagrams:
        path = _out(args, f"bifdiag_{d.branch}.csv")
        path.write_text(d.to_csv())
        outputs.append(str(path))
    if args.figure:
        from .plotting import diagram_figure

        outputs.append(str(diagram_figure(diagrams, _out(args, "bifdiag.png"), chi_1)))
    main = diagrams[0]
    fold = detect_fold(main)
    _say(args, f"chi^1 = {chi_1:.8g}; fold: " + (f"{fold:.6g} ({fold / chi_1:.4f} chi^1)" if fold else "none"))
    extra = {"chi_1": chi_1, "diagrams": [d.manifest() for d in diagrams]}
    _manifest(args, "bifdiag", params, outputs, t0, grid=list(grid.shape), extra=extra)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import checks_csv, parse_grid, run_suite

    t0 = time.perf_counter()
    sig, tau = parse_grid(args.grid) if args.grid else parse_grid("")
    checks = run_suite(sig, tau, args.k, mutate=args.mutate)
    path = _out(args, "verify.csv")
    path.write_text(checks_csv(checks))
    failed = [c for c in checks if not c.passed]
    for c in failed:
        print(f"FAIL {c.name}: rel error {c.rel_err:.3e} > {c.tol:g}", file=sys.stderr)
    _say(args, f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    _manifest(args, "verify", ModelParams().to_dict(), [str(path)], t0,
              extra={"grid": {"sigma_k": sig, "tau_k": tau}, "failed": [c.name for c in failed]})
    return EXIT_OK if not failed else EXIT_NUMERICAL


def _manifest(args, command, params, outputs, t0, grid=None, extra=None):
    if isinstance(params, ModelParams):
        params = params.to_dict()
    m = RunManifest(command=command, params=params, grid=grid, seed=0, versions=_versions(),
                    outputs=list(outputs), wall_time=time.perf_counter() - t0, extra=extra or {})
    m.write(_out(args, f"{command}_manifest.json"))


# parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="antbif", description="Bifurcation toolkit for the ant chemotaxis model.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, k=True):
        sp.add_argument("--config", help="key=value parameter file")
        sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="parameter override (repeatable)")
        sp.add_argument("--out-dir", default=".", help="directory for outputs")
        sp.add_argument("--prefix", default="", help="prefix for output file names")
        sp.add_argument("--quiet", action="store_true")
        if k:
            sp.add_argument("--k", type=int, default=1, help="critical wave number")
        sp.add_argument("--tau", type=float, help="anticipation length (shortcut for --param tau=...)")
        sp.add_argument("--sigma-theta", type=float, help="angular diffusivity")

    s = sub.add_parser("coeffs", help="bifurcation point, normal-form coefficients and thresholds")
    common(s)
    s.add_argument("--sigma-k", type=float, help="set sigma_x so that the rescaled sigma_k has this value")
    s.add_argument("--allow-pythagorean", action="store_true", help="report the kernel only for Pythagorean k")
    s.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("spectrum", help="eigenvalues of the linearisation about the uniform state")
    common(s)
    s.add_argument("--sigma-k", type=float)
    s.add_argument("--chi", help="absolute value or multiple of chi^k, e.g. 1.05x (default chi^k)")
    s.add_argument("--k-max", type=float, default=3.0)
    s.add_argument("--n-c", type=int, default=64, help="theta modes -n_c..n_c")
    s.add_argument("--figure", action="store_true", help="also write a PNG")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("dispersion", help="roots of the dispersion relation for mode (k, 0)")
    common(s)
    s.add_argument("--sigma-k", type=float)
    s.add_argument("--chi", help="absolute value or multiple of chi^k (default chi^k)")
    s.add_argument("--n-c", type=int, default=64)
    s.add_argument("--n-roots", type=int, default=20)
    s.add_argument("--scan", type=float, default=0.0,
                   help="also tabulate the inviscid J(mu) for real mu in [0, SCAN*lambda_k]")
    s.add_argument("--figure", action="store_true")
    s.set_defaults(func=cmd_dispersion)

    s = sub.add_parser("evolve", help="time-step a seed to a stationary state")
    common(s)
    s.add_argument("--init", choices=("uniform", "lane", "spot", "file"), default="spot")
    s.add_argument("--snapshot-in", help="snapshot file for --init file")
    s.add_argument("--chi", required=True, help="absolute value or multiple of chi^k, e.g. 1.05x")
    s.add_argument("--eps", type=float, default=0.05, help="seed amplitude")
    s.add_argument("--grid", default="32,64", help="N,Ntheta (positional grid is N x N)")
    s.add_argument("--dt", type=float, default=0.02)
    s.add_argument("--t-max", type=float, default=400.0)
    s.add_argument("--tol", type=float, default=1e-6, help="residual tolerance (inf-norm)")
    s.add_argument("--symmetry", choices=("auto", "none", "rpi", "lane", "spot"), default="auto")
    s.add_argument("--no-newton", action="store_true")
    s.add_argument("--preset", choices=("desk", "none"), default="desk",
                   help="desk: sigma_x/sigma_theta suited to the 32x32x64 grid unless given explicitly")
    s.add_argument("--figure", action="store_true")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("bifdiag", help="numerical bifurcation diagram by continuation in chi")
    common(s)
    s.add_argument("--branch", choices=("lane", "spot", "uniform"), default="lane")
    s.add_argument("--chi-start", default="1.3x")
    s.add_argument("--chi-end", default="0.8x")
    s.add_argument("--steps", type=int, default=40)
    s.add_argument("--grid", default="32,64")
    s.add_argument("--dt", type=float, default=0.02)
    s.add_argument("--t-max", type=float, default=400.0)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--no-eigs", action="store_true", help="skip leading eigenvalues of branch points")
    s.add_argument("--no-uniform", action="store_true", help="skip the uniform-branch diagram")
    s.add_argument("--preset", choices=("desk", "none"), default="desk")
    s.add_argument("--figure", action="store_true")
    s.set_defaults(func=cmd_bifdiag)

    s = sub.add_parser("verify", help="closed forms against independent oracles")
    s.add_argument("--grid", help='e.g. "sigma_k=0.05,0.2,1 tau=0,0.1,1,5" (tau is tau_k)')
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--mutate", help="test mode: perturb the named closed form by 1e-6 relative")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--prefix", default="")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure ({args.command}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
