"""Natural-parameter continuation in chi with warm starts, as a numerical bifurcation diagram."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (UNIFORM, Grid, SolverConfig, evolve_to_stationary, linearize_about,
                       seed_initial)
from .fields import Field, KernelBasis, kernel_basis, swap
from .model import ModelParams, NumericalError, ValidationError
from .spectrum import chi_critical_truncated, full_spectrum_scan

BRANCHES = ("lane", "spot", "uniform")
CSV_COLUMNS = ("chi", "amplitude_l2", "amplitude_mode", "residual", "max_re_eig", "stable", "branch_label")


@dataclass
class BranchPoint:
    chi: float
    amplitude_l2: float
    amplitude_mode: float
    residual: float
    max_re_eig: float
    stable: bool
    branch_label: str

    def row(self) -> list:
        return [self.chi, self.amplitude_l2, self.amplitude_mode, self.residual, self.max_re_eig,
                self.stable, self.branch_label]


@dataclass
class Diagram:
    points: list
    params: ModelParams
    branch: str
    direction: str
    chi_1: float
    k: int = 1
    grid: Grid = field(default_factory=Grid)
    failures: list = field(default_factory=list)
    wall_time: float = 0.0

    def __post_init__(self):
        chis = [p.chi for p in self.points]
        steps = np.diff(chis)
        if steps.size and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValidationError("chi must be strictly monotone along a diagram")

    def nontrivial(self) -> list:
        return [p for p in self.points if p.branch_label != "uniform"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            w.writerow([_fmt(v) for v in p.row()])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "branch": self.branch,
            "direction": self.direction,
            "k": self.k,
            "chi_1": self.chi_1,
            "params": self.params.to_dict(),
            "grid": list(self.grid.shape),
            "n_points": len(self.points),
            "failures": self.failures,
            "chi_fold": detect_fold(self),
        }


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return repr(float(v))


def diagram_from_csv(text: str, params: ModelParams, branch: str, chi_1: float, k: int = 1) -> Diagram:
    pts = []
    for r in csv.DictReader(io.StringIO(text)):
        pts.append(BranchPoint(float(r["chi"]), float(r["amplitude_l2"]), float(r["amplitude_mode"]),
                               float(r["residual"]), float(r["max_re_eig"]), r["stable"] == "true",
                               r["branch_label"]))
    direction = "down" if len(pts) > 1 and pts[1].chi < pts[0].chi else "up"
    return Diagram(pts, params, branch, direction, chi_1, k)


@dataclass
class SweepConfig:
    k: int = 1
    grid: Grid = field(default_factory=Grid)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(dt=0.02, t_max=400.0,
                                                                      residual_tol=1e-8,
                                                                      newton_switch=1e-4))
    seed_eps: float = 0.05
    seed_noise: float = 1e-3  # amplitude floor: a branch below 10x this counts as dead
    eigenvalues: bool = True
    eig_shift: float = 0.02
    dt_retries: int = 3  # halve dt and restart a point whose explicit part blew up

    @property
    def death_amplitude(self) -> float:
        return 10 * self.seed_noise


class AmplitudeProbe:
    """``amplitude_mode`` is ``|N_k <f - 1/2pi, psi_1>|``, the coordinate along ``phi_1``."""

    def __init__(self, basis: KernelBasis, grid: Grid):
        fl = basis.fields(*grid.shape)
        self.psi1 = fl["psi1"]
        self.n_k = basis.n_k

    def mode(self, f: Field) -> float:
        return float(abs(self.n_k * (f - UNIFORM).inner(self.psi1)))

    @staticmethod
    def l2(f: Field) -> float:
        return (f - UNIFORM).norm_l2()


def chi_1_on_grid(params: ModelParams, k: int, grid: Grid) -> float:
    """``chi^k`` of the discrete operator: same theta truncation as the PDE grid."""
    return chi_critical_truncated(k, params.sigma_theta, params, n_c=grid.theta_cut)


def uniform_point(params: ModelParams, chi: float, grid: Grid) -> BranchPoint:
    rep = full_spectrum_scan(params, chi, params.sigma_theta, k_max=3, n_c=grid.theta_cut)
    return BranchPoint(chi, 0.0, 0.0, 0.0, rep.max_re, rep.max_re < 0, "uniform")


def continuation_sweep(params: ModelParams, branch: str, chi_start: float, chi_end: float,
                       steps: int = 40, config: SweepConfig | None = None,
                       progress=None) -> Diagram:
    """Sweep ``chi`` from ``chi_start`` to ``chi_end`` in ``steps`` points with warm starts.

    ``chi_start``/``chi_end`` are absolute values.  ``progress(point, chi, message)``
    is called after every chi (``point`` is None for a failed point).  The branch stops when its
    amplitude falls below ``10 * seed_noise`` (the state relaxed to uniform);
    that last point is recorded with label ``uniform``.  A point that fails to
    converge is logged in ``failures`` and the next point restarts from a fresh seed.
    """
    if branch not in BRANCHES:
        raise ValidationError(f"branch must be one of {BRANCHES}")
    if steps < 2 or chi_start == chi_end:
        raise ValidationError("need at least two distinct chi values")
    cfg = config or SweepConfig()
    grid, k = cfg.grid, cfg.k
    t0 = time.perf_counter()
    chi_1 = chi_1_on_grid(params, k, grid)
    chis = np.linspace(chi_start, chi_end, steps)
    direction = "up" if chi_end > chi_start else "down"
    points, failures = [], []
    if branch == "uniform":
        for chi in chis:
            points.append(uniform_point(params, float(chi), grid))
        return Diagram(points, params, branch, direction, chi_1, k, grid, failures,
                       time.perf_counter() - t0)

    basis = kernel_basis(k, params.sigma_theta, params)
    probe = AmplitudeProbe(basis, grid)
    solver = replace(cfg.solver, grid=grid, symmetry=branch)

    def seed():
        return seed_initial(branch, grid, k, cfg.seed_eps, basis)

    f = seed()
    for chi in chis:
        chi = float(chi)
        try:
            res = _evolve_with_retries(f, chi, params, solver, cfg.dt_retries)
        except NumericalError as exc:
            failures.append({"chi": chi, "message": str(exc)})
            if progress:
                progress(None, chi, str(exc))
            f = seed()
            continue
        if not res.converged:
            if progress:
                progress(None, chi, res.message or f"residual {res.residual:.2e}")
            failures.append({"chi": chi, "message": res.message or f"residual {res.residual:.2e}"})
            f = seed()
            continue
        amp = probe.mode(res.final)
        if amp < cfg.death_amplitude:
            points.append(uniform_point(params, chi, grid))
            if progress:
                progress(points[-1], chi, "")
            break
        max_re = float("nan")
        if cfg.eigenvalues:
            try:
                max_re = linearize_about(res.final, chi, params, "rpi", shift=cfg.eig_shift).max_re
            except (NumericalError, ArithmeticError) as exc:
                failures.append({"chi": chi, "message": f"eigenvalues: {exc}"})
        pt = BranchPoint(chi, probe.l2(res.final), amp, res.residual, max_re,
                         bool(max_re < 0) if not math.isnan(max_re) else False, branch)
        points.append(pt)
        if progress:
            progress(pt, chi, "")
        f = res.final
    return Diagram(points, params, branch, direction, chi_1, k, grid, failures, time.perf_counter() - t0)


def _evolve_with_retries(f, chi, params, solver, retries):
    res = None
    for attempt in range(retries + 1):
        cfg = replace(solver, dt=solver.dt / 2**attempt)
        res = evolve_to_stationary(f, chi, params, cfg)
        if not res.message.startswith("diverged"):
            return res
    return res


def detect_fold(diagram: Diagram, rel_tol: float = 1e-9) -> float | None:
    """Smallest chi carrying a converged nontrivial state, if it lies below ``chi^1``."""
    below = [p.chi for p in diagram.nontrivial() if p.chi < diagram.chi_1 * (1 - rel_tol)]
    return min(below) if below else None


def is_supercritical(diagram: Diagram, onset_tol: float = 0.02) -> bool:
    """No nontrivial state below ``chi^1`` and the amplitude shrinks towards ``chi^1``."""
    if detect_fold(diagram) is not None:
        return False
    pts = sorted(diagram.nontrivial(), key=lambda p: p.chi)
    if len(pts) < 2:
        return False
    if not np.all(np.diff([p.amplitude_mode for p in pts]) > 0):
        return False
    # amplitude^2 is close to affine near onset; its zero should sit at chi^1
    near = pts[:4]
    slope, icpt = np.polyfit([p.chi for p in near], [p.amplitude_mode**2 for p in near], 1)
    return bool(slope > 0 and abs(-icpt / slope - diagram.chi_1) < onset_tol * diagram.chi_1)


def normal_form_slope(diagram: Diagram, window: float = 0.03) -> float:
    """Slope of ``amplitude_mode^2`` against ``chi - chi^1`` near onset.

    Fits ``s^2 = m d + q d^2`` (no intercept: the onset is known exactly) to
    the points with ``0 < d < window * chi^1``.
    """
    pts = [p for p in diagram.nontrivial() if 0 < p.chi - diagram.chi_1 < window * diagram.chi_1]
    if len(pts) < 2:
        raise ValidationError("need at least two nontrivial points near onset")
    d = np.array([p.chi - diagram.chi_1 for p in pts])
    s2 = np.array([p.amplitude_mode**2 for p in pts])
    cols = np.column_stack([d, d * d]) if len(pts) > 2 else d[:, None]
    coef, *_ = np.linalg.lstsq(cols, s2, rcond=None)
    return float(coef[0])


def swap_defect(f: Field) -> float:
    return (swap(f) - f).norm_inf()


def diagram_json(diagram: Diagram) -> str:
    return json.dumps(diagram.manifest(), indent=2, allow_nan=True)
