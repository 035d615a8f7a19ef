"""Bifurcation point, cubic normal-form coefficients and anticipation thresholds."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import KernelBasis, ModeField, kernel_basis
from .integrals import CubicPoly, I_closed
from .model import ModelParams, NumericalError, RescaledConstants, ValidationError, rescale
from .theta import (ThetaFun, compute_U, default_n_theta, integral_U_inviscid, resolvent_solve,
                    wavenumbers)

TWO_PI = 2 * math.pi
K_GUARD = 1e-8


def chi_k(params: ModelParams, k: int, sigma_theta: float, n: int | None = None) -> float:
    """``chi^k = 2 pi / int U^{k e1}_{sigma_theta} dtheta``."""
    inviscid = integral_U_inviscid(k, params)
    if sigma_theta == 0:
        return TWO_PI / inviscid
    rc = rescale(params, k)
    n = n or default_n_theta(rc.sigma_k)
    integral = compute_U((k, 0), sigma_theta, params, n).integral().real
    if not integral / inviscid > 0:
        raise NumericalError(
            f"int U changed sign relative to its inviscid value (sigma_theta={sigma_theta} too large)")
    return TWO_PI / integral


def _inverse_zero_mode(g: np.ndarray, sigma_theta: float) -> np.ndarray:
    """``(1/sigma_theta) (d_theta^2)^{-1} g`` on zero-mean functions."""
    n = g.size
    kk = wavenumbers(n)
    gh = np.fft.fft(g)
    out = np.zeros_like(gh)
    nz = kk != 0
    out[nz] = gh[nz] / (-(kk[nz] ** 2) * sigma_theta)
    if n % 2 == 0:
        out[n // 2] = 0
    return np.fft.ifft(out)


def invert_L(g: ModeField, k: int, chi: float, sigma_theta: float, params: ModelParams,
             zero_mode_part: bool = True) -> ModeField:
    """Mode-preserving inverse of the linearisation at ``chi^k`` on the range complement.

    Modes on the critical circle ``|l| = k`` are mapped to zero; the zero mode
    uses ``(1/sigma_theta) d^-2``; other modes use the resolvent plus the
    rank-one chemotactic correction with ``K = 1 - (chi/2pi) int U^l``.
    """
    if sigma_theta <= 0:
        raise ValidationError("the zero-mode inverse needs sigma_theta > 0")
    out = {}
    for kv, prof in g.modes.items():
        if kv == (0, 0):
            if zero_mode_part:
                out[kv] = _inverse_zero_mode(prof, sigma_theta)
            continue
        if kv[0] ** 2 + kv[1] ** 2 == k * k:
            continue
        rhs = ThetaFun(prof)
        rg = resolvent_solve(kv, sigma_theta, rhs, params)
        u_l = compute_U(kv, sigma_theta, params, g.n)
        big_k = 1 - chi / TWO_PI * u_l.integral()
        if abs(big_k) < K_GUARD:
            raise NumericalError(f"mode {kv} resonant: K = {abs(big_k):.2e}")
        alpha = chi * rg.integral() / (TWO_PI * big_k)
        out[kv] = rg.values + alpha * u_l.values
    return ModeField(out, g.n)


def _quad_source(fi: ModeField, fj: ModeField, params: ModelParams) -> ModeField:
    return (fi.chemotactic_drift(params) * fj + fj.chemotactic_drift(params) * fi).dtheta()


def compute_A(i: int, j: int, basis: KernelBasis, chi: float, sigma_theta: float,
              params: ModelParams, zero_mode_part: bool = True) -> ModeField:
    phis = {1: basis.phi1, 2: basis.phi2}
    src = _quad_source(phis[i], phis[j], params)
    return invert_L(src, basis.k, chi, sigma_theta, params, zero_mode_part).scale(chi)


def _cubic_term(psi: ModeField, u: ModeField, w: ModeField, params: ModelParams) -> float:
    """``<psi, d_theta(u B[w] + w B[u])>``."""
    return psi.inner(_quad_source(u, w, params))


def coeff_a(basis: KernelBasis, params: ModelParams) -> float:
    return -psi_pair(basis.psi1, basis.phi1.chemotactic_drift(params).dtheta()) / TWO_PI


def psi_pair(psi: ModeField, g: ModeField) -> float:
    return psi.inner(g)


def coeff_b(basis: KernelBasis, A11: ModeField, chi: float, params: ModelParams) -> float:
    return chi / 2 * _cubic_term(basis.psi1, A11, basis.phi1, params)


def coeff_c(basis: KernelBasis, A22: ModeField, A12: ModeField, chi: float, params: ModelParams) -> float:
    return (chi / 2 * _cubic_term(basis.psi1, A22, basis.phi1, params)
            + chi * _cubic_term(basis.psi1, basis.phi2, A12, params))


def coeff_c_swapped(basis: KernelBasis, A11: ModeField, A12: ModeField, chi: float,
                    params: ModelParams) -> float:
    """Same coefficient read off the second component of the reduced field."""
    return (chi / 2 * _cubic_term(basis.psi2, A11, basis.phi2, params)
            + chi * _cubic_term(basis.psi2, basis.phi1, A12, params))


# thresholds -------------------------------------------------------------------

def threshold_polys(rc: RescaledConstants) -> dict[str, CubicPoly]:
    i1 = I_closed(rc, "k1")
    i2 = I_closed(rc, "k2")
    return {"b": i1, "b+c": i1 + i2, "b-c": i1 - i2}


def _unique_positive_root(poly: CubicPoly, name: str) -> float:
    roots = poly.positive_roots()
    if len(roots) != 1:
        raise NumericalError(f"expected one positive root of the {name} cubic, found {len(roots)}")
    return roots[0]


def tau_roots(rc: RescaledConstants) -> tuple[float, float, float]:
    """Rescaled roots ``(tau_k^{b+c}, tau_k^{b}, tau_k^{b-c})``."""
    polys = threshold_polys(rc)
    return tuple(_unique_positive_root(polys[nm], nm) for nm in ("b+c", "b", "b-c"))


def tau_thresholds(rc: RescaledConstants) -> tuple[float, float, float]:
    """Physical thresholds ``(tau_Lambda, tau_Xi, tau_bmc)``."""
    t_bpc, t_b, t_bmc = tau_roots(rc)
    s = TWO_PI * rc.k
    return t_b / s, t_bpc / s, t_bmc / s


# report -----------------------------------------------------------------------

def _label(value: float, scale: float) -> str:
    if abs(value) <= 1e-12 * max(scale, 1e-300):
        return "degenerate"
    return "supercritical" if value > 0 else "subcritical"


@dataclass
class BifurcationReport:
    k: int
    chi_k: float
    a: float
    b: float
    c: float
    b_minus1: float
    c_minus1: float
    tau_Lambda: float | None
    tau_Xi: float | None
    tau_bmc: float | None
    lane_criticality: str
    spot_criticality: str
    sigma_theta_used: float
    tau: float = 0.0
    n_k: float = float("nan")
    chi_k_inviscid: float = float("nan")
    a_limit: float = float("nan")
    I_k1: float = float("nan")
    I_k2: float = float("nan")
    lane_eigs: list = field(default_factory=list)
    spot_eigs: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False, allow_nan=True)

    CSV_FIELDS = ("k", "tau", "sigma_theta_used", "chi_k", "a", "b", "c", "b_minus1", "c_minus1",
                  "tau_Lambda", "tau_Xi", "tau_bmc", "lane_criticality", "spot_criticality")

    def csv_row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]


def classify_criticality(report: BifurcationReport, tau: float | None = None) -> tuple[str, str]:
    """Lane label from ``b``, spot label from ``b + c`` (both at the report's tau)."""
    if tau is not None and not math.isclose(tau, report.tau, rel_tol=0, abs_tol=1e-15):
        raise ValidationError("report was computed at a different tau")
    scale = abs(report.b) + abs(report.c)
    return _label(report.b, scale), _label(report.b + report.c, scale)


def reduced_eigenvalues(b: float, c: float) -> tuple[list, list]:
    """Linearised reduced-equation eigenvalues along lanes and spots (up to the positive s^2 N factor)."""
    return [-2 * b, b - c], [-2 * (b + c), -2 * (b - c)]


def compute_report(params: ModelParams, k: int, sigma_theta: float = 1e-3,
                   n: int | None = None) -> BifurcationReport:
    rc = rescale(params, k)
    n = n or default_n_theta(rc.sigma_k)
    chi = chi_k(params, k, sigma_theta, n)
    basis = kernel_basis(k, sigma_theta, params, n)
    a = coeff_a(basis, params)
    A11 = compute_A(1, 1, basis, chi, sigma_theta, params)
    A22 = compute_A(2, 2, basis, chi, sigma_theta, params)
    A12 = compute_A(1, 2, basis, chi, sigma_theta, params)
    b = coeff_b(basis, A11, chi, params)
    c = coeff_c(basis, A22, A12, chi, params)
    # singular parts: contributions of the zero mode of A_ii (the only 1/sigma_theta terms)
    A11_0 = ModeField({(0, 0): A11.modes[(0, 0)]}, n) if (0, 0) in A11.modes else ModeField({}, n)
    A22_0 = ModeField({(0, 0): A22.modes[(0, 0)]}, n) if (0, 0) in A22.modes else ModeField({}, n)
    b_m1 = sigma_theta * coeff_b(basis, A11_0, chi, params)
    c_m1 = sigma_theta * chi / 2 * _cubic_term(basis.psi1, A22_0, basis.phi1, params)
    notes = []
    try:
        t_l, t_x, t_bmc = tau_thresholds(rc)
    except NumericalError as exc:
        t_l = t_x = t_bmc = None
        notes.append(str(exc))
    rep = BifurcationReport(
        k=k, chi_k=chi, a=a, b=b, c=c, b_minus1=b_m1, c_minus1=c_m1,
        tau_Lambda=t_l, tau_Xi=t_x, tau_bmc=t_bmc,
        lane_criticality="", spot_criticality="", sigma_theta_used=sigma_theta,
        tau=params.tau, n_k=basis.n_k,
        chi_k_inviscid=TWO_PI / integral_U_inviscid(k, params),
        I_k1=I_closed(rc, "k1")(rc.tau_k), I_k2=I_closed(rc, "k2")(rc.tau_k), notes=notes,
    )
    rep.a_limit = 4 * math.pi / rep.chi_k_inviscid**2
    rep.lane_criticality, rep.spot_criticality = classify_criticality(rep)
    rep.lane_eigs, rep.spot_eigs = reduced_eigenvalues(b, c)
    return rep


def normal_form_amplitude(report: BifurcationReport, chi: float) -> tuple[float | None, float | None]:
    """Leading-order amplitudes with ``chi - chi^k = (b/a) s^2`` (lane) and ``((b+c)/a) s^2`` (spot)."""
    d = chi - report.chi_k

    def amp(coef):
        if d == 0:
            return 0.0
        if coef == 0:
            return None
        s2 = report.a * d / coef
        return math.sqrt(s2) if s2 >= 0 else None

    return amp(report.b), amp(report.b + report.c)
