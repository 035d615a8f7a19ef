"""Closed-form versus independent-oracle checks over a grid of rescaled parameters."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .integrals import (I_closed, I_grid_oracle, I_series_oracle, d_mode, d_mode_fft_oracle,
                        dispersion_J_inviscid, dispersion_J_quadrature, pairing_phi_psi_closed,
                        pairing_quadrature_oracle, xy_modes, xy_modes_fft_oracle)
from .model import ModelParams, ValidationError, rescale
from .theta import compute_U, default_n_theta, integral_U_inviscid

DEFAULT_SIGMA_K = (0.05, 0.2, 1.0)
DEFAULT_TAU_K = (0.0, 0.1, 1.0, 5.0)
TOL = 1e-8


@dataclass
class Check:
    name: str
    closed: complex
    oracle: complex
    tol: float = TOL
    scale: float = 0.0

    @property
    def rel_err(self) -> float:
        den = max(abs(self.oracle), self.scale, 1e-300)
        return abs(self.closed - self.oracle) / den

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.rel_err) and self.rel_err <= self.tol)


def params_for(sigma_k: float, tau_k: float, k: int = 1, lam: float = 1.0, **kw) -> ModelParams:
    """Physical parameters realising the given rescaled ``sigma_k``, ``tau_k`` at wave number ``k``."""
    return ModelParams(sigma_x=sigma_k * lam / (2 * math.pi * k), tau=tau_k / (2 * math.pi * k),
                       lam=lam, **kw)


def _mutated(name: str, value, mutate: str | None):
    return value * (1 + 1e-6) if mutate and mutate == name else value


def checks_for(sigma_k: float, tau_k: float, k: int = 1, mutate: str | None = None) -> list[Check]:
    p = params_for(sigma_k, tau_k, k)
    rc = rescale(p, k)
    tag = f"[sigma_k={sigma_k:g},tau_k={tau_k:g}]"
    out = []

    def add(base, closed, oracle, scale=0.0):
        out.append(Check(base + tag, _mutated(base, closed, mutate), oracle, scale=scale))

    modes = (0, 2, 4, 6)
    for power in (2, 4):
        fft = d_mode_fft_oracle(p, k, modes, power)
        scale = abs(fft[0])
        for n, o in zip(modes, fft):
            add(f"d{power}_mode_{n}", d_mode(rc, n, power), o, scale)

    fft = xy_modes_fft_oracle(p, k, (2, 4, 6))
    for n, (ox, o1, o2) in zip((2, 4, 6), fft):
        cx, c1, c2 = xy_modes(rc, n)
        sx = max(abs(a[0]) for a in fft)
        sy = max(max(abs(a[1]), abs(a[2])) for a in fft)
        add(f"x_mode_{n}", cx, ox, sx)
        add(f"y1_mode_{n}", c1, o1, sy)
        add(f"y2_mode_{n}", c2, o2, sy)

    for which in ("k1", "k2"):
        closed = I_closed(rc, which)(rc.tau_k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            series, _ = I_series_oracle(rc, which=which, omega_max=_series_terms(rc.z))
        grid = I_grid_oracle(p, k, which)
        scale = abs(I_closed(rc, which).coeffs[0]) if tau_k == 0 else 0.0
        add(f"I_{which}_series", closed, series, scale)
        add(f"I_{which}_grid", closed, grid, scale)

    add("pairing", pairing_phi_psi_closed(rc), pairing_quadrature_oracle(p, k))
    n = default_n_theta(rc.sigma_k)
    add("int_U0", integral_U_inviscid(k, p), compute_U((k, 0), 0.0, p, n).integral().real)
    lk, sk = rc.lambda_k, rc.sigma_k
    for label, mu in (("J_mu0", 0.0), ("J_mu_real", 0.5 * sk * lk), ("J_mu_complex", (0.2 * sk + 0.3j) * lk)):
        add(label, dispersion_J_inviscid(rc, mu), dispersion_J_quadrature(p, k, mu))
    return out


def _series_terms(z: float) -> int:
    # geometric decay z^(w/2); enough terms for 1e-16 relative, bounded
    if z <= 0:
        return 8
    need = int(2 * math.log(1e-17) / math.log(z)) + 8
    return int(min(max(need + need % 2, 8), 20000))


def run_suite(sigma_ks=DEFAULT_SIGMA_K, tau_ks=DEFAULT_TAU_K, k: int = 1,
              mutate: str | None = None) -> list[Check]:
    if not sigma_ks or not tau_ks:
        raise ValidationError("empty parameter grid")
    out = []
    for s in sigma_ks:
        for t in tau_ks:
            out.extend(checks_for(float(s), float(t), k, mutate))
    return out


def parse_grid(spec: str) -> tuple[list[float], list[float]]:
    """``"sigma_k=0.05,0.2,1 tau=0,0.1,1,5"`` -> lists (``tau`` means ``tau_k``)."""
    sig, tau = list(DEFAULT_SIGMA_K), list(DEFAULT_TAU_K)
    for part in spec.split():
        if "=" not in part:
            raise ValidationError(f"bad grid entry {part!r}")
        key, vals = part.split("=", 1)
        try:
            values = [float(v) for v in vals.split(",") if v]
        except ValueError:
            raise ValidationError(f"bad number in grid entry {part!r}") from None
        if key in ("sigma_k", "sigma"):
            sig = values
        elif key in ("tau", "tau_k"):
            tau = values
        else:
            raise ValidationError(f"unknown grid key {key!r}")
    if any(v <= 0 for v in sig) or any(v < 0 for v in tau):
        raise ValidationError("grid needs sigma_k > 0 and tau_k >= 0")
    return sig, tau


def checks_csv(checks: list[Check]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "closed_form", "oracle", "rel_error", "tolerance", "passed"])
    for c in checks:
        w.writerow([c.name, _num(c.closed), _num(c.oracle), repr(c.rel_err), repr(c.tol),
                    "true" if c.passed else "false"])
    return buf.getvalue()


def _num(v) -> str:
    v = complex(v)
    return repr(v.real) if v.imag == 0 else f"{v.real!r}{v.imag:+.17g}j"
