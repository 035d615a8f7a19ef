"""Closed-form residue coefficients, the cubic I-integrals and their oracles.

Every closed form here has an independent numerical counterpart (FFT of a
grid-built function, quadrature, or a series) so the two can be compared.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelParams, NumericalError, RescaledConstants, ValidationError, inner_root, rescale
from .theta import (ThetaFun, compute_U, compute_V, default_n_theta, multiplier_B, multiplier_dB,
                    multiplier_M, wavenumbers)

PI = math.pi


@dataclass(frozen=True)
class CubicPoly:
    """Real polynomial ``c0 + c1 t + c2 t^2 + c3 t^3`` in the rescaled anticipation ``tau_k``."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in self.coeffs)
        if len(c) > 4:
            if any(x != 0 for x in c[4:]):
                raise ValidationError("CubicPoly holds at most degree 3")
            c = c[:4]
        object.__setattr__(self, "coeffs", c + (0.0,) * (4 - len(c)))

    def __call__(self, t):
        c0, c1, c2, c3 = self.coeffs
        return ((c3 * t + c2) * t + c1) * t + c0

    def __add__(self, other: "CubicPoly") -> "CubicPoly":
        return CubicPoly(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "CubicPoly") -> "CubicPoly":
        return CubicPoly(tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def scale(self, s: float) -> "CubicPoly":
        return CubicPoly(tuple(s * a for a in self.coeffs))

    @property
    def degree(self) -> int:
        for d in (3, 2, 1, 0):
            if self.coeffs[d] != 0:
                return d
        return 0

    def derivative(self, t):
        _, c1, c2, c3 = self.coeffs
        return (3 * c3 * t + 2 * c2) * t + c1

    def positive_roots(self, imag_tol: float = 1e-9, newton_steps: int = 2) -> list[float]:
        """Positive real roots from the companion matrix, polished by Newton."""
        d = self.degree
        if d == 0:
            return []
        c = np.array(self.coeffs[: d + 1])
        comp = np.zeros((d, d))
        comp[0, :] = -c[d - 1::-1] / c[d]
        if d > 1:
            comp[1:, :-1] = np.eye(d - 1)
        roots = np.linalg.eigvals(comp)
        scale = max(1.0, float(np.max(np.abs(roots))))
        out = []
        for r in roots:
            if abs(r.imag) > imag_tol * scale or r.real <= 0:
                continue
            t = float(r.real)
            for _ in range(newton_steps):
                dp = self.derivative(t)
                if dp == 0:
                    break
                t -= self(t) / dp
            out.append(t)
        return sorted(out)


def _poly_mul(a, b):
    return np.convolve(np.asarray(a, float), np.asarray(b, float))


# Fourier modes of |M|^-2 and |M|^-4 -----------------------------------------

def d_mode(rc: RescaledConstants, n: int, power: int = 2) -> float:
    if power not in (2, 4):
        raise ValidationError("power must be 2 or 4")
    if n % 2:
        return 0.0
    z = rc.z
    sign = -1.0 if (n // 2) % 2 else 1.0
    base = 2 * sign * z ** (abs(n) / 2)
    if power == 2:
        return rc.e_k / rc.lambda_k**2 * base
    return (abs(n) + rc.f_k) * rc.e_k**2 / rc.lambda_k**4 * base


def d_mode_fft_oracle(params: ModelParams, k: int, n_modes, power: int = 2, n: int | None = None):
    rc = rescale(params, k)
    n = n or default_n_theta(rc.sigma_k)
    m = multiplier_M((k, 0), params, n)
    g = ThetaFun(np.abs(m.values) ** (-power))
    coeff = g.modes()
    return np.array([coeff[j % n].real for j in n_modes])


# residue quadratics in tau_k (coefficient order: tau^0, tau^1, tau^2) -------

def residue_quadratics(rc: RescaledConstants) -> dict[str, np.ndarray]:
    s, z = rc.sigma_k, rc.z
    w = (1 - z * z) ** 2
    return {
        "aY": np.array([2 * s * z, -(1 + z) ** 2 / 2, -s * (1 + z * z)]),
        "gY": np.array([-2 * s, (2 + z) / 2, s * z]),
        "aX": np.array([-4 * s * s * z * (1 + z) ** 2 - w, 2 * s * w, 0.0]),
        "gX": np.array([4 * s * s * ((1 - z**4) + 4 * (z * z + z)) - 2 * z * w, 4 * s * z * w, 0.0]),
        "bX": np.array([w * (1 + z * z) - 8 * s * s * z * z * (1 + z) ** 2,
                        -2 * s * w * (1 + z * z), 0.0]),
    }


def _ev(poly, t):
    return float(np.polynomial.polynomial.polyval(t, poly))


def xy_modes(rc: RescaledConstants, n: int) -> tuple[complex, complex, complex]:
    """Positive even modes ``(x_n, y1_n, y2_n)`` of the transport and chemotactic profiles.

    ``y2_n = (-1)^(n/2) y1_n`` for every even ``n``, including ``n = 2`` where
    both use the ``gY`` polynomial.
    """
    if n % 2 or n < 2:
        raise ValidationError("xy_modes needs an even n >= 2")
    t2 = residue_quadratics(rc)
    t = rc.tau_k
    k, z, ek, ec, lk = rc.k, rc.z, rc.e_k, rc.e_elliptic, rc.lambda_k
    sign = -1.0 if (n // 2) % 2 else 1.0
    zp = z ** ((n - 4) / 2)
    x = -(PI * k / (2 * ec * lk)) * ek**2 * sign * zp * (_ev(t2["aX"], t) * n + 2 / (1 - z * z) * _ev(t2["bX"], t))
    pre = 2 * PI**2 * k**2 / (ec**2 * lk) * ek * (1 - z * z)
    if n == 2:
        y2 = 1j * pre * _ev(t2["gY"], t)
    else:
        y2 = -1j * pre * zp * _ev(t2["aY"], t)
    y1 = sign * y2
    return complex(x), complex(y1), complex(y2)


def xy_profiles(params: ModelParams, k: int, n: int | None = None):
    """Grid-built ``X``, ``Y1``, ``Y2`` from the inviscid eigen-profiles (oracle input)."""
    rc = rescale(params, k)
    n = n or default_n_theta(rc.sigma_k)
    k1, mk1, k2, mk2 = (k, 0), (-k, 0), (0, k), (0, -k)
    v_p = compute_V(k1, 0.0, params, n)
    v_m = compute_V(mk1, 0.0, params, n)
    x = multiplier_B(k1, params, n) * v_m.derivative() + multiplier_B(mk1, params, n) * v_p.derivative()
    y1 = multiplier_B(k1, params, n) * compute_U(mk1, 0.0, params, n) + multiplier_B(mk1, params, n) * compute_U(k1, 0.0, params, n)
    y2 = multiplier_B(k2, params, n) * compute_U(mk2, 0.0, params, n) + multiplier_B(mk2, params, n) * compute_U(k2, 0.0, params, n)
    return x, y1, y2


def xy_modes_fft_oracle(params: ModelParams, k: int, modes, n: int | None = None):
    x, y1, y2 = xy_profiles(params, k, n)
    cx, c1, c2 = x.modes(), y1.modes(), y2.modes()
    N = x.n
    return [(complex(cx[j % N]), complex(c1[j % N]), complex(c2[j % N])) for j in modes]


# beta functions -----------------------------------------------------------

def beta1(s: float) -> float:
    if not 0 <= s < 1:
        raise ValidationError("beta1 needs 0 <= s < 1")
    if s < 1e-2:
        u = s * s
        return sum(u ** (m - 2) / m for m in range(2, 8))
    u = s * s
    return -(math.log1p(-u) + u) / (u * u)


def beta2(s: float) -> float:
    if s < 0:
        raise ValidationError("beta2 needs s >= 0")
    if s < 1e-2:
        u = s * s
        return sum((-1) ** m * u ** (m - 2) / m for m in range(2, 8))
    u = s * s
    return -(math.log1p(u) - u) / (u * u)


def beta1_series(s: float, terms: int = 400) -> float:
    u = s * s
    return float(sum(u ** (m - 2) / m for m in range(2, terms + 2)))


# I integrals --------------------------------------------------------------

def I_closed(rc: RescaledConstants, which: str = "k1") -> CubicPoly:
    t2 = residue_quadratics(rc)
    z = rc.z
    pref = -16 * PI**6 * rc.k**3 * rc.e_k**3 / (rc.e_elliptic**3 * rc.lambda_k**2)
    gg = _poly_mul(t2["gY"], t2["gX"])
    if which == "k1":
        inner = t2["aX"] + beta1(z) * t2["bX"]
        poly = gg + _poly_mul(t2["aY"], inner)
    elif which == "k2":
        inner = (1 - z * z) / (1 + z * z) * t2["aX"] + beta2(z) * t2["bX"]
        poly = -gg + _poly_mul(t2["aY"], inner)
    else:
        raise ValidationError("which must be 'k1' or 'k2'")
    return CubicPoly(tuple(pref * poly))


def I_series_oracle(rc: RescaledConstants, tau_k: float | None = None, omega_max: int = 400,
                    which: str = "k1") -> tuple[float, float]:
    """Series ``16 pi^3 sum_w Im(conj(y_w) x_w) / w`` from the residue modes.

    Returns ``(value, tail_estimate)``.
    """
    if omega_max < 8:
        raise ValidationError("omega_max must be at least 8")
    if tau_k is not None:
        rc = replace(rc, tau_k=tau_k)
    total = 0.0
    last = 0.0
    for w in range(2, omega_max + 1, 2):
        x, y1, y2 = xy_modes(rc, w)
        y = y1 if which == "k1" else y2
        last = (np.conj(y) * x).imag / w
        total += last
    z = rc.z
    tail = 16 * PI**3 * abs(last) * z / (1 - z) if z < 1 else float("inf")
    if tail > 1e-12 * max(abs(16 * PI**3 * total), 1e-300):
        warnings.warn(f"series tail estimate {tail:.2e} exceeds 1e-12 relative", RuntimeWarning, stacklevel=2)
    return 16 * PI**3 * total, tail


def I_grid_oracle(params: ModelParams, k: int, which: str = "k1", n: int | None = None) -> float:
    """Independent quadrature: solve ``W'' = Y'`` spectrally, return ``-4 pi^2 int X W``."""
    x, y1, y2 = xy_profiles(params, k, n)
    y = y1 if which == "k1" else y2
    N = y.n
    kk = wavenumbers(N)
    yh = y.modes()
    wh = np.zeros_like(yh)
    nz = kk != 0
    wh[nz] = yh[nz] * (1j * kk[nz]) / (-(kk[nz] ** 2))
    w = ThetaFun.from_modes(wh)
    return float((-4 * PI**2 * (x * w).integral()).real)


# pairing ------------------------------------------------------------------

def pairing_polynomial(rc: RescaledConstants) -> CubicPoly:
    z, s = rc.z, rc.sigma_k
    p1 = 1 + z * z - 4 * z / (1 + z) + 8 * s * s * z / (1 - z * z)
    p0 = 4 * s * (1 - z) / (1 + z)
    return CubicPoly((p0, p1))


def pairing_phi_psi_closed(rc: RescaledConstants) -> float:
    scale = 8 * PI**2 * rc.k * rc.e_k**2 / (rc.e_elliptic * rc.lambda_k**2)
    return scale * pairing_polynomial(rc)(rc.tau_k)


def pairing_quadrature_oracle(params: ModelParams, k: int, sigma_theta: float = 0.0,
                              n: int | None = None) -> float:
    rc = rescale(params, k)
    n = n or default_n_theta(rc.sigma_k)
    u_p = compute_U((k, 0), sigma_theta, params, n)
    u_m = compute_U((-k, 0), sigma_theta, params, n)
    v_p = compute_V((k, 0), sigma_theta, params, n)
    v_m = compute_V((-k, 0), sigma_theta, params, n)
    return float((u_p * v_m + u_m * v_p).integral().real)


def m_phipsi_table(rc: RescaledConstants) -> dict[int, float]:
    """Even Fourier modes of ``dB_k1 (M_-k1)^2`` divided by ``pi k lambda_k^2 / (2 E^c)``.

    The n = +-2 entry carries ``+2 sigma_k^2 tau_k`` (checked against the FFT).
    """
    s, t = rc.sigma_k, rc.tau_k
    m2 = -2 * s - t + 2 * s * s * t
    return {-4: -t / 2, -2: m2, 0: -4 * s - t, 2: m2, 4: -t / 2}


def m_phipsi_fft(params: ModelParams, k: int, n: int = 64) -> np.ndarray:
    rc = rescale(params, k)
    g = multiplier_dB((k, 0), params, n) * multiplier_M((-k, 0), params, n) * multiplier_M((-k, 0), params, n)
    return g.modes() / (PI * k * rc.lambda_k**2 / (2 * rc.e_elliptic))


# dispersion ---------------------------------------------------------------

def dispersion_J_inviscid(rc: RescaledConstants, mu: complex) -> complex:
    """Closed form of ``int dB_k1 / (-mu - M_k1) dtheta`` using mu-shifted constants.

    The modulus ``|z_in|`` of the unshifted formula continues analytically to
    ``-z_in(mu)``, which coincides with it for real ``mu``.
    """
    mu = complex(mu)
    if mu.real <= -rc.sigma_k * rc.lambda_k:
        raise ValidationError("dispersion integral needs Re(mu) > -sigma_k lambda_k")
    s = rc.sigma_k + mu / rc.lambda_k
    q = 2 * s * s + 1
    if abs(q * q - 1) < 1e-14:
        raise NumericalError("mu sits on the branch point of the dispersion integral")
    z_in, e = inner_root(complex(s))
    zm = -z_in
    return complex(4 * PI**2 * rc.k * e / (rc.e_elliptic * rc.lambda_k)
                   * (1 - zm + 2 * s * zm * rc.tau_k))


def dispersion_J_quadrature(params: ModelParams, k: int, mu: complex, n: int | None = None) -> complex:
    rc = rescale(params, k)
    n = n or default_n_theta(rc.sigma_k + max(complex(mu).real, 0) / rc.lambda_k)
    db = multiplier_dB((k, 0), params, n)
    m = multiplier_M((k, 0), params, n)
    return (db / (-complex(mu) - m)).integral()
