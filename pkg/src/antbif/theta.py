"""Complex periodic functions of the heading angle and the per-mode multipliers.

Fourier convention: ``F{g}_n = (1/2pi) * int g(theta) exp(-i n theta) dtheta``,
which on the uniform grid is ``fft(values) / N``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .model import ModelParams, NumericalError, ValidationError, elliptic_multiplier, rescale

DEFAULT_N_THETA = 64
TWO_PI = 2 * math.pi


def theta_grid(n: int) -> np.ndarray:
    return TWO_PI * np.arange(n) / n


def wavenumbers(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, 1.0 / n)


@dataclass(frozen=True, eq=False)
class ThetaFun:
    """Complex function on the uniform grid ``theta_j = 2 pi j / N``."""

    values: np.ndarray
    real: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 1 or v.size < 2:
            raise ValidationError("ThetaFun needs a 1-D grid with at least two points")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    # construction -------------------------------------------------------
    @classmethod
    def from_modes(cls, modes: np.ndarray, real: bool = False) -> "ThetaFun":
        """Build from coefficients stored in FFT order (index ``n mod N``)."""
        modes = np.asarray(modes, dtype=complex)
        return cls(np.fft.ifft(modes) * modes.size, real=real)

    @classmethod
    def from_function(cls, func, n: int = DEFAULT_N_THETA, real: bool = False) -> "ThetaFun":
        return cls(func(theta_grid(n)), real=real)

    @classmethod
    def constant(cls, value: complex, n: int = DEFAULT_N_THETA) -> "ThetaFun":
        return cls(np.full(n, value, dtype=complex))

    # views --------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return theta_grid(self.n)

    def modes(self) -> np.ndarray:
        return np.fft.fft(self.values) / self.n

    def mode(self, k: int) -> complex:
        if abs(k) >= self.n // 2 + (1 if k < 0 else 0):
            return 0j
        return complex(self.modes()[k % self.n])

    def integral(self) -> complex:
        """``int_0^{2 pi} g dtheta`` by the trapezoid rule (exact below Nyquist)."""
        return complex(TWO_PI * self.values.mean())

    # algebra ------------------------------------------------------------
    def _wrap(self, values) -> "ThetaFun":
        return ThetaFun(values)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __rsub__(self, other):
        return self._wrap(_vals(other) - self.values)

    def __mul__(self, other):
        return self._wrap(self.values * _vals(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._wrap(self.values / _vals(other))

    def __neg__(self):
        return self._wrap(-self.values)

    def conj(self) -> "ThetaFun":
        return ThetaFun(np.conj(self.values), real=self.real)

    def derivative(self, order: int = 1) -> "ThetaFun":
        n = wavenumbers(self.n)
        m = self.modes() * (1j * n) ** order
        if self.n % 2 == 0:
            m[self.n // 2] = 0.0
        return ThetaFun.from_modes(m)

    def shift(self, omega: float) -> "ThetaFun":
        """Return ``theta -> g(theta - omega)`` (exact in the Fourier basis)."""
        n = wavenumbers(self.n)
        m = self.modes() * np.exp(-1j * n * omega)
        if self.n % 2 == 0:
            m[self.n // 2] = 0.0
        return ThetaFun.from_modes(m, real=self.real)

    def resample(self, n: int) -> "ThetaFun":
        """Spectral interpolation/truncation to a grid of ``n`` points."""
        if n == self.n:
            return self
        src = self.modes()
        dst = np.zeros(n, dtype=complex)
        kmax = min(self.n, n) // 2 - 1
        idx = np.arange(-kmax, kmax + 1)
        dst[idx % n] = src[idx % self.n]
        return ThetaFun.from_modes(dst, real=self.real)

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "re", "im"])
        for t, v in zip(self.theta, self.values):
            w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ThetaFun":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows]))


def _vals(x):
    return x.values if isinstance(x, ThetaFun) else x


# multipliers --------------------------------------------------------------

def _check_kvec(kvec) -> tuple[int, int]:
    k1, k2 = int(kvec[0]), int(kvec[1])
    if k1 == 0 and k2 == 0:
        raise ValidationError("zero wave vector has no transport/chemotactic multiplier")
    return k1, k2


def _directional(kvec, theta):
    k1, k2 = kvec
    v_dot = k1 * np.cos(theta) + k2 * np.sin(theta)
    vp_dot = -k1 * np.sin(theta) + k2 * np.cos(theta)
    return v_dot, vp_dot


def multiplier_B(kvec, params: ModelParams, n: int = DEFAULT_N_THETA) -> ThetaFun:
    kvec = _check_kvec(kvec)
    th = theta_grid(n)
    v_dot, vp_dot = _directional(kvec, th)
    e = elliptic_multiplier(params, kvec)
    vals = (2j * math.pi * vp_dot - 4 * math.pi**2 * params.tau * vp_dot * v_dot) / e
    return ThetaFun(vals)


def multiplier_dB(kvec, params: ModelParams, n: int = DEFAULT_N_THETA) -> ThetaFun:
    """Analytic ``d/dtheta`` of :func:`multiplier_B`."""
    kvec = _check_kvec(kvec)
    th = theta_grid(n)
    v_dot, vp_dot = _directional(kvec, th)
    e = elliptic_multiplier(params, kvec)
    vals = (-2j * math.pi * v_dot - 4 * math.pi**2 * params.tau * (vp_dot**2 - v_dot**2)) / e
    return ThetaFun(vals)


def multiplier_M(kvec, params: ModelParams, n: int = DEFAULT_N_THETA) -> ThetaFun:
    kvec = _check_kvec(kvec)
    th = theta_grid(n)
    v_dot, _ = _directional(kvec, th)
    k2 = kvec[0] ** 2 + kvec[1] ** 2
    return ThetaFun(4 * math.pi**2 * params.sigma_x * k2 + 2j * math.pi * params.lam * v_dot)


def transport_bands(kvec, params: ModelParams) -> tuple[float, complex, complex]:
    """Fourier coefficients ``(m_0, m_{+1}, m_{-1})`` of ``M_kvec``."""
    k1, k2 = kvec
    m0 = 4 * math.pi**2 * params.sigma_x * (k1 * k1 + k2 * k2)
    mp = math.pi * params.lam * (1j * k1 + k2)
    mm = math.pi * params.lam * (1j * k1 - k2)
    return m0, mp, mm


# resolvent ----------------------------------------------------------------

def mode_window(n: int) -> np.ndarray:
    """Symmetric retained mode range ``-n_c..n_c`` with ``n_c = n//2 - 1``."""
    nc = n // 2 - 1
    return np.arange(-nc, nc + 1)


def banded_operator(kvec, sigma_theta: float, params: ModelParams, n: int) -> np.ndarray:
    """``-M_kvec + sigma_theta d^2`` in ``solve_banded`` (1,1) storage on :func:`mode_window`."""
    idx = mode_window(n)
    m0, mp, mm = transport_bands(kvec, params)
    ab = np.zeros((3, idx.size), dtype=complex)
    ab[0, 1:] = -mm          # coefficient of u_{n+1} in row n
    ab[1, :] = -m0 - sigma_theta * idx.astype(float) ** 2
    ab[2, :-1] = -mp         # coefficient of u_{n-1} in row n
    return ab


def resolvent_solve(kvec, sigma_theta: float, rhs: ThetaFun, params: ModelParams) -> ThetaFun:
    """Solve ``(-M_kvec + sigma_theta d^2) u = rhs`` on the grid of ``rhs``."""
    kvec = _check_kvec(kvec)
    if sigma_theta < 0:
        raise ValidationError("sigma_theta must be non-negative")
    n = rhs.n
    if sigma_theta == 0:
        return ThetaFun(-rhs.values / multiplier_M(kvec, params, n).values)
    idx = mode_window(n)
    b = rhs.modes()[idx % n]
    ab = banded_operator(kvec, sigma_theta, params, n)
    try:
        u = solve_banded((1, 1), ab, b, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"resolvent system singular for k={kvec}: {exc}") from None
    if not np.all(np.isfinite(u)):
        raise NumericalError(f"resolvent produced non-finite values for k={kvec}")
    full = np.zeros(n, dtype=complex)
    full[idx % n] = u
    return ThetaFun.from_modes(full)


def tail_ratio(f: ThetaFun) -> float:
    """Size of the two outermost retained modes relative to the coefficient norm."""
    m = f.modes()
    idx = mode_window(f.n)
    outer = np.concatenate([idx[:2], idx[-2:]])
    norm = np.linalg.norm(m)
    return float(np.max(np.abs(m[outer % f.n])) / norm) if norm > 0 else 0.0


def default_n_theta(sigma_k: float, sigma_theta: float = 0.0, tol: float = 1e-15,
                    n_min: int = 64, n_max: int = 1 << 14) -> int:
    """Grid size resolving resolvent profiles to ``tol``.

    Inviscid profiles decay like ``exp(-asinh(sigma_k) |n|)``; angular
    diffusion only speeds this up, so the inviscid rate is a safe bound.
    """
    rate = math.asinh(sigma_k)
    need = 2 * (math.log(1 / tol) / rate + 8)
    n = n_min
    while n < need and n < n_max:
        n *= 2
    return n


def compute_U(kvec, sigma_theta: float, params: ModelParams, n: int = DEFAULT_N_THETA) -> ThetaFun:
    return resolvent_solve(kvec, sigma_theta, multiplier_dB(kvec, params, n), params)


def compute_V(kvec, sigma_theta: float, params: ModelParams, n: int = DEFAULT_N_THETA) -> ThetaFun:
    mk = (-kvec[0], -kvec[1])
    return -resolvent_solve(mk, sigma_theta, ThetaFun.constant(1.0, n), params)


def integral_U_inviscid(k: int, params: ModelParams) -> float:
    rc = rescale(params, k)
    z = rc.z
    return (4 * math.pi**2 * k * rc.e_k / (rc.e_elliptic * rc.lambda_k)
            * (1 - z + 2 * rc.sigma_k * z * rc.tau_k))


def classify_ccs(f: ThetaFun, rtol: float = 1e-10) -> str:
    """Classify as ``ccs`` (f = conj f(.+pi)), ``cca`` (f = -conj f(.+pi)) or ``neither``."""
    if f.n % 2:
        raise ValidationError("central symmetry needs an even grid")
    v = f.values
    shifted = np.conj(np.roll(v, -f.n // 2))
    scale = max(np.max(np.abs(v)), 1e-300)
    if np.max(np.abs(v - shifted)) <= rtol * scale:
        return "ccs"
    if np.max(np.abs(v + shifted)) <= rtol * scale:
        return "cca"
    return "neither"


def lattice_angle(kvec) -> tuple[float, float]:
    """Return ``(|kvec|, omega)`` with ``kvec = |kvec| (cos omega, sin omega)``."""
    k1, k2 = kvec
    return math.hypot(k1, k2), math.atan2(k2, k1)


def theta_profiles_csv(funcs: Sequence[tuple[str, ThetaFun]]) -> str:
    """Several named profiles in one long-format CSV (name, theta, re, im)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "theta", "re", "im"])
    for name, f in funcs:
        for t, v in zip(f.theta, f.values):
            w.writerow([name, repr(float(t)), repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()
