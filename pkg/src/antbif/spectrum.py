"""Linearised operator about the uniform state, per positional Fourier mode."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig, svdvals

from .model import ModelParams, ValidationError
from .theta import multiplier_dB, transport_bands

TWO_PI = 2 * math.pi


def is_non_pythagorean(k: int) -> bool:
    if int(k) != k or k < 1:
        raise ValidationError("k must be a positive integer")
    k = int(k)
    return not any(l * l + m * m == k * k for l in range(1, k) for m in range(1, k))


def lattice_shell(radius_sq: int):
    r = math.isqrt(radius_sq)
    return [(a, b) for a in range(-r, r + 1) for b in range(-r, r + 1) if a * a + b * b == radius_sq]


def lattice_ball(k_max: float):
    r = int(math.floor(k_max))
    return [(a, b) for a in range(-r, r + 1) for b in range(-r, r + 1)
            if 0 < a * a + b * b <= k_max * k_max + 1e-9]


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """Dense matrix of ``L^k_chi`` acting on theta-Fourier coefficients ``-n_c..n_c``."""

    kvec: tuple
    matrix: np.ndarray
    chi: float
    sigma_theta: float

    @property
    def n_c(self) -> int:
        return (self.matrix.shape[0] - 1) // 2

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.matrix @ coeffs

    def eigenvalues(self) -> np.ndarray:
        return eig(self.matrix, right=False)

    def singular_values(self) -> np.ndarray:
        return svdvals(self.matrix)


def transport_matrix(kvec, sigma_theta: float, params: ModelParams, n_c: int) -> np.ndarray:
    """Dense ``-M_kvec + sigma_theta d^2`` on modes ``-n_c..n_c``."""
    size = 2 * n_c + 1
    idx = np.arange(-n_c, n_c + 1)
    m0, mp, mm = transport_bands(kvec, params)
    a = np.diag((-m0 - sigma_theta * idx.astype(float) ** 2).astype(complex))
    a += np.diag(np.full(size - 1, -mp, dtype=complex), -1)   # row n picks u_{n-1}
    a += np.diag(np.full(size - 1, -mm, dtype=complex), 1)    # row n picks u_{n+1}
    return a


def dB_modes(kvec, params: ModelParams, n_c: int) -> np.ndarray:
    """Fourier coefficients of ``d_theta B_kvec`` on ``-n_c..n_c`` (a degree-two trig polynomial)."""
    g = multiplier_dB(kvec, params, 8).modes()
    out = np.zeros(2 * n_c + 1, dtype=complex)
    for n in range(-2, 3):
        out[n + n_c] = g[n % 8]
    return out


def assemble_mode_operator(kvec, chi: float, sigma_theta: float, params: ModelParams,
                           n_c: int = 64) -> ModeOperator:
    """``L u = (-M + sigma_theta d^2) u - (chi / 2pi) dB * int u dtheta``.

    ``int u dtheta = 2 pi u_0``, so the rank-one part is ``-chi * dB e_0^T``.
    For ``kvec = 0`` the operator is ``sigma_theta d^2`` on zero-mean functions.
    """
    if n_c < 4:
        raise ValidationError("n_c must be at least 4")
    kvec = (int(kvec[0]), int(kvec[1]))
    if kvec == (0, 0):
        idx = np.array([n for n in range(-n_c, n_c + 1) if n != 0])
        return ModeOperator(kvec, np.diag(-sigma_theta * idx.astype(float) ** 2).astype(complex),
                            chi, sigma_theta)
    a = transport_matrix(kvec, sigma_theta, params, n_c)
    a[:, n_c] -= chi * dB_modes(kvec, params, n_c)
    return ModeOperator(kvec, a, chi, sigma_theta)


def chi_critical_truncated(k: int, sigma_theta: float, params: ModelParams, n_c: int = 64) -> float:
    """``chi^k`` from the same truncated operator the dense matrices use (kernel exact to roundoff)."""
    a = transport_matrix((k, 0), sigma_theta, params, n_c)
    u = np.linalg.solve(a, dB_modes((k, 0), params, n_c))
    return float(1.0 / u[n_c].real)


@dataclass
class KernelReport:
    k: int
    chi: float
    dimension: int
    modes: list
    min_singular: dict = field(default_factory=dict)


def kernel_report(params: ModelParams, k: int, sigma_theta: float, n_c: int = 64,
                  rel_tol: float = 1e-6, chi: float | None = None) -> KernelReport:
    """Count near-null singular values over all lattice modes with ``|l| <= k + 2``."""
    if chi is None:
        chi = chi_critical_truncated(k, sigma_theta, params, n_c)
    dim = 0
    contributing = []
    smin = {}
    for kv in lattice_ball(k + 2):
        s = assemble_mode_operator(kv, chi, sigma_theta, params, n_c).singular_values()
        count = int(np.sum(s < rel_tol * s[0]))
        smin[kv] = float(s[-1] / s[0])
        if count:
            dim += count
            contributing.append(kv)
    return KernelReport(k=k, chi=chi, dimension=dim, modes=contributing, min_singular=smin)


@dataclass
class SpectrumReport:
    chi: float
    sigma_theta: float
    eigenvalues: dict
    max_re: float
    max_mode: tuple
    gap: float

    def to_json_dict(self) -> dict:
        return {
            "chi": self.chi,
            "sigma_theta": self.sigma_theta,
            "max_re": self.max_re,
            "max_mode": list(self.max_mode),
            "gap": self.gap,
            "modes": [
                {"kvec": list(kv), "re": ev.real.tolist(), "im": ev.imag.tolist()}
                for kv, ev in sorted(self.eigenvalues.items())
            ],
        }


def full_spectrum_scan(params: ModelParams, chi: float, sigma_theta: float, k_max: float = 3,
                       n_c: int = 64) -> SpectrumReport:
    """Eigenvalues of every mode with ``|l| <= k_max`` plus the zero-mode family.

    ``gap`` is the distance from the largest real part to the next distinct one
    (eigenvalues within ``1e-8`` of the maximum count as the same critical value).
    """
    evs = {(0, 0): assemble_mode_operator((0, 0), chi, sigma_theta, params, n_c).eigenvalues()}
    for kv in lattice_ball(k_max):
        evs[kv] = assemble_mode_operator(kv, chi, sigma_theta, params, n_c).eigenvalues()
    best, best_mode = -np.inf, (0, 0)
    for kv, ev in evs.items():
        m = float(np.max(ev.real))
        if m > best:
            best, best_mode = m, kv
    allre = np.sort(np.concatenate([ev.real for ev in evs.values()]))[::-1]
    below = allre[allre < best - 1e-8]
    gap = float(best - below[0]) if below.size else float("inf")
    return SpectrumReport(chi=chi, sigma_theta=sigma_theta, eigenvalues=evs, max_re=best,
                          max_mode=best_mode, gap=gap)


def dispersion_roots(params: ModelParams, k: int, chi: float, sigma_theta: float, n_c: int = 64):
    """Eigenvalues of the ``(k, 0)`` mode, i.e. roots of ``(chi / 2pi) J_sigma(mu) = 1``."""
    return assemble_mode_operator((k, 0), chi, sigma_theta, params, n_c).eigenvalues()


def dispersion_function(params: ModelParams, k: int, chi: float, sigma_theta: float, mu: complex,
                        n_c: int = 64) -> complex:
    """``1 - chi u_0(mu)`` where ``(-mu - M + sigma_theta d^2) u = dB``; zero at eigenvalues."""
    a = transport_matrix((k, 0), sigma_theta, params, n_c) - mu * np.eye(2 * n_c + 1)
    u = np.linalg.solve(a, dB_modes((k, 0), params, n_c))
    return complex(1 - chi * u[n_c])
