"""Fields on the torus times the circle, symmetry maps and the kernel basis.

Two representations are used:

* :class:`Field` - real values on an ``N1 x N2 x Ntheta`` tensor grid over
  ``[0,1)^2 x [0, 2pi)``.
* :class:`ModeField` - a sparse set of positional Fourier modes, each carrying
  a complex theta-profile on a (usually much finer) theta grid.  Products of
  kernel functions only populate a handful of lattice vectors, so the
  coefficient computations stay exact without a large 3-D grid.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import ModelParams, NumericalError, ValidationError, rescale
from .theta import (ThetaFun, compute_U, compute_V, default_n_theta, multiplier_B, theta_grid,
                    wavenumbers)

TWO_PI = 2 * math.pi
_MAGIC = b"ANTBIF01"


# grid fields ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Field:
    """Real field sampled at ``x = (i1/N1, i2/N2)``, ``theta = 2 pi j / Ntheta``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise ValidationError("Field values must be a 3-D array (N1, N2, Ntheta)")
        if np.iscomplexobj(v):
            if np.max(np.abs(v.imag), initial=0.0) > 1e-10 * max(np.max(np.abs(v.real)), 1.0):
                raise ValidationError("Field must be real-valued")
            v = v.real
        v = np.array(v, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @classmethod
    def zeros(cls, n1=32, n2=32, nt=64) -> "Field":
        return cls(np.zeros((n1, n2, nt)))

    @classmethod
    def constant(cls, value: float, n1=32, n2=32, nt=64) -> "Field":
        return cls(np.full((n1, n2, nt), float(value)))

    @classmethod
    def from_function(cls, func, n1=32, n2=32, nt=64) -> "Field":
        x1, x2, th = grid_coords(n1, n2, nt)
        return cls(func(x1, x2, th))

    def __add__(self, other):
        return Field(self.values + _fv(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.values - _fv(other))

    def __mul__(self, other):
        return Field(self.values * _fv(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(-self.values)

    def cell_volume(self) -> float:
        n1, n2, nt = self.shape
        return TWO_PI / (n1 * n2 * nt)

    def inner(self, other: "Field") -> float:
        """``int f g dx dtheta`` by the uniform-grid rule (pairwise summation)."""
        return float(np.sum(self.values * _fv(other)) * self.cell_volume())

    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell_volume())

    def density(self) -> np.ndarray:
        """``rho(x) = int f dtheta``."""
        return self.values.mean(axis=2) * TWO_PI

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def norm_l2(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))


def _fv(x):
    return x.values if isinstance(x, Field) else x


def grid_coords(n1: int, n2: int, nt: int):
    x1 = (np.arange(n1) / n1)[:, None, None]
    x2 = (np.arange(n2) / n2)[None, :, None]
    th = theta_grid(nt)[None, None, :]
    return x1, x2, th


def x_spectrum(f: Field) -> np.ndarray:
    """All positional Fourier modes: ``out[k1 mod N1, k2 mod N2, j] = F_x{f}_k(theta_j)``."""
    n1, n2, _ = f.shape
    return np.fft.fft2(f.values, axes=(0, 1)) / (n1 * n2)


def _check_mode(shape, kvec):
    n1, n2 = shape[:2]
    k1, k2 = int(kvec[0]), int(kvec[1])
    if not (-n1 // 2 < k1 < n1 // 2 and -n2 // 2 < k2 < n2 // 2):
        raise ValidationError(f"mode {kvec} outside the truncated lattice of a {n1}x{n2} grid")
    return k1, k2


def partial_fourier(f: Field, kvec) -> ThetaFun:
    k1, k2 = _check_mode(f.shape, kvec)
    n1, n2, _ = f.shape
    x1 = np.arange(n1) / n1
    x2 = np.arange(n2) / n2
    phase = np.exp(-2j * math.pi * (k1 * x1[:, None] + k2 * x2[None, :]))
    return ThetaFun(np.einsum("ab,abj->j", phase, f.values) / (n1 * n2))


def inverse_partial_fourier(modes: dict, n1: int = 32, n2: int = 32, nt: int | None = None) -> Field:
    """Assemble a real field from ``{kvec: ThetaFun}`` (both ``k`` and ``-k`` must be supplied)."""
    if nt is None:
        nt = next(iter(modes.values())).n if modes else 64
    spec = np.zeros((n1, n2, nt), dtype=complex)
    for kvec, prof in modes.items():
        k1, k2 = _check_mode((n1, n2), kvec)
        p = prof.resample(nt) if prof.n != nt else prof
        spec[k1 % n1, k2 % n2, :] += p.values
    vals = np.fft.ifft2(spec, axes=(0, 1)) * (n1 * n2)
    return Field(vals)


# symmetries -------------------------------------------------------------------

def antipodal_reflect(f: Field) -> Field:
    """``(R f)(x, theta) = f(-x, theta + pi)``."""
    n1, n2, nt = f.shape
    if nt % 2:
        raise ValidationError("antipodal reflection needs an even theta grid")
    i1 = (-np.arange(n1)) % n1
    i2 = (-np.arange(n2)) % n2
    j = (np.arange(nt) + nt // 2) % nt
    return Field(f.values[np.ix_(i1, i2, j)])


def swap(f: Field) -> Field:
    """``(S f)(x1, x2, theta) = f(-x2, -x1, -theta - pi/2)``."""
    n1, n2, nt = f.shape
    if n1 != n2:
        raise ValidationError("swap needs a square positional grid")
    if nt % 4:
        raise ValidationError("swap needs Ntheta divisible by 4")
    i = (-np.arange(n1)) % n1
    j = (-np.arange(nt) - nt // 4) % nt
    # new[a, b, :] = old[-b, -a, j]
    vals = f.values[np.ix_(i, i, j)].transpose(1, 0, 2)
    return Field(vals)


def reflect_theta(p: ThetaFun) -> ThetaFun:
    """``theta -> p(-theta - pi/2)`` on a grid with ``N % 4 == 0``."""
    n = p.n
    if n % 4:
        raise ValidationError("theta reflection needs N divisible by 4")
    j = (-np.arange(n) - n // 4) % n
    return ThetaFun(p.values[j])


# sparse mode fields --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModeField:
    """Sparse positional spectrum ``{(k1, k2): theta-profile}`` of a real field."""

    modes: dict
    n: int

    def __post_init__(self):
        clean = {}
        for kvec, prof in self.modes.items():
            kv = (int(kvec[0]), int(kvec[1]))
            vals = prof.values if isinstance(prof, ThetaFun) else np.asarray(prof, dtype=complex)
            if vals.shape != (self.n,):
                raise ValidationError("all profiles of a ModeField share one theta grid")
            clean[kv] = vals
        object.__setattr__(self, "modes", clean)

    def profile(self, kvec) -> ThetaFun:
        kv = (int(kvec[0]), int(kvec[1]))
        return ThetaFun(self.modes.get(kv, np.zeros(self.n, complex)))

    def support(self) -> list:
        return sorted(self.modes)

    def __add__(self, other: "ModeField") -> "ModeField":
        out = dict(self.modes)
        for kv, v in other.modes.items():
            out[kv] = out[kv] + v if kv in out else v
        return ModeField(out, self.n)

    def __sub__(self, other: "ModeField") -> "ModeField":
        return self + other.scale(-1.0)

    def scale(self, s: complex) -> "ModeField":
        return ModeField({kv: s * v for kv, v in self.modes.items()}, self.n)

    def __mul__(self, other: "ModeField") -> "ModeField":
        """Pointwise product: convolution over lattice vectors, product in theta."""
        out: dict = {}
        for ka, va in self.modes.items():
            for kb, vb in other.modes.items():
                kv = (ka[0] + kb[0], ka[1] + kb[1])
                prod = va * vb
                out[kv] = out[kv] + prod if kv in out else prod
        return ModeField(out, self.n)

    def dtheta(self) -> "ModeField":
        kk = wavenumbers(self.n)
        out = {}
        for kv, v in self.modes.items():
            m = np.fft.fft(v) * (1j * kk)
            if self.n % 2 == 0:
                m[self.n // 2] = 0
            out[kv] = np.fft.ifft(m)
        return ModeField(out, self.n)

    def inner(self, other: "ModeField") -> float:
        """``<f, g> = sum_k int f_{-k} g_k dtheta`` (real for real fields)."""
        tot = 0j
        for kv, v in other.modes.items():
            w = self.modes.get((-kv[0], -kv[1]))
            if w is not None:
                tot += TWO_PI * np.mean(w * v)
        return float(tot.real)

    def inner_complex(self, other: "ModeField") -> complex:
        tot = 0j
        for kv, v in other.modes.items():
            w = self.modes.get((-kv[0], -kv[1]))
            if w is not None:
                tot += TWO_PI * np.mean(w * v)
        return complex(tot)

    def chemotactic_drift(self, params: ModelParams) -> "ModeField":
        """``B_tau[f]``: per mode, ``B_k(theta) * int f_k dtheta`` (zero mode has no gradient)."""
        out = {}
        for kv, v in self.modes.items():
            if kv == (0, 0):
                continue
            rho = TWO_PI * np.mean(v)
            out[kv] = multiplier_B(kv, params, self.n).values * rho
        return ModeField(out, self.n)

    def swapped(self) -> "ModeField":
        """Fourier image of :func:`swap`: ``(S g)_m(theta) = g_{(-m2,-m1)}(-theta - pi/2)``."""
        out = {}
        for (m1, m2), v in self.modes.items():
            out[(-m2, -m1)] = reflect_theta(ThetaFun(v)).values
        return ModeField(out, self.n)

    def drop_small(self, tol: float = 0.0) -> "ModeField":
        return ModeField({kv: v for kv, v in self.modes.items() if np.max(np.abs(v)) > tol}, self.n)

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def to_field(self, n1: int = 32, n2: int = 32, nt: int = 64) -> Field:
        return inverse_partial_fourier({kv: ThetaFun(v) for kv, v in self.modes.items()}, n1, n2, nt)

    @classmethod
    def from_field(cls, f: Field, kvecs: Iterable | None = None, tol: float = 0.0) -> "ModeField":
        spec = x_spectrum(f)
        n1, n2, nt = f.shape
        out = {}
        if kvecs is None:
            for a in range(n1):
                for b in range(n2):
                    k1 = a if a < n1 // 2 else a - n1
                    k2 = b if b < n2 // 2 else b - n2
                    v = spec[a, b]
                    if np.max(np.abs(v)) > tol:
                        out[(k1, k2)] = v
        else:
            for kv in kvecs:
                out[tuple(kv)] = spec[kv[0] % n1, kv[1] % n2]
        return cls(out, nt)


def pair_modes(kvec, profile: ThetaFun) -> ModeField:
    """Real field with ``profile`` at ``kvec`` and its conjugate at ``-kvec``."""
    kv = (int(kvec[0]), int(kvec[1]))
    return ModeField({kv: profile.values, (-kv[0], -kv[1]): np.conj(profile.values)}, profile.n)


# kernel basis ------------------------------------------------------------------

@dataclass(frozen=True)
class KernelBasis:
    k: int
    sigma_theta: float
    n: int
    phi1: ModeField
    phi2: ModeField
    psi1: ModeField
    psi2: ModeField
    phi1_bis: ModeField
    phi2_bis: ModeField
    psi1_bis: ModeField
    psi2_bis: ModeField
    n_k: float
    pairing: float
    extra: dict = field(default_factory=dict)

    def fields(self, n1: int = 32, n2: int = 32, nt: int = 64) -> dict[str, Field]:
        names = ("phi1", "phi2", "psi1", "psi2", "phi1_bis", "phi2_bis", "psi1_bis", "psi2_bis")
        return {nm: getattr(self, nm).to_field(n1, n2, nt) for nm in names}


def kernel_basis(k: int, sigma_theta: float, params: ModelParams, n: int | None = None,
                 pairing_tol: float = 1e-14) -> KernelBasis:
    """Kernel (``phi``) and cokernel (``psi``) functions at modes ``+-k e1``, ``+-k e2``."""
    from .spectrum import is_non_pythagorean

    if not is_non_pythagorean(k):
        raise ValidationError(f"k={k} is Pythagorean; the kernel is larger than four-dimensional")
    rc = rescale(params, k)
    n = n or default_n_theta(rc.sigma_k)
    k1, k2 = (k, 0), (0, k)
    u1 = compute_U(k1, sigma_theta, params, n)
    u2 = compute_U(k2, sigma_theta, params, n)
    v1 = compute_V(k1, sigma_theta, params, n)
    v2 = compute_V(k2, sigma_theta, params, n)
    phi1, phi2 = pair_modes(k1, u1), pair_modes(k2, u2)
    psi1, psi2 = pair_modes(k1, v1), pair_modes(k2, v2)
    pairing = psi1.inner(phi1)
    if not pairing > pairing_tol:
        raise NumericalError(f"pairing <phi, psi> = {pairing:.3e} is not positive; sigma_theta too large")
    return KernelBasis(
        k=k, sigma_theta=sigma_theta, n=n,
        phi1=phi1, phi2=phi2, psi1=psi1, psi2=psi2,
        phi1_bis=pair_modes(k1, 1j * u1), phi2_bis=pair_modes(k2, 1j * u2),
        psi1_bis=pair_modes(k1, 1j * v1), psi2_bis=pair_modes(k2, 1j * v2),
        n_k=1.0 / pairing, pairing=pairing,
    )


def project_Q(f, basis: KernelBasis):
    """``Q f = N (<f, psi1> phi1 + <f, psi2> phi2)`` for a Field or ModeField."""
    if isinstance(f, ModeField):
        c1 = basis.psi1.inner(f) * basis.n_k
        c2 = basis.psi2.inner(f) * basis.n_k
        return basis.phi1.scale(c1) + basis.phi2.scale(c2)
    n1, n2, nt = f.shape
    fl = basis.fields(n1, n2, nt)
    c1 = f.inner(fl["psi1"]) * basis.n_k
    c2 = f.inner(fl["psi2"]) * basis.n_k
    return fl["phi1"] * c1 + fl["phi2"] * c2


# serialization -------------------------------------------------------------------

def write_snapshot(path: str | Path, f: Field) -> None:
    """Binary layout: 8-byte magic, int64 ndim, int64 dims, then little-endian doubles row-major."""
    v = np.ascontiguousarray(f.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<q", v.ndim))
        fh.write(struct.pack(f"<{v.ndim}q", *v.shape))
        fh.write(v.tobytes(order="C"))


def read_snapshot(path: str | Path) -> Field:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValidationError(f"{path}: not a field snapshot")
    (ndim,) = struct.unpack_from("<q", data, 8)
    dims = struct.unpack_from(f"<{ndim}q", data, 16)
    off = 16 + 8 * ndim
    count = int(np.prod(dims))
    if len(data) - off != 8 * count:
        raise ValidationError(f"{path}: truncated snapshot")
    vals = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(dims)
    return Field(vals.copy())


def field_slice_csv(f: Field, theta_index: int | None = None, x2_index: int | None = None) -> str:
    """CSV slice at fixed theta (columns x1, x2, value) or fixed x2 (x1, theta, value)."""
    n1, n2, nt = f.shape
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if x2_index is not None:
        w.writerow(["x1", "theta", "value"])
        for a in range(n1):
            for j in range(nt):
                w.writerow([repr(a / n1), repr(TWO_PI * j / nt), repr(float(f.values[a, x2_index, j]))])
        return buf.getvalue()
    j = 0 if theta_index is None else theta_index
    w.writerow(["x1", "x2", "value"])
    for a in range(n1):
        for b in range(n2):
            w.writerow([repr(a / n1), repr(b / n2), repr(float(f.values[a, b, j]))])
    return buf.getvalue()
