"""Nonlinear right-hand side, time stepping and stationary solves on the 3-D grid.

The state is kept as masked Fourier coefficients in ``(x1, x2, theta)``.  Every
term of the right-hand side carries an explicit factor of a wave number in its
``(0, 0, 0)`` coefficient, so total mass is conserved exactly by construction.
Positional modes are truncated with the 2/3 rule; angular modes keep
``|n| <= Ntheta/2 - 3`` which is alias-free because the drift ``B`` is a trig
polynomial of degree two in theta.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov

from .fields import Field, KernelBasis, antipodal_reflect, read_snapshot, swap
from .model import ModelParams, NumericalError, ValidationError, elliptic_multiplier
from .theta import theta_grid

TWO_PI = 2 * math.pi
UNIFORM = 1 / TWO_PI


@dataclass(frozen=True)
class Grid:
    n1: int = 32
    n2: int = 32
    nt: int = 64

    def __post_init__(self):
        if self.n1 != self.n2:
            raise ValidationError("positional grid must be square")
        if self.nt % 4 or self.n1 % 2:
            raise ValidationError("grid sizes must be even with Ntheta divisible by 4")

    @property
    def shape(self):
        return (self.n1, self.n2, self.nt)

    @property
    def x_cut(self) -> int:
        return self.n1 // 3

    @property
    def theta_cut(self) -> int:
        return self.nt // 2 - 3


class Spectral:
    """Precomputed wave numbers, masks and multipliers for one grid."""

    def __init__(self, grid: Grid, params: ModelParams):
        self.grid, self.params = grid, params
        n1, n2, nt = grid.shape
        k1 = np.fft.fftfreq(n1, 1.0 / n1)
        k2 = np.fft.fftfreq(n2, 1.0 / n2)
        nn = np.fft.fftfreq(nt, 1.0 / nt)
        self.k1 = k1[:, None, None]
        self.k2 = k2[None, :, None]
        self.n = nn[None, None, :]
        self.kx1 = k1[:, None]
        self.kx2 = k2[None, :]
        xmask = (np.abs(k1)[:, None] <= grid.x_cut) & (np.abs(k2)[None, :] <= grid.x_cut)
        self.xmask = xmask
        self.mask = xmask[:, :, None] & (np.abs(nn) <= grid.theta_cut)[None, None, :]
        ksq = self.kx1**2 + self.kx2**2
        self.ksq = ksq
        self.elliptic = params.gamma + 4 * math.pi**2 * params.sigma_c * ksq
        self.diffusion = -(4 * math.pi**2 * params.sigma_x * ksq[:, :, None]) - params.sigma_theta * self.n**2
        th = theta_grid(nt)
        self.cos = np.cos(th)[None, None, :]
        self.sin = np.sin(th)[None, None, :]
        self.transport = -2j * math.pi * params.lam * (self.k1 * self.cos + self.k2 * self.sin)
        self.size = n1 * n2 * nt

    # transforms ------------------------------------------------------------
    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values) / self.size * self.mask

    def backward(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(coeffs).real * self.size

    # operator pieces -------------------------------------------------------
    def drift(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values of ``B_tau[f]`` from the density mode ``n = 0``."""
        n1, n2, nt = self.grid.shape
        rho = TWO_PI * coeffs[:, :, 0]
        c = rho / self.elliptic * (n1 * n2)
        ik1, ik2 = 2j * math.pi * self.kx1, 2j * math.pi * self.kx2

        def xd(mult):
            return np.fft.ifft2(mult * c).real[:, :, None]

        c1, c2 = xd(ik1), xd(ik2)
        b = -self.sin * c1 + self.cos * c2
        tau = self.params.tau
        if tau:
            c11, c12, c22 = xd(ik1 * ik1), xd(ik1 * ik2), xd(ik2 * ik2)
            sc = self.sin * self.cos
            b = b + tau * (-sc * c11 + (self.cos**2 - self.sin**2) * c12 + sc * c22)
        return b

    def transport_term(self, coeffs: np.ndarray) -> np.ndarray:
        nt = self.grid.nt
        partial = np.fft.ifft(coeffs, axis=2) * nt
        return np.fft.fft(self.transport * partial, axis=2) / nt

    def rhs(self, coeffs: np.ndarray, chi: float) -> np.ndarray:
        lin = self.diffusion * coeffs + self.transport_term(coeffs)
        if chi != 0:
            prod = self.drift(coeffs) * self.backward(coeffs)
            flux = np.fft.fftn(prod) / self.size
            lin = lin - chi * (1j * self.n) * flux
        return lin * self.mask

    def rhs_linear(self, coeffs: np.ndarray, chi: float) -> np.ndarray:
        """Linearisation about the uniform state."""
        lin = self.diffusion * coeffs + self.transport_term(coeffs)
        if chi != 0:
            flux = np.fft.fftn(self.drift(coeffs)) / self.size * UNIFORM
            lin = lin - chi * (1j * self.n) * flux
        return lin * self.mask


_SPECTRAL_CACHE: dict = {}


def spectral_for(grid: Grid, params: ModelParams) -> Spectral:
    key = (grid, params)
    sp = _SPECTRAL_CACHE.get(key)
    if sp is None:
        if len(_SPECTRAL_CACHE) > 8:
            _SPECTRAL_CACHE.clear()
        sp = _SPECTRAL_CACHE[key] = Spectral(grid, params)
    return sp


def _grid_of(f: Field) -> Grid:
    return Grid(*f.shape)


def chemical_solve(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    """Solve ``gamma c - sigma_c Lap c = rho`` exactly in the discrete Fourier basis."""
    n1, n2 = rho.shape
    k1 = np.fft.fftfreq(n1, 1.0 / n1)[:, None]
    k2 = np.fft.fftfreq(n2, 1.0 / n2)[None, :]
    e = params.gamma + 4 * math.pi**2 * params.sigma_c * (k1**2 + k2**2)
    return np.fft.ifft2(np.fft.fft2(rho) / e).real


def rhs_F(f: Field, chi: float, params: ModelParams) -> Field:
    """``sigma_x Lap f + sigma_theta f'' - lambda v.grad f - chi d_theta(B_tau[f] f)`` (dealiased)."""
    sp = spectral_for(_grid_of(f), params)
    out = sp.backward(sp.rhs(sp.forward(f.values), chi))
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite values in the right-hand side")
    return Field(out)


def dealias(f: Field, params: ModelParams | None = None) -> Field:
    sp = spectral_for(_grid_of(f), params or ModelParams())
    return Field(sp.backward(sp.forward(f.values)))


def cfl_limit(grid: Grid, params: ModelParams) -> float:
    return 0.5 * (1.0 / grid.n1) / params.lam


def step_imex(f: Field, chi: float, params: ModelParams, dt: float) -> Field:
    """IMEX Euler: diffusion implicit, transport and chemotactic flux explicit."""
    grid = _grid_of(f)
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if dt > cfl_limit(grid, params) * (1 + 1e-12):
        raise ValidationError(f"dt={dt} violates the CFL bound {cfl_limit(grid, params):.4g}")
    sp = spectral_for(grid, params)
    fh = sp.forward(f.values)
    return Field(sp.backward(_imex_coeffs(sp, fh, chi, dt)))


def _imex_coeffs(sp: Spectral, fh: np.ndarray, chi: float, dt: float) -> np.ndarray:
    explicit = sp.rhs(fh, chi) - sp.diffusion * fh * sp.mask
    return (fh + dt * explicit) / (1 - dt * sp.diffusion) * sp.mask


class SemiImplicit:
    """Euler step with the uniform-state linearisation implicit and the quadratic part explicit.

    ``(I - dt L) f_new = f + dt (F(f) - L f)``; stationary points are exactly the
    zeros of ``F`` for every ``dt``.  ``L`` is block diagonal over positional
    modes, each block a small dense matrix in the angular modes.
    """

    def __init__(self, grid: Grid, params: ModelParams, chi: float, dt: float):
        self.sp = spectral_for(grid, params)
        self.chi, self.dt = chi, dt
        sp = self.sp
        nt = grid.nt
        cut = grid.theta_cut
        self.n_idx = np.array([n % nt for n in range(-cut, cut + 1)])
        xs = np.argwhere(sp.xmask)
        self.x_idx = (xs[:, 0], xs[:, 1])
        size = self.n_idx.size
        blocks = np.empty((xs.shape[0], size, size), dtype=complex)
        eye = np.eye(size)
        for b, (a1, a2) in enumerate(xs):
            blocks[b] = eye - dt * self._linear_block(a1, a2)
        self.inv = np.linalg.inv(blocks)

    def _linear_block(self, a1: int, a2: int) -> np.ndarray:
        sp, cut = self.sp, self.sp.grid.theta_cut
        size = 2 * cut + 1
        k1, k2 = sp.kx1[a1, 0], sp.kx2[0, a2]
        idx = np.arange(-cut, cut + 1).astype(float)
        p = sp.params
        m = np.diag((-4 * math.pi**2 * p.sigma_x * (k1**2 + k2**2) - p.sigma_theta * idx**2).astype(complex))
        mp = math.pi * p.lam * (1j * k1 + k2)
        mm = math.pi * p.lam * (1j * k1 - k2)
        m += np.diag(np.full(size - 1, -mp), -1) + np.diag(np.full(size - 1, -mm), 1)
        if (k1, k2) != (0, 0) and self.chi != 0:
            v = k1 * np.cos(theta_grid(8)) + k2 * np.sin(theta_grid(8))
            vp = -k1 * np.sin(theta_grid(8)) + k2 * np.cos(theta_grid(8))
            e = p.gamma + 4 * math.pi**2 * p.sigma_c * (k1**2 + k2**2)
            db = (-2j * math.pi * v - 4 * math.pi**2 * p.tau * (vp**2 - v**2)) / e
            g = np.fft.fft(db) / 8
            col = np.zeros(size, dtype=complex)
            for n in range(-2, 3):
                col[n + cut] = g[n % 8]
            m[:, cut] -= self.chi * col
        return m

    def apply_inverse(self, coeffs: np.ndarray) -> np.ndarray:
        sub = coeffs[self.x_idx][:, self.n_idx]
        res = np.einsum("bij,bj->bi", self.inv, sub)
        out = np.zeros_like(coeffs)
        blk = out[self.x_idx]
        blk[:, self.n_idx] = res
        out[self.x_idx] = blk
        return out

    def step(self, fh: np.ndarray) -> np.ndarray:
        sp, chi, dt = self.sp, self.chi, self.dt
        nonlinear = sp.rhs(fh, chi) - sp.rhs_linear(fh, chi)
        return self.apply_inverse(fh + dt * nonlinear)


# symmetry projections -------------------------------------------------------

def symmetrize(f: Field, kind: str) -> Field:
    """Project onto the symmetry class of a seed: ``none``, ``rpi``, ``lane`` or ``spot``."""
    if kind == "none":
        return f
    g = (f + antipodal_reflect(f)) * 0.5
    if kind == "lane":
        g = Field(np.broadcast_to(g.values.mean(axis=1, keepdims=True), g.shape).copy())
    elif kind == "spot":
        g = (g + swap(g)) * 0.5
    elif kind != "rpi":
        raise ValidationError(f"unknown symmetry class {kind!r}")
    return g


# seeds -------------------------------------------------------------------------

def seed_initial(kind: str, grid: Grid = Grid(), k: int = 1, eps: float = 0.0,
                 basis: KernelBasis | None = None, path: str | None = None) -> Field:
    if kind == "uniform":
        return Field.constant(UNIFORM, *grid.shape)
    if kind == "file":
        if path is None:
            raise ValidationError("file seed needs a path")
        return read_snapshot(path)
    if kind not in ("lane", "spot"):
        raise ValidationError(f"unknown seed kind {kind!r}")
    if basis is None:
        raise ValidationError("lane/spot seeds need a kernel basis")
    fl = basis.fields(*grid.shape)
    pert = fl["phi1"] if kind == "lane" else fl["phi1"] + fl["phi2"]
    f = Field.constant(UNIFORM, *grid.shape) + pert * eps
    if np.min(f.values) <= 0:
        raise ValidationError("seed amplitude too large: density not positive")
    return f


# evolution -------------------------------------------------------------------------

@dataclass
class SolverConfig:
    dt: float = 0.5
    t_max: float = 2000.0
    residual_tol: float = 1e-6
    dealias: bool = True
    grid: Grid = field(default_factory=Grid)
    scheme: str = "semi-implicit"
    symmetry: str = "rpi"
    reproject_every: int = 100
    newton: bool = True
    newton_switch: float = 1e-3
    newton_tol: float = 1e-9
    newton_maxiter: int = 30
    record_every: int = 10

    def __post_init__(self):
        if not self.dt > 0 or not self.residual_tol > 0:
            raise ValidationError("dt and residual_tol must be positive")
        if self.scheme not in ("imex", "semi-implicit"):
            raise ValidationError("scheme must be 'imex' or 'semi-implicit'")


@dataclass
class EvolveResult:
    final: Field
    converged: bool
    residual: float
    times: list
    residuals: list
    masses: list
    min_values: list
    amplitudes: list
    wall_time: float
    steps: int
    newton_used: bool = False
    message: str = ""

    def diagnostics_csv(self) -> str:
        lines = ["t,residual,mass,min_f,amplitude"]
        for row in zip(self.times, self.residuals, self.masses, self.min_values, self.amplitudes):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def residual_inf(f: Field, chi: float, params: ModelParams) -> float:
    return rhs_F(f, chi, params).norm_inf()


def evolve_to_stationary(f0: Field, chi: float, params: ModelParams,
                         config: SolverConfig | None = None, amplitude=None) -> EvolveResult:
    """Time-step until ``||F||_inf < residual_tol`` (or ``t_max``), then optionally polish by Newton.

    ``amplitude`` is an optional callable ``Field -> float`` logged with the diagnostics.
    """
    cfg = config or SolverConfig(grid=_grid_of(f0))
    grid = _grid_of(f0)
    sp = spectral_for(grid, params)
    t0 = time.perf_counter()
    sym = cfg.symmetry
    f = symmetrize(f0, sym)
    fh = sp.forward(f.values)
    mass0 = f0.mass()
    dt = cfg.dt
    if cfg.scheme == "imex":
        dt = min(dt, cfl_limit(grid, params))
        stepper = None
    else:
        stepper = SemiImplicit(grid, params, chi, dt)
    times, res_hist, mass_hist, min_hist, amp_hist = [], [], [], [], []
    amp_fn = amplitude or (lambda _f: float("nan"))

    def record(t, coeffs, res):
        fld = Field(sp.backward(coeffs))
        times.append(t)
        res_hist.append(res)
        mass_hist.append(_mass(coeffs))
        min_hist.append(float(fld.values.min()))
        amp_hist.append(amp_fn(fld))

    nsteps = int(math.ceil(cfg.t_max / dt))
    res = _res(sp, fh, chi)
    record(0.0, fh, res)
    converged = res < cfg.residual_tol
    switch = max(cfg.newton_switch, cfg.residual_tol) if cfg.newton else cfg.residual_tol
    step = 0
    while not converged and step < nsteps and res > switch:
        fh = stepper.step(fh) if stepper else _imex_coeffs(sp, fh, chi, dt)
        step += 1
        if sym != "none" and step % cfg.reproject_every == 0:
            fh = sp.forward(symmetrize(Field(sp.backward(fh)), sym).values)
            fh[0, 0, 0] = mass0 / TWO_PI  # the projection is mass-preserving; pin roundoff
        if step % cfg.record_every == 0:
            res = _res(sp, fh, chi)
            record(step * dt, fh, res)
            if not np.isfinite(res) or np.max(np.abs(sp.backward(fh))) > 1e3:
                return EvolveResult(Field(sp.backward(fh)), False, float(res), times, res_hist, mass_hist,
                                    min_hist, amp_hist, time.perf_counter() - t0, step,
                                    message="diverged (|f| > 1e3 or non-finite)")
            converged = res < cfg.residual_tol
    newton_used = False
    message = ""
    if not converged and cfg.newton:
        newton_used = True
        # the step residual only bounds F up to the stiff modes, so tighten once if needed
        tol = min(cfg.newton_tol, 0.1 * cfg.residual_tol)
        for _ in range(2):
            try:
                fh = newton_polish(fh, chi, params, grid, sym, tol, cfg.newton_maxiter,
                                   dt_precond=max(dt, 1.0))
                message = "newton"
            except NumericalError as exc:
                message = str(exc)
                break
            res = _res(sp, fh, chi)
            if res < cfg.residual_tol:
                break
            tol *= 0.01
        res = _res(sp, fh, chi)
        record(step * dt, fh, res)
        converged = res < cfg.residual_tol
    final = Field(sp.backward(fh))
    return EvolveResult(final, bool(converged), float(res), times, res_hist, mass_hist, min_hist,
                        amp_hist, time.perf_counter() - t0, step, newton_used, message)


def _res(sp: Spectral, fh: np.ndarray, chi: float) -> float:
    return float(np.max(np.abs(sp.backward(sp.rhs(fh, chi)))))


def _mass(coeffs: np.ndarray) -> float:
    return float(coeffs[0, 0, 0].real * TWO_PI)


def newton_polish(fh: np.ndarray, chi: float, params: ModelParams, grid: Grid, sym: str,
                  tol: float = 1e-9, maxiter: int = 30, dt_precond: float = 10.0) -> np.ndarray:
    """Newton-Krylov on ``G(f) = f - Step(f)`` in the symmetry subspace.

    The semi-implicit step with a long ``dt`` acts as a preconditioner, so the
    Krylov solver only has to resolve the few slow directions.
    """
    sp = spectral_for(grid, params)
    stepper = SemiImplicit(grid, params, chi, dt_precond)
    mass_coef = fh[0, 0, 0]

    def to_field(x):
        return Field(x.reshape(grid.shape))

    def residual(x):
        f = to_field(x)
        g = symmetrize(f, sym)
        gh = sp.forward(g.values)
        out = g.values - sp.backward(stepper.step(gh))
        out = out + (f.values - g.values)  # identity on the complement of the subspace
        out += (gh[0, 0, 0].real - mass_coef.real)  # pins the conserved mass
        return out.ravel()

    x0 = sp.backward(fh).ravel()
    scale = max(1.0, float(np.max(np.abs(x0))))
    try:
        x = newton_krylov(residual, x0, method="lgmres", f_tol=tol * scale * dt_precond,
                          maxiter=maxiter, inner_maxiter=60, verbose=False)
    except (NoConvergence, ValueError, FloatingPointError) as exc:
        raise NumericalError(f"newton polish did not converge: {type(exc).__name__}") from None
    g = symmetrize(to_field(x), sym)
    return sp.forward(g.values)


# linearisation about a stationary state ---------------------------------------

def jacobian_apply(fh: np.ndarray, vh: np.ndarray, chi: float, sp: Spectral) -> np.ndarray:
    """``DF(f) v`` in coefficient space (exact: ``F`` is quadratic)."""
    lin = sp.diffusion * vh + sp.transport_term(vh)
    if chi != 0:
        prod = sp.drift(vh) * sp.backward(fh) + sp.drift(fh) * sp.backward(vh)
        lin = lin - chi * (1j * sp.n) * (np.fft.fftn(prod) / sp.size)
    return lin * sp.mask


@dataclass
class Linearization:
    eigenvalues: np.ndarray
    shift: float
    symmetry: str

    @property
    def max_re(self) -> float:
        return float(np.max(self.eigenvalues.real))


def linearize_about(f: Field, chi: float, params: ModelParams, symmetry: str = "rpi",
                    n_eigs: int = 6, shift: float = 0.02, tol: float = 1e-10) -> Linearization:
    """Eigenvalues of ``DF(f)`` nearest ``shift`` in the symmetry subspace, by shift-invert Arnoldi.

    The operator acts on band-limited, zero-mass fields of the given symmetry
    class; the orthogonal complement is sent to a far-left eigenvalue so it
    never competes.  Inner solves use GMRES preconditioned by the inverse of
    the diffusion-transport part, which is block diagonal over positional modes.
    """
    from scipy.sparse.linalg import LinearOperator, eigs, gmres

    if not shift > 0:
        raise ValidationError("shift must be positive")
    grid = _grid_of(f)
    sp = spectral_for(grid, params)
    fh = sp.forward(f.values)
    shape = grid.shape
    far = 1e3
    pre = SemiImplicit(grid, params, 0.0, 1.0 / shift)

    def proj(x):
        g = symmetrize(Field(sp.backward(sp.forward(x.reshape(shape)))), symmetry).values
        return g - g.mean()

    def a_minus_s(x):
        p = proj(x)
        jp = proj(sp.backward(jacobian_apply(fh, sp.forward(p), chi, sp)).ravel())
        return (jp - far * (x.reshape(shape) - p) - shift * x.reshape(shape)).ravel()

    def precond(x):
        p = proj(x)
        inner = -sp.backward(pre.apply_inverse(sp.forward(p))) / shift
        return (inner - (x.reshape(shape) - p) / (far + shift)).ravel()

    n = f.values.size
    op = LinearOperator((n, n), matvec=a_minus_s, dtype=float)
    pc = LinearOperator((n, n), matvec=precond, dtype=float)

    def solve(b):
        x, info = gmres(op, b, M=pc, rtol=tol, atol=0.0, restart=80, maxiter=20)
        if info != 0:
            raise NumericalError(f"inner GMRES did not converge (info={info})")
        return x

    opinv = LinearOperator((n, n), matvec=solve, dtype=float)
    rng = np.random.default_rng(0)
    v0 = proj(rng.standard_normal(n)).ravel()
    a_op = LinearOperator((n, n), matvec=lambda x: a_minus_s(x) + shift * x, dtype=float)
    vals = eigs(a_op, k=n_eigs, sigma=shift,
                OPinv=opinv, v0=v0, which="LM", return_eigenvectors=False, tol=1e-8)
    vals = vals[np.argsort(-vals.real)]
    return Linearization(np.asarray(vals), shift, symmetry)


def directional_derivative(f: Field, v: Field, chi: float, params: ModelParams,
                           eps: float | None = None) -> Field:
    """``(F(f + eps v) - F(f - eps v)) / (2 eps)`` with ``eps = 1e-6 * scale``."""
    if eps is None:
        eps = 1e-6 * max(f.norm_inf(), 1.0) / max(v.norm_inf(), 1e-300)
    plus = rhs_F(f + v * eps, chi, params)
    minus = rhs_F(f - v * eps, chi, params)
    return (plus - minus) * (0.5 / eps)
