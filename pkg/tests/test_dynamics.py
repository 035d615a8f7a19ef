import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antbif.dynamics import (UNIFORM, Grid, SemiImplicit, SolverConfig, cfl_limit, chemical_solve,
                             dealias, directional_derivative, evolve_to_stationary, jacobian_apply,
                             linearize_about, residual_inf, rhs_F, seed_initial, spectral_for,
                             step_imex, symmetrize)
from antbif.fields import Field, antipodal_reflect, kernel_basis, swap
from antbif.model import ModelParams, ValidationError
from antbif.spectrum import assemble_mode_operator, chi_critical_truncated, full_spectrum_scan

P = ModelParams(sigma_x=0.05, sigma_theta=0.05, tau=0.3)
SMALL = Grid(8, 8, 16)
seeds = st.integers(0, 2**31 - 1)


def random_state(seed, grid=SMALL, amp=0.02):
    """Positive, band-limited perturbation of the uniform state."""
    rng = np.random.default_rng(seed)
    sp = spectral_for(grid, P)
    noise = sp.backward(sp.forward(rng.standard_normal(grid.shape)))
    noise -= noise.mean()
    return Field(UNIFORM + amp * noise / np.max(np.abs(noise)))


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid(8, 16, 16)
    with pytest.raises(ValidationError):
        Grid(8, 8, 18)
    g = Grid(32, 32, 64)
    assert g.x_cut == 10 and g.theta_cut == 29


def test_uniform_state_is_stationary():
    f = Field.constant(UNIFORM, *SMALL.shape)
    for chi in (0.0, 10.0, 100.0):
        assert residual_inf(f, chi, P) < 1e-14


@settings(max_examples=15, deadline=None)
@given(seeds, st.floats(0.0, 80.0))
def test_rhs_conserves_mass(seed, chi):
    f = random_state(seed)
    assert abs(rhs_F(f, chi, P).mass()) < 1e-13


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(0.0, 80.0))
def test_rhs_is_equivariant(seed, chi):
    f = random_state(seed)
    r = rhs_F(f, chi, P)
    assert (rhs_F(antipodal_reflect(f), chi, P) - antipodal_reflect(r)).norm_inf() < 1e-12
    assert (rhs_F(swap(f), chi, P) - swap(r)).norm_inf() < 1e-12


def test_linear_part_matches_mode_operator():
    grid = Grid(8, 8, 64)
    sp = spectral_for(grid, P)
    nt, cut = grid.nt, grid.theta_cut
    rng = np.random.default_rng(1)
    u = np.zeros(2 * cut + 1, complex)
    u[cut - 4:cut + 5] = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    for kv in ((1, 0), (1, 2)):
        coef = np.zeros(grid.shape, complex)
        for i, n in enumerate(range(-cut, cut + 1)):
            coef[kv[0], kv[1], n % nt] = u[i]
            coef[-kv[0], -kv[1], -n % nt] = np.conj(u[i])
        out = sp.rhs_linear(coef, 7.0)
        want = assemble_mode_operator(kv, 7.0, P.sigma_theta, P, n_c=cut).apply(u)
        got = np.array([out[kv[0], kv[1], n % nt] for n in range(-cut, cut + 1)])
        assert np.max(np.abs(got - want)) < 1e-12 * np.max(np.abs(want))


@settings(max_examples=10, deadline=None)
@given(seeds, seeds)
def test_jacobian_matches_finite_difference(s1, s2):
    sp = spectral_for(SMALL, P)
    f, v = random_state(s1, amp=0.1), random_state(s2) - UNIFORM
    exact = Field(sp.backward(jacobian_apply(sp.forward(f.values), sp.forward(v.values), 30.0, sp)))
    fd = directional_derivative(f, v, 30.0, P)
    assert (exact - fd).norm_inf() < 1e-6 * max(exact.norm_inf(), 1e-3)


def test_jacobian_at_uniform_is_linear_part():
    sp = spectral_for(SMALL, P)
    f = Field.constant(UNIFORM, *SMALL.shape)
    v = sp.forward((random_state(3) - UNIFORM).values)
    a = jacobian_apply(sp.forward(f.values), v, 12.0, sp)
    assert np.max(np.abs(a - sp.rhs_linear(v, 12.0))) < 1e-15


def test_chemical_solve_inverts_operator():
    rng = np.random.default_rng(0)
    rho = rng.standard_normal((8, 8))
    c = chemical_solve(rho, P)
    k = np.fft.fftfreq(8, 1 / 8)
    lap = -(4 * math.pi**2) * (k[:, None] ** 2 + k[None, :] ** 2)
    back = P.gamma * c - P.sigma_c * np.fft.ifft2(lap * np.fft.fft2(c)).real
    assert np.allclose(back, rho)


def test_imex_step_validation_and_decay_factor():
    grid = SMALL
    f = Field.from_function(lambda x1, x2, th: UNIFORM + 0.01 * np.cos(2 * th) + 0 * x1 + 0 * x2, *grid.shape)
    with pytest.raises(ValidationError):
        step_imex(f, 0.0, P, 0.0)
    with pytest.raises(ValidationError):
        step_imex(f, 0.0, P, 2 * cfl_limit(grid, P))
    dt = cfl_limit(grid, P)
    g = step_imex(f, 0.0, P, dt)
    # spatially uniform angular mode: only theta diffusion acts, implicitly
    factor = 1 / (1 + dt * P.sigma_theta * 4)
    assert np.allclose(g.values - UNIFORM, factor * (f.values - UNIFORM), atol=1e-15)
    assert g.mass() == pytest.approx(f.mass(), abs=1e-14)


@settings(max_examples=8, deadline=None)
@given(seeds, st.floats(0.05, 5.0))
def test_semi_implicit_fixes_stationary_points_and_mass(seed, dt):
    sp = spectral_for(SMALL, P)
    stepper = SemiImplicit(SMALL, P, 20.0, dt)
    uni = sp.forward(Field.constant(UNIFORM, *SMALL.shape).values)
    assert np.max(np.abs(stepper.step(uni) - uni)) < 1e-15
    fh = sp.forward(random_state(seed).values)
    assert stepper.step(fh)[0, 0, 0] == pytest.approx(fh[0, 0, 0], abs=1e-15)


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from(["rpi", "lane", "spot"]))
def test_symmetrize_is_a_mass_preserving_projection(seed, kind):
    f = random_state(seed)
    g = symmetrize(f, kind)
    assert (symmetrize(g, kind) - g).norm_inf() < 1e-15
    assert g.mass() == pytest.approx(f.mass(), abs=1e-13)
    assert (antipodal_reflect(g) - g).norm_inf() < 1e-15
    # the flow preserves each class
    r = rhs_F(g, 25.0, P)
    assert (symmetrize(r, kind) - r).norm_inf() < 1e-12


def test_symmetrize_and_seed_validation():
    f = random_state(0)
    assert symmetrize(f, "none") is f
    with pytest.raises(ValidationError):
        symmetrize(f, "diagonal")
    with pytest.raises(ValidationError):
        seed_initial("lane", SMALL)
    with pytest.raises(ValidationError):
        seed_initial("stripes", SMALL)
    with pytest.raises(ValidationError):
        seed_initial("file", SMALL)
    basis = kernel_basis(1, P.sigma_theta, P)
    with pytest.raises(ValidationError):
        seed_initial("lane", SMALL, 1, 1e3, basis)
    lane = seed_initial("lane", SMALL, 1, 0.05, basis)
    assert lane.mass() == pytest.approx(1.0)
    assert np.ptp(lane.values, axis=1).max() < 1e-15
    spot = seed_initial("spot", SMALL, 1, 0.05, basis)
    assert (swap(spot) - spot).norm_inf() < 1e-14


def test_snapshot_seed(tmp_path):
    from antbif.fields import write_snapshot
    f = random_state(4)
    write_snapshot(tmp_path / "s.bin", f)
    assert np.array_equal(seed_initial("file", path=str(tmp_path / "s.bin")).values, f.values)


def test_solver_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(dt=0)
    with pytest.raises(ValidationError):
        SolverConfig(scheme="rk4")


def test_subcritical_perturbation_relaxes_to_uniform():
    grid = Grid(8, 8, 32)
    chi1 = chi_critical_truncated(1, P.sigma_theta, P, n_c=max(grid.theta_cut, 16))
    f0 = random_state(5, grid)
    cfg = SolverConfig(dt=0.5, t_max=400, residual_tol=1e-10, grid=grid, symmetry="rpi")
    res = evolve_to_stationary(f0, 0.5 * chi1, P, cfg)
    assert res.converged
    assert (res.final - UNIFORM).norm_inf() < 1e-9
    assert max(abs(m - 1) for m in res.masses) < 1e-12
    text = res.diagnostics_csv()
    assert text.startswith("t,residual,mass,min_f,amplitude\n")
    assert text.count("\n") == len(res.times) + 1


def test_dealias_is_idempotent():
    f = Field(np.random.default_rng(0).standard_normal(SMALL.shape))
    g = dealias(f, P)
    assert np.allclose(dealias(g, P).values, g.values)


def test_linearize_about_uniform_matches_mode_spectrum():
    grid = Grid(16, 16, 64)
    chi1 = chi_critical_truncated(1, P.sigma_theta, P, n_c=grid.theta_cut)
    f = Field.constant(UNIFORM, *grid.shape)
    lin = linearize_about(f, 1.05 * chi1, P, "rpi", n_eigs=4, shift=0.02)
    rep = full_spectrum_scan(P, 1.05 * chi1, P.sigma_theta, k_max=2, n_c=grid.theta_cut)
    assert lin.max_re == pytest.approx(rep.max_re, rel=1e-7)
    with pytest.raises(ValidationError):
        linearize_about(f, chi1, P, shift=0.0)
