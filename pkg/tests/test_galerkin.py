import numpy as np
import pytest

from idyll.fields import PeriodicGrid1D, sin_profile, velocity_from_vorticity
from idyll.galerkin import GalerkinEuler2D, galerkin_reduce
from idyll.lyapunov_perron import solve_fixed_point
from idyll.spectra2d import assemble_planar, leading_eigenvalue


@pytest.fixture(scope="module")
def model(galerkin_system):
    return galerkin_system.meta["model"]


def random_states(dim, n, scale, seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, dim))
    return scale * Z / np.linalg.norm(Z, axis=1)[:, None]


def physical_vorticity(model, Z, nx=16, ny=64):
    """Evaluate the represented vorticity on an (x, y) grid by direct summation."""
    W, s = model.to_complex(Z)
    x = np.arange(nx) * (2 * np.pi / model.alpha) / nx
    y = np.arange(ny) * model.length / ny
    phase_x = np.exp(1j * np.outer(model.kx, x))
    phase_y = np.exp(1j * np.outer(model.ky, y))
    omega = np.einsum("jm,jx,my->xy", W[0], phase_x, phase_y)
    return omega, s[0], x, y


class TestCoordinates:
    def test_dimension(self, galerkin_system, model):
        assert galerkin_system.dim == model.dim == (2 * 2 + 1) * (2 * 16 + 1)

    def test_round_trip(self, model):
        Z = random_states(model.dim, 4, 1.0, 0)
        W, s = model.to_complex(Z)
        np.testing.assert_allclose(model.to_real(W, s), Z, atol=1e-15)
        # conjugate symmetry of a real field
        np.testing.assert_allclose(W, np.conj(W[:, ::-1, ::-1]), atol=1e-15)

    def test_euclidean_norm_is_l2(self, model):
        Z = random_states(model.dim, 1, 0.7, 1)
        omega, s, _, _ = physical_vorticity(model, Z)
        assert np.abs(omega.imag).max() <= 1e-12
        assert np.linalg.norm(Z) == pytest.approx(np.sqrt(s**2 + np.mean(omega.real**2)), rel=1e-12)

    def test_energy_norm_matches_velocity(self, model):
        Z = random_states(model.dim, 1, 0.3, 2)
        omega, s, x, y = physical_vorticity(model, Z)
        gx = PeriodicGrid1D(x.size, 2 * np.pi / model.alpha)
        gy = PeriodicGrid1D(y.size, model.length)
        field = velocity_from_vorticity(omega.real, s, gx, gy)
        energy = np.sqrt(np.mean(field.vx**2 + field.vy**2))
        assert model.energy_norm(Z[0]) == pytest.approx(energy, rel=1e-10)

    def test_base_state(self, model):
        base = model.base_state()
        omega, s, _, y = physical_vorticity(model, base)
        np.testing.assert_allclose(omega.real, np.tile(-np.cos(y), (omega.shape[0], 1)), atol=1e-12)
        assert s == pytest.approx(0.0, abs=1e-15)
        # a single |k| = 1 mode has equal energy and enstrophy
        assert model.energy_norm(base) == pytest.approx(np.linalg.norm(base), rel=1e-12)


class TestDynamics:
    def test_nonlinearity_vanishes_quadratically(self, galerkin_system):
        dim = galerkin_system.dim
        np.testing.assert_array_equal(galerkin_system.nonlinearity(np.zeros(1), np.zeros((1, dim))), 0.0)
        Z = random_states(dim, 100, 1.0, 3)
        ratios = np.linalg.norm(galerkin_system.nonlinearity(np.zeros(100), Z), axis=1)
        # sampled C1 is a lower estimate; the optimized supremum bounds every state
        assert ratios.max() <= galerkin_system.meta["C1_sup"] * (1 + 1e-9)
        assert galerkin_system.C1 == galerkin_system.meta["C1_sample"] <= galerkin_system.meta["C1_sup"]
        # homogeneous of degree two
        F1 = galerkin_system.nonlinearity(np.zeros(1), Z[:1])
        F2 = galerkin_system.nonlinearity(np.zeros(1), 1e-3 * Z[:1])
        np.testing.assert_allclose(F2, 1e-6 * F1, rtol=1e-9, atol=1e-22)

    def test_base_flow_is_steady(self, model):
        assert np.abs(model.advection(np.zeros(model.dim), base=True)).max() <= 1e-14

    def test_linear_matrix_matches_advection(self, model):
        # full advection of base + z splits exactly into A z + F(z)
        Z = random_states(model.dim, 3, 0.5, 4)
        full = model.advection(Z, base=True)
        split = Z @ model.linear_matrix().T + model.advection(Z)
        np.testing.assert_allclose(full, split, atol=1e-13)

    def test_conservation(self, model):
        Z = random_states(model.dim, 20, 0.5, 5)
        assert model.invariant_defect(Z, "energy").max() <= 1e-3
        assert model.invariant_defect(Z, "enstrophy").max() <= 1e-3

    def test_eigenvalue_matches_shooting(self, galerkin_system, sin_shooter):
        mode = sin_shooter.find_mode(0.8, 0.2j)
        lead = np.linalg.eigvals(galerkin_system.generator).real.max()
        assert abs(lead - mode.growth_rate) / mode.growth_rate <= 1e-4

    def test_sectors(self, sin128):
        model = GalerkinEuler2D(sin128, 0.8, 16)
        eig = np.linalg.eigvals(model.linear_matrix())
        for j in (1, 2):
            lam = leading_eigenvalue(assemble_planar(sin128, j * 0.8, 16))
            assert np.abs(eig - lam).min() <= 1e-10

    def test_rejects_bad_alpha(self, sin128):
        with pytest.raises(ValueError):
            GalerkinEuler2D(sin128, 0.0, 16)


class TestReducedSystem:
    def test_dichotomy(self, galerkin_system):
        assert galerkin_system.rank_u == 2
        assert galerkin_system.lambda_u > galerkin_system.lambda_cs > 0
        res = galerkin_system.split.invariant_residuals()
        assert max(res.values()) <= 1e-8

    def test_zero_data(self, galerkin_system):
        fp = solve_fixed_point(np.zeros(galerkin_system.dim), galerkin_system, T_max=60.0)
        assert np.abs(fp.path.z).max() == 0.0

    def test_bound_random(self, galerkin_system):
        rng = np.random.default_rng(6)
        sys_ = galerkin_system
        lam = sys_.default_lambda()
        r_max = sys_.delta1(lam) / (2 * sys_.C0)
        for _ in range(50):
            c = rng.standard_normal(2)
            c *= r_max * rng.random() / np.linalg.norm(c)
            z_u0 = sys_.from_u_coordinates(c)
            fp = solve_fixed_point(z_u0, sys_, T_max=60.0)
            norms = np.linalg.norm(fp.path.z, axis=1)
            assert np.all(norms <= 2 * sys_.C0 * np.linalg.norm(z_u0) * np.exp(lam * fp.path.t_grid) * (1 + 1e-9))
            assert fp.contraction_factor <= 0.55

    def test_seed_reproducible(self, sin128, galerkin_system):
        again = galerkin_reduce(sin128, 0.8, 16)
        assert again.C1 == galerkin_system.C1
        assert again.C0 == galerkin_system.C0

    def test_sup_mode(self, sin128, galerkin_system):
        sys_ = galerkin_reduce(sin128, 0.8, 16, C1_mode="sup")
        assert sys_.C1 == pytest.approx(galerkin_system.meta["C1_sup"], rel=1e-6)
        assert sys_.delta1() < galerkin_system.delta1()
        with pytest.raises(ValueError):
            galerkin_reduce(sin128, 0.8, 16, C1_mode="guess")

    def test_small_mode_count(self):
        sys_ = galerkin_reduce(sin_profile(64), 0.8, 16, n_C1_samples=10)
        assert sys_.dim == 165
