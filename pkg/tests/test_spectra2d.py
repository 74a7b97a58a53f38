import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idyll.fields import constant_profile, sin_beta_profile, sin_profile
from idyll.spectra2d import (
    DichotomyError,
    assemble_planar,
    assemble_shear3d,
    dichotomy_split,
    leading_eigenvalue,
    real_form,
    unstable_spectrum,
)


def shear3d_samples(eps, n=64):
    y = np.arange(n) * (2 * np.pi / n)
    return np.sin(y)[:, None] + eps * np.sin(y)[None, :]


def phase_speed(lam, alpha):
    return 1j * lam / alpha


@pytest.fixture(scope="module")
def planar08(sin128):
    return assemble_planar(sin128, 0.8, 64)


@pytest.fixture(scope="module")
def phase_speeds_3d():
    return {eps: phase_speed(leading_eigenvalue(assemble_shear3d(shear3d_samples(eps), 0.8, 16, 4)), 0.8) for eps in (0.0, 0.02, 0.05, 0.1)}


class TestAssemblePlanar:
    def test_zero_profile(self):
        op = assemble_planar(constant_profile(0.0), 1.0, 16)
        assert np.abs(op.matrix).max() == 0.0

    def test_unit_advection(self):
        op = assemble_planar(constant_profile(1.0), 1.0, 16)
        np.testing.assert_allclose(op.matrix, -1j * np.eye(33), atol=1e-14)
        eig, count = unstable_spectrum(op)
        assert count == 0
        assert np.abs(eig.real).max() <= 1e-14

    def test_dimensions(self, sin128):
        op = assemble_planar(sin128, 0.5, 20)
        assert op.size == 41 == op.meta["unknowns"]
        assert op.kind == "planar_vorticity"

    def test_refuses_alpha_zero(self, sin128):
        with pytest.raises(ValueError, match="alpha"):
            assemble_planar(sin128, 0.0, 16)

    def test_refuses_small_truncation(self, sin128):
        with pytest.raises(ValueError, match="n_modes"):
            assemble_planar(sin128, 0.5, 8)

    def test_matches_shooting(self, planar08, sin_shooter):
        mode = sin_shooter.find_mode(0.8, 0.2j)
        lam = leading_eigenvalue(planar08)
        assert abs(lam.real - mode.growth_rate) / mode.growth_rate <= 1e-4

    def test_conjugation_closed(self, planar08):
        eig, _ = unstable_spectrum(planar08)
        # unstable part is isolated; the advection continuum is clustered near the imaginary axis
        top = eig[eig.real > 1e-3]
        assert np.abs(top[:, None] - np.conj(eig)[None, :]).min(axis=1).max() <= 1e-8
        real_eig, _ = unstable_spectrum(real_form(planar08))
        assert np.abs(real_eig[:, None] - np.conj(real_eig)[None, :]).min(axis=1).max() <= 1e-8

    def test_resolution_convergence(self, planar08, sin128):
        fine = assemble_planar(sin_profile(512), 0.8, 128)
        assert abs(leading_eigenvalue(fine) - leading_eigenvalue(planar08)) <= 1e-8

    @pytest.mark.parametrize("beta", [1.2, 1.5])
    def test_sin_beta_unstable(self, beta):
        prof = sin_beta_profile(beta, 128)
        counts = [unstable_spectrum(assemble_planar(prof, a * beta, 32))[1] for a in (0.25, 0.5, 0.75)]
        assert max(counts) >= 1


class TestUnstableSpectrum:
    def test_diagonal(self):
        eig, count = unstable_spectrum(np.diag([1.0, -1.0, 3j]))
        assert count == 1
        assert eig[0] == 1.0

    def test_planar_pair(self, planar08):
        # one unstable eigenvalue per sector; real perturbations see it together with its conjugate
        assert unstable_spectrum(planar08)[1] == 1
        eig, count = unstable_spectrum(real_form(planar08))
        assert count == 2
        assert eig[0].real == pytest.approx(eig[1].real, rel=1e-10)
        assert eig[0] == pytest.approx(np.conj(eig[1]), rel=1e-10, abs=1e-12)

    def test_sorted(self, planar08):
        eig, _ = unstable_spectrum(planar08)
        assert np.all(np.diff(eig.real) <= 1e-12)

    def test_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            unstable_spectrum(np.array([[np.nan]]))


class TestDichotomy:
    def test_diagonal(self):
        split = dichotomy_split(np.diag([2.0, -1.0]), 0.0, 1.0)
        np.testing.assert_allclose(split.proj_u, np.diag([1.0, 0.0]), atol=1e-14)
        assert split.M == pytest.approx(1.0)
        assert split.rank_u == 1

    def test_planar_split(self, planar08):
        lead = leading_eigenvalue(planar08).real
        real = real_form(planar08)
        split = dichotomy_split(real, 0.01, 0.9 * lead)
        assert split.rank_u == 2
        res = split.invariant_residuals()
        assert res["sum"] <= 1e-10 and res["idempotent_u"] <= 1e-10 and res["idempotent_cs"] <= 1e-10
        assert res["commute"] <= 1e-8
        # dichotomy inequalities on the sampled grid with the measured M
        from scipy.linalg import expm

        A = real.matrix
        for t in split.t_grid[1::4]:
            assert np.linalg.norm(expm(t * A) @ split.proj_cs, 2) <= split.M * np.exp(split.lambda_cs * t) * (1 + 1e-8)
            assert np.linalg.norm(expm(-t * A) @ split.proj_u, 2) <= split.M * np.exp(-split.lambda_u * t) * (1 + 1e-8)

    def test_jordan_block(self):
        J = np.array([[1.0, 1.0], [0.0, 1.0]])
        # |exp(-tJ)| exp(t/2) = (t + sqrt(t^2 + 4)) / 2 * exp(-t/2) never exceeds 1
        assert dichotomy_split(J, 0.0, 0.5).M == pytest.approx(1.0)
        assert dichotomy_split(J, 0.0, 0.9).M > 1.0

    def test_gap_violation(self):
        with pytest.raises(DichotomyError, match="gap violated"):
            dichotomy_split(np.diag([1.0, 0.5, -1.0]), 0.0, 0.9)

    def test_rates_ordered(self):
        with pytest.raises(DichotomyError):
            dichotomy_split(np.diag([1.0, -1.0]), 0.5, 0.2)

    def test_eigenvalue_sides(self, planar08):
        split = dichotomy_split(planar08)
        assert np.all(split.eig_u.real >= split.lambda_u)
        assert np.all(split.eig_cs.real <= split.lambda_cs)

    @settings(max_examples=25, deadline=None)
    @given(
        st.lists(st.floats(0.5, 3.0), min_size=1, max_size=3),
        st.lists(st.floats(-3.0, 0.0), min_size=1, max_size=4),
        st.integers(0, 2**31 - 1),
    )
    def test_invariants_property(self, unstable, stable, seed):
        rng = np.random.default_rng(seed)
        D = np.diag(unstable + stable)
        n = D.shape[0]
        S = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        A = S @ D @ np.linalg.inv(S)
        split = dichotomy_split(A, 0.1, 0.4)
        res = split.invariant_residuals()
        scale = np.linalg.cond(S) ** 2
        assert res["sum"] <= 1e-10 * scale
        assert res["idempotent_u"] <= 1e-10 * scale and res["idempotent_cs"] <= 1e-10 * scale
        assert res["commute"] <= 1e-8 * scale
        assert split.rank_u == len(unstable)
        assert split.M >= 1.0


class TestShear3D:
    def test_z_independent_contains_planar(self):
        n_modes = 16
        op3 = assemble_shear3d(shear3d_samples(0.0), 0.8, n_modes, 2)
        planar = assemble_planar(sin_profile(64), 0.8, n_modes)
        eig3 = unstable_spectrum(op3)[0]
        for lam in unstable_spectrum(planar)[0]:
            assert np.abs(eig3 - lam).min() <= 1e-8

    def test_dimensions(self):
        op = assemble_shear3d(shear3d_samples(0.05), 0.8, 16, 3)
        assert op.size == 2 * 33 * 7
        assert op.kind == "shear3d_modal"

    def test_coarse_grid_refused(self):
        with pytest.raises(ValueError, match="coarse"):
            assemble_shear3d(shear3d_samples(0.0, 16), 0.8, 16)

    def test_alpha_zero_refused(self):
        with pytest.raises(ValueError, match="alpha"):
            assemble_shear3d(shear3d_samples(0.0), 0.0, 16)

    def test_persistence(self, phase_speeds_3d):
        c0 = phase_speeds_3d[0.0]
        assert abs(phase_speeds_3d[0.05] - c0) <= 0.05

    def test_amplitude_dependence(self, phase_speeds_3d):
        c0 = phase_speeds_3d[0.0]
        amps = [0.02, 0.05, 0.1]
        d = np.array([abs(phase_speeds_3d[a] - c0) for a in amps])
        assert np.all(np.diff(d) > 0)
        # z -> z + pi maps eps to -eps, so the shift is even in eps: quadratic, not linear
        assert d[1] / d[0] == pytest.approx((0.05 / 0.02) ** 2, rel=0.1)

