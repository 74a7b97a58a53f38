import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idyll.lyapunov_perron import (
    LPError,
    WeightedPath,
    apply_lp_map,
    autonomous_system,
    backward_rate,
    linear_system,
    make_grid,
    manifold_point,
    measure_C1,
    solve_fixed_point,
    toy_system,
    unstable_graph,
    verify_local_invariance,
    weighted_norm,
)


def skew_toy():
    """``x' = x``, ``y' = -y + x^2 + x y``: manifold ``y = x^2/3 + x^3/12 + ...`` has an odd part."""

    def F(t, Z):
        out = np.zeros_like(Z)
        out[:, 1] = Z[:, 0] ** 2 + Z[:, 0] * Z[:, 1]
        return out

    return autonomous_system(np.diag([1.0, -1.0]), F, -1.0, 1.0, C1=1.5, name="skew-toy")


@pytest.fixture(scope="module")
def toy():
    return toy_system()


@pytest.fixture(scope="module")
def toy_graph(toy):
    return unstable_graph(toy, radius=0.1, n_samples=21)


def first_iterate(system, x, T_max=30.0, dt=0.05, tail_tol=1e-6):
    t = make_grid(T_max, dt)
    zero = WeightedPath(t, np.zeros((t.size, system.dim)), system.default_lambda())
    return apply_lp_map(zero, np.array([x, 0.0]), system, tail_tol=tail_tol)


class TestSystem:
    def test_toy_constants(self, toy):
        assert toy.C0 == pytest.approx(1.0)
        assert toy.delta1() == pytest.approx(0.2)
        assert toy.rank_u == 1

    def test_propagator_identity(self, toy):
        for t in (0.0, -3.0, 2.5):
            np.testing.assert_allclose(toy.propagator(t, t), np.eye(2), atol=1e-12)

    def test_quadratic_bound(self, toy):
        rng = np.random.default_rng(0)
        d1 = toy.delta1()
        Z = rng.standard_normal((100, 2))
        Z *= (d1 * rng.random(100) / np.linalg.norm(Z, axis=1))[:, None]
        t = rng.uniform(-20, 0, 100)
        F = toy.nonlinearity(t, Z)
        assert np.all(np.linalg.norm(F, axis=1) <= toy.C1 * np.linalg.norm(Z, axis=1) ** 2 * (1 + 1e-12))
        np.testing.assert_array_equal(toy.nonlinearity(np.zeros(1), np.zeros((1, 2))), 0.0)

    def test_measure_C1_homogeneous(self, toy):
        assert measure_C1(toy.nonlinearity, 2) <= 1.0 + 1e-12

    def test_lambda_window(self, toy):
        with pytest.raises(LPError, match="admissible"):
            toy.delta1(1.5)

    def test_weighted_norm(self):
        t = np.array([0.0, -1.0, -2.0])
        z = np.array([[1.0, 0.0], [0.0, 0.5], [0.1, 0.0]])
        assert weighted_norm(t, z, 0.5) == pytest.approx(max(1.0, 0.5 * np.exp(0.5), 0.1 * np.exp(1.0)))


class TestApplyMap:
    def test_linear(self):
        sys_ = linear_system()
        out = first_iterate(sys_, 0.05)
        np.testing.assert_allclose(out.z[:, 0], 0.05 * np.exp(out.t_grid), rtol=1e-12)
        np.testing.assert_array_equal(out.z[:, 1], 0.0)

    def test_zero_path(self, toy):
        out = first_iterate(toy, 0.07)
        np.testing.assert_allclose(out.z[:, 0], 0.07 * np.exp(out.t_grid), rtol=1e-12)
        assert np.abs(out.z[:, 1]).max() == 0.0

    def test_quadrature_refinement(self, toy):
        x = 0.1
        coarse = apply_lp_map(first_iterate(toy, x), np.array([x, 0.0]), toy)
        fine_path = first_iterate(toy, x, dt=0.0125)
        fine = apply_lp_map(fine_path, np.array([x, 0.0]), toy)
        np.testing.assert_allclose(coarse.z, fine.z[::4], atol=1e-8, rtol=0)
        # the exact second iterate is (x e^t, x^2 e^{2t} / 3)
        np.testing.assert_allclose(coarse.z[:, 1], x * x * np.exp(2 * coarse.t_grid) / 3, atol=1e-8)

    def test_superposition(self):
        sys_ = skew_toy()
        a = first_iterate(sys_, 0.03).z
        b = first_iterate(sys_, -0.05).z
        ab = first_iterate(sys_, -0.02).z
        np.testing.assert_allclose(a + b, ab, atol=1e-12, rtol=0)

    def test_ball_checks(self, toy):
        t = make_grid()
        big = WeightedPath(t, np.full((t.size, 2), 0.5), 0.0)
        with pytest.raises(LPError, match="ball"):
            apply_lp_map(big, np.array([0.05, 0.0]), toy, delta1=0.2)
        zero = WeightedPath(t, np.zeros((t.size, 2)), 0.0)
        with pytest.raises(LPError, match="delta1"):
            apply_lp_map(zero, np.array([0.15, 0.0]), toy, delta1=0.2)

    def test_tail_budget(self):
        sys_ = skew_toy()
        with pytest.raises(LPError, match="T_max"):
            first_iterate(sys_, 0.05, T_max=2.0)
        path = first_iterate(sys_, 0.05, T_max=2.0, tail_tol=1.0)
        assert path.tail_bound > 1e-6 * 0.05
        assert first_iterate(sys_, 0.05).tail_bound <= 1e-6 * 0.05


class TestFixedPoint:
    def test_linear_one_iteration(self):
        fp = solve_fixed_point(np.array([0.05, 0.0]), linear_system())
        assert fp.iterations == 1
        np.testing.assert_allclose(fp.path.z[:, 0], 0.05 * np.exp(fp.path.t_grid), rtol=1e-12)

    @pytest.mark.parametrize("x", [0.1, 0.05, -0.08, 0.01])
    def test_toy_manifold(self, toy, x):
        fp = solve_fixed_point(np.array([x, 0.0]), toy)
        assert abs(fp.path.z[0, 1] - x * x / 3) <= 1e-6
        assert fp.contraction_factor <= 0.55
        assert fp.bound_ok

    def test_zero_data(self, toy):
        fp = solve_fixed_point(np.zeros(2), toy)
        assert np.abs(fp.path.z).max() == 0.0

    def test_bound_random(self, toy):
        rng = np.random.default_rng(1)
        lam = toy.default_lambda()
        for x in rng.uniform(-0.1, 0.1, 50):
            fp = solve_fixed_point(np.array([x, 0.0]), toy)
            norms = np.linalg.norm(fp.path.z, axis=1)
            assert np.all(norms <= 2 * toy.C0 * abs(x) * np.exp(lam * fp.path.t_grid) * (1 + 1e-9))
            assert fp.contraction_factor <= 0.55

    def test_skew_contraction(self):
        sys_ = skew_toy()
        r = sys_.delta1() / (2 * sys_.C0)
        fp = solve_fixed_point(np.array([r, 0.0]), sys_)
        assert 0 < fp.contraction_factor <= 0.55
        assert fp.bound_ok

    def test_non_contraction_detected(self):
        # an understated C1 lets |z_u0| exceed what the smallness condition allows
        def F(t, Z):
            out = np.zeros_like(Z)
            out[:, 0] = 3.0 * Z[:, 1] ** 2
            out[:, 1] = 3.0 * Z[:, 0] ** 2
            return out

        sys_ = autonomous_system(np.diag([1.0, -1.0]), F, -1.0, 1.0, C1=0.1)
        with pytest.raises(LPError, match="not contracting"):
            solve_fixed_point(np.array([0.9, 0.0]), sys_, T_max=20)
        with pytest.raises(LPError, match="exceeds 0.55"):
            solve_fixed_point(np.array([0.3, 0.0]), sys_, T_max=20)

    def test_size_and_subspace_checks(self, toy):
        with pytest.raises(LPError, match="exceeds"):
            solve_fixed_point(np.array([0.2, 0.0]), toy)
        with pytest.raises(LPError, match="unstable subspace"):
            solve_fixed_point(np.array([0.05, 0.01]), toy)

    def test_grid_robustness(self, toy):
        sys_ = skew_toy()
        for system in (toy, sys_):
            a = manifold_point(system, [0.06])
            b = manifold_point(system, [0.06], T_max=60.0, dt=0.025)
            assert np.abs(a - b).max() <= 1e-7

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-0.1, 0.1))
    def test_closed_form_property(self, x):
        fp = solve_fixed_point(np.array([x, 0.0]), toy_system())
        assert abs(fp.path.z[0, 1] - x * x / 3) <= 1e-6


class TestGraph:
    def test_toy_graph(self, toy_graph):
        x = toy_graph.coords[:, 0]
        assert x.size == 21
        assert np.abs(toy_graph.h[:, 1] - x * x / 3).max() <= 1e-6
        assert np.abs(toy_graph.h[:, 0]).max() <= 1e-12
        assert toy_graph.h0 <= 1e-10
        assert toy_graph.tangency_norm <= 10 * toy_graph.fd_step
        assert toy_graph.contraction_factor <= 0.55

    def test_reflection_symmetry(self, toy_graph):
        h = toy_graph.h[:, 1]
        np.testing.assert_allclose(h, h[::-1], atol=1e-10, rtol=0)

    def test_linear_graph_vanishes(self):
        g = unstable_graph(linear_system(), radius=0.1, n_samples=5)
        assert np.abs(g.h).max() == 0.0
        assert g.tangency_norm == 0.0

    def test_tangency_shrinks_with_step(self):
        sys_ = skew_toy()
        g1 = unstable_graph(sys_, radius=0.06, n_samples=3, fd_step=2e-2)
        g2 = unstable_graph(sys_, radius=0.06, n_samples=3, fd_step=1e-2)
        assert 0 < g2.tangency_norm <= 0.5 * g1.tangency_norm * (1 + 1e-6)
        assert g1.tangency_norm <= 10 * g1.fd_step

    def test_radius_check(self, toy):
        with pytest.raises(LPError, match="radius"):
            unstable_graph(toy, radius=0.5)

    def test_two_dimensional_mesh(self):
        A = np.diag([1.0, 0.5, -1.0])

        def F(t, Z):
            out = np.zeros_like(Z)
            out[:, 2] = Z[:, 0] * Z[:, 1]
            return out

        sys_ = autonomous_system(A, F, -1.0, 0.5, C1=1.0)
        g = unstable_graph(sys_, n_samples=9)
        assert sys_.rank_u == 2
        assert g.h0 <= 1e-10
        assert np.all(np.linalg.norm(g.coords, axis=1) <= g.radius * (1 + 1e-12))


class TestInvariance:
    def test_toy(self, toy):
        graph = unstable_graph(toy, radius=0.05, n_samples=21)
        report = verify_local_invariance(graph, toy, horizon=1.0)
        assert report["max_distance"] <= 1e-6
        assert report["n_evaluations"] > 0
        assert report["backward_rate"] >= graph.lam - 0.05

    def test_linear(self):
        sys_ = linear_system()
        graph = unstable_graph(sys_, radius=0.1, n_samples=11)
        report = verify_local_invariance(graph, sys_, horizon=1.0)
        assert report["max_distance"] <= 1e-15

    def test_backward_rate_linear(self):
        assert backward_rate(linear_system(), np.array([0.1, 0.0])) == pytest.approx(1.0, rel=1e-8)

    def test_horizon_limit(self, toy_graph, toy):
        with pytest.raises(ValueError):
            verify_local_invariance(toy_graph, toy, horizon=6.0)
