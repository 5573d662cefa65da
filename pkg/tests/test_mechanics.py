import math

import numpy as np
import pytest

from frostsim import mechanics as mech
from frostsim.errors import InvalidParametersError
from frostsim.mesh import BoundaryTag, generate_rectangle


class TestBiot:
    def test_reference_values(self):
        assert mech.biot_coefficient(0.0) == 0.0
        assert mech.biot_coefficient(1.0) == 1.0
        assert mech.biot_coefficient(0.35) == pytest.approx(14.0 / 27.0,
                                                            rel=1e-14)

    def test_out_of_range(self):
        with pytest.raises(InvalidParametersError):
            mech.biot_coefficient(-0.01)
        with pytest.raises(InvalidParametersError):
            mech.biot_coefficient(1.01)


class TestElasticStiffness:
    def test_reference_matrix(self):
        D = mech.elastic_stiffness(1e10, 0.2)
        c = 1e10 / (1.2 * 0.6)
        np.testing.assert_allclose(D, c * np.array([[0.8, 0.2, 0.0],
                                                    [0.2, 0.8, 0.0],
                                                    [0.0, 0.0, 0.3]]),
                                   rtol=1e-14)
        # shear entry is the shear modulus E / (2 (1 + nu))
        assert D[2, 2] == pytest.approx(1e10 / 2.4, rel=1e-14)

    def test_zero_poisson(self):
        D = mech.elastic_stiffness(2.0, 0.0)
        np.testing.assert_allclose(D, np.diag([2.0, 2.0, 1.0]), atol=1e-15)
        assert D[0, 1] == 0.0

    def test_positive_definite_across_admissible_range(self):
        for nu in (-0.9, -0.3, 0.0, 0.3, 0.49):
            D = mech.elastic_stiffness(1.0, nu)
            np.testing.assert_allclose(D, D.T)
            assert np.all(np.linalg.eigvalsh(D) > 0.0)

    def test_validation(self):
        with pytest.raises(InvalidParametersError):
            mech.elastic_stiffness(0.0, 0.2)
        with pytest.raises(InvalidParametersError):
            mech.elastic_stiffness(1e10, 0.5)
        with pytest.raises(InvalidParametersError):
            mech.elastic_stiffness(1e10, -1.0)


class TestEquivalentStrain:
    def test_uniaxial_tension(self):
        assert mech.mazars_equivalent_strain([1e-3, 0.0, 0.0]) \
            == pytest.approx(1e-3, rel=1e-14)

    def test_biaxial_tension(self):
        assert mech.mazars_equivalent_strain([1e-3, 1e-3, 0.0]) \
            == pytest.approx(math.sqrt(2.0) * 1e-3, rel=1e-14)

    def test_compression_is_inert(self):
        assert mech.mazars_equivalent_strain([-1e-3, -2e-3, 0.0]) == 0.0

    def test_pure_shear(self):
        # engineering shear gamma splits into principals +/- gamma / 2
        assert mech.mazars_equivalent_strain([0.0, 0.0, 2e-3]) \
            == pytest.approx(1e-3, rel=1e-14)

    def test_mixed_state_drops_compressive_principal(self):
        assert mech.mazars_equivalent_strain([1e-3, -1e-3, 0.0]) \
            == pytest.approx(1e-3, rel=1e-14)

    def test_positive_homogeneity(self):
        eps = np.array([3e-4, -1e-4, 5e-4])
        one = mech.mazars_equivalent_strain(eps)
        two = mech.mazars_equivalent_strain(2.0 * eps)
        assert two == pytest.approx(2.0 * one, rel=1e-14)

    def test_batched_shape(self):
        batch = np.zeros((4, 7, 3))
        batch[..., 0] = 1e-3
        out = mech.mazars_equivalent_strain(batch)
        assert out.shape == (4, 7)
        np.testing.assert_allclose(out, 1e-3, rtol=1e-14)


class TestDamageFunction:
    def test_endpoints_and_midpoint(self):
        assert mech.damage_function(2.5e-4, 2.5e-4, 2.5e-3) == 0.0
        assert mech.damage_function(2.5e-3, 2.5e-4, 2.5e-3) == 1.0
        mid = 0.5 * (2.5e-4 + 2.5e-3)
        assert mech.damage_function(mid, 2.5e-4, 2.5e-3) \
            == pytest.approx(0.5, rel=1e-14)

    def test_clamped_outside(self):
        assert mech.damage_function(0.0, 2.5e-4, 2.5e-3) == 0.0
        assert mech.damage_function(1.0, 2.5e-4, 2.5e-3) == 1.0

    def test_monotone(self):
        kappa = np.linspace(0.0, 5e-3, 200)
        d = mech.damage_function(kappa, 2.5e-4, 2.5e-3)
        assert np.all(np.diff(d) >= 0.0)
        assert isinstance(mech.damage_function(1e-3, 2.5e-4, 2.5e-3), float)

    def test_validation(self):
        with pytest.raises(InvalidParametersError):
            mech.damage_function(0.0, 2.5e-3, 2.5e-4)
        with pytest.raises(InvalidParametersError):
            mech.damage_function(0.0, 0.0, 2.5e-3)


class TestNonlocalAverager:
    def test_constant_field_is_fixed_point(self, lshape_coarse):
        avg = mech.NonlocalAverager(lshape_coarse, 0.07)
        field = np.full(lshape_coarse.num_elements, 3.7)
        np.testing.assert_allclose(avg(field), 3.7, rtol=1e-12)

    def test_rows_sum_to_one(self, lshape_coarse):
        avg = mech.NonlocalAverager(lshape_coarse, 0.15)
        sums = np.asarray(avg.weights.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 1.0, rtol=1e-12)

    def test_short_length_is_identity(self, lshape_coarse):
        avg = mech.NonlocalAverager(lshape_coarse, 1e-9)
        rng = np.random.default_rng(7)
        field = rng.normal(size=lshape_coarse.num_elements)
        # self-weight normalization a * (1 / a) can be one ulp off
        np.testing.assert_allclose(avg(field), field, rtol=5e-16)

    def test_two_element_closed_form(self):
        mesh = generate_rectangle(1.0, 1.0, 1, 1)
        assert mesh.num_elements == 2
        length = 0.25
        d2 = np.sum((mesh.centroids[0] - mesh.centroids[1]) ** 2)
        assert math.sqrt(d2) < 3.0 * length
        w = math.exp(-d2 / (2.0 * length ** 2))
        a0, a1 = mesh.areas
        v = np.array([1.0, 4.0])
        expect = np.array([
            (a0 * v[0] + w * a1 * v[1]) / (a0 + w * a1),
            (w * a0 * v[0] + a1 * v[1]) / (w * a0 + a1),
        ])
        got = mech.nonlocal_average(v, mesh, length)
        np.testing.assert_allclose(got, expect, rtol=1e-13)

    def test_smoothing_contracts_range(self, lshape_coarse):
        rng = np.random.default_rng(3)
        field = rng.uniform(0.0, 1.0, lshape_coarse.num_elements)
        out = mech.NonlocalAverager(lshape_coarse, 0.2)(field)
        assert out.min() > field.min()
        assert out.max() < field.max()
        assert np.ptp(out) < 0.8 * np.ptp(field)

    def test_validation(self, lshape_coarse):
        with pytest.raises(InvalidParametersError):
            mech.NonlocalAverager(lshape_coarse, 0.0)


class TestMechParams:
    def test_derived_quantities(self):
        p = mech.MechParams()
        assert p.eps_0 == pytest.approx(2.5e-4, rel=1e-14)
        assert p.biot == pytest.approx(14.0 / 27.0, rel=1e-14)

    def test_infinite_strength_allowed(self):
        p = mech.MechParams(f_t=math.inf)
        assert not np.isfinite(p.eps_0)

    def test_validation(self):
        with pytest.raises(InvalidParametersError):
            mech.MechParams(E=-1.0)
        with pytest.raises(InvalidParametersError):
            mech.MechParams(f_t=0.0)
        with pytest.raises(InvalidParametersError):
            mech.MechParams(f_t=5e7)        # eps_0 would pass eps_f
        with pytest.raises(InvalidParametersError):
            mech.MechParams(residual_stiffness=0.0)
        with pytest.raises(InvalidParametersError):
            mech.MechParams(l_intl=0.0)


class TestProblemSetup:
    def test_supports_come_from_edge_tags(self, lshape_coarse):
        prob = mech.MechanicsProblem(lshape_coarse, mech.MechParams())
        a_nodes = lshape_coarse.nodes_with_tag(BoundaryTag.A)
        b_nodes = lshape_coarse.nodes_with_tag(BoundaryTag.B)
        expect = set(2 * a_nodes) | set(2 * b_nodes + 1)
        assert set(prob.constraint_dofs.tolist()) == expect
        assert np.all(prob.constraint_values == 0.0)

    def test_rejects_underconstrained_supports(self, unit_triangle):
        with pytest.raises(InvalidParametersError, match="3 constrained"):
            mech.MechanicsProblem(unit_triangle, mech.MechParams(),
                                  constraints=(np.array([0, 1]),
                                               np.zeros(2)))

    def test_mesh_without_support_tags_rejected(self):
        mesh = generate_rectangle(1.0, 1.0, 2, 2)   # everything tagged EXT
        with pytest.raises(InvalidParametersError):
            mech.MechanicsProblem(mesh, mech.MechParams())

    def test_element_matrices_hand_assembled(self, unit_triangle):
        prob = mech.MechanicsProblem(unit_triangle, mech.MechParams(),
                                     constraints=(np.array([0, 1, 3]),
                                                  np.zeros(3)))
        gx = np.array([-1.0, 1.0, 0.0])
        gy = np.array([-1.0, 0.0, 1.0])
        B = np.zeros((3, 6))
        B[0, 0::2] = gx
        B[1, 1::2] = gy
        B[2, 0::2] = gy
        B[2, 1::2] = gx
        np.testing.assert_allclose(prob.B[0], B, atol=1e-15)
        D = mech.elastic_stiffness(1e10, 0.2)
        np.testing.assert_allclose(prob.KE[0], 0.5 * B.T @ D @ B, rtol=1e-13)

    def test_strain_recovery_from_linear_displacement(self, lshape_coarse):
        prob = mech.MechanicsProblem(lshape_coarse, mech.MechParams())
        a, b, c = 3e-4, -2e-4, 5e-4
        u = np.zeros(2 * lshape_coarse.num_nodes)
        x, y = lshape_coarse.nodes[:, 0], lshape_coarse.nodes[:, 1]
        u[0::2] = a * x + c * y
        u[1::2] = b * y
        eps = prob.strains(u)
        np.testing.assert_allclose(eps[:, 0], a, rtol=1e-12)
        np.testing.assert_allclose(eps[:, 1], b, rtol=1e-12)
        np.testing.assert_allclose(eps[:, 2], c, rtol=1e-12)


class TestEquilibrium:
    @pytest.fixture()
    def rigid(self):
        # damage disabled: the responses below stay linear
        return mech.MechParams(f_t=math.inf)

    def test_free_thermal_expansion_is_stress_free(self, lshape_coarse,
                                                   rigid):
        prob = mech.MechanicsProblem(lshape_coarse, rigid)
        d_theta = 10.0
        theta = np.full(lshape_coarse.num_nodes, 14.0 + d_theta)
        state = prob.solve(theta=theta, theta_ref=14.0)
        assert state.converged

        g = rigid.alpha * d_theta
        x, y = lshape_coarse.nodes[:, 0], lshape_coarse.nodes[:, 1]
        exact = np.zeros_like(state.u)
        exact[0::2] = g * (x - 1.0)
        exact[1::2] = g * (y - 1.0)
        np.testing.assert_allclose(state.u, exact, atol=1e-12 * g)

        sigma = prob.effective_stress(state.u, state.d_w, theta=theta,
                                      theta_ref=14.0)
        assert np.max(np.abs(sigma)) < 1e-3   # Pa, against E alpha dT ~ 1e6

    def test_cooling_contraction_never_damages(self, lshape_coarse):
        prob = mech.MechanicsProblem(lshape_coarse, mech.MechParams())
        theta = np.full(lshape_coarse.num_nodes, -20.0)
        state = prob.solve(theta=theta, theta_ref=14.0)
        assert state.converged
        np.testing.assert_array_equal(state.d_w, 0.0)
        np.testing.assert_array_equal(state.kappa, 0.0)

    def test_uniform_pore_pressure_closed_form(self, lshape_coarse, rigid):
        prob = mech.MechanicsProblem(lshape_coarse, rigid)
        p = 1e6
        p_p = np.full(lshape_coarse.num_elements, p)
        state = prob.solve(p_p=p_p)
        assert state.converged and state.iterations == 1

        # b p i is an eigenload: eps = b p / c * {1, 1, 0} with the
        # plane strain modulus c = E / ((1 + nu)(1 - 2 nu))
        c = rigid.E / ((1.0 + rigid.nu) * (1.0 - 2.0 * rigid.nu))
        g = rigid.biot * p / c
        eps = prob.strains(state.u)
        np.testing.assert_allclose(eps[:, :2], g, rtol=1e-9)
        np.testing.assert_allclose(eps[:, 2], 0.0, atol=1e-12 * g)
        x, y = lshape_coarse.nodes[:, 0], lshape_coarse.nodes[:, 1]
        exact = np.zeros_like(state.u)
        exact[0::2] = g * (x - 1.0)
        exact[1::2] = g * (y - 1.0)
        np.testing.assert_allclose(state.u, exact, atol=1e-10 * g)

    def test_linearity_without_damage(self, lshape_coarse, rigid):
        prob = mech.MechanicsProblem(lshape_coarse, rigid)
        p_p = np.full(lshape_coarse.num_elements, 2e6)
        theta = np.full(lshape_coarse.num_nodes, 20.0)
        u_p = prob.solve(p_p=p_p).u
        u_t = prob.solve(theta=theta, theta_ref=14.0).u
        u_both = prob.solve(theta=theta, theta_ref=14.0, p_p=p_p).u
        np.testing.assert_allclose(u_both, u_p + u_t, rtol=1e-11)
        u_2p = prob.solve(p_p=2.0 * p_p).u
        np.testing.assert_allclose(u_2p, 2.0 * u_p, rtol=1e-11)

    def test_damage_fixed_point_on_uniform_load(self, lshape_coarse):
        params = mech.MechParams()
        prob = mech.MechanicsProblem(lshape_coarse, params)
        p = 6e6
        state = prob.solve(p_p=np.full(lshape_coarse.num_elements, p))
        assert state.converged
        assert np.all(state.d_w > 0.0)
        # uniform response: f c eps = b p with f = 1 - d, so d solves
        # delta d^2 - (delta - eps_0) d + (A - eps_0) = 0,
        # A = sqrt(2) b p / c
        c = params.E / ((1.0 + params.nu) * (1.0 - 2.0 * params.nu))
        A = math.sqrt(2.0) * params.biot * p / c
        delta = params.eps_f - params.eps_0
        disc = (delta - params.eps_0) ** 2 - 4.0 * delta * (A - params.eps_0)
        root = ((delta - params.eps_0) - math.sqrt(disc)) / (2.0 * delta)
        np.testing.assert_allclose(state.d_w, root, atol=5e-4)

    def test_damage_irreversible_on_unload(self, lshape_coarse):
        params = mech.MechParams()
        prob = mech.MechanicsProblem(lshape_coarse, params)
        loaded = prob.solve(p_p=np.full(lshape_coarse.num_elements, 6e6))
        assert loaded.d_w.max() > 0.0

        unloaded = prob.solve(p_p=None, prev=loaded)
        np.testing.assert_array_equal(unloaded.kappa, loaded.kappa)
        np.testing.assert_array_equal(unloaded.d_w, loaded.d_w)
        assert np.max(np.abs(unloaded.u)) < 1e-3 * np.max(np.abs(loaded.u))

        reloaded = prob.solve(p_p=np.full(lshape_coarse.num_elements, 7e6),
                              prev=unloaded)
        assert np.all(reloaded.d_w >= unloaded.d_w - 1e-15)
        assert reloaded.d_w.max() > unloaded.d_w.max()

    def test_zero_load_is_zero_state(self, lshape_coarse):
        prob = mech.MechanicsProblem(lshape_coarse, mech.MechParams())
        state = prob.solve()
        assert state.converged
        np.testing.assert_allclose(state.u, 0.0, atol=1e-16)
        np.testing.assert_array_equal(state.d_w, 0.0)

    def test_effective_stress_of_known_strain(self, lshape_coarse):
        params = mech.MechParams()
        prob = mech.MechanicsProblem(lshape_coarse, params)
        x = lshape_coarse.nodes[:, 0]
        u = np.zeros(2 * lshape_coarse.num_nodes)
        u[0::2] = 1e-4 * x
        sigma = prob.effective_stress(u, np.zeros(lshape_coarse.num_elements))
        D = mech.elastic_stiffness(params.E, params.nu)
        expect = np.tile(D @ [1e-4, 0.0, 0.0],
                         (lshape_coarse.num_elements, 1))
        np.testing.assert_allclose(sigma, expect, rtol=1e-11, atol=1e-9)
        # half-damaged elements carry half the stress
        half = prob.effective_stress(
            u, np.full(lshape_coarse.num_elements, 0.5))
        np.testing.assert_allclose(half, 0.5 * sigma, rtol=1e-12)

    def test_wrapper_matches_problem_solve(self, lshape_coarse):
        p_p = np.full(lshape_coarse.num_elements, 3e6)
        via_wrapper = mech.solve_equilibrium(
            lshape_coarse, None, 0.0, p_p, None, mech.MechParams())
        direct = mech.MechanicsProblem(lshape_coarse,
                                       mech.MechParams()).solve(p_p=p_p)
        np.testing.assert_array_equal(via_wrapper.u, direct.u)
        np.testing.assert_array_equal(via_wrapper.d_w, direct.d_w)

    def test_zero_state_shapes(self, lshape_coarse):
        state = mech.MechState.zero(lshape_coarse)
        assert state.u.shape == (2 * lshape_coarse.num_nodes,)
        assert state.kappa.shape == (lshape_coarse.num_elements,)
        assert state.d_w.shape == (lshape_coarse.num_elements,)
        assert state.converged
