"""Fixed-point solver, closed-form transforms and moment integrals.

Expected values tagged by their origin: quadratic oracles reduce the
point-mass fixed point to a solvable quadratic; dominated limits follow
from the resolvent bound at huge ridge levels; finite differences check
derivative identities.
"""

import numpy as np
import pytest

from continual_ridge.regime import CovarianceScenario, Regime
from continual_ridge.spectral import (
    FixedPointError,
    JointSpectrum,
    companion_stieltjes,
    fixed_point_map,
    moment_tables,
    mp_stieltjes,
    mp_stieltjes_prime,
    primal_from_companion,
    scaled_identity_stieltjes,
    scenario_spectrum,
    stieltjes_prime_fd,
    two_block_spectrum,
)

# Positive roots of x**2 + gamma * x - 1 = 0: point-mass-at-1 fixed point
# at lam = 1 reduces to this quadratic.
TILDE_M_G1_L1 = (np.sqrt(5.0) - 1.0) / 2.0
TILDE_M_G05_L1 = (-0.5 + np.sqrt(0.25 + 4.0)) / 2.0


class TestCompanionFixedPoint:
    def test_point_mass_quadratic_oracle(self):
        """Point mass at 1, gamma=1, lam=1 solves x**2 + x - 1 = 0."""
        out = companion_stieltjes([1.0], [1.0], gamma=1.0, lam=1.0)
        assert abs(out.value - TILDE_M_G1_L1) < 1e-12
        assert out.residual <= 1e-12

    def test_point_mass_quadratic_oracle_half_gamma(self):
        """Point mass at 1, gamma=0.5, lam=1 solves x**2 + 0.5 x - 1 = 0."""
        out = companion_stieltjes([1.0], [1.0], gamma=0.5, lam=1.0)
        assert abs(out.value - TILDE_M_G05_L1) < 1e-12

    def test_dominated_limit(self):
        """At lam = 1e8 the transform is 1/lam up to relative 1e-6."""
        rng = np.random.default_rng(0)
        values = rng.uniform(0.5, 5.0, size=7)
        weights = rng.dirichlet(np.ones(7))
        out = companion_stieltjes(values, weights, gamma=1.0, lam=1e8)
        assert 1.0 - 1e-6 < out.value * 1e8 < 1.0

    def test_value_bounds_and_residual(self):
        """Solution sits in (0, 1/lam) with defect at most the tolerance."""
        for gamma in (0.6, 1.2, 2.4):
            for lam in (1e-4, 0.1, 1.0, 10.0):
                out = companion_stieltjes([0.5, 1.0, 5.0], [0.2, 0.5, 0.3],
                                          gamma=gamma, lam=lam)
                assert 0.0 < out.value < 1.0 / lam
                recomputed = abs(fixed_point_map(out.value, [0.5, 1.0, 5.0],
                                                 [0.2, 0.5, 0.3], gamma, lam)
                                 - out.value)
                assert recomputed <= 1e-12

    def test_iteration_residual_decreases(self):
        """The map is contractive: increments shrink along the iteration."""
        values, weights = [0.5, 1.0, 5.0], [0.2, 0.5, 0.3]
        gamma, lam = 1.2, 0.5
        x = 1.0 / (lam + gamma * float(np.dot(weights, values)))
        gaps = []
        for _ in range(40):
            fx = fixed_point_map(x, values, weights, gamma, lam)
            gaps.append(abs(fx - x))
            x = fx
        gaps = np.array(gaps)
        assert np.all(gaps[1:] <= gaps[:-1] + 1e-18)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            companion_stieltjes([1.0], [1.0], gamma=-1.0, lam=1.0)
        with pytest.raises(ValueError):
            companion_stieltjes([1.0], [1.0], gamma=1.0, lam=0.0)
        with pytest.raises(FixedPointError):
            companion_stieltjes([1.0], [1.0], gamma=1.0, lam=1.0, max_iter=2)


class TestPrimalFromCompanion:
    def test_matches_identity_closed_form(self):
        """Converting the solved transform reproduces the explicit formula."""
        out = companion_stieltjes([1.0], [1.0], gamma=0.5, lam=1.0)
        m = primal_from_companion(out.value, 0.5, 1.0)
        assert abs(m - mp_stieltjes(0.5, 1.0)) < 1e-12

    def test_gamma_one_is_identity_map(self):
        for lam in (0.1, 1.0, 7.5):
            assert primal_from_companion(0.37, 1.0, lam) == pytest.approx(0.37, abs=1e-15)

    def test_reciprocal_lam_fixed_point(self):
        """tilde_m = 1/lam maps to m = 1/lam for any gamma."""
        for gamma in (0.3, 1.0, 2.7):
            assert primal_from_companion(0.25, gamma, 4.0) == pytest.approx(0.25, abs=1e-15)


class TestMarchenkoPastur:
    def test_known_values(self):
        assert abs(mp_stieltjes(1.0, 1.0) - TILDE_M_G1_L1) < 1e-14
        assert abs(mp_stieltjes(0.5, 1.0) - 0.5615528128088303) < 1e-14

    @pytest.mark.parametrize("gamma", [0.6, 1.2, 2.4])
    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_quadratic_residual(self, gamma, lam):
        """The closed form satisfies its defining quadratic to 1e-12."""
        m = mp_stieltjes(gamma, lam)
        assert abs(lam * gamma * m * m + (1.0 - gamma + lam) * m - 1.0) <= 1e-12

    def test_dominated_limit(self):
        for gamma in (0.6, 1.2, 2.4):
            m = mp_stieltjes(gamma, 1e8)
            assert 1.0 - 1e-6 < m * 1e8 < 1.0

    def test_prime_known_value(self):
        assert abs(mp_stieltjes_prime(1.0, 1.0) - 1.0 / np.sqrt(5.0)) < 1e-14

    @pytest.mark.parametrize("gamma", [0.6, 1.2, 2.4])
    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_prime_central_difference(self, gamma, lam):
        """Implicit-differentiation value agrees with finite differences."""
        h = 1e-5
        fd = (mp_stieltjes(gamma, lam - h) - mp_stieltjes(gamma, lam + h)) / (2.0 * h)
        assert abs(mp_stieltjes_prime(gamma, lam) - fd) <= 1e-6

    def test_prime_dominated_limit(self):
        for gamma in (0.6, 1.2, 2.4):
            assert abs(1e16 * mp_stieltjes_prime(gamma, 1e8) - 1.0) <= 1e-5

    def test_prime_fd_helper_agrees(self):
        """Solver-based finite differences reproduce the exact derivative."""
        for gamma, lam in [(0.6, 0.5), (1.2, 1.0), (2.4, 2.0)]:
            fd = stieltjes_prime_fd([1.0], [1.0], gamma, lam)
            assert abs(fd - mp_stieltjes_prime(gamma, lam)) < 1e-7


class TestScaledIdentity:
    @pytest.mark.parametrize("gamma", [0.6, 1.2, 2.4])
    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_unit_scale_reduces_to_mp(self, gamma, lam):
        m, tilde = scaled_identity_stieltjes(1.0, gamma, lam)
        assert abs(m - mp_stieltjes(gamma, lam)) < 1e-14
        assert abs(tilde - (gamma * m + (1.0 - gamma) / lam)) < 1e-15

    def test_agrees_with_fixed_point_solver(self):
        """Closed form and solver coincide on a point mass at delta."""
        m, tilde = scaled_identity_stieltjes(2.0, 1.2, 0.5)
        solved = companion_stieltjes([2.0], [1.0], 1.2, 0.5).value
        assert abs(tilde - solved) < 1e-10

    def test_scaled_quadratic_residual(self):
        delta, gamma, lam = 0.5, 0.6, 1.0
        m, _ = scaled_identity_stieltjes(delta, gamma, lam)
        res = gamma * delta * lam * m * m + (delta * (1.0 - gamma) + lam) * m - 1.0
        assert abs(res) <= 1e-12


class TestJointSpectrum:
    def test_weight_and_positivity_validation(self):
        with pytest.raises(ValueError):
            JointSpectrum([[1.0, 1.0]], [0.5])
        with pytest.raises(ValueError):
            JointSpectrum([[1.0, -1.0]], [1.0])
        with pytest.raises(ValueError):
            JointSpectrum([[1.0, 1.0]], [-1.0, 2.0])

    def test_marginal(self):
        sp = JointSpectrum([[2.0, 3.0], [1.0, 4.0]], [0.25, 0.75])
        values, weights = sp.marginal(-1)
        np.testing.assert_array_equal(values, [3.0, 4.0])
        np.testing.assert_array_equal(weights, [0.25, 0.75])


class TestTwoBlockSpectrum:
    def test_single_task_example(self):
        """Fractions (0.3, 0.5) with block eigenvalue 5 split [0,1] into
        cells (5,5)@0.3, (1,5)@0.2, (1,1)@0.5."""
        scenario = CovarianceScenario(kind="two-block", T=2, pi=(0.3, 0.5),
                                      block_scale=5.0)
        sp = scenario_spectrum(scenario, [1], 2)
        np.testing.assert_allclose(sp.atoms, [[5.0, 5.0], [1.0, 5.0], [1.0, 1.0]])
        np.testing.assert_allclose(sp.weights, [0.3, 0.2, 0.5])

    def test_atom_count_and_marginals(self):
        """T+2 atoms; every coordinate's marginal puts mass pi_j on the block."""
        scenario = CovarianceScenario(kind="two-block", T=4,
                                      pi=(0.7, 0.1, 0.4, 0.25), block_scale=5.0)
        sp = two_block_spectrum(scenario, test_index=2)
        assert sp.atoms.shape == (6, 5)
        pis = [0.7, 0.1, 0.4, 0.25, 0.1]
        for j, pi in enumerate(pis):
            mass = sp.weights[sp.atoms[:, j] == 5.0].sum()
            assert abs(mass - pi) < 1e-12

    def test_equal_fractions_two_atoms(self):
        """Shared block fraction leaves exactly two atoms with positive weight."""
        scenario = CovarianceScenario(kind="two-block", T=3, pi=(0.4, 0.4, 0.4),
                                      block_scale=5.0)
        sp = two_block_spectrum(scenario, test_index=1)
        assert int((sp.weights > 0).sum()) == 2
        assert sp.atoms.shape[0] == 5  # zero-weight atoms retained

    def test_requires_two_block_kind(self):
        with pytest.raises(ValueError):
            two_block_spectrum(CovarianceScenario(kind="identity", T=2), 1)


class TestScenarioSpectrum:
    def test_identity_point_mass(self):
        sp = scenario_spectrum(CovarianceScenario(kind="identity", T=3), [1, 2], 3)
        np.testing.assert_array_equal(sp.atoms, np.ones((1, 3)))

    def test_isotropic_point_mass(self):
        scenario = CovarianceScenario(kind="isotropic", T=3, delta=(0.5, 2.0, 1.3))
        sp = scenario_spectrum(scenario, [1, 3], 2)
        np.testing.assert_array_equal(sp.atoms, [[0.5, 1.3, 2.0]])

    def test_explicit_diagonal_atoms(self):
        scenario = CovarianceScenario(kind="explicit-diagonal", T=2,
                                      diag=((1.0, 2.0), (3.0, 4.0)))
        sp = scenario_spectrum(scenario, [1, 2], 1)
        np.testing.assert_array_equal(sp.atoms, [[1.0, 3.0, 1.0], [2.0, 4.0, 2.0]])
        np.testing.assert_allclose(sp.weights, [0.5, 0.5])

    def test_out_of_range_task(self):
        with pytest.raises(ValueError):
            scenario_spectrum(CovarianceScenario(kind="identity", T=2), [1, 2], 3)


def _iso_moment_oracle(delta, delta0, gamma, lam):
    """Direct product evaluation of the isotropic moment integrals."""
    T = len(delta)
    tilde = np.array([scaled_identity_stieltjes(d, g, v)[1]
                      for d, g, v in zip(delta, gamma, lam)])
    e = np.array([lam[j] * (1.0 + tilde[j] * delta[j]) for j in range(T)])
    f = e * e
    a = np.empty(T); b = np.empty(T); c = np.empty(T)
    a_pair = np.zeros((T, T)); b_pair = np.zeros((T, T)); c_pair = np.zeros((T, T))
    for t in range(T):
        tail = np.prod(f[t:])
        a[t] = delta[t] * delta0 / tail
        b[t] = e[t] * delta0 / tail
        c[t] = delta0 / tail
        for l in range(t, T):
            seg = np.prod(f[t:l + 1])
            a_pair[t, l] = delta[t] * delta[l] / seg
            b_pair[t, l] = e[t] * delta[l] / seg
            c_pair[t, l] = delta[l] / seg
    return tilde, a, b, c, a_pair, b_pair, c_pair


class TestMomentTables:
    def test_identity_point_mass_algebra(self):
        """All-ones atoms give products of 1/(lam (1 + tilde_m))**2 and the
        b/a/c diagonal relations of a point mass."""
        T = 3
        regime = Regime.uniform(T, 1.2, (0.5, 1.0, 2.0))
        H = JointSpectrum(np.ones((1, T + 1)), np.ones(1))
        tilde = np.array([companion_stieltjes([1.0], [1.0], 1.2, v).value
                          for v in regime.lam])
        mom = moment_tables(H, H, tilde, regime)
        unit = 1.0 / (np.asarray(regime.lam) * (1.0 + tilde))
        for t in range(T):
            for l in range(t, T):
                np.testing.assert_allclose(mom.a_pair[t, l],
                                           np.prod(unit[t:l + 1] ** 2), rtol=1e-14)
            np.testing.assert_allclose(mom.a_pair[t, t],
                                       mom.b_pair[t, t] * unit[t], rtol=1e-14)
            np.testing.assert_allclose(mom.a_pair[t, t], mom.c_pair[t, t], rtol=0)

    def test_isotropic_closed_forms(self):
        """Moment tables match the direct product formulas to 1e-14."""
        delta = (0.5, 2.0, 1.3)
        gamma = (0.6, 1.2, 2.4)
        lam = (0.75, 1.0, 1.5)
        delta0 = 2.0
        regime = Regime(3, gamma, lam, 1.0, 1.0)
        H = JointSpectrum(np.array([[*delta, delta0]]), np.ones(1))
        tilde, a, b, c, a_pair, b_pair, c_pair = _iso_moment_oracle(
            delta, delta0, gamma, lam)
        mom = moment_tables(H, H, tilde, regime)
        np.testing.assert_allclose(mom.a, a, rtol=1e-14)
        np.testing.assert_allclose(mom.b, b, rtol=1e-14)
        np.testing.assert_allclose(mom.c, c, rtol=1e-14)
        np.testing.assert_allclose(mom.a_pair, a_pair, rtol=1e-14, atol=0)
        np.testing.assert_allclose(mom.b_pair, b_pair, rtol=1e-14, atol=0)
        np.testing.assert_allclose(mom.c_pair, c_pair, rtol=1e-14, atol=0)

    def test_weighted_equal_to_plain_gives_exact_equality(self):
        """G sharing H's atoms forces g == c exactly, not just approximately."""
        scenario = CovarianceScenario(kind="two-block", T=3, pi=(0.2, 0.6, 0.35),
                                      block_scale=5.0)
        H = two_block_spectrum(scenario, 2)
        G = JointSpectrum(H.atoms, H.weights, is_weighted=True)
        regime = Regime.uniform(3, 1.2, 1.0)
        tilde = np.array([companion_stieltjes(*H.marginal(t), 1.2, 1.0).value
                          for t in range(3)])
        mom = moment_tables(H, G, tilde, regime)
        np.testing.assert_array_equal(mom.g, mom.c)
        np.testing.assert_array_equal(mom.g_pair, mom.c_pair)

    def test_atom_order_invariance(self):
        """Moment values do not depend on how atoms are listed."""
        atoms = np.array([[5.0, 5.0, 5.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]])
        weights = np.array([0.3, 0.2, 0.5])
        regime = Regime.uniform(2, 1.2, 1.0)
        perm = [2, 0, 1]
        H1 = JointSpectrum(atoms, weights)
        H2 = JointSpectrum(atoms[perm], weights[perm])
        t1 = np.array([companion_stieltjes(*H1.marginal(t), 1.2, 1.0).value
                       for t in range(2)])
        t2 = np.array([companion_stieltjes(*H2.marginal(t), 1.2, 1.0).value
                       for t in range(2)])
        m1 = moment_tables(H1, H1, t1, regime)
        m2 = moment_tables(H2, H2, t2, regime)
        np.testing.assert_allclose(m1.a, m2.a, rtol=1e-12)
        np.testing.assert_allclose(m1.a_pair, m2.a_pair, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(m1.c_pair, m2.c_pair, rtol=1e-12, atol=1e-15)

    def test_dimension_mismatch_rejected(self):
        regime = Regime.uniform(3, 1.0, 1.0)
        H = JointSpectrum(np.ones((1, 3)), np.ones(1))
        with pytest.raises(ValueError):
            moment_tables(H, H, np.array([0.5, 0.5, 0.5]), regime)
