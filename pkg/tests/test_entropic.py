"""
Tests for the entropic solver, Frank-Wolfe and the epsilon prescription
"""
import math
import os
import sys
import unittest

import numpy as np
from scipy.optimize import brentq

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from controllers.entropic import (
    epsilon_for_leakage,
    frank_wolfe,
    fw_certificate,
    fw_gap,
    leakage_mass,
    prescribe_epsilon,
    pseudo_multipliers,
    screen_and_certify,
    solution_record,
    solve_entropic,
)
from controllers.geometry import project_onto_hull
from controllers.instances import generate_instance
from models.dictionary import Dictionary, SimplexWeights
from models.entropic import EntropicConfig, SolverKind, StepRule
from models.errors import ParameterError


class TestSolveEntropic(unittest.TestCase):
    """Test cases for the entropic-regularized projection"""

    def setUp(self):
        """Two-atom edge with alpha* = (0.25, 0.75) and derivative (log 3, -log 3)"""
        self.edge = Dictionary.from_rows([[0.0, 1.0], [1.0, 1.0]])
        self.query = np.array([0.75, 2.0])
        self.alpha_star = np.array([0.25, 0.75])
        self.alpha_dot = np.array([math.log(3.0), -math.log(3.0)])

    def test_first_order_expansion(self):
        """Test alpha_eps follows alpha* + eps * alpha_dot for small eps"""
        epsilon = 1e-3
        solution = solve_entropic(self.edge, self.query, EntropicConfig(epsilon=epsilon, gap_tol=1e-13))
        self.assertTrue(solution.converged)
        expected = self.alpha_star + epsilon * self.alpha_dot
        np.testing.assert_allclose(solution.alpha.weights, expected, atol=1e-4)
        self.assertAlmostEqual(solution.alpha.weights.sum(), 1.0, places=12)
        self.assertLessEqual(solution.stationarity_residual, 1e-10)

    def test_large_epsilon_is_uniform(self):
        """Test eps = 1e6 leaves the barycenter of the simplex"""
        solution = solve_entropic(self.edge, self.query, EntropicConfig(epsilon=1e6))
        np.testing.assert_allclose(solution.alpha.weights, [0.5, 0.5], atol=1e-6)
        rng = np.random.default_rng(2)
        dictionary = Dictionary(rng.standard_normal((3, 10)))
        solution = solve_entropic(dictionary, rng.standard_normal(3), EntropicConfig(epsilon=1e6))
        np.testing.assert_allclose(solution.alpha.weights, np.full(10, 0.1), atol=1e-5)

    def test_segment_matches_scalar_solve(self):
        """Test q = 2 on the segment {0, 1} against a root of (1 + t) + eps * log(t / (1 - t)) = 0"""
        segment = Dictionary([[0.0, 1.0]])
        epsilon = 0.1
        t = brentq(lambda s: 1.0 + s + epsilon * (math.log(s) - math.log1p(-s)), 1e-300, 0.5, xtol=1e-300)
        solution = solve_entropic(segment, [2.0], EntropicConfig(epsilon=epsilon, gap_tol=1e-12))
        self.assertAlmostEqual(solution.alpha.weights[1], 1.0 - t, delta=1e-10)
        self.assertAlmostEqual(solution.alpha.weights[0] / t, 1.0, delta=1e-4)

    def test_pseudo_multiplier_tends_to_exact(self):
        """Test mu_eps of the off-face atom approaches mu* = 1 as eps halves"""
        segment = Dictionary([[0.0, 1.0]])
        errors = []
        for epsilon in (0.2, 0.1, 0.05, 0.025):
            solution = solve_entropic(segment, [2.0], EntropicConfig(epsilon=epsilon, gap_tol=1e-12))
            error = abs(pseudo_multipliers(solution)[0] - 1.0)
            self.assertLessEqual(error, epsilon)
            errors.append(error)
        self.assertEqual(errors, sorted(errors, reverse=True))
        self.assertLess(errors[-1], 1e-6)

    def test_solver_paths_agree(self):
        """Test exponentiated gradient, line search and Frank-Wolfe reach the same weights"""
        rng = np.random.default_rng(5)
        dictionary = Dictionary(rng.standard_normal((4, 10)))
        query = 2.0 * rng.standard_normal(4)
        configs = [
            EntropicConfig(epsilon=0.05, gap_tol=1e-12),
            EntropicConfig(epsilon=0.05, gap_tol=1e-12, step_rule=StepRule.LINE_SEARCH),
            EntropicConfig(epsilon=0.05, gap_tol=1e-12, solver="fw"),
        ]
        weights = [solve_entropic(dictionary, query, config).alpha.weights for config in configs]
        np.testing.assert_allclose(weights[1], weights[0], atol=1e-6)
        np.testing.assert_allclose(weights[2], weights[0], atol=1e-6)

    def test_warm_start(self):
        config = EntropicConfig(epsilon=0.01, gap_tol=1e-12)
        cold = solve_entropic(self.edge, self.query, config)
        warm = solve_entropic(self.edge, self.query, config, warm_start=[0.3, 0.7])
        np.testing.assert_allclose(warm.alpha.weights, cold.alpha.weights, atol=1e-8)

    def test_pseudo_multipliers_below_floor(self):
        """Test mu_eps = -eps log alpha stays exact when the weight underflows"""
        segment = Dictionary([[0.0, 1.0]])
        solution = solve_entropic(segment, [2.0], EntropicConfig(epsilon=1e-3, gap_tol=1e-12))
        self.assertTrue(solution.saturated[0])
        self.assertGreater(solution.alpha.weights[0], 0.0)
        mu = pseudo_multipliers(solution)
        self.assertAlmostEqual(mu[0], 1.0, delta=1e-3)
        self.assertAlmostEqual(mu[1], 0.0, delta=1e-3)

    def test_underflow_regime_flag(self):
        config = EntropicConfig(epsilon=1e-4, gap_hint=1.0)
        solution = solve_entropic(Dictionary([[0.0, 1.0]]), [2.0], config)
        self.assertTrue(solution.underflow_regime)

    def test_leakage_mass(self):
        dictionary = Dictionary([[0.0, 1.0, 3.0]])
        solution = solve_entropic(dictionary, [4.0], EntropicConfig(epsilon=0.5))
        expected = float(solution.alpha.weights[:2].sum())
        self.assertAlmostEqual(leakage_mass(solution, [2]), expected, places=12)
        self.assertEqual(leakage_mass(solution, [0, 1, 2]), 0.0)

    def test_solution_record(self):
        solution = solve_entropic(self.edge, self.query, EntropicConfig(epsilon=0.1))
        record = solution_record(solution, 0.0)
        for key in ('epsilon', 'iters', 'dual_gap', 'leakage_mass', 'converged'):
            self.assertIn(key, record)

    def test_invalid_config(self):
        with self.assertRaises(ParameterError):
            EntropicConfig(epsilon=0.0)
        with self.assertRaises(ParameterError):
            EntropicConfig(gap_tol=-1.0)
        self.assertIs(EntropicConfig(solver="eg").solver, SolverKind.EXPONENTIATED_GRADIENT)


class TestFrankWolfe(unittest.TestCase):
    """Test cases for Frank-Wolfe, its gap and the distance certificate"""

    def setUp(self):
        self.edge = Dictionary.from_rows([[0.0, 1.0], [1.0, 1.0]])
        self.query = np.array([0.75, 2.0])

    def test_converges_on_edge(self):
        gaps = []
        result = frank_wolfe(self.edge, self.query, gap_tol=1e-12,
                             callback=lambda iteration, alpha, gap: gaps.append(gap))
        self.assertTrue(result.converged)
        np.testing.assert_allclose(result.alpha.weights, [0.25, 0.75], atol=1e-6)
        self.assertEqual(len(gaps), result.iters + 1)

    def test_gap_bounds_suboptimality(self):
        """Test f(alpha_t) - f(alpha*) <= g_t on every Frank-Wolfe iterate"""
        instance = generate_instance("planted-face", seed=4)
        dictionary, query = instance.dictionary, instance.query
        optimum = project_onto_hull(dictionary, query).objective
        checked = []

        def record(iteration, alpha, gap):
            residual = dictionary.combine(alpha.weights) - query
            checked.append(0.5 * float(residual @ residual) - optimum <= gap + 1e-12)

        frank_wolfe(dictionary, query, max_iters=500, gap_tol=1e-10, callback=record)
        self.assertGreater(len(checked), 1)
        self.assertTrue(all(checked))

    def test_fw_gap(self):
        self.assertAlmostEqual(fw_gap(self.edge, self.query, [0.25, 0.75]), 0.0, places=12)
        self.assertAlmostEqual(fw_gap(self.edge, self.query, SimplexWeights([0.5, 0.5])), 0.125, places=12)

    def test_certificate_bounds_distance(self):
        """Test sqrt(2 g / mu_F) covers the true distance on the edge"""
        certificate = fw_certificate(self.edge, self.query, SimplexWeights([0.5, 0.5]), [0, 1])
        self.assertTrue(certificate.valid)
        self.assertAlmostEqual(certificate.gap, 0.125)
        self.assertAlmostEqual(certificate.mu_face, 0.5)
        self.assertAlmostEqual(certificate.distance_bound, math.sqrt(0.5))
        distance = np.linalg.norm(np.array([0.5, 0.5]) - np.array([0.25, 0.75]))
        self.assertLessEqual(distance, certificate.distance_bound)

    def test_certificate_off_face_is_invalid(self):
        dictionary = Dictionary.from_rows([[0.0, 1.0], [1.0, 1.0], [5.0, 5.0]])
        certificate = fw_certificate(dictionary, [0.75, 2.0], SimplexWeights([0.4, 0.4, 0.2]), [0, 1])
        self.assertFalse(certificate.valid)
        self.assertTrue(math.isinf(certificate.distance_bound))

    def test_screen_and_certify(self):
        """Test the screening loop certifies a planted instance"""
        instance = generate_instance("planted-face", seed=3)
        result = screen_and_certify(instance.dictionary, instance.query, initial_size=4, gap_tol=1e-8)
        exact = project_onto_hull(instance.dictionary, instance.query)
        self.assertTrue(result.certified)
        self.assertLessEqual(result.full_gap, 1e-8)
        readout = instance.dictionary.combine(result.alpha.weights)
        self.assertLessEqual(np.linalg.norm(readout - exact.readout), 1e-3)

    def test_screen_rejects_bad_growth(self):
        with self.assertRaises(ParameterError):
            screen_and_certify(self.edge, self.query, growth=1.0)


class TestPrescription(unittest.TestCase):
    """Test cases for the epsilon prescription and the leakage heuristic"""

    def test_linear_branch_binds(self):
        self.assertAlmostEqual(prescribe_epsilon(1.0, 1.0, 1.0, 0.1), 0.05)

    def test_exponential_branch_binds(self):
        expected = 1.0 / (2.0 * math.log(2000.0))
        self.assertAlmostEqual(prescribe_epsilon(0.01, 100.0, 1.0, 0.1), expected)

    def test_vacuous_exponential_branch(self):
        """Test 2 C_exp / eta <= e returns the linear branch alone"""
        self.assertAlmostEqual(prescribe_epsilon(1.0, 0.1, 1.0, 0.1), 0.05)

    def test_documented_examples(self):
        self.assertAlmostEqual(prescribe_epsilon(1.0, 1.0, 1.0, 0.2), 0.1)
        self.assertAlmostEqual(prescribe_epsilon(10.0, 100.0, 0.5, 0.1), 0.005)

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            prescribe_epsilon(0.0, 1.0, 1.0, 0.1)
        with self.assertRaises(ParameterError):
            prescribe_epsilon(1.0, 0.0, 1.0, 0.1)
        with self.assertRaises(ParameterError):
            prescribe_epsilon(-1.0, 1.0, 1.0, 0.1)
        with self.assertRaises(ParameterError):
            prescribe_epsilon(1.0, 1.0, 0.0, 0.1)
        with self.assertRaises(ParameterError):
            prescribe_epsilon(1.0, 1.0, 1.0, 0.0)

    def test_epsilon_for_leakage(self):
        self.assertAlmostEqual(epsilon_for_leakage(1.0, 10, 1e-3), 1.0 / (2.0 * math.log(1e4)))
        self.assertTrue(math.isinf(epsilon_for_leakage(1.0, 0, 1e-3)))
        with self.assertRaises(ParameterError):
            epsilon_for_leakage(0.0, 10, 1e-3)


if __name__ == "__main__":
    unittest.main()
