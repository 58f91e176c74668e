"""
Tests for the paged sparse decode simulator and the decode sweeps
"""
import os
import shutil
import sys
import tempfile
import unittest

import numpy as np

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from controllers.entropic import epsilon_for_leakage
from controllers.experiments import ablation_experiment, check_memory, scaling_experiment
from controllers.instances import build_adversarial_cache, build_planted_cache, build_tie_cache
from controllers.paged_attention import (
    build_cache,
    decode_with_fallback,
    dense_decode,
    gap_diagnostic,
    leakage_bound,
    off_candidate_mass,
    read_cache,
    route_pages,
    route_tokens,
    sparse_decode,
    write_cache,
)
from models.dictionary import UndefinedGap
from models.errors import ParameterError, SizeLimitError
from models.paged_cache import DecodeMode, DecodeStats, FallbackPolicy, RoutingConfig, SparseObjective
from utils.helpers import write_fstb


class TestCache(unittest.TestCase):
    """Test cases for the paged cache layout"""

    def test_page_summaries(self):
        """Test T = 4, B = 2 gives the two pair means"""
        keys = np.arange(8, dtype=float).reshape(4, 2)
        cache = build_cache(keys, np.ones((4, 3)), 2)
        np.testing.assert_allclose(cache.page_summaries, [[1.0, 2.0], [5.0, 6.0]])
        self.assertEqual(cache.token_count, 4)
        self.assertEqual(cache.value_dim, 3)

    def test_partial_last_page(self):
        """Test T = 5, B = 2: three pages, the last one summarised by its single row"""
        keys = np.arange(10, dtype=float).reshape(5, 2)
        cache = build_cache(keys, np.zeros((5, 1)), 2)
        self.assertEqual(cache.page_count, 3)
        np.testing.assert_allclose(cache.page_summaries[2], keys[4])
        self.assertEqual(list(cache.occupancy), [2, 2, 1])

    def test_summaries_match_naive_means(self):
        rng = np.random.default_rng(0)
        keys = rng.standard_normal((1024, 8))
        cache = build_cache(keys, rng.standard_normal((1024, 4)), 16)
        naive = keys.reshape(64, 16, 8).mean(axis=1)
        np.testing.assert_allclose(cache.page_summaries, naive, atol=1e-12)

    def test_physical_order(self):
        """Test a shuffled block table still gathers rows in logical order"""
        rng = np.random.default_rng(1)
        keys = rng.standard_normal((6, 3))
        values = rng.standard_normal((6, 2))
        cache = build_cache(keys, values, 2, physical_order=[2, 0, 1])
        np.testing.assert_array_equal(cache.keys, keys)
        np.testing.assert_array_equal(cache.gather_values([5, 0]), values[[5, 0]])
        self.assertEqual(sorted(cache.block_table.values()), [0, 1, 2])

    def test_invalid_layouts(self):
        with self.assertRaises(ParameterError):
            build_cache(np.ones((4, 2)), np.ones((3, 2)), 2)
        with self.assertRaises(ParameterError):
            build_cache(np.ones((4, 2)), np.ones((4, 2)), 0)
        with self.assertRaises(ParameterError):
            build_cache(np.ones((4, 2)), np.ones((4, 2)), 2, physical_order=[0, 0])

    def test_cache_file(self):
        """Test FSTB export and import keep keys, values and block size"""
        temp_dir = tempfile.mkdtemp()
        try:
            cache, _, _ = build_planted_cache(32, 4, 3, 8, 0.5, seed=2)
            path = os.path.join(temp_dir, "cache.fstb")
            write_cache(path, cache)
            loaded = read_cache(path)
            self.assertEqual(loaded.block_size, 8)
            np.testing.assert_array_equal(loaded.keys, cache.keys)
            np.testing.assert_array_equal(loaded.values, cache.values)

            keys_only = os.path.join(temp_dir, "keys.fstb")
            write_fstb(keys_only, cache.keys)
            with self.assertRaises(ParameterError):
                read_cache(keys_only)
        finally:
            shutil.rmtree(temp_dir)


class TestRouting(unittest.TestCase):
    """Test cases for page and token routing"""

    def setUp(self):
        keys = np.zeros((8, 2))
        keys[:, 0] = [0.1, 0.5, 0.2, 0.9, 0.3, 0.0, 0.4, 0.9]
        self.cache = build_cache(keys, np.eye(8), 1)
        self.query = np.array([1.0, 0.0])

    def test_page_tie_goes_to_lower_index(self):
        stats = DecodeStats()
        self.assertEqual(route_pages(self.cache, self.query, 1, stats), [3])
        self.assertEqual(stats.summary_reads, 8)

    def test_page_budget_is_clamped(self):
        pages = route_pages(self.cache, self.query, 20)
        self.assertEqual(sorted(pages), list(range(8)))

    def test_planted_page_ranks_first(self):
        cache, query, info = build_planted_cache(128, 8, 4, 16, 0.5, seed=3)
        self.assertEqual(route_pages(cache, query, 1)[0], info['page'])

    def test_route_tokens(self):
        stats = DecodeStats()
        tokens = route_tokens(self.cache, [0, 1, 3], self.query, 2, stats)
        self.assertEqual(list(tokens), [1, 3])
        self.assertEqual(stats.token_key_reads, 3)
        self.assertEqual(list(route_tokens(self.cache, [7, 3], self.query, 1)), [3])
        self.assertEqual(list(route_tokens(self.cache, [5, 2], self.query, 10)), [2, 5])

    def test_invalid_budgets(self):
        with self.assertRaises(ParameterError):
            route_pages(self.cache, self.query, 0)
        with self.assertRaises(ParameterError):
            route_tokens(self.cache, [0], self.query, 0)

    def test_gap_diagnostic(self):
        self.assertEqual(gap_diagnostic([3.0, 1.0, 0.0]), 2.0)
        self.assertEqual(gap_diagnostic([0.7, 0.7, 0.7]), 0.0)
        self.assertIsInstance(gap_diagnostic([1.0]), UndefinedGap)


class TestDecode(unittest.TestCase):
    """Test cases for dense, sparse and fallback decodes"""

    def test_dense_single_token(self):
        cache = build_cache([[1.0, 2.0]], [[3.0]], 4)
        output = dense_decode(cache, [0.5, -1.0], 0.1)
        np.testing.assert_allclose(output.weights, [1.0])
        self.assertEqual(output.stats.token_key_reads, 1)

    def test_dense_equal_scores(self):
        cache = build_cache([[1.0], [1.0]], [[0.0], [2.0]], 2)
        output = dense_decode(cache, [1.0], 0.3)
        np.testing.assert_allclose(output.weights, [0.5, 0.5])
        np.testing.assert_allclose(output.readout, [1.0])

    def test_dense_matches_naive_softmax(self):
        rng = np.random.default_rng(4)
        keys, values, q = rng.standard_normal((256, 8)), rng.standard_normal((256, 4)), rng.standard_normal(8)
        output = dense_decode(build_cache(keys, values, 16), q, 0.5)
        logits = keys @ q / 0.5
        naive = np.exp(logits - logits.max())
        naive /= naive.sum()
        np.testing.assert_allclose(output.readout, naive @ values, atol=1e-12)
        self.assertEqual(output.stats.value_reads, 256)

    def test_sparse_equals_dense_on_total_candidates(self):
        """Test one page holding every token reproduces the dense readout"""
        rng = np.random.default_rng(5)
        cache = build_cache(rng.standard_normal((16, 4)), rng.standard_normal((16, 3)), 16)
        q = rng.standard_normal(4)
        config = RoutingConfig(pages_p=1, candidates_kc=16, epsilon=0.2, objective="linear")
        sparse = sparse_decode(cache, q, config)
        dense = dense_decode(cache, q, 0.2)
        np.testing.assert_allclose(sparse.readout, dense.readout, atol=1e-8)
        self.assertAlmostEqual(sparse.weights.sum(), 1.0, delta=1e-8)

    def test_sparse_read_counts(self):
        cache, query, info = build_planted_cache(256, 8, 4, 16, 0.5, seed=6)
        config = RoutingConfig(pages_p=2, candidates_kc=8, epsilon=0.1)
        output = sparse_decode(cache, query, config)
        stats = output.stats
        self.assertEqual(stats.summary_reads, 16)
        self.assertEqual(stats.token_key_reads, 32)
        self.assertEqual(stats.value_reads, 8)
        self.assertIs(stats.mode, DecodeMode.SPARSE)
        self.assertIn(info['face_tokens'][0], output.weight_map)
        np.testing.assert_allclose(output.recompute_readout(cache), output.readout, atol=1e-12)
        self.assertTrue(np.all(output.weights >= 0))
        self.assertAlmostEqual(output.weights.sum(), 1.0, delta=1e-8)

    def test_linear_quality_bound(self):
        """Test ||y_sparse - y_dense|| <= 2 * m_off * max ||v|| when the face is routed"""
        cache, query, _ = build_planted_cache(256, 8, 4, 16, 0.5, seed=7)
        config = RoutingConfig(pages_p=2, candidates_kc=8, epsilon=0.1, objective=SparseObjective.LINEAR)
        sparse = sparse_decode(cache, query, config)
        dense = dense_decode(cache, query, 0.1)
        deviation = np.linalg.norm(sparse.readout - dense.readout)
        self.assertLessEqual(deviation, leakage_bound(cache, query, sparse.token_indices, 0.1) + 1e-12)
        self.assertEqual(off_candidate_mass(cache, query, np.arange(256), 0.1), 0.0)

    def test_adaptive_epsilon(self):
        """Test the temperature shrinks from the candidate gap, clamped to [eps / 4, eps]"""
        cache, query, _ = build_planted_cache(256, 8, 4, 16, 0.5, seed=7)
        fixed = sparse_decode(cache, query, RoutingConfig(pages_p=2, candidates_kc=8, epsilon=0.1, objective="linear"))
        self.assertEqual(fixed.stats.epsilon, 0.1)
        for target in (1e-6, 0.5):
            config = RoutingConfig(pages_p=2, candidates_kc=8, epsilon=0.1, objective="linear",
                                   adaptive_epsilon=True, target_leakage=target)
            output = sparse_decode(cache, query, config)
            gap = output.stats.gap_diag
            expected = min(0.1, max(epsilon_for_leakage(gap, 7, target), 0.025))
            self.assertAlmostEqual(output.stats.epsilon, expected, places=15)
            self.assertLess(output.stats.epsilon, 0.1)
            dense = dense_decode(cache, query, output.stats.epsilon)
            deviation = np.linalg.norm(output.readout - dense.readout)
            bound = leakage_bound(cache, query, output.token_indices, output.stats.epsilon)
            self.assertLessEqual(deviation, bound + 1e-12)
        with self.assertRaises(ParameterError):
            RoutingConfig(adaptive_epsilon=True, target_leakage=1.0)

    def test_adversarial_page_is_missed(self):
        cache, query, info = build_adversarial_cache(64, 8, 8, 16, seed=8)
        config = RoutingConfig(pages_p=1, candidates_kc=4, epsilon=0.1, objective="linear")
        sparse = sparse_decode(cache, query, config)
        dense = dense_decode(cache, query, 0.1)
        self.assertNotIn(info['face_tokens'][0], sparse.weight_map)
        self.assertGreater(np.linalg.norm(sparse.readout - dense.readout), 1.0)

    def test_fallback_on_tie(self):
        """Test two identical top keys force the dense path"""
        cache, query, _ = build_tie_cache(128, 8, 4, 16, seed=9)
        config = RoutingConfig(pages_p=1, candidates_kc=4, epsilon=0.1, fallback_tau=1e-6)
        output = decode_with_fallback(cache, query, config)
        self.assertTrue(output.stats.used_fallback)
        self.assertIs(output.stats.mode, DecodeMode.DENSE)
        self.assertEqual(output.stats.gap_diag, 0.0)
        np.testing.assert_array_equal(output.readout, dense_decode(cache, query, 0.1).readout)
        self.assertEqual(output.stats.summary_reads, 8)
        self.assertEqual(output.stats.token_key_reads, 16 + 128)

    def test_cap_compute_keeps_sparse_output(self):
        cache, query, _ = build_tie_cache(128, 8, 4, 16, seed=9)
        config = RoutingConfig(pages_p=1, candidates_kc=4, epsilon=0.1, fallback_tau=1e-6,
                               policy=FallbackPolicy.CAP_COMPUTE)
        output = decode_with_fallback(cache, query, config)
        self.assertFalse(output.stats.used_fallback)
        self.assertIs(output.stats.mode, DecodeMode.SPARSE)

    def test_no_fallback_with_gap(self):
        cache, query, _ = build_planted_cache(128, 8, 4, 16, 0.5, seed=10)
        config = RoutingConfig(pages_p=1, candidates_kc=4, epsilon=0.1, fallback_tau=0.01)
        output = decode_with_fallback(cache, query, config)
        self.assertFalse(output.stats.used_fallback)
        self.assertAlmostEqual(output.stats.gap_diag, 0.5, delta=1e-9)

    def test_zero_tau_never_falls_back(self):
        cache, query, _ = build_tie_cache(128, 8, 4, 16, seed=11)
        config = RoutingConfig(pages_p=1, candidates_kc=4, epsilon=0.1, fallback_tau=0.0)
        self.assertFalse(decode_with_fallback(cache, query, config).stats.used_fallback)

    def test_invalid_config(self):
        with self.assertRaises(ParameterError):
            RoutingConfig(pages_p=0)
        with self.assertRaises(ParameterError):
            RoutingConfig(fallback_tau=-1.0)
        self.assertEqual(RoutingConfig(solver="fw").to_dict()['solver'], "fw")


class TestSweeps(unittest.TestCase):
    """Test cases for the context-length and routing-budget sweeps"""

    def test_sparse_reads_constant_in_context(self):
        config = RoutingConfig(pages_p=2, candidates_kc=8, epsilon=0.1, objective="linear")
        rows = scaling_experiment([64, 128, 256], config, seed=0, d=8, d_v=8)
        self.assertEqual([row['dense_token_reads'] for row in rows], [64, 128, 256])
        self.assertEqual({row['sparse_token_reads'] for row in rows}, {32})
        self.assertEqual({row['sparse_value_reads'] for row in rows}, {8})
        self.assertEqual([row['summary_reads'] for row in rows], [4, 8, 16])

    def test_threads_keep_order(self):
        config = RoutingConfig(pages_p=1, candidates_kc=4, epsilon=0.1, objective="linear")
        serial = scaling_experiment([32, 64], config, seed=1, d=4, d_v=4)
        threaded = scaling_experiment([32, 64], config, seed=1, d=4, d_v=4, threads=2)
        self.assertEqual(serial, threaded)

    def test_ablation_reads(self):
        """Test token reads follow P * B and do not depend on the solver"""
        config = RoutingConfig(epsilon=0.1, solver_iters=500)
        rows = ablation_experiment([1, 2], [4, 8], ["eg", "fw"], 64, config, seed=0, d=8, d_v=8)
        self.assertEqual(len(rows), 8)
        for row in rows:
            self.assertEqual(row['token_reads'], 16 * row['P'])
            self.assertEqual(row['value_reads'], row['Kc'])
        by_cell = {}
        for row in rows:
            by_cell.setdefault((row['P'], row['Kc']), set()).add((row['token_reads'], row['value_reads']))
        self.assertTrue(all(len(reads) == 1 for reads in by_cell.values()))

    def test_memory_guard(self):
        self.assertEqual(check_memory(100, 8, 8, 1600), 1600)
        with self.assertRaises(SizeLimitError):
            check_memory(101, 8, 8, 1600)
        with self.assertRaises(SizeLimitError):
            scaling_experiment([], RoutingConfig())


if __name__ == "__main__":
    unittest.main()
