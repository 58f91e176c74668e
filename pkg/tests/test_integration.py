"""
Integration tests for the command-line workflow
"""
import csv
import json
import os
import shutil
import sys
import tempfile
import unittest

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.helpers import sha256_file
from views.cli import (
    EXIT_FAILED,
    EXIT_OK,
    CommandResult,
    load_config_file,
    main,
    make_run_config,
    parse_overrides,
)
from models.errors import ParameterError
from models.reports import CheckStatus


class TestCommandLine(unittest.TestCase):
    """End-to-end runs of the facestab commands"""

    def setUp(self):
        """Set up a scratch output directory"""
        self.temp_dir = tempfile.mkdtemp()
        self.out = os.path.join(self.temp_dir, "run")

    def tearDown(self):
        """Clean up the scratch directory"""
        shutil.rmtree(self.temp_dir)

    def _main(self, *args):
        return main(list(args) + ["--output-dir", self.out, "--quiet"])

    def _json(self, name):
        with open(os.path.join(self.out, name), encoding='utf-8') as f:
            return json.load(f)

    def _csv(self, name):
        with open(os.path.join(self.out, name), newline='', encoding='utf-8') as f:
            return list(csv.DictReader(f))

    def test_degenerate_workflow(self):
        """Test the tie demo writes its table, summary and a checksummed manifest"""
        status = self._main("degenerate", "--epsilons", "1,0.1,0.01", "--deltas", "0.01")
        self.assertEqual(status, EXIT_OK)
        rows = self._csv("degenerate.csv")
        self.assertEqual(len(rows), 3 + 3 + 3)
        self.assertTrue(all(row['status'] == "pass" for row in rows))
        manifest = self._json("manifest.json")
        self.assertEqual(manifest['command'], "degenerate")
        self.assertEqual(manifest['artifacts']['degenerate.csv'],
                         sha256_file(os.path.join(self.out, "degenerate.csv")))
        self.assertEqual(self._json("summary.json")['exit_status'], EXIT_OK)

    def test_reruns_are_identical(self):
        self._main("degenerate", "--epsilons", "0.5,0.05")
        first = sha256_file(os.path.join(self.out, "degenerate.csv"))
        self._main("degenerate", "--epsilons", "0.5,0.05")
        self.assertEqual(sha256_file(os.path.join(self.out, "degenerate.csv")), first)

    def test_project_generated_instance(self):
        status = self._main("project", "--m", "6", "--d", "3", "--seed", "4")
        self.assertEqual(status, EXIT_OK)
        record = self._json("projection.json")
        self.assertLessEqual(record['oracle_distance'], 1e-7)
        self.assertLessEqual(record['kkt_residual'], 1e-8)

    def test_project_input_file(self):
        path = os.path.join(self.temp_dir, "edge.csv")
        with open(path, 'w', encoding='utf-8') as f:
            f.write("0,1\n1,1\n")
        status = self._main("project", "--input", path, "--query", "0.75,2")
        self.assertEqual(status, EXIT_OK)
        record = self._json("projection.json")
        self.assertAlmostEqual(record['readout'][0], 0.75)
        self.assertEqual(self._main("project", "--input", path), EXIT_FAILED)

    def test_gap_stats(self):
        status = self._main("gap-stats", "--m", "2,256", "--trials", "20000", "--seed", "1")
        self.assertEqual(status, EXIT_OK)
        data = self._json("gapstats.json")
        self.assertTrue(data['mean_gap_decreasing'])
        self.assertEqual([row['m_count'] for row in data['results']], [2, 256])

    def test_decode_linear(self):
        status = self._main("decode", "--context", "256", "--d", "8", "--d_v", "8", "--pages", "2",
                            "--candidates", "8", "--objective", "linear", "--export-cache")
        self.assertEqual(status, EXIT_OK)
        record = self._json("decode.json")
        self.assertTrue(record['face_routed'])
        self.assertEqual(record['output']['stats']['token_key_reads'], 32)
        self.assertTrue(os.path.exists(os.path.join(self.out, "cache.fstb")))

    def test_decode_adaptive_epsilon(self):
        status = self._main("decode", "--context", "256", "--d", "8", "--d_v", "8", "--pages", "2",
                            "--candidates", "8", "--objective", "linear", "--adaptive-epsilon",
                            "--target-leakage", "1e-6")
        self.assertEqual(status, EXIT_OK)
        row = self._csv("decode.csv")[0]
        self.assertLess(float(row['epsilon']), 0.1)
        self.assertGreaterEqual(float(row['epsilon']), 0.025)
        self.assertEqual(row['status'], "pass")

    def test_decode_tie_falls_back(self):
        status = self._main("decode", "--cache", "tie", "--context", "128", "--d", "8", "--d_v", "4",
                            "--pages", "1", "--candidates", "4")
        self.assertEqual(status, EXIT_OK)
        row = self._csv("decode.csv")[0]
        self.assertEqual(row['used_fallback'], "1")
        self.assertEqual(row['mode'], "dense")

    def test_sweep_scaling(self):
        status = self._main("sweep-scaling", "--contexts", "64,128,256", "--d", "4", "--d_v", "4",
                            "--pages", "1", "--candidates", "4", "--objective", "linear", "--threads", "2")
        self.assertEqual(status, EXIT_OK)
        rows = self._csv("scaling.csv")
        self.assertEqual([row['dense_token_reads'] for row in rows], ["64", "128", "256"])
        self.assertEqual({row['sparse_token_reads'] for row in rows}, {"16"})

    def test_memory_budget(self):
        status = self._main("sweep-scaling", "--contexts", "1024", "--d", "8", "--d_v", "8",
                            "--memory_budget", "100")
        self.assertEqual(status, EXIT_FAILED)

    def test_unknown_parameter(self):
        self.assertEqual(self._main("degenerate", "--bogus", "1"), EXIT_FAILED)
        self.assertFalse(os.path.exists(os.path.join(self.out, "summary.json")))

    def test_config_file(self):
        """Test file settings apply and command-line flags win"""
        path = os.path.join(self.temp_dir, "run.json")
        with open(path, 'w', encoding='utf-8') as f:
            json.dump({'seed': 3, 'parameters': {'epsilons': [0.1], 'deltas': [0.02]}}, f)
        config, _ = make_run_config(["degenerate", "--config", path, "--deltas", "0.5"])
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.parameters['epsilons'], [0.1])
        self.assertEqual(config.parameters['deltas'], [0.5])

        broken = os.path.join(self.temp_dir, "broken.json")
        with open(broken, 'w', encoding='utf-8') as f:
            f.write("{not json")
        with self.assertRaises(ParameterError):
            load_config_file(broken)


class TestCliHelpers(unittest.TestCase):
    """Test cases for override parsing and exit statuses"""

    def test_parse_overrides(self):
        overrides = parse_overrides(["--eps-fractions", "4,8", "--symmetric", "--m=16", "--query", "-1,2"])
        self.assertEqual(overrides, {'eps_fractions': "4,8", 'symmetric': "true", 'm': "16", 'query': "-1,2"})
        with self.assertRaises(ParameterError):
            parse_overrides(["stray"])

    def test_exit_status(self):
        result = CommandResult()
        self.assertEqual(result.exit_status, 0)
        result.count([CheckStatus.SKIPPED_DEGENERATE, CheckStatus.VACUOUS])
        self.assertEqual(result.exit_status, 2)
        result.count([CheckStatus.PASS])
        self.assertEqual(result.exit_status, 0)
        result.count([CheckStatus.FAIL])
        self.assertEqual(result.exit_status, 1)


if __name__ == "__main__":
    unittest.main()
