"""
Unit tests for shortpulse.config and shortpulse.reports modules
"""

import json
import math
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import pandas as pd

# Add SDK to path
sys.path.insert(0, str(Path(__file__).parent.parent / "sdk"))

from shortpulse.config import (
    ENV_OUTPUT_DIR,
    ENV_THREADS,
    ExperimentConfig,
    apply_overrides,
    config_from_mapping,
    parse_config,
)
from shortpulse.exceptions import ConfigInvalid, ReportWriteError
from shortpulse.reports import RunManifest, emit_reports


class TestConfigDefaults(unittest.TestCase):
    """Test cases for default values"""

    def test_empty_document(self):
        """Test that an empty document yields the defaults"""
        config = config_from_mapping(None)
        self.assertEqual(config.scenario, "converge")
        self.assertAlmostEqual(config.grid.length, 64 * math.pi)
        self.assertEqual(config.grid.n, 1024)
        self.assertEqual(config.run.epsilons, (0.2, 0.1, 0.05, 0.025))
        self.assertEqual(config.run.s, 4.0)
        self.assertEqual(config.tolerances.balance_residual, 1e-3)

    def test_study_config(self):
        """Test the hand-off to the convergence study"""
        study = ExperimentConfig().to_study_config(epsilons=(0.1,))
        self.assertEqual(study.epsilons, (0.1,))
        self.assertEqual(study.n, 1024)
        self.assertEqual(study.velocity, "slaved")

    def test_snapshot_is_plain_data(self):
        """Test that the manifest snapshot serializes to JSON"""
        snapshot = ExperimentConfig().snapshot()
        self.assertEqual(snapshot["run"]["epsilons"], [0.2, 0.1, 0.05, 0.025])
        json.dumps(snapshot)


class TestConfigParsing(unittest.TestCase):
    """Test cases for scenario files"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, text):
        path = self.dir / "scenario.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_parse_file(self):
        """Test a complete scenario file"""
        path = self._write(
            "scenario: justify\n"
            "grid: {length: 32pi, n: 512}\n"
            "data: {amplitude: 0.05, perturbation: none}\n"
            "run: {epsilons: [0.1], T: 0.5}\n"
        )
        config = parse_config(path)
        self.assertEqual(config.scenario, "justify")
        self.assertAlmostEqual(config.grid.length, 32 * math.pi)
        self.assertEqual(config.data.perturbation, "none")
        self.assertEqual(config.run.epsilons, (0.1,))

    def test_pi_lengths(self):
        """Test the accepted spellings of multiples of pi"""
        for text, expected in (("64pi", 64 * math.pi), ("2*pi", 2 * math.pi), ("pi", math.pi),
                               (100.0, 100.0)):
            config = config_from_mapping({"grid": {"length": text}})
            self.assertAlmostEqual(config.grid.length, expected)

    def test_unknown_key(self):
        """Test that unknown keys are reported with their path"""
        with self.assertRaises(ConfigInvalid) as ctx:
            config_from_mapping({"grid": {"size": 10}})
        self.assertEqual(ctx.exception.key, "grid.size")
        with self.assertRaises(ConfigInvalid) as ctx:
            config_from_mapping({"colour": "red"})
        self.assertEqual(ctx.exception.key, "colour")

    def test_converge_needs_regular_data(self):
        """Test that s <= 7/2 is rejected for converge"""
        with self.assertRaises(ConfigInvalid) as ctx:
            config_from_mapping({"scenario": "converge", "run": {"s": 3}})
        self.assertEqual(ctx.exception.key, "run.s")
        config = config_from_mapping({"scenario": "simulate-sp", "run": {"s": 3}})
        self.assertEqual(config.run.s, 3.0)

    def test_converge_needs_three_epsilons(self):
        """Test that converge rejects fewer than three epsilons"""
        with self.assertRaises(ConfigInvalid) as ctx:
            config_from_mapping({"run": {"epsilons": [0.2, 0.1]}})
        self.assertEqual(ctx.exception.key, "run.epsilons")

    def test_out_of_range_values(self):
        """Test range checks on individual entries"""
        cases = [
            ({"run": {"T": -1.0}}, "run.T"),
            ({"run": {"epsilons": [0.2, 1.5, 0.05]}}, "run.epsilons[1]"),
            ({"grid": {"n": 1023}}, "grid.n"),
            ({"data": {"shape": "square"}}, "data.shape"),
            ({"data": {"amplitude": -0.1}}, "data.amplitude"),
            ({"scenario": "fly"}, "scenario"),
            ({"tolerances": {"mean_tol": 0}}, "tolerances.mean_tol"),
        ]
        for raw, key in cases:
            with self.assertRaises(ConfigInvalid) as ctx:
                config_from_mapping(raw)
            self.assertEqual(ctx.exception.key, key)

    def test_type_errors(self):
        """Test that wrongly typed entries are rejected"""
        with self.assertRaises(ConfigInvalid) as ctx:
            config_from_mapping({"run": {"samples": 2.5}})
        self.assertEqual(ctx.exception.key, "run.samples")
        with self.assertRaises(ConfigInvalid):
            config_from_mapping({"run": {"linear": "maybe"}})
        with self.assertRaises(ConfigInvalid):
            config_from_mapping({"data": {"amplitude": True}})

    def test_missing_file(self):
        """Test that a missing file is a configuration error"""
        with self.assertRaises(ConfigInvalid):
            parse_config(self.dir / "missing.yaml")

    def test_invalid_yaml(self):
        """Test that malformed YAML is a configuration error"""
        with self.assertRaises(ConfigInvalid):
            parse_config(self._write("grid: [1, 2\n"))


class TestOverrides(unittest.TestCase):
    """Test cases for command-line and environment overrides"""

    def test_default_output_dir(self):
        """Test the runs/<scenario> fallback"""
        with patch.dict(os.environ, {}, clear=False):
            os.environ.pop(ENV_OUTPUT_DIR, None)
            os.environ.pop(ENV_THREADS, None)
            config = apply_overrides(ExperimentConfig(), scenario="balance")
        self.assertEqual(config.output_dir, "runs/balance")
        self.assertEqual(config.threads, 1)

    def test_environment(self):
        """Test SHORTPULSE_OUTPUT_DIR and SHORTPULSE_THREADS"""
        with patch.dict(os.environ, {ENV_OUTPUT_DIR: "/tmp/sp", ENV_THREADS: "4"}):
            config = apply_overrides(ExperimentConfig())
        self.assertEqual(config.output_dir, "/tmp/sp")
        self.assertEqual(config.threads, 4)

    def test_arguments_win(self):
        """Test that explicit arguments override the environment"""
        with patch.dict(os.environ, {ENV_OUTPUT_DIR: "/tmp/sp", ENV_THREADS: "4"}):
            config = apply_overrides(ExperimentConfig(), output_dir="out", seed=9, threads=2)
        self.assertEqual((config.output_dir, config.seed, config.threads), ("out", 9, 2))

    def test_invalid_threads(self):
        """Test that threads must be positive"""
        with self.assertRaises(ConfigInvalid):
            apply_overrides(ExperimentConfig(), threads=0)


class TestReports(unittest.TestCase):
    """Test cases for the run manifest and report files"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.table = pd.DataFrame({"tau": [0.0, 0.1], "E": [1.0 / 3.0, 2.0e-17]})

    def tearDown(self):
        self.tmp.cleanup()

    def _manifest(self):
        return RunManifest("simulate-sp", ExperimentConfig().snapshot(), "0.1.0")

    def test_checks(self):
        """Test that soft failures do not fail the run"""
        manifest = self._manifest()
        manifest.add_check("hard_one", True)
        manifest.add_check("soft_one", False, hard=False)
        self.assertTrue(manifest.passed)
        manifest.add_check("hard_two", False)
        self.assertFalse(manifest.passed)

    def test_duplicate_check(self):
        """Test that a check name may only be used once"""
        manifest = self._manifest()
        manifest.add_check("slope", True)
        with self.assertRaises(ValueError):
            manifest.add_check("slope", False)

    def test_emit_reports(self):
        """Test the written files and the summary"""
        manifest = self._manifest()
        manifest.add_check("mean_preserved", True, value=0.0)
        with manifest.stage("short_pulse"):
            pass
        paths = emit_reports(manifest, {"trajectory_sp.csv": self.table}, self.dir / "out")
        self.assertEqual([p.name for p in paths], ["trajectory_sp.csv", "summary.json"])
        summary = json.loads((self.dir / "out" / "summary.json").read_text(encoding="utf-8"))
        self.assertTrue(summary["passed"])
        self.assertEqual(summary["artifacts"], ["trajectory_sp.csv"])
        self.assertIn("short_pulse", summary["timings"])
        written = pd.read_csv(self.dir / "out" / "trajectory_sp.csv", float_precision="round_trip")
        self.assertEqual(written["E"].iloc[0], 1.0 / 3.0)

    def test_tables_are_deterministic(self):
        """Test that identical tables give identical bytes"""
        for name in ("a", "b"):
            emit_reports(self._manifest(), {"energy.csv": self.table}, self.dir / name)
        first = (self.dir / "a" / "energy.csv").read_bytes()
        self.assertEqual(first, (self.dir / "b" / "energy.csv").read_bytes())
        self.assertNotIn(b"\r\n", first)

    def test_non_finite_values_become_null(self):
        """Test that NaN in the manifest is written as null"""
        manifest = self._manifest()
        manifest.add_check("slope", False, value=float("nan"))
        emit_reports(manifest, {}, self.dir / "nan")
        summary = json.loads((self.dir / "nan" / "summary.json").read_text(encoding="utf-8"))
        self.assertIsNone(summary["checks"][0]["value"])

    def test_unwritable_directory(self):
        """Test ReportWriteError when the target is a file"""
        blocker = self.dir / "blocker"
        blocker.write_text("x", encoding="utf-8")
        with self.assertRaises(ReportWriteError):
            emit_reports(self._manifest(), {"energy.csv": self.table}, blocker)


if __name__ == '__main__':
    unittest.main()
