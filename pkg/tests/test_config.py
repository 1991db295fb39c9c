import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from core import config as config_module
from core.config import IacConfig, _load_from_env, _load_from_file, get_config, reset_config


class TestConfig(unittest.TestCase):
    def tearDown(self):
        reset_config()

    def test_defaults(self):
        config = IacConfig()
        self.assertEqual(config.solver.timeout_seconds, 10.0)
        self.assertEqual(config.solver.probe_cap_exponent, 63)
        self.assertEqual(config.analysis.max_core_constraints, 10)
        self.assertTrue(config.analysis.parallel_bounds)
        self.assertIsNone(config.catalog.path)

    def test_singleton(self):
        self.assertIs(get_config(), get_config())
        first = get_config()
        reset_config()
        self.assertIsNot(first, get_config())

    def test_file_layer_ignores_unknown_keys(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "config.yaml"
            path.write_text("solver:\n  timeout_seconds: 2.5\n  colour: blue\nanalysis:\n  parallel_bounds: false\n")
            config = IacConfig()
            _load_from_file(config, path)
        self.assertEqual(config.solver.timeout_seconds, 2.5)
        self.assertFalse(config.analysis.parallel_bounds)
        self.assertFalse(hasattr(config.solver, "colour"))

    def test_broken_file_is_a_warning(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "config.yaml"
            path.write_text("solver: [unclosed\n")
            config = IacConfig()
            with self.assertLogs("iac", level="WARNING"):
                _load_from_file(config, path)
        self.assertEqual(config.solver.timeout_seconds, 10.0)

    def test_environment_overrides(self):
        env = {
            "IAC_ANALYSIS_SOLVER": "/opt/z3/bin/z3",
            "IAC_ANALYSIS_TIMEOUT": "4",
            "IAC_ANALYSIS_DEBUG": "yes",
        }
        with mock.patch.dict(os.environ, env), mock.patch.object(config_module, "load_dotenv"):
            config = IacConfig()
            _load_from_env(config)
        self.assertEqual(config.solver.path, "/opt/z3/bin/z3")
        self.assertEqual(config.solver.timeout_seconds, 4.0)
        self.assertTrue(config.logging.debug)

    def test_bad_environment_value_is_ignored(self):
        with mock.patch.dict(os.environ, {"IAC_ANALYSIS_TIMEOUT": "soon"}), \
                mock.patch.object(config_module, "load_dotenv"):
            config = IacConfig()
            with self.assertLogs("iac", level="WARNING"):
                _load_from_env(config)
        self.assertEqual(config.solver.timeout_seconds, 10.0)


if __name__ == "__main__":
    unittest.main()
