import glob
import json
import os
import unittest

from dags.utils.errors import ConfigError
from dags.utils.run_config import COMMANDS, PARAMETERS, load_config, parse_config
from plugins.helpers.run_templates import COMMAND_TABLES, RUN_TEMPLATES, build_run_config

RUNS_DIR = os.path.join(os.path.dirname(__file__), '..', 'config', 'runs')


class TestParseConfig(unittest.TestCase):
    """Test cases for run configuration parsing."""

    def setUp(self):
        self.ed = {
            "command": "ed",
            "geometry": {"Lx": 2, "Ly": 2},
            "params": {"lambda_J": 1.0, "lambda_flip": 0.5},
            "output": {"format": "csv"},
        }

    def test_defaults_are_filled(self):
        cfg = parse_config(json.dumps(self.ed))
        self.assertEqual(cfg.geometry, (2, 2))
        self.assertEqual(cfg.params["n_low"], PARAMETERS["ed"]["n_low"].default)
        self.assertEqual(cfg.params["method"], "auto")
        self.assertIsNone(cfg.seed)
        self.assertEqual(cfg.effective_seed, 0)

    def test_integers_are_accepted_as_numbers(self):
        self.ed["params"]["lambda_J"] = 2
        cfg = parse_config(json.dumps(self.ed))
        self.assertIsInstance(cfg.params["lambda_J"], float)

    def test_canonical_document_parses_back(self):
        cfg = parse_config(json.dumps(self.ed))
        self.assertEqual(parse_config(json.dumps(cfg.to_dict())), cfg)

    def test_every_problem_is_reported(self):
        self.ed["geometry"]["Lx"] = 3
        self.ed["params"]["lambda_flip"] = "big"
        self.ed["colour"] = "red"
        with self.assertRaises(ConfigError) as ctx:
            parse_config(json.dumps(self.ed))
        message = str(ctx.exception)
        self.assertIn("geometry.Lx", message)
        self.assertIn("params.lambda_flip", message)
        self.assertIn("colour", message)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_missing_required_parameter(self):
        del self.ed["params"]["lambda_J"]
        with self.assertRaisesRegex(ConfigError, "params.lambda_J"):
            parse_config(json.dumps(self.ed))

    def test_lattice_limits(self):
        self.ed["geometry"] = {"Lx": 66, "Ly": 2}
        with self.assertRaisesRegex(ConfigError, "between 2 and 64"):
            parse_config(json.dumps(self.ed))

    def test_sampling_commands_need_a_seed(self):
        document = {"command": "mc", "geometry": {"Lx": 2, "Ly": 2}, "params": {"K_eff": 10.0}}
        with self.assertRaisesRegex(ConfigError, "seed"):
            parse_config(json.dumps(document))
        document["seed"] = 2 ** 64
        with self.assertRaisesRegex(ConfigError, "seed"):
            parse_config(json.dumps(document))
        document["seed"] = 5
        self.assertEqual(parse_config(json.dumps(document)).seed, 5)

    def test_malformed_documents(self):
        for text in ("{", "[]", b"\xff\xfe", json.dumps({"command": "fly"})):
            with self.assertRaises(ConfigError):
                parse_config(text)

    def test_overrides(self):
        cfg = parse_config(json.dumps(self.ed)).with_overrides(seed=9, workers=2)
        self.assertEqual((cfg.seed, cfg.workers), (9, 2))


class TestShippedConfigs(unittest.TestCase):

    def test_example_runs_parse(self):
        paths = sorted(glob.glob(os.path.join(RUNS_DIR, '*.json')))
        self.assertTrue(paths)
        for path in paths:
            cfg = load_config(path)
            self.assertIn(cfg.command, COMMANDS)

    def test_templates_parse_with_dag_settings(self):
        settings = {
            "geometry": {"mc": [2, 2]},
            "seeds": {"mc": 3},
            "params": {"mc": {"steps": 10}},
        }
        for command in RUN_TEMPLATES:
            cfg = parse_config(json.dumps(build_run_config(command, settings)))
            self.assertEqual(cfg.command, command)
            self.assertIn(command, COMMAND_TABLES)
        mc = parse_config(json.dumps(build_run_config("mc", settings)))
        self.assertEqual((mc.geometry, mc.seed, mc.params["steps"]), ((2, 2), 3, 10))

    def test_templates_are_not_mutated(self):
        build_run_config("ed", {"params": {"ed": {"n_low": 4}}})
        self.assertEqual(RUN_TEMPLATES["ed"]["params"]["n_low"], 16)
        with self.assertRaises(ValueError):
            build_run_config("teleport")


if __name__ == '__main__':
    unittest.main()
