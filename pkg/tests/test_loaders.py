import json
import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd

from dags.utils.loaders import (
    ARTIFACT_VERSION,
    RunManifest,
    file_digest,
    read_manifest,
    run_id_for,
    to_serializable,
    write_document,
    write_manifest,
    write_table,
)


class TestLoaders(unittest.TestCase):
    """Test cases for result file writers."""

    def setUp(self):
        """Set up a scratch output directory."""
        self.temp_dir = tempfile.mkdtemp(prefix="cgs_lab_loaders_")

    def tearDown(self):
        """Clean up after tests."""
        shutil.rmtree(self.temp_dir)

    def test_run_id_ignores_key_order(self):
        a = run_id_for({"command": "ed", "seed": 1})
        b = run_id_for({"seed": 1, "command": "ed"})
        self.assertEqual(a, b)
        self.assertEqual(len(a), 16)
        self.assertNotEqual(a, run_id_for({"command": "ed", "seed": 2}))

    def test_serializable_values(self):
        value = {
            "n": np.int64(3),
            "x": np.float64(np.nan),
            "z": complex(1.0, -2.0),
            "t": (1, np.inf),
            "flag": np.bool_(True),
            "df": pd.DataFrame({"a": [1]}),
        }
        self.assertEqual(
            to_serializable(value),
            {"n": 3, "x": None, "z": {"re": 1.0, "im": -2.0}, "t": [1, None], "flag": True, "df": [{"a": 1}]},
        )

    def test_table_is_stamped_and_stable(self):
        df = pd.DataFrame({"index": [0, 1], "energy": [0.1, -8.0]})
        path = os.path.join(self.temp_dir, "spectrum.csv")
        digest = write_table(df, path, "abc123")
        with open(path, "rb") as handle:
            content = handle.read().decode("utf-8")
        self.assertNotIn("\r", content)
        lines = content.splitlines()
        self.assertEqual(lines[0], "run_id,index,energy")
        self.assertEqual(lines[1], "abc123,0,0.10000000000000001")
        self.assertEqual(digest, file_digest(path))
        self.assertEqual(write_table(df, path, "abc123"), digest)
        self.assertNotIn("run_id", df.columns)

    def test_document_is_strict_json(self):
        path = os.path.join(self.temp_dir, "nested", "ed.json")
        write_document({"b": np.nan, "a": [1, 2]}, path, run_id="r1")
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
        self.assertTrue(text.endswith("}\n"))
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {"a": [1, 2], "b": None, "run_id": "r1"})

    def test_manifest_round_trip(self):
        manifest = RunManifest(run_id="r1", config={"command": "ed"}, seed=0, files={"ed.json": "0" * 64})
        path = write_manifest(manifest, self.temp_dir)
        self.assertEqual(os.path.basename(path), "ed_manifest.json")
        loaded = read_manifest(path)
        self.assertEqual(loaded["artifact_version"], ARTIFACT_VERSION)
        self.assertEqual(loaded["files"], {"ed.json": "0" * 64})
        self.assertIn("timestamp", loaded)


if __name__ == '__main__':
    unittest.main()
