import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd

from dags.utils.loaders import RunManifest, write_manifest, write_table
from dags.utils.validators import validate_manifest, validate_result_table


class TestResultValidation(unittest.TestCase):
    """Test cases for result table validation."""

    def setUp(self):
        self.spectrum = pd.DataFrame({
            'index': [0, 1, 2],
            'energy': [-8.0, -8.0, -4.0],
            'oracle_energy': [-8.0, -8.0, -4.0],
        })

    def test_valid_spectrum(self):
        is_valid, results = validate_result_table(self.spectrum, 'spectrum')
        self.assertTrue(is_valid)
        self.assertEqual(results['metrics']['ground_energy'], -8.0)
        self.assertEqual(results['metrics']['record_count'], 3)

    def test_unsorted_spectrum(self):
        self.spectrum['energy'] = [-8.0, -4.0, -8.0]
        self.spectrum['oracle_energy'] = [-8.0, -4.0, -8.0]
        is_valid, results = validate_result_table(self.spectrum, 'spectrum')
        self.assertFalse(is_valid)
        self.assertIn("spectrum is not sorted ascending", results['errors'])

    def test_oracle_mismatch(self):
        excited = self.spectrum.copy()
        excited.loc[2, 'energy'] = -3.0
        is_valid, results = validate_result_table(excited, 'spectrum')
        self.assertTrue(is_valid)
        self.assertEqual(len(results['warnings']), 1)

        ground = self.spectrum.copy()
        ground.loc[0, 'energy'] = -9.0
        is_valid, _ = validate_result_table(ground, 'spectrum')
        self.assertFalse(is_valid)

    def test_wxy_spectrum_without_oracle(self):
        is_valid, _ = validate_result_table(self.spectrum.drop(columns=['oracle_energy']), 'wxy_spectrum')
        self.assertTrue(is_valid)

    def test_unknown_and_empty_tables(self):
        self.assertFalse(validate_result_table(self.spectrum, 'prices')[0])
        self.assertFalse(validate_result_table(self.spectrum.iloc[:0], 'spectrum')[0])
        is_valid, _ = validate_result_table(pd.DataFrame(columns=['eigenvalue', 'multiplicity']), 'flat_band')
        self.assertTrue(is_valid)

    def test_schema_failure(self):
        is_valid, results = validate_result_table(pd.DataFrame({'index': [0]}), 'automorphisms')
        self.assertFalse(is_valid)
        self.assertTrue(results['errors'][0].startswith("Schema validation failed"))

    def test_run_id_column(self):
        stamped = self.spectrum.copy()
        stamped.insert(0, 'run_id', 'a1')
        self.assertTrue(validate_result_table(stamped, 'spectrum')[0])
        stamped.loc[1, 'run_id'] = 'b2'
        is_valid, results = validate_result_table(stamped, 'spectrum')
        self.assertFalse(is_valid)
        self.assertIn("Table mixes rows from several runs", results['errors'])

    def test_loop_histogram_sectors(self):
        df = pd.DataFrame({'n_loops': [2, 3], 'count': [10, 5], 'contractible': [4, 5], 'winding': [5, 0]})
        is_valid, results = validate_result_table(df, 'loop_histogram')
        self.assertFalse(is_valid)
        self.assertIn("[2]", results['errors'][0])

    def test_flip_path_excursion(self):
        df = pd.DataFrame({
            'path': ['type_a', 'type_a', 'naive', 'naive'],
            'plaquette': [0, 0, 1, 1],
            'step': [0, 1, 0, 1],
            'segment': ['sweep'] * 4,
            'delta_theta': [0.0, np.pi, 0.0, np.pi],
            'energy': [-32.0, -32.0, -32.0, -32.0],
            'excursion': [0.0, 0.0, 0.0, 0.0],
        })
        is_valid, results = validate_result_table(df, 'flip_paths')
        self.assertTrue(is_valid)
        self.assertIn("naive flip path shows no barrier", results['warnings'])

        df.loc[1, 'excursion'] = 0.5
        self.assertFalse(validate_result_table(df, 'flip_paths')[0])

    def test_mc_acceptance_warning(self):
        df = pd.DataFrame({
            'chain': [0],
            'K_eff': [100.0],
            'mean_loop_length': [4.2],
            'mean_loop_length_sigma': [0.1],
            'n_loops': [7.6],
            'far_correlator': [0.3],
            'far_correlator_sigma': [0.02],
            'acceptance_link': [0.99],
            'acceptance_plaquette': [0.5],
            'off_manifold_fraction': [0.0],
        })
        is_valid, results = validate_result_table(df, 'mc_chains')
        self.assertTrue(is_valid)
        self.assertIn('acceptance_link', results['warnings'][0])

    def test_capacitance_symmetry(self):
        wires = ['m1', 'm2', 'm3', 'm4', 'g1', 'g2', 'g3', 'g4']
        matrix = 2.0 * np.eye(8)
        df = pd.DataFrame(matrix, columns=wires)
        df.insert(0, 'wire', wires)
        self.assertTrue(validate_result_table(df, 'capacitance_matrix')[0])
        df.loc[0, 'm2'] = 1.0
        self.assertFalse(validate_result_table(df, 'capacitance_matrix')[0])


class TestManifestValidation(unittest.TestCase):

    def setUp(self):
        """Set up a scratch output directory."""
        self.temp_dir = tempfile.mkdtemp(prefix="cgs_lab_manifest_")

    def tearDown(self):
        """Clean up after tests."""
        shutil.rmtree(self.temp_dir)

    def test_missing_fields(self):
        is_valid, results = validate_manifest({'run_id': 'x'})
        self.assertFalse(is_valid)
        self.assertIn('files', results['errors'][0])

    def test_digests(self):
        path = os.path.join(self.temp_dir, 'wkb.csv')
        digest = write_table(pd.DataFrame({'JC': [1.0]}), path, 'r1')
        manifest = RunManifest('r1', {'command': 'wkb'}, 0, files={'wkb.csv': digest}, task_seconds={'compute': 0.5})
        write_manifest(manifest, self.temp_dir)
        is_valid, results = validate_manifest(manifest.to_dict(), self.temp_dir)
        self.assertTrue(is_valid)
        self.assertEqual(results['metrics']['file_count'], 1)

        with open(path, 'a', encoding='utf-8') as handle:
            handle.write('r1,2\n')
        is_valid, results = validate_manifest(manifest.to_dict(), self.temp_dir)
        self.assertFalse(is_valid)
        self.assertIn("Digest mismatch for wkb.csv", results['errors'])

        os.remove(path)
        self.assertIn("Result file missing: wkb.csv", validate_manifest(manifest.to_dict(), self.temp_dir)[1]['errors'])


if __name__ == '__main__':
    unittest.main()
