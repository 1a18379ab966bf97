import unittest

import numpy as np

from dags.utils.classical_energy import (
    CouplingParams,
    apply_plaquette_flip,
    config_from_loops,
    crystal_config,
    detect_pairings,
    flip_path_energy,
    is_ground_state,
    is_min_manifold,
    josephson_energy,
    lone_flip_cost,
    site_josephson_energy,
    site_min_energy,
    site_minimum_scan,
    tether_agreement,
    tether_matter_phases,
    tethered_config,
)
from dags.utils.errors import ConfigError, NumericalError
from dags.utils.lattice import PhaseConfig, build_lattice, crystal_pairings
from dags.utils.rng import stream


class TestSiteEnergy(unittest.TestCase):
    """Test cases for the single-waffle Josephson energy."""

    def setUp(self):
        self.params = CouplingParams()

    def test_uniform_phases_reach_bound(self):
        self.assertAlmostEqual(site_min_energy([0.0, 0.0, 0.0, 0.0], self.params), -8.0, places=12)
        self.assertAlmostEqual(site_min_energy([0.0, 0.0, np.pi, np.pi], self.params), -8.0, places=12)

    def test_off_manifold_energy(self):
        expected = -(3 * np.sqrt(2) + np.sqrt(10))
        self.assertAlmostEqual(site_min_energy([0.0, np.pi / 2, 0.0, 0.0], self.params), expected, places=12)

    def test_energy_scales_with_J(self):
        params = CouplingParams(J=2.5)
        self.assertAlmostEqual(site_min_energy([0.3, 0.3, 1.1, 1.1], params), -20.0, places=10)

    def test_invalid_coupling(self):
        with self.assertRaises(ConfigError):
            CouplingParams(J=0.0)

    def test_random_draws_respect_bound(self):
        scan = site_minimum_scan(2000, seed=7)
        self.assertEqual(scan["n_below_bound"], 0)
        self.assertGreaterEqual(scan["min_random_energy"], -8.0 - 1e-12)
        for deviation in scan["manifold_deviation"].values():
            self.assertLess(deviation, 1e-9)

    def test_tethering_matches_numerical_minimum(self):
        result = tether_agreement(20, seed=3)
        self.assertLess(result["max_energy_difference"], 1e-8)

    def test_degenerate_tethering(self):
        # wire 0 sees -1 + 1 + 1 - 1 = 0
        theta = [0.0, 0.0, 0.0, np.pi]
        with self.assertRaises(NumericalError):
            tether_matter_phases(theta)
        self.assertEqual(tether_matter_phases(theta, on_degenerate="zero")[0], 0.0)


class TestMinimumManifold(unittest.TestCase):

    def test_uniform_phases_satisfy_every_pairing(self):
        check = is_min_manifold([0.4, 0.4, 0.4, 0.4])
        self.assertTrue(check.is_min)
        self.assertEqual(check.pairing_ids, (0, 1, 2))

    def test_single_pairing(self):
        check = is_min_manifold([0.2, 0.2 + np.pi, 1.5, 1.5 + np.pi])
        self.assertTrue(check.is_min)
        self.assertEqual(check.pairing_ids, (0,))
        self.assertEqual(check.pairings, ("(12)(34)",))

    def test_mismatched_parity_is_off_manifold(self):
        self.assertFalse(is_min_manifold([0.2, 0.2 + np.pi, 1.5, 1.5]).is_min)
        self.assertFalse(is_min_manifold([0.0, np.pi / 2, 0.0, 0.0]).is_min)


class TestLatticeEnergy(unittest.TestCase):
    """Test cases for ground states and plaquette moves on a 4x4 torus."""

    def setUp(self):
        self.g = build_lattice(4, 4)
        self.params = CouplingParams()
        rng = stream(17, 0)
        self.crystal = crystal_config(self.g, "A", rng.uniform(0, 2 * np.pi, 8), self.params)

    def test_crystal_is_ground_state(self):
        self.assertTrue(is_ground_state(self.crystal, self.params))
        self.assertAlmostEqual(josephson_energy(self.crystal, self.params), -8.0 * 16, places=9)
        self.assertAlmostEqual(site_josephson_energy(self.crystal, 5, self.params), -8.0, places=9)
        with self.assertRaises(ConfigError):
            site_josephson_energy(self.crystal, 16, self.params)

    def test_detect_pairings_recovers_crystal(self):
        np.testing.assert_array_equal(detect_pairings(self.crystal), crystal_pairings(self.g, "A"))

    def test_detect_pairings_rejects_excited_state(self):
        theta = np.array(self.crystal.theta)
        theta[0] += 0.7
        with self.assertRaises(NumericalError):
            detect_pairings(tethered_config(self.g, theta, self.params))

    def test_plaquette_flip_preserves_energy(self):
        rng = stream(21, 0)
        config = PhaseConfig(self.g, rng.uniform(0, 2 * np.pi, self.g.n_links), rng.uniform(0, 2 * np.pi, self.g.n_matter))
        before = josephson_energy(config, self.params)
        for p in (0, 5, 15):
            self.assertAlmostEqual(josephson_energy(apply_plaquette_flip(config, p), self.params), before, places=9)

    def test_geometry_mismatch(self):
        with self.assertRaises(ConfigError):
            josephson_energy(self.crystal, self.params, build_lattice(2, 2))

    def test_lone_flip_costs_star_scale(self):
        uniform = crystal_config(self.g, "A", np.zeros(8), self.params)
        self.assertAlmostEqual(lone_flip_cost(uniform, 0, self.params), 8.0, places=9)

    def test_loop_phase_count_must_match(self):
        with self.assertRaises(ConfigError):
            config_from_loops(self.g, crystal_pairings(self.g), loop_phases=[0.0, 1.0])

    def test_invalid_tau_leaves_ground_state(self):
        tau = np.ones(self.g.n_links)
        tau[0] = -1
        config = config_from_loops(self.g, crystal_pairings(self.g), tau=tau)
        self.assertFalse(is_ground_state(config, self.params))


class TestFlipPaths(unittest.TestCase):

    def setUp(self):
        self.g = build_lattice(4, 4)
        self.config = crystal_config(self.g, "A", stream(5, 0).uniform(0, 2 * np.pi, 8))

    def test_elementary_loop_flips_without_barrier(self):
        scan = flip_path_energy(self.config, 0, "type_a", n_steps=32)
        self.assertLess(scan.max_excursion, 1e-8)
        self.assertTrue(scan.final_matches_flip)
        self.assertEqual(len(scan.to_records()), 33)

    def test_merge_path_flips_other_plaquettes(self):
        scan = flip_path_energy(self.config, 1, "type_b", n_steps=16)
        self.assertLess(scan.max_excursion, 1e-8)
        self.assertEqual(set(scan.segments), {"merge", "sweep", "restore"})
        self.assertTrue(scan.final_matches_flip)

    def test_naive_path_has_barrier(self):
        scan = flip_path_energy(self.config, 1, "naive", n_steps=16)
        self.assertGreater(scan.max_excursion, 1e-4)

    def test_invalid_requests(self):
        with self.assertRaises(ConfigError):
            flip_path_energy(self.config, 0, "type_c")
        excited = self.config.replace(theta=np.array(self.config.theta) + np.eye(self.g.n_links)[0])
        with self.assertRaises(ConfigError):
            flip_path_energy(excited, 0, "type_a")


if __name__ == '__main__':
    unittest.main()
