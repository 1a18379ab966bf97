import unittest

import numpy as np

from dags.utils.errors import ConfigError
from dags.utils.lattice import (
    PhaseConfig,
    build_lattice,
    crystal_pairings,
    plaquette_links,
    star_links,
    trace_loops,
)
from dags.utils.rng import step_stream, stream


class TestLatticeGeometry(unittest.TestCase):
    """Test cases for the periodic waffle lattice."""

    def setUp(self):
        self.g = build_lattice(4, 4)

    def test_counts(self):
        self.assertEqual(self.g.n_sites, 16)
        self.assertEqual(self.g.n_links, 32)
        self.assertEqual(self.g.n_matter, 64)
        self.assertEqual(self.g.n_plaquettes, 16)

    def test_odd_or_small_sizes_are_rejected(self):
        for Lx, Ly in ((3, 2), (2, 5), (0, 2)):
            with self.assertRaises(ConfigError) as ctx:
                build_lattice(Lx, Ly)
            self.assertIn("even", str(ctx.exception))

    def test_every_link_in_two_stars_and_two_plaquettes(self):
        star_counts = np.bincount(self.g.star_table.ravel(), minlength=self.g.n_links)
        plaquette_counts = np.bincount(self.g.plaquette_table.ravel(), minlength=self.g.n_links)
        np.testing.assert_array_equal(star_counts, 2 * np.ones(self.g.n_links))
        np.testing.assert_array_equal(plaquette_counts, 2 * np.ones(self.g.n_links))

    def test_link_plaquette_table_matches_plaquette_links(self):
        for i, (p, q) in enumerate(self.g.link_plaquette_table):
            self.assertNotEqual(p, q)
            self.assertIn(i, self.g.plaquette_table[p])
            self.assertIn(i, self.g.plaquette_table[q])

    def test_star_leg_order(self):
        # site (1, 2): N = v(1,2), E = h(1,2), S = v(1,1), W = h(0,2)
        s = self.g.site_index(1, 2)
        expected = (
            self.g.link_index(1, 2, "v"),
            self.g.link_index(1, 2, "h"),
            self.g.link_index(1, 1, "v"),
            self.g.link_index(0, 2, "h"),
        )
        self.assertEqual(star_links(self.g, s), expected)

    def test_link_legs_agree_with_stars(self):
        for i in range(self.g.n_links):
            for end in (0, 1):
                site = self.g.link_endpoints[i][end]
                self.assertEqual(self.g.leg_of(site, i), self.g.link_legs[i][end])

    def test_plaquette_links_share_corners(self):
        for p in range(self.g.n_plaquettes):
            corners = set(int(s) for s in self.g.corner_table[p])
            for link in plaquette_links(self.g, p):
                self.assertTrue(set(int(s) for s in self.g.link_endpoints[link]) <= corners)

    def test_out_of_range_index(self):
        with self.assertRaises(ConfigError):
            self.g.site_coords(16)
        with self.assertRaises(ConfigError):
            plaquette_links(self.g, -1)

    def test_minimum_image_distance(self):
        a = self.g.link_index(0, 0, "h")
        b = self.g.link_index(3, 0, "h")
        self.assertAlmostEqual(self.g.link_distance(a, b), 1.0)


class TestLoops(unittest.TestCase):

    def test_crystal_gives_elementary_loops(self):
        g = build_lattice(4, 4)
        loops = trace_loops(g, crystal_pairings(g, "A"))
        self.assertEqual(len(loops), 8)
        self.assertTrue(all(loop.length == 4 and loop.winding == (0, 0) for loop in loops))
        type_a = {frozenset(int(i) for i in g.plaquette_table[p]) for p in range(g.n_plaquettes)
                  if sum(g.plaquette_coords(p)) % 2 == 0}
        self.assertEqual({frozenset(loop.links) for loop in loops}, type_a)

    def test_variant_b_uses_other_plaquettes(self):
        g = build_lattice(4, 4)
        loops = trace_loops(g, crystal_pairings(g, "B"))
        first = frozenset(loops[0].links)
        p = next(p for p in range(g.n_plaquettes) if frozenset(int(i) for i in g.plaquette_table[p]) == first)
        self.assertEqual(sum(g.plaquette_coords(p)) % 2, 1)

    def test_random_pairing_partitions_links(self):
        g = build_lattice(4, 2)
        pairing = stream(3, 0).integers(0, 3, size=g.n_sites)
        loops = trace_loops(g, pairing)
        links = sorted(i for loop in loops for i in loop.links)
        self.assertEqual(links, list(range(g.n_links)))

    def test_invalid_pairing(self):
        g = build_lattice(2, 2)
        with self.assertRaises(ConfigError):
            trace_loops(g, [0, 1, 3, 0])
        with self.assertRaises(ConfigError):
            crystal_pairings(g, "C")


class TestPhaseConfig(unittest.TestCase):

    def test_phases_are_wrapped(self):
        g = build_lattice(2, 2)
        config = PhaseConfig(g, np.full(g.n_links, -np.pi / 2), np.full(g.n_matter, 5 * np.pi))
        np.testing.assert_allclose(config.theta, 1.5 * np.pi)
        np.testing.assert_allclose(config.phi, np.pi)

    def test_shape_and_finiteness(self):
        g = build_lattice(2, 2)
        with self.assertRaises(ConfigError):
            PhaseConfig(g, np.zeros(3), np.zeros(g.n_matter))
        with self.assertRaises(ConfigError):
            PhaseConfig(g, np.full(g.n_links, np.nan), np.zeros(g.n_matter))

    def test_dict_round_trip(self):
        g = build_lattice(2, 2)
        rng = stream(5, 0)
        config = PhaseConfig(g, rng.uniform(0, 6, g.n_links), rng.uniform(0, 6, g.n_matter))
        restored = PhaseConfig.from_dict(config.to_dict())
        np.testing.assert_allclose(restored.theta, config.theta)
        np.testing.assert_allclose(restored.phi, config.phi)


class TestRandomStreams(unittest.TestCase):

    def test_streams_are_reproducible_and_independent(self):
        np.testing.assert_array_equal(stream(42, 3).random(5), stream(42, 3).random(5))
        self.assertFalse(np.array_equal(stream(42, 3).random(5), stream(42, 4).random(5)))
        np.testing.assert_array_equal(step_stream(1, 2, 7).random(3), step_stream(1, 2, 7).random(3))

    def test_adjacent_steps_share_no_draws(self):
        first = step_stream(7, 0, 5).random(4096)
        second = step_stream(7, 0, 6).random(4096)
        self.assertEqual(np.intersect1d(first, second).size, 0)
        np.testing.assert_array_equal(step_stream(7, 0, 0).random(8), stream(7, 0).random(8))

    def test_adjacent_steps_are_uncorrelated(self):
        first = step_stream(3, 1, 10).standard_normal(20_000)
        second = step_stream(3, 1, 11).standard_normal(20_000)
        self.assertLess(abs(np.corrcoef(first, second)[0, 1]), 0.05)

    def test_seed_range(self):
        with self.assertRaises(ConfigError):
            stream(-1)
        with self.assertRaises(ConfigError):
            stream(2 ** 64)


if __name__ == '__main__':
    unittest.main()
