import unittest

import numpy as np

from dags.utils.classical_energy import CouplingParams, site_energies
from dags.utils.errors import ConfigError
from dags.utils.hadamard_symmetry import (
    REFERENCE_PAIR,
    REFERENCE_W,
    AutomorphismPair,
    MonomialMatrix,
    SignMatrix,
    apply_gauge_transformation,
    compose_pairs,
    enumerate_automorphism_pairs,
    flat_band_spectrum,
    invert_pair,
    is_abelian,
    is_closed,
    is_hadamard,
    load_pairs,
    load_sign_matrix,
    monomial_to_dense,
    plaquette_pair,
    serialize_pairs,
    serialize_sign_matrix,
    verify_automorphism,
)
from dags.utils.lattice import PhaseConfig, build_lattice
from dags.utils.rng import stream


class TestSignMatrix(unittest.TestCase):
    """Test cases for the coupling matrix and monomial matrices."""

    def test_reference_matrix_is_hadamard(self):
        W = REFERENCE_W.as_array()
        np.testing.assert_array_equal(W.T @ W, 4 * np.eye(4, dtype=np.int64))
        self.assertTrue(is_hadamard(REFERENCE_W))

    def test_all_ones_is_not_hadamard(self):
        self.assertFalse(is_hadamard(SignMatrix.from_rows([[1] * 4] * 4)))

    def test_rejects_zero_entry(self):
        rows = [[1, 1, 1, 1], [1, -1, 1, 1], [1, 1, 0, 1], [1, 1, 1, -1]]
        with self.assertRaises(ConfigError):
            SignMatrix.from_rows(rows)

    def test_rejects_non_permutation(self):
        with self.assertRaises(ConfigError):
            MonomialMatrix((0, 0, 1, 2), (1, 1, 1, 1))

    def test_monomial_dense_form(self):
        dense = monomial_to_dense(REFERENCE_PAIR.left)
        np.testing.assert_array_equal(np.count_nonzero(dense, axis=0), np.ones(4))
        np.testing.assert_array_equal(np.count_nonzero(dense, axis=1), np.ones(4))
        self.assertTrue(set(np.unique(dense)) <= {-1, 0, 1})

    def test_compose_matches_matrix_product(self):
        a = MonomialMatrix((1, 2, 3, 0), (1, -1, 1, -1))
        b = MonomialMatrix((3, 1, 0, 2), (-1, -1, 1, 1))
        np.testing.assert_array_equal(a.compose(b).to_dense(), a.to_dense() @ b.to_dense())
        np.testing.assert_array_equal(a.inverse().to_dense() @ a.to_dense(), np.eye(4, dtype=np.int64))

    def test_right_factor_must_be_diagonal(self):
        with self.assertRaises(ConfigError):
            AutomorphismPair(MonomialMatrix.identity(), MonomialMatrix((1, 0, 2, 3), (1, 1, 1, 1)))


class TestAutomorphisms(unittest.TestCase):
    """Test cases for the automorphism group of W."""

    def setUp(self):
        self.pairs = enumerate_automorphism_pairs(REFERENCE_W)

    def test_reference_pair_satisfies_automorphism(self):
        lhs = REFERENCE_PAIR.left.inverse().to_dense() @ REFERENCE_W.as_array() @ REFERENCE_PAIR.right.to_dense()
        np.testing.assert_array_equal(lhs, REFERENCE_W.as_array())
        self.assertTrue(verify_automorphism(REFERENCE_W, REFERENCE_PAIR))

    def test_enumeration_contains_reference_pair(self):
        self.assertIn(REFERENCE_PAIR, self.pairs)

    def test_gauge_group_has_eight_elements(self):
        # one pair per even-weight R
        self.assertEqual(len(self.pairs), 8)
        self.assertTrue(all(len(pair.flipped_legs) % 2 == 0 for pair in self.pairs))
        self.assertEqual(len({pair.right for pair in self.pairs}), 8)

    def test_group_is_closed_and_abelian(self):
        self.assertTrue(is_closed(self.pairs))
        self.assertTrue(is_abelian(self.pairs))
        self.assertTrue(all(verify_automorphism(REFERENCE_W, pair) for pair in self.pairs))

    def test_inverse_and_identity(self):
        identity = AutomorphismPair(MonomialMatrix.identity(), MonomialMatrix.identity())
        self.assertIn(identity, self.pairs)
        for pair in self.pairs:
            self.assertEqual(compose_pairs(pair, invert_pair(pair)), identity)

    def test_full_monomial_search_contains_gauge_group(self):
        full = enumerate_automorphism_pairs(REFERENCE_W, diagonal_right=False)
        self.assertTrue(set(self.pairs) <= {AutomorphismPair(p.left, p.right, True) for p in full if p.right.is_diagonal})
        self.assertTrue(is_closed(full))
        self.assertTrue(all(verify_automorphism(REFERENCE_W, pair) for pair in full))

    def test_non_hadamard_is_rejected(self):
        with self.assertRaises(ConfigError):
            enumerate_automorphism_pairs(SignMatrix.from_rows([[1] * 4] * 4))

    def test_plaquette_pair_flips_requested_legs(self):
        self.assertEqual(plaquette_pair(REFERENCE_W, [0, 1]), REFERENCE_PAIR)
        self.assertEqual(plaquette_pair(REFERENCE_W, [1, 2]).flipped_legs, (1, 2))
        with self.assertRaises(ConfigError):
            plaquette_pair(REFERENCE_W, [3])

    def test_serialized_pairs_load_back(self):
        document = serialize_pairs(self.pairs)
        self.assertEqual(document["n_pairs"], 8)
        self.assertEqual(load_pairs(document), self.pairs)
        self.assertEqual(load_sign_matrix(serialize_sign_matrix(REFERENCE_W)), REFERENCE_W)


class TestSpectrumAndGaugeAction(unittest.TestCase):

    def test_flat_band_spectrum(self):
        self.assertEqual(flat_band_spectrum(REFERENCE_W), [(-2.0, 4), (2.0, 4)])

    def test_gauge_transformation_preserves_site_energy(self):
        g = build_lattice(2, 2)
        rng = stream(11, 0)
        config = PhaseConfig(g, rng.uniform(0, 2 * np.pi, g.n_links), rng.uniform(0, 2 * np.pi, g.n_matter))
        params = CouplingParams()
        before = site_energies(config, params)
        for pair in enumerate_automorphism_pairs(REFERENCE_W):
            after = site_energies(apply_gauge_transformation(config, 1, pair), params)
            self.assertAlmostEqual(after[1], before[1], places=12)

    def test_gauge_transformation_checks_site(self):
        g = build_lattice(2, 2)
        config = PhaseConfig(g, np.zeros(g.n_links), np.zeros(g.n_matter))
        with self.assertRaises(ConfigError):
            apply_gauge_transformation(config, 4, REFERENCE_PAIR)


if __name__ == '__main__':
    unittest.main()
