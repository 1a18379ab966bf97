import math
import unittest

import numpy as np
from scipy import sparse

from dags.utils.effective_quantum import (
    SpinOperatorMatrix,
    StabilizerModelParams,
    WkbParams,
    build_effective_hamiltonian,
    check_conserved_plaquettes,
    commutator_norm,
    exact_diagonalize,
    group_levels,
    lambda_j_from_classical,
    plaquette_operator,
    plasma_frequency,
    scaling_probe,
    stabilizer_spectrum_oracle,
    star_operator,
    total_sz_operator,
    wkb_flip_amplitude,
    wkb_turnover,
    wxy_cluster,
    wxy_gauge_generators,
    wxy_hamiltonian,
)
from dags.utils.classical_energy import CouplingParams, site_josephson_energy, tethered_config
from dags.utils.errors import ConfigError, SizeGuardError
from dags.utils.lattice import build_lattice


class TestToricModel(unittest.TestCase):
    """Test cases for the effective stabilizer Hamiltonian."""

    def setUp(self):
        self.g = build_lattice(2, 2)
        self.params = StabilizerModelParams(lambda_J=1.0, lambda_flip=1.0)
        self.H = build_effective_hamiltonian(self.g, self.params)

    def test_hamiltonian_is_hermitian(self):
        self.assertEqual(self.H.dimension, 256)
        self.assertTrue(self.H.is_hermitian())

    def test_coordinate_export(self):
        coo = self.H.to_coo_dict()
        self.assertEqual(coo["shape"], [256, 256])
        self.assertEqual(coo["n_spins"], 8)
        rebuilt = sparse.coo_matrix((coo["data"], (coo["row"], coo["col"])), shape=(256, 256))
        self.assertEqual(abs(rebuilt - self.H.matrix).max(), 0.0)

    def test_oracle_levels(self):
        oracle = stabilizer_spectrum_oracle(self.g, self.params)
        self.assertEqual(oracle[0], (-8.0, 4))
        self.assertEqual(oracle[1], (-4.0, 48))
        self.assertEqual(sum(d for _, d in oracle), 256)

    def test_dense_spectrum_matches_oracle(self):
        values = exact_diagonalize(self.H, 256)
        levels = group_levels(values)
        oracle = stabilizer_spectrum_oracle(self.g, self.params)
        self.assertEqual([d for _, d in levels], [d for _, d in oracle])
        for (energy, _), (expected, _) in zip(levels, oracle):
            self.assertAlmostEqual(energy, expected, places=9)

    def test_sparse_ground_energy(self):
        values = exact_diagonalize(self.H, 4, method="sparse", seed=3)
        self.assertAlmostEqual(values[0], -8.0, places=8)
        self.assertTrue(np.all(np.diff(values) >= 0))

    def test_two_valued_flips(self):
        params = StabilizerModelParams.two_valued(self.g, 1.0, 0.5, 0.2)
        self.assertEqual(params.flip(0), 0.5)
        self.assertEqual(params.flip(1), 0.2)
        H = build_effective_hamiltonian(self.g, params)
        oracle = stabilizer_spectrum_oracle(self.g, params)
        self.assertAlmostEqual(exact_diagonalize(H, 1)[0], oracle[0][0], places=9)
        self.assertAlmostEqual(oracle[0][0], -4.0 - 2 * 0.5 - 2 * 0.2, places=12)

    def test_stabilizers_commute(self):
        checks = check_conserved_plaquettes(self.H, self.g)
        self.assertEqual(checks["n_generators"], 4)
        self.assertEqual(checks["max_generator_commutator"], 0.0)
        self.assertLess(checks["max_hamiltonian_commutator"], 1e-12)
        self.assertEqual(commutator_norm(star_operator(self.g, 0), plaquette_operator(self.g, 0)), 0.0)

    def test_invalid_inputs(self):
        with self.assertRaises(ConfigError):
            StabilizerModelParams(lambda_J=-1.0)
        with self.assertRaises(SizeGuardError):
            build_effective_hamiltonian(build_lattice(4, 4), self.params)
        skew = SpinOperatorMatrix(sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])), 1)
        with self.assertRaises(ConfigError):
            exact_diagonalize(skew, 1)
        with self.assertRaises(ConfigError):
            exact_diagonalize(self.H, 0)

    def test_star_gap_from_classical_cost(self):
        self.assertAlmostEqual(lambda_j_from_classical(1.0), 8.0, places=9)
        self.assertAlmostEqual(lambda_j_from_classical(2.0), 16.0, places=9)

    def test_star_gap_is_shared_by_two_defect_stars(self):
        g = build_lattice(2, 2)
        params = CouplingParams(1.0)
        theta = np.zeros(g.n_links)
        before = tethered_config(g, theta, params)
        link = int(g.plaquette_table[0][0])
        theta[link] += np.pi
        after = tethered_config(g, theta, params)
        costs = [site_josephson_energy(after, s, params) - site_josephson_energy(before, s, params) for s in range(g.n_sites)]
        defects = sorted(int(s) for s in g.link_endpoints[link])
        for s in range(g.n_sites):
            self.assertAlmostEqual(costs[s], 4.0 if s in defects else 0.0, places=8)
        self.assertAlmostEqual(sum(costs), lambda_j_from_classical(1.0), places=8)


class TestWxyModel(unittest.TestCase):
    """Test cases for the spin-1/2 matter-gauge model."""

    def test_single_waffle_symmetries(self):
        cluster = wxy_cluster()
        self.assertEqual(cluster.n_spins, 8)
        H = wxy_hamiltonian(cluster, J=1.0)
        self.assertTrue(H.is_hermitian())
        generators = wxy_gauge_generators(cluster)
        # even subsets of four legs
        self.assertEqual(len(generators), 7)
        checks = check_conserved_plaquettes(H, cluster)
        self.assertLess(checks["max_hamiltonian_commutator"], 1e-10)

    def test_xy_coupling_conserves_total_sz(self):
        cluster = wxy_cluster()
        H = wxy_hamiltonian(cluster, J=1.0, h_mu=0.3, h_sigma=-0.2)
        self.assertLess(commutator_norm(H, total_sz_operator(cluster.n_spins)), 1e-12)

    def test_pair_cluster(self):
        g = build_lattice(2, 2)
        cluster = wxy_cluster(g, [0, 1])
        self.assertEqual(cluster.n_spins, 14)
        H = wxy_hamiltonian(cluster)
        checks = check_conserved_plaquettes(H, cluster)
        self.assertGreater(checks["n_generators"], 0)
        self.assertLess(checks["max_hamiltonian_commutator"], 1e-10)

    def test_cluster_size_guard(self):
        with self.assertRaises(SizeGuardError):
            wxy_cluster(build_lattice(4, 2))


class TestWkb(unittest.TestCase):

    def test_reference_amplitude(self):
        amplitude = wkb_flip_amplitude(WkbParams(J=1.0, C=16.0, k=1.0, K_wkb=1.0))
        self.assertAlmostEqual(amplitude, 8.4584e-3, delta=1e-7)
        self.assertAlmostEqual(amplitude, math.exp(-2.0) / 16.0, places=15)

    def test_scaling_exponent(self):
        probe = scaling_probe(np.logspace(0, 4, 20), k=1.0, K_wkb=1.3)
        self.assertAlmostEqual(probe["exponent"], 0.25, places=10)
        self.assertAlmostEqual(probe["K_fit"], 1.3, places=8)
        self.assertAlmostEqual(probe["decades"], 4.0)

    def test_turnover(self):
        self.assertIsNone(wkb_turnover(WkbParams(k=1.0)))
        turnover = wkb_turnover(WkbParams(k=-1.0, K_wkb=1.0))
        self.assertAlmostEqual(turnover, 256.0)
        peak = wkb_flip_amplitude(WkbParams(C=turnover, k=-1.0))
        self.assertGreater(peak, wkb_flip_amplitude(WkbParams(C=200.0, k=-1.0)))
        self.assertGreater(peak, wkb_flip_amplitude(WkbParams(C=320.0, k=-1.0)))

    def test_invalid_parameters(self):
        with self.assertRaises(ConfigError):
            WkbParams(C=0.0)
        with self.assertRaises(ConfigError):
            scaling_probe([10.0])
        with self.assertRaises(ConfigError):
            plasma_frequency(1.0, -1.0)
        self.assertAlmostEqual(plasma_frequency(4.0, 1.0), 2.0)


if __name__ == '__main__':
    unittest.main()
