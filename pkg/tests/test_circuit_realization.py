import math
import unittest

import numpy as np
from scipy import constants, special

from dags.utils.circuit_realization import (
    E_CHARGE,
    ChargeVector,
    SiteCapacitances,
    SquidParams,
    build_capacitance_matrix,
    calibrate_fluxes,
    calibrate_junction,
    calibration_round_trip,
    compensating_parasitics,
    diagonal_charging_spread,
    dimensionless_jc,
    inverse_capacitance,
    junction_disorder,
    kinetic_energy,
    plasma_frequency_si,
    residual_scaling,
    squid_effective_phasor,
    squid_fourier_coefficients,
    squid_harmonic_expansion,
    squid_potential_exact,
    symmetry_breaking_metric,
)
from dags.utils.errors import CalibrationError, ConfigError, NumericalError
from dags.utils.hadamard_symmetry import REFERENCE_W


class TestSquidPotential(unittest.TestCase):
    """Test cases for the asymmetric DC SQUID coupler."""

    def test_phasor_sum(self):
        phasor = squid_effective_phasor(SquidParams(J_w=1.0, J_t=0.1, Phi_t=0.25))
        self.assertAlmostEqual(phasor.J_eff, math.sqrt(1.01), places=12)
        self.assertAlmostEqual(phasor.Phi_tot, math.atan(0.1) / (2 * math.pi), places=12)
        self.assertFalse(phasor.ill_conditioned)

    def test_half_flux_reverses_sign(self):
        phasor = squid_effective_phasor(SquidParams(J_w=1.0, J_t=0.1, Phi_w=0.5, Phi_t=0.5))
        self.assertAlmostEqual(phasor.J_eff, 1.1, places=12)
        self.assertAlmostEqual(phasor.Phi_tot, 0.5, places=12)

    def test_rigid_limit(self):
        p = SquidParams(J_w=1.0, J_t=0.2)
        for delta in (0.0, 0.7, 2.0):
            self.assertAlmostEqual(squid_potential_exact(delta, p), -1.2 * math.cos(delta), places=12)

    def test_invalid_parameters(self):
        with self.assertRaises(ConfigError):
            SquidParams(J_w=1.0, J_t=1.5)
        with self.assertRaises(ConfigError):
            SquidParams(e_LJ=-0.1)
        with self.assertRaises(ConfigError):
            squid_harmonic_expansion(SquidParams(e_LJ=0.5))

    def test_e_lj_from_inductance(self):
        p = SquidParams(J_w=1.0, J_t=0.05, L_arm=10e-12, energy_unit="kelvin")
        expected = 4 * math.pi ** 2 * 10e-12 * constants.k / constants.physical_constants["mag. flux quantum"][0] ** 2
        self.assertAlmostEqual(p.e_LJ, expected, places=15)
        self.assertAlmostEqual(p.e_LJ, 1.2747e-3, delta=1e-7)

    def test_single_junction_harmonics_match_bessel_series(self):
        e = 0.01
        coefficients = squid_fourier_coefficients(SquidParams(J_w=1.0, J_t=0.0, e_LJ=e), n_harmonics=4, n_points=256)
        for n in range(1, 5):
            expected = 2.0 / (n ** 2 * e) * (-1) ** n * special.jv(n, n * e)
            self.assertAlmostEqual(coefficients["cos"][n], expected, delta=1e-9)
        self.assertAlmostEqual(coefficients["cos"][2], 0.0025, delta=1e-6)

    def test_series_tracks_fourier_analysis(self):
        p = SquidParams(J_w=1.0, J_t=0.01, Phi_t=0.1, e_LJ=0.01)
        series = squid_harmonic_expansion(p).fourier()
        measured = squid_fourier_coefficients(p)
        for n in range(4):
            self.assertAlmostEqual(series["cos"][n], measured["cos"][n], delta=1e-6)
            self.assertAlmostEqual(series["sin"][n], measured["sin"][n], delta=1e-6)

    def test_residual_is_cubic(self):
        scaling = residual_scaling()
        self.assertGreaterEqual(scaling["slope"], 2.7)
        self.assertLessEqual(scaling["slope"], 3.3)


class TestCalibration(unittest.TestCase):
    """Test cases for the bias-flux calibration."""

    def setUp(self):
        W = REFERENCE_W.as_array()
        self.targets = {(n, i): (int(W[n, i]), 1.0) for n in range(4) for i in range(4)}

    def test_nominal_junctions(self):
        positive = calibrate_junction("a", 1, 1.0, 0.95, 0.05)
        self.assertEqual((positive.Phi_w, positive.Phi_t), (0.0, 0.0))
        negative = calibrate_junction("b", -1, 1.0, 0.95, 0.05)
        self.assertEqual((negative.Phi_w, negative.Phi_t), (0.5, 0.5))
        self.assertLess(negative.relative_error, 1e-12)

    def test_feasible_disorder(self):
        calibration = calibrate_junction("c", 1, 1.0, 1.02, 0.05)
        self.assertLess(calibration.relative_error, 1e-10)
        self.assertLess(calibration.offset_error, 1e-10)
        self.assertAlmostEqual(calibration.feasibility_bound, 0.05)

    def test_infeasible_disorder_names_junctions(self):
        disorder = {(0, 0): 1.2, (1, 2): 0.7}
        with self.assertRaises(CalibrationError) as ctx:
            calibrate_fluxes(self.targets, disorder, 0.05)
        self.assertEqual(set(ctx.exception.details), {str((0, 0)), str((1, 2))})
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_unknown_junction(self):
        with self.assertRaises(ConfigError):
            calibrate_fluxes(self.targets, {(9, 9): 1.0}, 0.05)

    def test_round_trip_over_disorder_draws(self):
        result = calibration_round_trip(self.targets, 0.05, n_draws=1000, seed=12)
        self.assertLess(result["max_relative_error"], 1e-10)
        self.assertLess(result["max_offset_error"], 1e-10)


class TestCapacitance(unittest.TestCase):
    """Test cases for the single-site electrostatics."""

    def setUp(self):
        self.sc = SiteCapacitances(C_J=50e-15, C_m=10e-15, C_g=20e-15)
        self.Cmat = build_capacitance_matrix(self.sc)

    def test_matrix_structure(self):
        np.testing.assert_allclose(self.Cmat, self.Cmat.T)
        self.assertAlmostEqual(self.Cmat[0, 0], 10e-15 + 4 * 50e-15, delta=1e-27)
        self.assertAlmostEqual(self.Cmat[4, 4], 10e-15 + 4 * 50e-15, delta=1e-27)
        self.assertAlmostEqual(self.Cmat[0, 5], -50e-15, delta=1e-27)
        self.assertEqual(self.Cmat[0, 1], 0.0)
        self.assertGreater(np.linalg.eigvalsh(self.Cmat).min(), 0.0)

    def test_kinetic_energy_of_one_pair(self):
        energy = kinetic_energy(ChargeVector({"m1": 1.0}), self.Cmat)
        expected = 0.5 * (2 * E_CHARGE) ** 2 * inverse_capacitance(self.sc)[0, 0]
        self.assertAlmostEqual(energy.joules / expected, 1.0, places=10)
        self.assertAlmostEqual(energy.kelvin, energy.joules / constants.k)

    def test_charge_vector_from_array(self):
        charges = ChargeVector.from_array([1.0, 0, 0, 0, 0, 0, 0, 0])
        self.assertEqual(
            kinetic_energy(charges, self.Cmat).joules,
            kinetic_energy(ChargeVector({"m1": 1.0}), self.Cmat).joules,
        )
        with self.assertRaises(ConfigError):
            ChargeVector.from_array([1.0, 2.0])

    def test_kinetic_energy_errors(self):
        with self.assertRaises(NumericalError):
            kinetic_energy(np.ones(2), np.zeros((2, 2)))
        with self.assertRaises(ConfigError):
            ChargeVector({"m5": 1.0})
        with self.assertRaises(ConfigError):
            kinetic_energy(np.ones(3), self.Cmat)

    def test_parasitics_break_and_compensation_restores_symmetry(self):
        self.assertLess(symmetry_breaking_metric(self.sc), 1e-12)
        uneven = SiteCapacitances(C_m_par=1e-15, C_m_par2=0.3e-15, C_m_par3=0.1e-15)
        self.assertGreater(symmetry_breaking_metric(uneven), 1e-6)
        symmetric, added = compensating_parasitics(uneven)
        self.assertAlmostEqual(added["C_m_par"], 0.0)
        self.assertAlmostEqual(added["C_m_par3"], 0.9e-15, delta=1e-27)
        self.assertLess(symmetry_breaking_metric(symmetric), 1e-12)

    def test_junction_disorder_spreads_charging_energy(self):
        self.assertAlmostEqual(diagonal_charging_spread(self.sc), 0.0, places=12)
        disordered = junction_disorder(self.sc, 0.1, seed=2)
        self.assertGreater(diagonal_charging_spread(disordered), 0.0)
        with self.assertRaises(ConfigError):
            junction_disorder(self.sc, 1.5, seed=2)

    def test_unit_conversions(self):
        J, C = 1e-22, 50e-15
        self.assertAlmostEqual(dimensionless_jc(J, C), J * C / (2 * E_CHARGE) ** 2)
        self.assertAlmostEqual(plasma_frequency_si(J, C) / (2 * E_CHARGE * math.sqrt(J / C) / constants.hbar), 1.0)
        with self.assertRaises(ConfigError):
            SiteCapacitances(C_J=-1e-15)


if __name__ == '__main__':
    unittest.main()
