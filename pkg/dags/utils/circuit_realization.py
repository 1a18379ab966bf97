import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Hashable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import constants, fft, linalg, optimize

from .errors import CalibrationError, ConfigError, NumericalError
from .rng import stream

logger = logging.getLogger(__name__)

PHI_0 = constants.physical_constants["mag. flux quantum"][0]
E_CHARGE = constants.e
K_B = constants.k
HBAR = constants.hbar

SERIES_MAX_E_LJ = 0.3
J_EFF_THRESHOLD = 1e-6
GRADIENT_TOL = 1e-8
CONDITION_WARN = 1e8
CONDITION_MAX = 1e13

MATTER_WIRES = ("m1", "m2", "m3", "m4")
GAUGE_WIRES = ("g1", "g2", "g3", "g4")
WIRE_LABELS = MATTER_WIRES + GAUGE_WIRES


def kelvin_to_joule(temperature: float) -> float:
    return temperature * K_B


def joule_to_kelvin(energy: float) -> float:
    return energy / K_B


def e_lj_from_inductance(L_arm: float, J_w: float) -> float:
    """
    Ratio of Josephson to linear inductive energy, 4 pi^2 L J_w / Phi_0^2.

    Args:
        L_arm: Arm inductance in henries
        J_w: Josephson energy of the large junction in joules

    Returns:
        Dimensionless e_LJ
    """
    if L_arm < 0 or J_w < 0:
        raise ConfigError("inductance and Josephson energy must be nonnegative", module="circuit_realization")
    return 4 * math.pi ** 2 * L_arm * J_w / PHI_0 ** 2


def _wrap_flux(flux: float) -> float:
    """Map a flux in units of Phi_0 onto (-1/2, 1/2]."""
    wrapped = flux - math.ceil(flux - 0.5)
    return 0.0 if wrapped == 0 else wrapped


@dataclass(frozen=True)
class SquidParams:
    """
    Asymmetric DC SQUID coupling one matter wire to one gauge wire.

    Fluxes are in units of Phi_0. J_w and J_t share one energy unit; when
    L_arm is given, e_LJ is derived from it and J_w is read in `energy_unit`
    ("joule" or "kelvin").
    """

    J_w: float = 1.0
    J_t: float = 0.1
    Phi_w: float = 0.0
    Phi_t: float = 0.0
    e_LJ: Optional[float] = None
    L_arm: Optional[float] = None
    energy_unit: str = "joule"

    def __post_init__(self):
        if not self.J_w > 0 or not self.J_t >= 0:
            raise ConfigError(f"need J_w > 0 and J_t >= 0, got {self.J_w}, {self.J_t}", module="circuit_realization")
        if not self.d_J < 1:
            raise ConfigError(f"d_J = J_t/J_w must be below 1, got {self.d_J}", module="circuit_realization")
        if self.energy_unit not in ("joule", "kelvin"):
            raise ConfigError(f"energy_unit must be 'joule' or 'kelvin', got {self.energy_unit!r}", module="circuit_realization")
        e_lj = self.e_LJ
        if self.L_arm is not None:
            J_joule = kelvin_to_joule(self.J_w) if self.energy_unit == "kelvin" else self.J_w
            derived = e_lj_from_inductance(self.L_arm, J_joule)
            if e_lj is not None and not math.isclose(e_lj, derived, rel_tol=1e-9, abs_tol=1e-15):
                raise ConfigError(
                    f"e_LJ={e_lj} is inconsistent with L_arm={self.L_arm} and J_w={self.J_w} (gives {derived})",
                    module="circuit_realization",
                )
            e_lj = derived
        e_lj = 0.0 if e_lj is None else float(e_lj)
        if not np.isfinite(e_lj) or e_lj < 0:
            raise ConfigError(f"e_LJ must be >= 0, got {e_lj}", module="circuit_realization")
        object.__setattr__(self, "e_LJ", e_lj)

    @property
    def d_J(self) -> float:
        return self.J_t / self.J_w

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class PhasorCoupling(NamedTuple):
    J_eff: float
    Phi_tot: float
    ill_conditioned: bool

    @property
    def offset(self) -> float:
        """Phase offset in radians."""
        return 2 * math.pi * self.Phi_tot


def squid_effective_phasor(p: SquidParams) -> PhasorCoupling:
    """
    Rigid-phase coupling of the two junctions: the vector sum of their phasors.

    Args:
        p: SQUID parameters

    Returns:
        PhasorCoupling with J_eff = |J_w e^{2 pi i Phi_w} + J_t e^{2 pi i Phi_t}| and Phi_tot
        its argument in units of Phi_0, wrapped onto (-1/2, 1/2]. `ill_conditioned` is set
        when J_eff is too small for the offset to mean anything.
    """
    return _phasor(p.J_w, p.J_t, p.Phi_w, p.Phi_t)


def _phasor(J_w: float, J_t: float, Phi_w: float, Phi_t: float) -> PhasorCoupling:
    total = J_w * np.exp(2j * math.pi * Phi_w) + J_t * np.exp(2j * math.pi * Phi_t)
    J_eff = float(abs(total))
    ill = J_eff < J_EFF_THRESHOLD * (J_w + J_t)
    if ill:
        logger.warning(f"effective coupling {J_eff:.3e} is below threshold, phase offset is ill-conditioned")
    return PhasorCoupling(J_eff, _wrap_flux(float(np.angle(total)) / (2 * math.pi)), ill)


def _oscillator_energy(x: np.ndarray, u_w: float, u_t: float, d_J: float, e_LJ: float) -> float:
    return -math.cos(u_w - x[0]) - d_J * math.cos(u_t - x[1]) + (x[0] ** 2 + x[1] ** 2) / (2 * e_LJ)


def _oscillator_gradient(x: np.ndarray, u_w: float, u_t: float, d_J: float, e_LJ: float) -> np.ndarray:
    return np.array([x[0] / e_LJ - math.sin(u_w - x[0]), x[1] / e_LJ - d_J * math.sin(u_t - x[1])])


def _oscillator_hessian(x: np.ndarray, u_w: float, u_t: float, d_J: float, e_LJ: float) -> np.ndarray:
    return np.diag([1 / e_LJ + math.cos(u_w - x[0]), 1 / e_LJ + d_J * math.cos(u_t - x[1])])


def squid_potential_exact(delta: float, p: SquidParams) -> float:
    """
    Magnetic potential of the SQUID with both arm oscillators relaxed.

    The displaced oscillator coordinates phi_ow, phi_ot are eliminated by
    numerical minimization of
        U/J_w = -cos(u_w - phi_ow) - d_J cos(u_t - phi_ot) + (phi_ow^2 + phi_ot^2) / (2 e_LJ)
    with u_w = delta + 2 pi Phi_w and u_t = delta + 2 pi Phi_t.

    Args:
        delta: Phase difference phi_n - theta_i across the coupler
        p: SQUID parameters

    Returns:
        Energy in the unit of J_w

    Raises:
        NumericalError: If the minimizer stops away from a stationary point
    """
    u_w = delta + 2 * math.pi * p.Phi_w
    u_t = delta + 2 * math.pi * p.Phi_t
    d_J, e_LJ = p.d_J, p.e_LJ
    if e_LJ == 0:
        return p.J_w * (-math.cos(u_w) - d_J * math.cos(u_t))

    args = (u_w, u_t, d_J, e_LJ)
    x0 = np.array([e_LJ * math.sin(u_w), e_LJ * d_J * math.sin(u_t)])
    result = optimize.minimize(
        _oscillator_energy,
        x0,
        args=args,
        method="trust-exact",
        jac=_oscillator_gradient,
        hess=_oscillator_hessian,
        options={"gtol": 1e-12},
    )
    gradient = float(np.linalg.norm(_oscillator_gradient(result.x, *args)))
    if not np.isfinite(result.fun) or gradient > GRADIENT_TOL * max(1.0, 1.0 / e_LJ):
        logger.error(f"oscillator elimination did not converge at delta={delta}: |grad|={gradient:.3e}")
        raise NumericalError(
            f"SQUID potential minimization did not converge at delta={delta}",
            module="circuit_realization",
            details={"delta": delta, "gradient_norm": gradient, "message": str(result.message)},
        )
    if e_LJ >= 1:
        logger.warning(f"e_LJ={e_LJ} >= 1: the relaxed potential may be multivalued")
    return p.J_w * float(result.fun)


def squid_potential_sweep(p: SquidParams, deltas: Sequence[float]) -> np.ndarray:
    return np.array([squid_potential_exact(float(delta), p) for delta in deltas])


@dataclass(frozen=True)
class HarmonicExpansion:
    """Second-order series of the relaxed SQUID potential, coefficients in units of J_w."""

    c0: float
    c1: float
    c_d: float
    c2: float
    c3: float
    params: SquidParams

    def evaluate(self, delta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        u_w = np.asarray(delta) + 2 * math.pi * self.params.Phi_w
        u_t = np.asarray(delta) + 2 * math.pi * self.params.Phi_t
        value = (
            self.c0
            + self.c1 * np.cos(u_w)
            + self.c_d * np.cos(u_t)
            + self.c2 * np.cos(2 * u_w)
            + self.c3 * np.cos(3 * u_w)
        )
        return self.params.J_w * value

    def fourier(self) -> Dict[str, List[float]]:
        """Series coefficients in the variable u_w, laid out like squid_fourier_coefficients."""
        shift = 2 * math.pi * (self.params.Phi_t - self.params.Phi_w)
        cos = [self.c0, self.c1 + self.c_d * math.cos(shift), self.c2, self.c3, 0.0]
        sin = [0.0, -self.c_d * math.sin(shift), 0.0, 0.0, 0.0]
        return {"cos": cos, "sin": sin}

    def to_dict(self) -> Dict[str, float]:
        return {"c0": self.c0, "c1": self.c1, "c_d": self.c_d, "c2": self.c2, "c3": self.c3}


def squid_harmonic_expansion(p: SquidParams) -> HarmonicExpansion:
    """
    Coefficients of cos(u_w), cos(u_t), cos(2 u_w), cos(3 u_w) to second order in e_LJ.

    c0 is the constant offset -e_LJ/4 left over from the oscillator zero point.

    Raises:
        ConfigError: If e_LJ is too large for the series to hold
    """
    e = p.e_LJ
    if e > SERIES_MAX_E_LJ:
        raise ConfigError(
            f"harmonic expansion needs e_LJ <= {SERIES_MAX_E_LJ}, got {e}", module="circuit_realization"
        )
    return HarmonicExpansion(
        c0=-e / 4, c1=-(1 - e ** 2 / 8), c_d=-p.d_J, c2=e / 4, c3=-(e ** 2) / 8, params=p
    )


def squid_fourier_coefficients(p: SquidParams, n_harmonics: int = 4, n_points: int = 256) -> Dict[str, List[float]]:
    """
    Fourier analysis of the relaxed potential in the variable u_w = delta + 2 pi Phi_w.

    Args:
        p: SQUID parameters
        n_harmonics: Highest harmonic returned
        n_points: Equally spaced samples over one period

    Returns:
        {'cos': [a_0, a_1, ...], 'sin': [b_0, b_1, ...]} in units of J_w, with
        U/J_w = a_0 + sum_n a_n cos(n u_w) + b_n sin(n u_w)
    """
    if n_points < 2 * n_harmonics + 2:
        raise ConfigError("too few samples for the requested harmonics", module="circuit_realization")
    u = 2 * math.pi * np.arange(n_points) / n_points
    samples = squid_potential_sweep(p, u - 2 * math.pi * p.Phi_w) / p.J_w
    spectrum = fft.rfft(samples) / n_points
    cos = [float(spectrum[0].real)] + [float(2 * spectrum[n].real) for n in range(1, n_harmonics + 1)]
    sin = [0.0] + [float(-2 * spectrum[n].imag) for n in range(1, n_harmonics + 1)]
    return {"cos": cos, "sin": sin}


def expansion_residual(p: SquidParams, n_points: int = 128) -> float:
    """Largest deviation between the relaxed potential and its series, in units of J_w."""
    series = squid_harmonic_expansion(p)
    deltas = 2 * math.pi * np.arange(n_points) / n_points
    exact = squid_potential_sweep(p, deltas)
    return float(np.max(np.abs(exact - series.evaluate(deltas)))) / p.J_w


def residual_scaling(
    e_grid: Sequence[float] = (0.003, 0.01, 0.03), d_J: float = 1e-4, n_points: int = 128
) -> Dict[str, Any]:
    """
    Log-log slope of the series residual against e_LJ.

    d_J enters the residual at order d_J^2 e_LJ, so keep it small when the
    cubic slope is the quantity of interest.
    """
    residuals = [expansion_residual(SquidParams(J_w=1.0, J_t=d_J, e_LJ=e), n_points) for e in e_grid]
    slope, _ = np.polyfit(np.log(e_grid), np.log(residuals), 1)
    logger.info(f"series residual slope {slope:.3f} over e_LJ={list(e_grid)}")
    return {"e_LJ": list(e_grid), "residual": residuals, "slope": float(slope)}


@dataclass(frozen=True)
class JunctionCalibration:
    junction: Hashable
    sign: int
    J_target: float
    J_w: float
    J_t: float
    Phi_w: float
    Phi_t: float
    J_eff: float
    Phi_tot: float
    relative_error: float
    offset_error: float
    feasibility_bound: float

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["junction"] = str(self.junction)
        return record


def _flux_branches(J_w: float, J_t: float, J_target: float) -> List[Tuple[float, float]]:
    """Both (Phi_w, Phi_t) solutions of J_w e^{ia} + J_t e^{ib} = J_target."""
    cos_b = (J_target ** 2 + J_t ** 2 - J_w ** 2) / (2 * J_target * J_t)
    # the nominal J_w = J_target - J_t sits on cos_b = 1; snap rounding noise there
    b = 0.0 if cos_b >= 1 - 1e-12 else math.acos(max(-1.0, cos_b))
    branches = []
    for beta in (b, -b):
        a = float(np.angle(J_target - J_t * np.exp(1j * beta)))
        branches.append((a / (2 * math.pi), beta / (2 * math.pi)))
    return branches


def calibrate_junction(junction: Hashable, sign: int, J_target: float, J_w: float, d_J: float) -> JunctionCalibration:
    """
    Solve the phasor equations for one coupler.

    The small junction is sized as J_t = d_J * J_target. Among the solutions the
    one with the smallest |Phi_t|, then smallest |Phi_w|, then Phi_t >= 0 is kept.

    Raises:
        CalibrationError: If |J_w - J_target| exceeds J_t
    """
    if sign not in (1, -1):
        raise ConfigError(f"junction {junction}: sign must be +1 or -1, got {sign}", module="circuit_realization")
    if not J_target > 0 or not J_w > 0 or not 0 < d_J < 1:
        raise ConfigError(f"junction {junction}: need J_target, J_w > 0 and 0 < d_J < 1", module="circuit_realization")
    J_t = d_J * J_target
    if abs(J_w - J_target) > J_t * (1 + 1e-12):
        raise CalibrationError(
            f"junction {junction}: |J_w - J_target| = {abs(J_w - J_target):.3e} exceeds bound {J_t:.3e}",
            module="circuit_realization",
            details={str(junction): {"J_w": J_w, "J_target": J_target, "bound": J_t}},
        )

    shift = 0.0 if sign == 1 else 0.5
    candidates = [
        (_wrap_flux(phi_w + shift), _wrap_flux(phi_t + shift)) for phi_w, phi_t in _flux_branches(J_w, J_t, J_target)
    ]
    Phi_w, Phi_t = min(candidates, key=lambda c: (round(abs(c[1]), 14), round(abs(c[0]), 14), c[1] < 0))

    phasor = _phasor(J_w, J_t, Phi_w, Phi_t)
    return JunctionCalibration(
        junction=junction,
        sign=sign,
        J_target=J_target,
        J_w=J_w,
        J_t=J_t,
        Phi_w=Phi_w,
        Phi_t=Phi_t,
        J_eff=phasor.J_eff,
        Phi_tot=phasor.Phi_tot,
        relative_error=abs(phasor.J_eff - J_target) / J_target,
        offset_error=abs(_wrap_flux(phasor.Phi_tot - shift)),
        feasibility_bound=J_t,
    )


def calibrate_fluxes(
    targets: Mapping[Hashable, Tuple[int, float]], disorder: Optional[Mapping[Hashable, float]], d_J: float
) -> Dict[Hashable, JunctionCalibration]:
    """
    Calibrate the bias fluxes of every coupler so it realizes its target sign and magnitude.

    Args:
        targets: junction -> (sign, J_target)
        disorder: junction -> actual J_w; a missing junction is taken at the nominal J_target - J_t
        d_J: Small-to-large junction ratio used to size J_t

    Returns:
        junction -> JunctionCalibration (Phi_w, Phi_t and round-trip residuals)

    Raises:
        CalibrationError: Naming every infeasible junction with its bound
    """
    disorder = disorder or {}
    unknown = set(disorder) - set(targets)
    if unknown:
        raise ConfigError(f"disorder given for unknown junctions: {sorted(map(str, unknown))}", module="circuit_realization")

    results: Dict[Hashable, JunctionCalibration] = {}
    infeasible: Dict[str, Dict[str, float]] = {}
    for junction, (sign, J_target) in targets.items():
        J_w = disorder.get(junction, J_target * (1 - d_J))
        try:
            results[junction] = calibrate_junction(junction, sign, J_target, J_w, d_J)
        except CalibrationError as exc:
            infeasible.update(exc.details)

    if infeasible:
        logger.error(f"{len(infeasible)} of {len(targets)} junctions cannot be calibrated")
        raise CalibrationError(
            f"infeasible disorder on junctions {sorted(infeasible)}",
            module="circuit_realization",
            details=infeasible,
        )
    return results


def random_disorder(
    targets: Mapping[Hashable, Tuple[int, float]], d_J: float, seed: int, fraction: float = 1.0, stream_id: int = 0
) -> Dict[Hashable, float]:
    """Draw J_w uniformly within fraction * J_t of each target."""
    if not 0 <= fraction <= 1:
        raise ConfigError(f"fraction must lie in [0, 1], got {fraction}", module="circuit_realization")
    rng = stream(seed, stream_id)
    return {
        junction: float(J_target * (1 + fraction * d_J * rng.uniform(-1.0, 1.0)))
        for junction, (_, J_target) in targets.items()
    }


def calibration_round_trip(
    targets: Mapping[Hashable, Tuple[int, float]], d_J: float, n_draws: int, seed: int, fraction: float = 1.0
) -> Dict[str, Any]:
    """Calibrate n_draws independent disorder draws and report the worst residuals."""
    worst_rel, worst_offset = 0.0, 0.0
    for draw in range(n_draws):
        calibration = calibrate_fluxes(targets, random_disorder(targets, d_J, seed, fraction, stream_id=draw), d_J)
        worst_rel = max(worst_rel, max(c.relative_error for c in calibration.values()))
        worst_offset = max(worst_offset, max(c.offset_error for c in calibration.values()))
    logger.info(f"calibration round trip over {n_draws} draws: max relative error {worst_rel:.2e}")
    return {"n_draws": n_draws, "max_relative_error": worst_rel, "max_offset_error": worst_offset}


@dataclass(frozen=True)
class SiteCapacitances:
    """
    Capacitances of one waffle in farads.

    The parasitics between matter (gauge) wires depend on their separation:
    _par for neighbours, _par2 and _par3 for two and three wires apart.
    C_J_matrix optionally overrides C_J per junction (matter row, gauge column).
    """

    C_J: float = 50e-15
    C_m: float = 10e-15
    C_g: float = 10e-15
    C_m_par: float = 0.0
    C_m_par2: float = 0.0
    C_m_par3: float = 0.0
    C_g_par: float = 0.0
    C_g_par2: float = 0.0
    C_g_par3: float = 0.0
    C_J_matrix: Optional[Tuple[Tuple[float, ...], ...]] = field(default=None, compare=False)

    def __post_init__(self):
        scalars = {k: v for k, v in asdict(self).items() if k != "C_J_matrix"}
        negative = [k for k, v in scalars.items() if not np.isfinite(v) or v < 0]
        if negative:
            raise ConfigError(f"capacitances must be finite and >= 0: {negative}", module="circuit_realization")
        if self.C_J_matrix is not None:
            junctions = np.asarray(self.C_J_matrix, dtype=float)
            if junctions.shape != (4, 4) or np.any(junctions < 0):
                raise ConfigError("C_J_matrix must be a 4x4 nonnegative array", module="circuit_realization")
            object.__setattr__(self, "C_J_matrix", tuple(tuple(float(v) for v in row) for row in junctions))

    @property
    def parasitics(self) -> Tuple[float, ...]:
        return (self.C_m_par, self.C_m_par2, self.C_m_par3, self.C_g_par, self.C_g_par2, self.C_g_par3)

    @property
    def c_j_dominant(self) -> bool:
        return self.C_J > 10 * max(self.parasitics)

    def junction_matrix(self) -> np.ndarray:
        if self.C_J_matrix is None:
            return np.full((4, 4), self.C_J)
        return np.array(self.C_J_matrix)

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["C_J_matrix"] = None if self.C_J_matrix is None else [list(row) for row in self.C_J_matrix]
        return record


def _distance_mutuals(nearest: float, second: float, third: float) -> np.ndarray:
    by_distance = (0.0, nearest, second, third)
    return np.array([[by_distance[abs(i - j)] for j in range(4)] for i in range(4)])


def maxwell_capacitance_matrix(self_capacitance: Sequence[float], mutual: np.ndarray) -> np.ndarray:
    """
    Capacitance matrix from capacitances to ground and a symmetric mutual-capacitance matrix.

    Diagonal entries collect everything attached to a wire; off-diagonal entries are -C_mutual.
    """
    mutual = np.asarray(mutual, dtype=float)
    n = len(self_capacitance)
    if mutual.shape != (n, n) or not np.allclose(mutual, mutual.T):
        raise ConfigError("mutual capacitances must form a symmetric square matrix", module="circuit_realization")
    off = mutual - np.diag(np.diag(mutual))
    return np.diag(np.asarray(self_capacitance, dtype=float) + off.sum(axis=1)) - off


def site_mutual_matrix(sc: SiteCapacitances) -> np.ndarray:
    """8x8 mutual capacitances, order m1..m4, g1..g4; matter-gauge parasitics are neglected."""
    mutual = np.zeros((8, 8))
    mutual[:4, :4] = _distance_mutuals(sc.C_m_par, sc.C_m_par2, sc.C_m_par3)
    mutual[4:, 4:] = _distance_mutuals(sc.C_g_par, sc.C_g_par2, sc.C_g_par3)
    junctions = sc.junction_matrix()
    mutual[:4, 4:] = junctions
    mutual[4:, :4] = junctions.T
    return mutual


def build_capacitance_matrix(sc: SiteCapacitances) -> np.ndarray:
    """
    Single-site capacitance matrix in farads, order m1..m4, g1..g4.

    Matter wires see C_m to ground, gauge wires C_g/2 (shared between two sites).
    """
    self_capacitance = [sc.C_m] * 4 + [sc.C_g / 2] * 4
    return maxwell_capacitance_matrix(self_capacitance, site_mutual_matrix(sc))


def _check_condition(Cmat: np.ndarray) -> float:
    condition = float(np.linalg.cond(Cmat))
    if not np.isfinite(condition) or condition > CONDITION_MAX:
        logger.error(f"capacitance matrix is singular (condition number {condition:.3e})")
        raise NumericalError(
            "capacitance matrix is singular", module="circuit_realization", details={"condition_number": condition}
        )
    if condition > CONDITION_WARN:
        logger.warning(f"capacitance matrix is ill-conditioned (condition number {condition:.3e})")
    return condition


@dataclass(frozen=True)
class ChargeVector:
    """Wire charges in units of 2e, keyed by wire label."""

    charges: Mapping[str, float]

    def __post_init__(self):
        unknown = set(self.charges) - set(WIRE_LABELS)
        if unknown:
            raise ConfigError(f"unknown wires {sorted(unknown)}; expected {WIRE_LABELS}", module="circuit_realization")
        if not all(np.isfinite(v) for v in self.charges.values()):
            raise ConfigError("charges must be finite", module="circuit_realization")

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ChargeVector":
        if len(values) != len(WIRE_LABELS):
            raise ConfigError(f"expected {len(WIRE_LABELS)} charges, got {len(values)}", module="circuit_realization")
        return cls(dict(zip(WIRE_LABELS, map(float, values))))

    def as_array(self) -> np.ndarray:
        return np.array([self.charges.get(label, 0.0) for label in WIRE_LABELS])


class KineticEnergy(NamedTuple):
    joules: float
    kelvin: float
    condition_number: float


def kinetic_energy(Q: Union[ChargeVector, Sequence[float]], Cmat: np.ndarray) -> KineticEnergy:
    """
    Electrostatic energy 1/2 Q^T C^-1 Q with Q in coulombs (2e per unit charge).

    Raises:
        NumericalError: If Cmat is singular
    """
    charges = Q.as_array() if isinstance(Q, ChargeVector) else np.asarray(Q, dtype=float)
    Cmat = np.asarray(Cmat, dtype=float)
    if charges.shape != (Cmat.shape[0],):
        raise ConfigError(f"charge vector of length {charges.size} does not match matrix {Cmat.shape}", module="circuit_realization")
    condition = _check_condition(Cmat)
    q_si = 2 * E_CHARGE * charges
    energy = 0.5 * float(q_si @ linalg.solve(Cmat, q_si, assume_a="sym"))
    return KineticEnergy(energy, joule_to_kelvin(energy), condition)


def inverse_capacitance(sc: SiteCapacitances) -> np.ndarray:
    Cmat = build_capacitance_matrix(sc)
    _check_condition(Cmat)
    return linalg.inv(Cmat)


def symmetry_breaking_metric(sc: SiteCapacitances) -> float:
    """
    Largest relative change of C^-1 under a permutation of the four matter wires.

    Returns:
        max over permutations of ||P C^-1 P^T - C^-1||_F / ||C^-1||_F; zero exactly when
        the electrostatics respects all matter permutations
    """
    inverse = inverse_capacitance(sc)
    norm = np.linalg.norm(inverse)
    worst = 0.0
    for perm in itertools.permutations(range(4)):
        order = list(perm) + [4, 5, 6, 7]
        worst = max(worst, float(np.linalg.norm(inverse[np.ix_(order, order)] - inverse)))
    return worst / norm


def compensating_parasitics(sc: SiteCapacitances, include_gauge: bool = False) -> Tuple[SiteCapacitances, Dict[str, float]]:
    """
    Added mutual capacitances that equalize every matter pair at the largest parasitic.

    Returns:
        The symmetrized SiteCapacitances and the capacitance added per separation
    """
    target = max(sc.C_m_par, sc.C_m_par2, sc.C_m_par3)
    added = {
        "C_m_par": target - sc.C_m_par,
        "C_m_par2": target - sc.C_m_par2,
        "C_m_par3": target - sc.C_m_par3,
    }
    if include_gauge:
        gauge_target = max(sc.C_g_par, sc.C_g_par2, sc.C_g_par3)
        added.update(
            {
                "C_g_par": gauge_target - sc.C_g_par,
                "C_g_par2": gauge_target - sc.C_g_par2,
                "C_g_par3": gauge_target - sc.C_g_par3,
            }
        )
    symmetric = replace(sc, **{key: getattr(sc, key) + value for key, value in added.items()})
    logger.info(f"compensating parasitics: {added}")
    return symmetric, added


def junction_disorder(sc: SiteCapacitances, spread: float, seed: int) -> SiteCapacitances:
    """Per-junction C_J drawn uniformly within a fractional spread of the nominal value."""
    if not 0 <= spread < 1:
        raise ConfigError(f"spread must lie in [0, 1), got {spread}", module="circuit_realization")
    rng = stream(seed, 1)
    junctions = sc.C_J * (1 + spread * rng.uniform(-1.0, 1.0, size=(4, 4)))
    return replace(sc, C_J_matrix=tuple(tuple(row) for row in junctions))


def diagonal_charging_spread(sc: SiteCapacitances) -> float:
    """(max - min) / mean of the matter diagonal of C^-1."""
    diagonal = np.diag(inverse_capacitance(sc))[:4]
    return float((diagonal.max() - diagonal.min()) / diagonal.mean())


def dimensionless_jc(J: float, C: float) -> float:
    """J C / (2e)^2 for J in joules and C in farads."""
    if J <= 0 or C <= 0:
        raise ConfigError("J and C must be positive", module="circuit_realization")
    return J * C / (2 * E_CHARGE) ** 2


def plasma_frequency_si(J: float, C: float) -> float:
    """Josephson plasma angular frequency (2e / hbar) sqrt(J / C) in rad/s."""
    if J <= 0 or C <= 0:
        raise ConfigError("J and C must be positive", module="circuit_realization")
    return 2 * E_CHARGE * math.sqrt(J / C) / HBAR


def circuit_report(
    squid: SquidParams, sc: SiteCapacitances, n_points: int = 128
) -> Dict[str, Any]:
    """Summary of the circuit layer for one parameter set."""
    Cmat = build_capacitance_matrix(sc)
    eigenvalues = np.linalg.eigvalsh(Cmat)
    report: Dict[str, Any] = {
        "squid": squid.to_dict(),
        "phasor": squid_effective_phasor(squid)._asdict(),
        "capacitances": sc.to_dict(),
        "c_j_dominant": sc.c_j_dominant,
        "min_eigenvalue": float(eigenvalues.min()),
        "condition_number": _check_condition(Cmat),
        "symmetry_breaking": symmetry_breaking_metric(sc),
        "diagonal_charging_spread": diagonal_charging_spread(sc),
    }
    if squid.e_LJ <= SERIES_MAX_E_LJ:
        report["expansion"] = squid_harmonic_expansion(squid).to_dict()
        report["expansion_residual"] = expansion_residual(squid, n_points)
    return report
