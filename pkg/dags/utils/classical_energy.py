import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .errors import ConfigError, NumericalError
from .hadamard_symmetry import REFERENCE_W, SignMatrix, is_hadamard, plaquette_transformations
from .lattice import (
    PAIRING_LABELS,
    PAIRING_PAIRS,
    TWO_PI,
    LatticeGeometry,
    PhaseConfig,
    canonical_phases,
    crystal_pairings,
    trace_loops,
)
from .rng import stream

logger = logging.getLogger(__name__)

MANIFOLD_TOL = 1e-6
DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class CouplingParams:
    J: float = 1.0
    W: SignMatrix = field(default=REFERENCE_W)

    def __post_init__(self):
        if not np.isfinite(self.J) or self.J <= 0:
            raise ConfigError(f"Josephson coupling J must be positive, got {self.J}", module="classical_energy")
        if not is_hadamard(self.W):
            raise ConfigError("W must be a Hadamard matrix", module="classical_energy")

    @property
    def W_array(self) -> np.ndarray:
        return self.W.as_array().astype(float)


def _check_geometry(config: PhaseConfig, g: Optional[LatticeGeometry]):
    if g is not None and g != config.geometry:
        raise ConfigError(
            f"configuration is for a {config.geometry.Lx}x{config.geometry.Ly} lattice, "
            f"not {g.Lx}x{g.Ly}",
            module="classical_energy",
        )


def site_energies(config: PhaseConfig, params: CouplingParams) -> np.ndarray:
    """Josephson energy of every waffle, shape (N_sites,)."""
    g = config.geometry
    theta = config.theta[g.star_table]  # (N, 4) legs
    phi = config.phi.reshape(g.n_sites, 4)  # (N, 4) wires
    diff = phi[:, :, None] - theta[:, None, :]
    return -params.J * np.sum(params.W_array[None, :, :] * np.cos(diff), axis=(1, 2))


def josephson_energy(config: PhaseConfig, params: CouplingParams, g: Optional[LatticeGeometry] = None) -> float:
    """
    Total classical Josephson energy -J sum_s sum_{n,i} W_ni cos(phi_n - theta_i).

    Args:
        config: Phase configuration (carries its geometry)
        params: Coupling J and sign matrix W
        g: Optional geometry the configuration must match

    Returns:
        Energy in units of J's unit
    """
    _check_geometry(config, g)
    return float(np.sum(site_energies(config, params)))


def tether_matter_phases(
    theta_site: Sequence[float], W: SignMatrix = REFERENCE_W, on_degenerate: str = "raise"
) -> np.ndarray:
    """
    Matter phases minimizing a single waffle's energy for fixed gauge phases.

    phi_n = arg sum_i W_ni exp(i theta_i). When that sum vanishes the phase
    is undefined: on_degenerate='raise' reports the affected wires,
    'zero' sets them to 0 and 'nan' leaves NaN.
    """
    theta_site = np.asarray(theta_site, dtype=float)
    if theta_site.shape[-1] != 4:
        raise ConfigError("a waffle has exactly four gauge legs", module="classical_energy")
    v = np.exp(1j * theta_site) @ W.as_array().T.astype(float)
    phases = np.angle(v)
    degenerate = np.abs(v) <= DEGENERATE_TOL
    if np.any(degenerate):
        if on_degenerate == "raise":
            wires = np.argwhere(degenerate).tolist()
            raise NumericalError(
                f"matter phase undefined for wires {wires}: tethering sum vanishes",
                module="classical_energy",
                details={"wires": wires},
            )
        phases = np.where(degenerate, 0.0 if on_degenerate == "zero" else np.nan, phases)
    return canonical_phases(phases)


def site_min_energy(theta_site: Sequence[float], params: CouplingParams) -> Union[float, np.ndarray]:
    """-J sum_n |sum_i W_ni exp(i theta_i)|; accepts (..., 4) arrays."""
    theta_site = np.asarray(theta_site, dtype=float)
    v = np.exp(1j * theta_site) @ params.W_array.T
    energy = -params.J * np.sum(np.abs(v), axis=-1)
    return float(energy) if np.ndim(energy) == 0 else energy


def tethered_config(g: LatticeGeometry, theta: Sequence[float], params: CouplingParams) -> PhaseConfig:
    """Configuration with every matter phase tethered to its waffle's gauge phases."""
    theta = np.asarray(theta, dtype=float)
    phi = tether_matter_phases(theta[g.star_table], params.W, on_degenerate="zero")
    return PhaseConfig(g, theta, phi.reshape(-1))


@dataclass(frozen=True)
class ManifoldCheck:
    is_min: bool
    pairings: Tuple[str, ...]
    pairing_ids: Tuple[int, ...]


def _nearest_half_turn(delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest multiple of pi (as 0/1 parity) and the distance to it."""
    k = np.round(delta / np.pi)
    return np.mod(k, 2).astype(np.int64), np.abs(delta - k * np.pi)


def pairing_residuals(theta_site: Sequence[float]) -> np.ndarray:
    """
    Distance of a waffle from each of the three pairings of the minimum manifold.

    A pairing ((a,b),(c,d)) is satisfied when theta_a = theta_b and
    theta_c = theta_d modulo pi, with both differences carrying the same
    multiple of pi. The residual is the larger of the two mod-pi mismatches,
    or pi/2 when the parities disagree. Accepts (..., 4) arrays.
    """
    theta_site = np.asarray(theta_site, dtype=float)
    residuals = []
    for (a, b), (c, d) in PAIRING_PAIRS:
        par1, dist1 = _nearest_half_turn(theta_site[..., a] - theta_site[..., b])
        par2, dist2 = _nearest_half_turn(theta_site[..., c] - theta_site[..., d])
        res = np.maximum(dist1, dist2)
        residuals.append(np.where(par1 == par2, res, np.pi / 2))
    return np.stack(residuals, axis=-1)


def is_min_manifold(theta_site: Sequence[float], tol: float = MANIFOLD_TOL) -> ManifoldCheck:
    """
    Decide whether a waffle's gauge phases lie on the classical minimum manifold.

    Args:
        theta_site: Four gauge phases in leg order
        tol: Tolerance on the mod-pi mismatch

    Returns:
        ManifoldCheck listing every pairing that is satisfied
    """
    residuals = pairing_residuals(theta_site)
    ids = tuple(int(k) for k in np.flatnonzero(residuals <= tol))
    return ManifoldCheck(bool(ids), tuple(PAIRING_LABELS[k] for k in ids), ids)


def site_minimum_scan(n_samples: int, seed: int, params: Optional[CouplingParams] = None) -> Dict[str, Any]:
    """
    Random check of the single-waffle bound E_min >= -8J.

    Draws n_samples uniform gauge configurations, then n_samples points on
    each pairing of the minimum manifold (pairwise equal modulo pi with an
    even number of pi offsets).

    Returns:
        Dict with the lowest random energy, the largest deviation from -8J on
        the manifold per pairing and the count of random draws below the bound
    """
    params = params or CouplingParams()
    bound = -8.0 * params.J
    rng = stream(seed, 0)
    energies = site_min_energy(rng.uniform(0, TWO_PI, size=(n_samples, 4)), params)
    below = int(np.sum(energies < bound - 1e-12 * abs(bound)))

    deviations = {}
    for label, ((a, b), (c, d)) in zip(PAIRING_LABELS, PAIRING_PAIRS):
        theta = np.empty((n_samples, 4))
        alpha, beta = rng.uniform(0, TWO_PI, size=(2, n_samples))
        shift = rng.integers(0, 2, size=n_samples)
        same = rng.integers(0, 2, size=n_samples)
        theta[:, a], theta[:, b] = alpha, alpha + np.pi * shift
        theta[:, c], theta[:, d] = beta, beta + np.pi * (shift + 2 * same)
        deviations[label] = float(np.max(np.abs(site_min_energy(theta, params) - bound)))
    logger.info(f"site minimum scan: {n_samples} draws, lowest energy {energies.min():.6f}")
    return {
        "n_samples": n_samples,
        "bound": bound,
        "min_random_energy": float(energies.min()),
        "n_below_bound": below,
        "manifold_deviation": deviations,
    }


def tether_agreement(n_samples: int, seed: int, params: Optional[CouplingParams] = None) -> Dict[str, float]:
    """
    Compare closed-form tethering with direct numerical minimization over the matter phases.

    Returns:
        Largest energy difference over n_samples random gauge configurations
    """
    params = params or CouplingParams()
    W = params.W_array
    rng = stream(seed, 1)
    worst = 0.0
    for theta_site in rng.uniform(0, TWO_PI, size=(n_samples, 4)):
        def energy(phi):
            return -params.J * float(np.sum(W * np.cos(phi[:, None] - theta_site[None, :])))

        def gradient(phi):
            return params.J * np.sum(W * np.sin(phi[:, None] - theta_site[None, :]), axis=1)

        start = rng.uniform(0, TWO_PI, size=4)
        result = optimize.minimize(energy, start, jac=gradient, method="BFGS", options={"gtol": 1e-10})
        closed = site_min_energy(theta_site, params)
        worst = max(worst, abs(result.fun - closed))
    return {"n_samples": n_samples, "max_energy_difference": worst}


def site_josephson_energy(config: PhaseConfig, s: int, params: CouplingParams) -> float:
    config.geometry._check_range(s, config.geometry.n_sites, "site")
    return float(site_energies(config, params)[s])


def apply_plaquette_flip(config: PhaseConfig, p: int, W: Optional[SignMatrix] = REFERENCE_W) -> PhaseConfig:
    """
    Apply the plaquette generator G_p.

    Each plaquette link is shifted by pi once. At every corner the matter
    wires are transformed by the L factor of the pair whose R flips the two
    plaquette legs of that corner, so the Josephson energy is unchanged
    without re-tethering. Pass W=None to shift the gauge phases only.
    """
    g = config.geometry
    g._check_range(p, g.n_plaquettes, "plaquette")
    theta = np.array(config.theta)
    theta[g.plaquette_table[p]] += np.pi
    phi = np.array(config.phi)
    if W is not None:
        for site, pair in plaquette_transformations(g, p, W):
            old = config.site_phi(site)
            phi[4 * site: 4 * site + 4] = old[list(pair.left.permutation)] + np.pi * (
                np.array(pair.left.signs) == -1
            )
    return config.replace(theta=theta, phi=phi)


def config_from_loops(
    g: LatticeGeometry,
    pairings: Sequence[int],
    loop_phases: Optional[Sequence[float]] = None,
    tau: Optional[Sequence[int]] = None,
    params: Optional[CouplingParams] = None,
) -> PhaseConfig:
    """
    Build a configuration from a loop covering and a Z2 configuration.

    Every link of loop k carries loop_phases[k], plus pi where tau is -1.
    Matter phases are tethered. The result is a ground state exactly when
    tau satisfies every star constraint.
    """
    params = params or CouplingParams()
    loops = trace_loops(g, pairings)
    if loop_phases is None:
        loop_phases = np.zeros(len(loops))
    if len(loop_phases) != len(loops):
        raise ConfigError(
            f"covering has {len(loops)} loops but {len(loop_phases)} loop phases were given",
            module="classical_energy",
        )
    theta = np.empty(g.n_links)
    for loop, phase in zip(loops, loop_phases):
        theta[list(loop.links)] = phase
    if tau is not None:
        tau = np.asarray(tau)
        if tau.shape != (g.n_links,):
            raise ConfigError("tau must hold one sign per link", module="classical_energy")
        theta = theta + np.pi * (tau == -1)
    return tethered_config(g, theta, params)


def crystal_config(
    g: LatticeGeometry,
    variant: str = "A",
    loop_phases: Optional[Sequence[float]] = None,
    params: Optional[CouplingParams] = None,
) -> PhaseConfig:
    """Alternating-plaquette ground state: one elementary loop on every other plaquette."""
    return config_from_loops(g, crystal_pairings(g, variant), loop_phases, params=params)


def is_ground_state(config: PhaseConfig, params: CouplingParams, tol: float = 1e-9) -> bool:
    g = config.geometry
    target = -2.0 * params.J * 4 * g.n_sites
    return abs(josephson_energy(config, params) - target) <= tol * max(1.0, abs(target))


def detect_pairings(config: PhaseConfig, tol: float = MANIFOLD_TOL) -> np.ndarray:
    """Per-site pairing id of a minimum-manifold configuration (first match on ties)."""
    g = config.geometry
    residuals = pairing_residuals(config.theta[g.star_table])
    best = np.argmin(residuals, axis=1)
    worst = residuals[np.arange(g.n_sites), best]
    if np.any(worst > tol):
        sites = np.flatnonzero(worst > tol).tolist()
        raise NumericalError(
            f"sites {sites} are off the minimum manifold", module="classical_energy", details={"sites": sites}
        )
    return best.astype(np.int64)


def lone_flip_cost(config: PhaseConfig, p: int, params: CouplingParams) -> float:
    """
    Energy cost of shifting one link of plaquette p by pi with matter re-tethered.

    On a ground state this costs the two adjacent stars; for uniform gauge
    phases it equals 8J, the star-term scale of the effective model.
    """
    g = config.geometry
    g._check_range(p, g.n_plaquettes, "plaquette")
    link = int(g.plaquette_table[p][0])
    before = tethered_config(g, config.theta, params)
    theta = np.array(config.theta)
    theta[link] += np.pi
    after = tethered_config(g, theta, params)
    return josephson_energy(after, params) - josephson_energy(before, params)


@dataclass
class PathScan:
    path: str
    plaquette: int
    n_steps: int
    segments: List[str]
    delta_theta: np.ndarray
    energies: np.ndarray
    max_excursion: float
    final_config: PhaseConfig
    final_matches_flip: bool

    def to_records(self) -> List[Dict[str, Any]]:
        return [
            {"step": k, "segment": seg, "delta_theta": float(d), "energy": float(e)}
            for k, (seg, d, e) in enumerate(zip(self.segments, self.delta_theta, self.energies))
        ]


def _loops_through_plaquette(config: PhaseConfig, p: int) -> List[np.ndarray]:
    g = config.geometry
    loops = trace_loops(g, detect_pairings(config))
    plaquette = set(int(i) for i in g.plaquette_table[p])
    return [np.array(loop.links) for loop in loops if plaquette.intersection(loop.links)]


def flip_path_energy(
    config: PhaseConfig,
    p: int,
    path_spec: Union[str, Dict[str, Any]] = "type_a",
    n_steps: int = 64,
    params: Optional[CouplingParams] = None,
) -> PathScan:
    """
    Energy along a continuous path that flips plaquette p between two ground states.

    Path kinds:
        type_a: sweep the four plaquette links together by 0..pi. Stays on the
            minimum manifold when the plaquette is an elementary loop.
        type_b: merge every loop crossing the plaquette to a common phase zeta,
            sweep the plaquette links, then restore the loop phases.
        naive: the direct sweep of type_a applied to any plaquette.

    Matter phases are re-tethered at each step.

    Args:
        config: Ground-state configuration
        p: Plaquette to flip
        path_spec: Path kind, or {"kind": ..., "zeta": ...}
        n_steps: Steps per path segment
        params: Couplings (defaults to J=1 and the standard W)

    Returns:
        PathScan with the energy trace and the maximum excursion
    """
    params = params or CouplingParams()
    spec = {"kind": path_spec} if isinstance(path_spec, str) else dict(path_spec)
    kind = spec.get("kind", "type_a")
    if kind not in ("type_a", "type_b", "naive"):
        raise ConfigError(f"unknown flip path '{kind}'", module="classical_energy")
    if n_steps < 1:
        raise ConfigError("n_steps must be at least 1", module="classical_energy")
    g = config.geometry
    g._check_range(p, g.n_plaquettes, "plaquette")
    if not is_ground_state(tethered_config(g, config.theta, params), params):
        raise ConfigError("flip paths start from a ground-state configuration", module="classical_energy")

    links = g.plaquette_table[p]
    theta0 = np.array(config.theta, dtype=float)
    steps = np.linspace(0.0, 1.0, n_steps + 1)
    thetas: List[np.ndarray] = []
    segments: List[str] = []
    deltas: List[float] = []

    def sweep(base: np.ndarray, label: str):
        for t in steps:
            theta = base.copy()
            theta[links] += t * np.pi
            thetas.append(theta)
            segments.append(label)
            deltas.append(t * np.pi)

    if kind in ("type_a", "naive"):
        sweep(theta0, "sweep")
    else:
        loops = _loops_through_plaquette(config, p)
        zeta = float(spec.get("zeta", theta0[loops[0][0]]))
        # A uniform shift of a whole loop keeps every waffle on the manifold.
        shifts = [(loop, zeta - theta0[loop[0]]) for loop in loops]
        for t in steps:
            theta = theta0.copy()
            for loop, shift in shifts:
                theta[loop] += t * shift
            thetas.append(theta)
            segments.append("merge")
            deltas.append(0.0)
        merged = thetas[-1].copy()
        sweep(merged, "sweep")
        flipped = thetas[-1].copy()
        for t in steps:
            theta = flipped.copy()
            for loop, shift in shifts:
                theta[loop] -= t * shift
            thetas.append(theta)
            segments.append("restore")
            deltas.append(np.pi)

    energies = np.array([josephson_energy(tethered_config(g, th, params), params) for th in thetas])
    excursion = float(np.max(np.abs(energies - energies[0])))
    final = tethered_config(g, thetas[-1], params)
    target = apply_plaquette_flip(config, p)
    mismatch = np.abs(np.angle(np.exp(1j * (final.theta - target.theta))))
    matches = bool(np.all(mismatch <= 1e-9))
    logger.info(f"Flip path {kind} on plaquette {p}: max excursion {excursion:.3e}, {len(energies)} points")
    return PathScan(
        path=kind,
        plaquette=int(p),
        n_steps=n_steps,
        segments=segments,
        delta_theta=np.array(deltas),
        energies=energies,
        max_excursion=excursion,
        final_config=final,
        final_matches_flip=matches,
    )
