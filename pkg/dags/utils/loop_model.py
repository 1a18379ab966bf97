import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import galois
import numpy as np
from scipy import fft, special

from .classical_energy import CouplingParams, crystal_config, pairing_residuals, site_min_energy
from .errors import ConfigError, NumericalError, SizeGuardError
from .hadamard_symmetry import REFERENCE_W, SignMatrix, plaquette_transformations
from .lattice import (
    PAIRING_LABELS,
    PAIRING_PARTNERS,
    LatticeGeometry,
    Loop,
    crystal_pairings,
    trace_loops,
)
from .rng import step_stream, stream

logger = logging.getLogger(__name__)

MAX_ENUM_SITES = 16
MAX_EXHAUSTIVE_Z2_LINKS = 24
TARGET_ACCEPTANCE = 0.4
ACCEPTANCE_WINDOW = (0.05, 0.95)


@dataclass(frozen=True, eq=False)
class PairingConfig:
    """Leg pairing id at every waffle: 0 = (12)(34), 1 = (13)(24), 2 = (14)(23)."""

    geometry: LatticeGeometry
    pairing: np.ndarray

    def __post_init__(self):
        pairing = np.asarray(self.pairing, dtype=np.int64)
        if pairing.shape != (self.geometry.n_sites,):
            raise ConfigError(
                f"pairing must assign every one of {self.geometry.n_sites} sites", module="loop_model"
            )
        if pairing.size and (pairing.min() < 0 or pairing.max() > 2):
            raise ConfigError("pairing ids must be 0, 1 or 2", module="loop_model")
        pairing.setflags(write=False)
        object.__setattr__(self, "pairing", pairing)

    @property
    def labels(self) -> List[str]:
        return [PAIRING_LABELS[k] for k in self.pairing]


@dataclass(frozen=True, eq=False)
class Z2Config:
    geometry: LatticeGeometry
    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.int64)
        if tau.shape != (self.geometry.n_links,) or not np.all(np.isin(tau, (1, -1))):
            raise ConfigError("tau must hold +1 or -1 on every link", module="loop_model")
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)

    @property
    def is_valid(self) -> bool:
        return bool(np.all(star_parities(self.geometry, self.tau) == 1))


@dataclass
class LoopStatistics:
    n_loops: float
    mean_loop_length: float
    length_histogram: Dict[int, float]
    n_winding: float = 0.0
    loops: List[Loop] = field(default_factory=list)
    correlators: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_loops": self.n_loops,
            "mean_loop_length": self.mean_loop_length,
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
            "n_winding": self.n_winding,
            "loops": [{"links": list(loop.links), "winding": list(loop.winding)} for loop in self.loops],
            "correlators": self.correlators,
        }


def crystal_pairing(g: LatticeGeometry, variant: str = "A") -> PairingConfig:
    return PairingConfig(g, crystal_pairings(g, variant))


def random_pairing(g: LatticeGeometry, rng: np.random.Generator) -> PairingConfig:
    return PairingConfig(g, rng.integers(0, 3, size=g.n_sites))


def loops_from_pairing(pc: PairingConfig, g: LatticeGeometry) -> LoopStatistics:
    """
    Partition all links into closed loops by following the pairing through every site.

    Args:
        pc: Pairing at every waffle
        g: Geometry the pairing belongs to

    Returns:
        LoopStatistics with the explicit loop list
    """
    if pc.geometry != g:
        raise ConfigError("pairing and geometry disagree", module="loop_model")
    loops = trace_loops(g, pc.pairing)
    lengths = Counter(loop.length for loop in loops)
    return LoopStatistics(
        n_loops=len(loops),
        mean_loop_length=g.n_links / len(loops),
        length_histogram=dict(lengths),
        n_winding=sum(1 for loop in loops if loop.winding != (0, 0)),
        loops=loops,
    )


# Exhaustive enumeration. The torus is cut into a lower and an upper band of
# Ly/2 rows. Both bands have the same shape, so their 3^(N/2) coverings are
# traced once; each covering reduces to how it connects the 2*Lx band ends
# plus its closed internal loops. Two bands glue along 2*Lx vertical links.

_LEG_N, _LEG_E, _LEG_S, _LEG_W = 0, 1, 2, 3


def _band_step(x: int, row: int, out_leg: int, Lx: int, rows: int):
    """Move out of site (x, row) through out_leg inside a band.

    Returns ("end", end_id) or ("site", x, row, in_leg, link_id, dx, dy).
    """
    n = Lx * rows
    if out_leg == _LEG_N:
        if row == rows - 1:
            return ("end", Lx + x)
        return ("site", x, row + 1, _LEG_S, n + row * Lx + x, 0, 1)
    if out_leg == _LEG_S:
        if row == 0:
            return ("end", x)
        return ("site", x, row - 1, _LEG_N, n + (row - 1) * Lx + x, 0, -1)
    if out_leg == _LEG_E:
        return ("site", (x + 1) % Lx, row, _LEG_W, row * Lx + x, 1, 0)
    xw = (x - 1) % Lx
    return ("site", xw, row, _LEG_E, row * Lx + xw, -1, 0)


def _trace_band(pairing: Sequence[int], Lx: int, rows: int):
    """Boundary connectivity of one band covering.

    Returns (match, disp, n_internal, n_internal_winding) where match[e] is the
    end joined to end e and disp[e] the (dx, dy) travelled from e to match[e].
    """
    n_ends = 2 * Lx
    n_links = Lx * rows + Lx * (rows - 1)
    seen = [False] * n_links
    match = [-1] * n_ends
    disp: List[Tuple[int, int]] = [(0, 0)] * n_ends
    for start in range(n_ends):
        if match[start] >= 0:
            continue
        if start < Lx:
            x, row, in_leg = start, 0, _LEG_S
        else:
            x, row, in_leg = start - Lx, rows - 1, _LEG_N
        dx = dy = 0
        while True:
            out_leg = int(PAIRING_PARTNERS[pairing[row * Lx + x], in_leg])
            step = _band_step(x, row, out_leg, Lx, rows)
            if step[0] == "end":
                end = step[1]
                break
            _, x, row, in_leg, link, sx, sy = step
            seen[link] = True
            dx += sx
            dy += sy
        match[start], match[end] = end, start
        disp[start], disp[end] = (dx, dy), (-dx, -dy)

    n_internal = n_winding = 0
    for link in range(n_links):
        if seen[link]:
            continue
        if link < Lx * rows:
            x0, row0, leg0 = link % Lx, link // Lx, _LEG_E
        else:
            local = link - Lx * rows
            x0, row0, leg0 = local % Lx, local // Lx, _LEG_N
        x, row, out_leg = x0, row0, leg0
        dx = 0
        while True:
            _, x, row, in_leg, current, sx, _ = _band_step(x, row, out_leg, Lx, rows)
            seen[current] = True
            dx += sx
            out_leg = int(PAIRING_PARTNERS[pairing[row * Lx + x], in_leg])
            if (x, row, out_leg) == (x0, row0, leg0):
                break
        n_internal += 1
        n_winding += dx != 0
    return tuple(match), tuple(disp), n_internal, n_winding


def _glue_cycles(lower: Tuple[int, ...], upper: Tuple[int, ...], Lx: int, rows: int):
    """Loops formed by gluing two band matchings along the 2*Lx cut links.

    Returns (selectors, y_winding): selectors[h][e, k] is 1 when the segment of
    band h leaving end e is traversed by loop k in that direction.
    """
    matches = (lower, upper)
    n_ends = 2 * Lx
    visited = [[False] * n_ends, [False] * n_ends]
    cycles = []
    y_winding = []
    for e0 in range(n_ends):
        if visited[0][e0]:
            continue
        starts: Tuple[List[int], List[int]] = ([], [])
        half, e, dy = 0, e0, 0
        while True:
            f = matches[half][e]
            visited[half][e] = visited[half][f] = True
            starts[half].append(e)
            dy += (rows - 1) * (int(f >= Lx) - int(e >= Lx))
            if f >= Lx:
                e, dy = f - Lx, dy + 1
            else:
                e, dy = f + Lx, dy - 1
            half = 1 - half
            if half == 0 and e == e0:
                break
        cycles.append(starts)
        y_winding.append(dy != 0)
    selectors = np.zeros((2, n_ends, len(cycles)), dtype=np.int64)
    for k, starts in enumerate(cycles):
        for h in (0, 1):
            selectors[h, starts[h], k] = 1
    return selectors, np.array(y_winding)


def _band_digits(n: int) -> np.ndarray:
    codes = np.arange(3 ** n, dtype=np.int64)
    digits = np.empty((codes.size, n), dtype=np.int64)
    for k in range(n):
        digits[:, k] = codes % 3
        codes //= 3
    return digits


@dataclass
class CoveringEnumeration:
    geometry: LatticeGeometry
    histogram: Dict[int, int]
    sector_histograms: Dict[str, Dict[int, int]]
    max_loops: int
    n_argmax: int
    argmax_pairings: List[np.ndarray]

    @property
    def n_coverings(self) -> int:
        return sum(self.histogram.values())

    def partition_function(self, lam: float) -> float:
        return float(sum(count * lam ** n for n, count in self.histogram.items()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "Lx": self.geometry.Lx,
            "Ly": self.geometry.Ly,
            "n_coverings": self.n_coverings,
            "histogram": {str(n): c for n, c in sorted(self.histogram.items())},
            "sectors": {
                name: {str(n): c for n, c in sorted(hist.items())} for name, hist in self.sector_histograms.items()
            },
            "max_loops": self.max_loops,
            "n_argmax": self.n_argmax,
            "argmax_pairings": [[PAIRING_LABELS[k] for k in p] for p in self.argmax_pairings],
        }


@dataclass
class _BandTable:
    """Band coverings sharing one boundary matching."""

    dx: np.ndarray
    n_internal: np.ndarray
    n_internal_winding: np.ndarray
    count: np.ndarray
    codes: List[List[int]]


def _band_tables(digits: np.ndarray, Lx: int, rows: int) -> Dict[Tuple[int, ...], _BandTable]:
    grouped: Dict[Tuple[int, ...], Dict[Tuple, List[int]]] = defaultdict(lambda: defaultdict(list))
    for code, pairing in enumerate(digits.tolist()):
        match, disp, n_int, n_wind = _trace_band(pairing, Lx, rows)
        dx = tuple(d[0] for d in disp)
        grouped[match][(dx, n_int, n_wind)].append(code)
    tables = {}
    for match, entries in grouped.items():
        keys = list(entries)
        tables[match] = _BandTable(
            dx=np.array([k[0] for k in keys], dtype=np.int64),
            n_internal=np.array([k[1] for k in keys], dtype=np.int64),
            n_internal_winding=np.array([k[2] for k in keys], dtype=np.int64),
            count=np.array([len(entries[k]) for k in keys], dtype=np.int64),
            codes=[entries[k] for k in keys],
        )
    return tables


def loop_count_histogram(g: LatticeGeometry, max_argmax: int = 16) -> CoveringEnumeration:
    """
    Count all fully-packed loop coverings by their number of loops.

    The coefficients are those of Z(lambda) = sum_n c_n lambda^n. Coverings
    are split into a contractible sector (no winding loop) and a winding
    sector.

    Args:
        g: Geometry with at most 16 sites
        max_argmax: Cap on the number of maximizing coverings returned

    Returns:
        CoveringEnumeration with totals, per-sector counts and maximizers
    """
    if g.n_sites > MAX_ENUM_SITES:
        raise SizeGuardError(
            f"exhaustive enumeration needs 3^{g.n_sites} coverings; limit is {MAX_ENUM_SITES} sites",
            module="loop_model",
        )
    Lx, rows = g.Lx, g.Ly // 2
    digits = _band_digits(Lx * rows)
    logger.info(f"Tracing {len(digits)} band coverings for {g.Lx}x{g.Ly} torus")
    tables = _band_tables(digits, Lx, rows)
    logger.info(f"{len(tables)} distinct band matchings")

    contractible = np.zeros(g.n_links + 1, dtype=np.int64)
    winding = np.zeros(g.n_links + 1, dtype=np.int64)
    best = -1
    best_members: List[Tuple[List[int], List[int]]] = []
    for lower_match, lower in tables.items():
        for upper_match, upper in tables.items():
            selectors, y_winding = _glue_cycles(lower_match, upper_match, Lx, rows)
            x_shift = (lower.dx @ selectors[0])[:, None, :] + (upper.dx @ selectors[1])[None, :, :]
            wound = np.any(x_shift != 0, axis=2) | bool(y_winding.any())
            wound |= (lower.n_internal_winding[:, None] > 0) | (upper.n_internal_winding[None, :] > 0)
            n = selectors.shape[2] + lower.n_internal[:, None] + upper.n_internal[None, :]
            count = lower.count[:, None] * upper.count[None, :]
            np.add.at(contractible, n[~wound], count[~wound])
            np.add.at(winding, n[wound], count[wound])
            top = int(n.max())
            if top > best:
                best, best_members = top, []
            if top == best:
                for i, j in np.argwhere(n == best):
                    best_members.append((lower.codes[i], upper.codes[j]))

    total = contractible + winding
    histogram = {int(n): int(c) for n, c in enumerate(total) if c}
    n_argmax = sum(len(lo) * len(up) for lo, up in best_members)
    argmax: List[np.ndarray] = []
    for lo_codes, up_codes in best_members:
        for lo in lo_codes:
            for up in up_codes:
                if len(argmax) < max_argmax:
                    argmax.append(np.concatenate([digits[lo], digits[up]]))
    logger.info(f"Enumerated {int(total.sum())} coverings; max loops {best} reached by {n_argmax}")
    return CoveringEnumeration(
        geometry=g,
        histogram=histogram,
        sector_histograms={
            "contractible": {int(n): int(c) for n, c in enumerate(contractible) if c},
            "winding": {int(n): int(c) for n, c in enumerate(winding) if c},
        },
        max_loops=best,
        n_argmax=n_argmax,
        argmax_pairings=argmax,
    )

@dataclass
class PartitionResult:
    value: float
    lam: float
    enumeration: CoveringEnumeration

    @property
    def argmax_pairings(self) -> List[np.ndarray]:
        return self.enumeration.argmax_pairings

    @property
    def max_loops(self) -> int:
        return self.enumeration.max_loops


def loop_partition_function(g: LatticeGeometry, lam: float) -> PartitionResult:
    """Exact Z = sum over coverings of lam^(number of loops), with the maximizing coverings."""
    if not np.isfinite(lam) or lam < 0:
        raise ConfigError(f"fugacity must be finite and non-negative, got {lam}", module="loop_model")
    enumeration = loop_count_histogram(g)
    return PartitionResult(enumeration.partition_function(lam), float(lam), enumeration)


def star_parities(g: LatticeGeometry, tau: Sequence[int]) -> np.ndarray:
    """Product of tau over the four legs of every star."""
    tau = np.asarray(tau)
    return np.prod(tau[..., g.star_table], axis=-1)


def z2_from_plaquettes(g: LatticeGeometry, plaquettes: Sequence[int], base: Optional[Z2Config] = None) -> Z2Config:
    """Flip tau on every link of the given plaquettes, starting from base (all +1 by default)."""
    tau = np.ones(g.n_links, dtype=np.int64) if base is None else np.array(base.tau)
    for p in plaquettes:
        g._check_range(p, g.n_plaquettes, "plaquette")
        tau[g.plaquette_table[p]] *= -1
    return Z2Config(g, tau)


def star_incidence(g: LatticeGeometry) -> np.ndarray:
    matrix = np.zeros((g.n_sites, g.n_links), dtype=np.int64)
    for s in range(g.n_sites):
        matrix[s, g.star_table[s]] = 1
    return matrix


def count_z2_configs(g: LatticeGeometry, method: str = "auto", max_links: int = 20) -> int:
    """
    Number of tau configurations satisfying every star constraint.

    Args:
        g: Geometry
        method: "exhaustive", "rank" (GF(2) rank of the star incidence) or "auto"
        max_links: Largest link count counted exhaustively under "auto"

    Returns:
        2^(N_links - rank) as an exact integer
    """
    if method == "auto":
        method = "exhaustive" if g.n_links <= max_links else "rank"
    if method == "rank":
        rank = int(np.linalg.matrix_rank(galois.GF2(star_incidence(g))))
        count = 2 ** (g.n_links - rank)
        logger.info(f"Z2 count via GF(2) rank {rank}: 2^{g.n_links - rank}")
        return count
    if method != "exhaustive":
        raise ConfigError(f"unknown counting method '{method}'", module="loop_model")
    if g.n_links > MAX_EXHAUSTIVE_Z2_LINKS:
        raise SizeGuardError(
            f"exhaustive Z2 count over 2^{g.n_links} configurations exceeds 2^{MAX_EXHAUSTIVE_Z2_LINKS}",
            module="loop_model",
        )
    total = 0
    chunk = 1 << 20
    for start in range(0, 1 << g.n_links, chunk):
        codes = np.arange(start, min(start + chunk, 1 << g.n_links), dtype=np.int64)
        ok = np.ones(codes.size, dtype=bool)
        for legs in g.star_table:
            parity = np.zeros(codes.size, dtype=np.int64)
            for link in legs:
                parity ^= (codes >> int(link)) & 1
            ok &= parity == 0
        total += int(ok.sum())
    logger.info(f"Z2 count via exhaustive search over 2^{g.n_links}: {total}")
    return total


def joint_ground_state_count(g: LatticeGeometry, seed: int = 0, params: Optional[CouplingParams] = None) -> Dict[str, int]:
    """
    Count (covering, tau) pairs whose phase configuration is a -8J-per-site ground state.

    Each covering gets generic random loop phases; every tau in 2^N_links is
    tried. A factorized ground-state count equals n_coverings * n_valid_tau.
    """
    params = params or CouplingParams()
    n_states = 3 ** g.n_sites * 2 ** g.n_links
    if n_states > 200_000:
        raise SizeGuardError(f"joint enumeration of {n_states} states is too large", module="loop_model")
    rng = stream(seed, 0)
    codes = np.arange(2 ** g.n_links, dtype=np.int64)
    taus = np.where((codes[:, None] >> np.arange(g.n_links)) & 1, -1, 1)
    target = -8.0 * params.J * g.n_sites
    ground = 0
    for pairing in _band_digits(g.n_sites):
        loops = trace_loops(g, pairing)
        base = np.empty(g.n_links)
        for loop in loops:
            base[list(loop.links)] = rng.uniform(0, 2 * np.pi)
        thetas = base[None, :] + np.pi * (taus == -1)
        energies = site_min_energy(thetas[:, g.star_table], params).sum(axis=1)
        ground += int(np.sum(np.abs(energies - target) <= 1e-9 * abs(target)))
    return {
        "ground_states": ground,
        "coverings": 3 ** g.n_sites,
        "valid_tau": count_z2_configs(g, method="exhaustive"),
    }


# Loop fugacity integral over a closed ring of p links.


@dataclass
class FugacityResult:
    p: int
    K: float
    method: str
    value: float
    error: float
    asymptote: Optional[float]
    gaussian: Optional[float]
    ratio_to_asymptote: Optional[float]
    ratio_to_gaussian: Optional[float]
    fugacity: float
    fugacity_mod_pi: float

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _fugacity_bessel(p: int, K: float) -> float:
    m_max = int(20 + 12 * math.sqrt(K))
    m = np.arange(-m_max, m_max + 1)
    return float(np.sum(special.ive(m, K) ** p))


def _fugacity_transfer(p: int, K: float, n_nodes: int) -> float:
    angles = 2 * np.pi * np.arange(n_nodes) / n_nodes
    kernel = np.exp(-K * (1 - np.cos(angles))) / n_nodes
    eigenvalues = np.real(fft.fft(kernel))
    return float(np.sum(eigenvalues ** p))


def _fugacity_monte_carlo(p: int, K: float, n_samples: int, seed: int, batch: int = 100_000):
    # Sample p-1 ring differences from von Mises(0, K); the last closes the ring.
    values = []
    for k, start in enumerate(range(0, n_samples, batch)):
        size = min(batch, n_samples - start)
        rng = step_stream(seed, 0, k)
        deltas = rng.vonmises(0.0, K, size=(size, p - 1)) if K > 0 else rng.uniform(-np.pi, np.pi, (size, p - 1))
        closing = deltas.sum(axis=1)
        values.append(np.exp(-K * (1 - np.cos(closing))))
    samples = np.concatenate(values)
    prefactor = special.ive(0, K) ** (p - 1)
    return float(prefactor * samples.mean()), float(prefactor * samples.std(ddof=1) / math.sqrt(samples.size))


def fugacity_integral(
    p: int,
    K: float,
    method: str = "trapezoid",
    n_nodes: int = 64,
    max_nodes: int = 1 << 16,
    rtol: float = 1e-12,
    n_samples: int = 200_000,
    seed: Optional[int] = None,
) -> FugacityResult:
    """
    Ring integral Z_C = int prod(dtheta_i / 2pi) prod exp(-K [1 - cos(theta_i - theta_i+1)]).

    Methods:
        bessel: exact series sum_m (I_m(K) e^-K)^p
        trapezoid: periodic trapezoid rule on the ring transfer kernel, node
            count doubled until two estimates agree to rtol
        monte_carlo: von Mises sampling of the ring differences (needs seed)

    Returns:
        FugacityResult with ratios to (2 pi K)^(-(p-1)/2) and to the Gaussian
        ring form (2 pi K)^(-(p-1)/2) / sqrt(p), and the fugacity sqrt(2 pi K)
        with its mod-pi counterpart halved
    """
    if not isinstance(p, (int, np.integer)) or p < 3:
        raise ConfigError(f"loop length p must be an integer >= 3, got {p!r}", module="loop_model")
    if not np.isfinite(K) or K < 0:
        raise ConfigError(f"stiffness K must be non-negative, got {K}", module="loop_model")

    if method == "bessel":
        value, error = _fugacity_bessel(p, K), 0.0
    elif method == "trapezoid":
        nodes = n_nodes
        value = _fugacity_transfer(p, K, nodes)
        while True:
            nodes *= 2
            refined = _fugacity_transfer(p, K, nodes)
            error = abs(refined - value)
            value = refined
            if error <= rtol * max(abs(value), 1e-300):
                break
            if nodes >= max_nodes:
                raise NumericalError(
                    f"ring quadrature did not converge with {nodes} nodes",
                    module="loop_model",
                    details={"estimate": value, "error": error, "nodes": nodes},
                )
    elif method == "monte_carlo":
        if seed is None:
            raise ConfigError("monte_carlo fugacity integration needs a seed", module="loop_model")
        value, error = _fugacity_monte_carlo(p, K, n_samples, seed)
    else:
        raise ConfigError(f"unknown quadrature method '{method}'", module="loop_model")

    if K > 0:
        asymptote = (2 * np.pi * K) ** (-(p - 1) / 2)
        gaussian = asymptote / math.sqrt(p)
        ratio_a, ratio_g = value / asymptote, value / gaussian
    else:
        asymptote = gaussian = ratio_a = ratio_g = None
    fugacity = math.sqrt(2 * np.pi * K)
    return FugacityResult(
        p=int(p),
        K=float(K),
        method=method,
        value=value,
        error=error,
        asymptote=asymptote,
        gaussian=gaussian,
        ratio_to_asymptote=ratio_a,
        ratio_to_gaussian=ratio_g,
        fugacity=fugacity,
        fugacity_mod_pi=fugacity / 2,
    )


# Metropolis sampling of the classical array.


@dataclass
class McResult:
    geometry: LatticeGeometry
    K_eff: float
    mode: str
    seed: int
    chain: int
    statistics: LoopStatistics
    mean_loop_length_sigma: float
    far_correlator: float
    far_correlator_sigma: float
    acceptance: Dict[str, float]
    step_width: float
    off_manifold_fraction: float
    n_loops_series: np.ndarray
    warnings: List[str]
    final_theta: np.ndarray

    def summary(self) -> Dict[str, Any]:
        return {
            "K_eff": self.K_eff,
            "mode": self.mode,
            "seed": self.seed,
            "chain": self.chain,
            "mean_loop_length": self.statistics.mean_loop_length,
            "mean_loop_length_sigma": self.mean_loop_length_sigma,
            "n_loops": self.statistics.n_loops,
            "far_correlator": self.far_correlator,
            "far_correlator_sigma": self.far_correlator_sigma,
            "acceptance": self.acceptance,
            "step_width": self.step_width,
            "off_manifold_fraction": self.off_manifold_fraction,
            "warnings": self.warnings,
        }


def resolve_pairings(g: LatticeGeometry, theta: np.ndarray, tol: float) -> Tuple[np.ndarray, float]:
    """
    Nearest pairing per site; sites with rival pairings within tol take
    whichever choice gives the most loops.

    Returns:
        (pairing ids, fraction of sites farther than tol from every pairing)
    """
    residuals = pairing_residuals(theta[g.star_table])
    pairing = np.argmin(residuals, axis=1)
    best = residuals[np.arange(g.n_sites), pairing]
    off = float(np.mean(best > tol))
    ambiguous = [s for s in range(g.n_sites) if np.sum(residuals[s] <= best[s] + tol) > 1]
    if ambiguous:
        n_best = len(trace_loops(g, pairing))
        for s in ambiguous:
            for candidate in np.flatnonzero(residuals[s] <= best[s] + tol):
                if candidate == pairing[s]:
                    continue
                trial = pairing.copy()
                trial[s] = candidate
                n_trial = len(trace_loops(g, trial))
                if n_trial > n_best:
                    pairing, n_best = trial, n_trial
    return pairing, off


class _Sampler:
    """Single Metropolis chain over gauge (and optionally matter) phases."""

    def __init__(self, g: LatticeGeometry, K_eff: float, mode: str, params: CouplingParams):
        self.g = g
        self.K_eff = K_eff
        self.mode = mode
        self.params = params
        self.theta = np.zeros(g.n_links)
        self.phi = np.zeros(g.n_matter)
        self._corner_pairs = [plaquette_transformations(g, p, params.W) for p in range(g.n_plaquettes)]

    def energy(self, sites) -> float:
        sites = np.asarray(sites)
        if self.mode == "effective_theta":
            return float(np.sum(site_min_energy(self.theta[self.g.star_table[sites]], self.params)))
        diff = self.phi.reshape(-1, 4)[sites][:, :, None] - self.theta[self.g.star_table[sites]][:, None, :]
        return float(-self.params.J * np.sum(self.params.W_array[None] * np.cos(diff)))

    def accept(self, delta_e: float, u: float) -> bool:
        return delta_e <= 0 or u < math.exp(-self.K_eff * delta_e / self.params.J)

    def link_sweep(self, rng: np.random.Generator, width: float) -> Tuple[int, int]:
        g = self.g
        shifts = rng.uniform(-width, width, size=g.n_links)
        draws = rng.random(g.n_links)
        accepted = 0
        for i in range(g.n_links):
            sites = g.link_endpoints[i]
            before = self.energy(sites)
            self.theta[i] += shifts[i]
            if self.accept(self.energy(sites) - before, draws[i]):
                accepted += 1
            else:
                self.theta[i] -= shifts[i]
        return accepted, g.n_links

    def matter_sweep(self, rng: np.random.Generator, width: float) -> Tuple[int, int]:
        shifts = rng.uniform(-width, width, size=self.g.n_matter)
        draws = rng.random(self.g.n_matter)
        accepted = 0
        for m in range(self.g.n_matter):
            site = [m // 4]
            before = self.energy(site)
            self.phi[m] += shifts[m]
            if self.accept(self.energy(site) - before, draws[m]):
                accepted += 1
            else:
                self.phi[m] -= shifts[m]
        return accepted, self.g.n_matter

    def plaquette_sweep(self, rng: np.random.Generator) -> Tuple[int, int]:
        g = self.g
        draws = rng.random(g.n_plaquettes)
        accepted = 0
        for p in range(g.n_plaquettes):
            corners = g.corner_table[p]
            before = self.energy(corners)
            theta_old, phi_old = self.theta.copy(), self.phi.copy()
            self.theta[g.plaquette_table[p]] += np.pi
            if self.mode == "full_theta_phi":
                for site, pair in self._corner_pairs[p]:
                    old = phi_old[4 * site: 4 * site + 4]
                    self.phi[4 * site: 4 * site + 4] = old[list(pair.left.permutation)] + np.pi * (
                        np.array(pair.left.signs) == -1
                    )
            if self.accept(self.energy(corners) - before, draws[p]):
                accepted += 1
            else:
                self.theta, self.phi = theta_old, phi_old
        return accepted, g.n_plaquettes

    def loop_sweep(self, rng: np.random.Generator) -> Tuple[int, int]:
        """Rigid rotation of whole loops; rejected if the detected pairing changes."""
        g = self.g
        residuals = pairing_residuals(self.theta[g.star_table])
        pairing = np.argmin(residuals, axis=1)
        loops = trace_loops(g, pairing)
        shifts = rng.uniform(-np.pi, np.pi, size=len(loops))
        draws = rng.random(len(loops))
        accepted = 0
        for loop, shift, u in zip(loops, shifts, draws):
            links = list(loop.links)
            sites = np.unique(g.link_endpoints[links])
            before = self.energy(sites)
            self.theta[links] += shift
            trial = np.argmin(pairing_residuals(self.theta[g.star_table[sites]]), axis=1)
            if np.array_equal(trial, pairing[sites]) and self.accept(self.energy(sites) - before, u):
                accepted += 1
            else:
                self.theta[links] -= shift
        return accepted, len(loops)


def _batch_sigma(batch_values: np.ndarray) -> float:
    """Standard error of the mean from batch means."""
    batch_values = np.asarray(batch_values, dtype=float)
    if batch_values.size < 2:
        return 0.0
    return float(np.std(batch_values, ddof=1) / math.sqrt(batch_values.size))


def mc_sample(
    g: LatticeGeometry,
    K_eff: float,
    mode: str = "effective_theta",
    steps: int = 2000,
    seed: int = 0,
    chain: int = 0,
    burn_in: Optional[int] = None,
    init: str = "random",
    loop_tolerance: Optional[float] = None,
    measure_every: int = 1,
    n_batches: int = 20,
    step_width: float = 0.5,
    loop_moves: bool = True,
    J: float = 1.0,
    W: SignMatrix = REFERENCE_W,
) -> McResult:
    """
    Metropolis chain with Boltzmann weight exp(-K_eff E / J).

    Mode effective_theta samples gauge phases under the tethered energy
    sum_s site_min_energy; full_theta_phi samples gauge and matter phases
    under H_J. A sweep is one update per link (and per matter wire in full
    mode), one pi-shift proposal per plaquette and, in effective mode, one
    rigid rotation per loop. The step width adapts toward 40% acceptance
    during burn-in only. Randomness for sweep k comes from the stream
    keyed by (seed, chain, k).

    Args:
        g: Geometry
        K_eff: Stiffness (inverse temperature in units of 1/J)
        mode: effective_theta or full_theta_phi
        steps: Measured sweeps after burn-in
        seed: Master seed
        chain: Chain id
        burn_in: Sweeps before measuring (default steps // 4)
        init: random, or crystal (alternating plaquettes with random loop phases)
        loop_tolerance: Pairing-detection tolerance (default max(1e-3, 3/sqrt(K_eff)))
        measure_every: Sweeps between measurements
        n_batches: Batches for the error bars

    Returns:
        McResult with loop statistics, binned mod-pi correlators and diagnostics
    """
    if not np.isfinite(K_eff) or K_eff <= 0:
        raise ConfigError(f"K_eff must be positive, got {K_eff}", module="loop_model")
    if mode not in ("effective_theta", "full_theta_phi"):
        raise ConfigError(f"unknown MC mode '{mode}'", module="loop_model")
    if init not in ("random", "crystal"):
        raise ConfigError(f"unknown MC init '{init}'", module="loop_model")
    if steps < 1 or measure_every < 1:
        raise ConfigError("steps and measure_every must be positive", module="loop_model")
    burn_in = steps // 4 if burn_in is None else burn_in
    tol = loop_tolerance if loop_tolerance is not None else max(1e-3, 3.0 / math.sqrt(K_eff))
    params = CouplingParams(J, W)
    sampler = _Sampler(g, K_eff, mode, params)

    init_rng = step_stream(seed, chain, 0)
    if init == "random":
        sampler.theta = init_rng.uniform(0, 2 * np.pi, g.n_links)
        sampler.phi = init_rng.uniform(0, 2 * np.pi, g.n_matter)
    else:
        n_loops = len(trace_loops(g, crystal_pairings(g)))
        config = crystal_config(g, "A", init_rng.uniform(0, 2 * np.pi, n_loops), params)
        sampler.theta, sampler.phi = np.array(config.theta), np.array(config.phi)

    logger.info(f"MC chain {chain}: {g.Lx}x{g.Ly}, K_eff={K_eff}, mode={mode}, {burn_in}+{steps} sweeps")

    # Correlator bins over all link pairs by minimum-image distance.
    ii, jj = np.triu_indices(g.n_links, k=1)
    distances = np.array([g.link_distance(int(a), int(b)) for a, b in zip(ii, jj)])
    bin_values, bin_index = np.unique(np.round(distances, 9), return_inverse=True)
    bin_counts = np.bincount(bin_index, minlength=bin_values.size)
    far = distances > 1.0 + 1e-9

    n_meas = steps // measure_every
    if n_meas == 0:
        raise ConfigError(f"no measurements: steps={steps} < measure_every={measure_every}", module="loop_model")
    n_batches = max(1, min(n_batches, n_meas))
    batch_corr = np.zeros((n_batches, bin_values.size))
    batch_far = np.zeros(n_batches)
    batch_length = np.zeros(n_batches)
    batch_size = np.zeros(n_batches)
    lengths: Counter = Counter()
    n_loops_series: List[int] = []
    winding_total = 0
    off_total = 0.0
    counts = {"link": [0, 0], "matter": [0, 0], "plaquette": [0, 0], "loop": [0, 0]}
    width = step_width
    measured = 0

    for sweep in range(1, burn_in + steps + 1):
        rng = step_stream(seed, chain, sweep)
        link_acc, link_try = sampler.link_sweep(rng, width)
        moves = {"link": (link_acc, link_try), "plaquette": sampler.plaquette_sweep(rng)}
        if mode == "full_theta_phi":
            moves["matter"] = sampler.matter_sweep(rng, width)
        elif loop_moves:
            moves["loop"] = sampler.loop_sweep(rng)
        if sweep <= burn_in:
            width = float(np.clip(width * math.exp(link_acc / link_try - TARGET_ACCEPTANCE), 1e-3, np.pi))
            continue
        for name, (acc, tried) in moves.items():
            counts[name][0] += acc
            counts[name][1] += tried
        if (sweep - burn_in) % measure_every or measured >= n_meas:
            continue

        pairing, off = resolve_pairings(g, sampler.theta, tol)
        loops = trace_loops(g, pairing)
        n_loops_series.append(len(loops))
        lengths.update(loop.length for loop in loops)
        winding_total += sum(1 for loop in loops if loop.winding != (0, 0))
        off_total += off
        cos2, sin2 = np.cos(2 * sampler.theta), np.sin(2 * sampler.theta)
        values = cos2[ii] * cos2[jj] + sin2[ii] * sin2[jj]
        b = measured * n_batches // n_meas
        batch_corr[b] += np.bincount(bin_index, weights=values, minlength=bin_values.size) / bin_counts
        batch_far[b] += values[far].mean() if far.any() else 0.0
        batch_length[b] += g.n_links / len(loops)
        batch_size[b] += 1
        measured += 1

    batch_size = np.maximum(batch_size, 1)
    batch_corr /= batch_size[:, None]
    batch_far /= batch_size
    batch_length /= batch_size
    series = np.array(n_loops_series)
    mean_length = float(np.mean(g.n_links / series))
    correlators = []
    for k, distance in enumerate(bin_values):
        correlators.append(
            {
                "distance": float(distance),
                "value": float(batch_corr[:, k].mean()),
                "sigma": _batch_sigma(batch_corr[:, k]),
                "n_pairs": int(bin_counts[k]),
            }
        )

    acceptance = {name: (acc / tried if tried else float("nan")) for name, (acc, tried) in counts.items() if tried}
    warnings = []
    for name in ("link", "matter"):
        rate = acceptance.get(name)
        if rate is not None and not ACCEPTANCE_WINDOW[0] <= rate <= ACCEPTANCE_WINDOW[1]:
            message = f"{name} acceptance {rate:.3f} outside [{ACCEPTANCE_WINDOW[0]}, {ACCEPTANCE_WINDOW[1]}]"
            warnings.append(message)
            logger.warning(f"MC chain {chain}: {message}")

    total_loops = sum(lengths.values())
    stats = LoopStatistics(
        n_loops=float(series.mean()),
        mean_loop_length=mean_length,
        length_histogram={k: v / measured for k, v in lengths.items()},
        n_winding=winding_total / measured,
        correlators=correlators,
    )
    logger.info(
        f"MC chain {chain} done: mean loop length {mean_length:.4f}, "
        f"{total_loops / measured:.2f} loops per sample, link acceptance {acceptance.get('link', 0):.3f}"
    )
    return McResult(
        geometry=g,
        K_eff=float(K_eff),
        mode=mode,
        seed=seed,
        chain=chain,
        statistics=stats,
        mean_loop_length_sigma=_batch_sigma(batch_length),
        far_correlator=float(batch_far.mean()),
        far_correlator_sigma=_batch_sigma(batch_far),
        acceptance=acceptance,
        step_width=width,
        off_manifold_fraction=off_total / measured,
        n_loops_series=series,
        warnings=warnings,
        final_theta=sampler.theta.copy(),
    )


def _run_chain(kwargs: Dict[str, Any]) -> McResult:
    return mc_sample(**kwargs)


def mc_sample_chains(g: LatticeGeometry, n_chains: int = 1, workers: int = 1, **kwargs) -> List[McResult]:
    """Run independent chains 0..n_chains-1, in a process pool when workers > 1."""
    jobs = [dict(kwargs, g=g, chain=chain) for chain in range(n_chains)]
    if workers <= 1 or n_chains == 1:
        return [_run_chain(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chain, jobs))


def metropolis_site_grid(
    K_eff: float, n_grid: int = 4, steps: int = 200_000, seed: int = 0, params: Optional[CouplingParams] = None
) -> Dict[str, Any]:
    """
    Single-waffle Metropolis on a discrete phase grid against exact Boltzmann weights.

    Each leg takes n_grid equally spaced values; a move resets one random leg
    to a random other grid value.

    Returns:
        Dict with per-energy-level empirical and exact probabilities and their
        total variation distance
    """
    params = params or CouplingParams()
    n_states = n_grid ** 4
    codes = np.arange(n_states)
    grid = np.stack([(codes // n_grid ** k) % n_grid for k in range(4)], axis=1)
    energies = site_min_energy(2 * np.pi * grid / n_grid, params)
    levels, level_of = np.unique(np.round(energies, 9), return_inverse=True)
    weights = np.exp(-K_eff * (energies - energies.min()) / params.J)
    exact = np.bincount(level_of, weights=weights / weights.sum(), minlength=levels.size)

    rng = stream(seed, 0)
    legs = rng.integers(0, 4, size=steps)
    offsets = rng.integers(1, n_grid, size=steps)
    draws = rng.random(steps)
    state = 0
    visits = np.zeros(n_states, dtype=np.int64)
    for k in range(steps):
        leg = legs[k]
        digit = (state // n_grid ** leg) % n_grid
        new_digit = (digit + offsets[k]) % n_grid
        proposal = state + (new_digit - digit) * n_grid ** leg
        delta = energies[proposal] - energies[state]
        if delta <= 0 or draws[k] < math.exp(-K_eff * delta / params.J):
            state = proposal
        visits[state] += 1
    empirical = np.bincount(level_of, weights=visits / steps, minlength=levels.size)
    return {
        "levels": [
            {"energy": float(e), "empirical": float(emp), "exact": float(ex)}
            for e, emp, ex in zip(levels, empirical, exact)
        ],
        "total_variation": float(0.5 * np.abs(empirical - exact).sum()),
    }
